// Copyright 2026 The Qalam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qalam/forge.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/freetype.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "qalam/errors.hpp"
#include "qalam/font.hpp"
#include "qalam/geometry.hpp"
#include "qalam/io.hpp"
#include "qalam/rng.hpp"
#include "qalam/shaping.hpp"
#include "qalam/unicode.hpp"

namespace qalam::forge {

namespace fs = std::filesystem;
using nlohmann::json;
using Mat3 = geometry::Transform<double>;

namespace {

// ---------------------------------------------------------------- config I/O

void require_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::kConfig, where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(Errc::kConfig, where + ": unknown key '" + key + "'");
}

template <typename T>
T get(const json& j, const char* key, const T& fallback, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::kConfig, where + "." + key + ": wrong type");
  }
}

Range range_from(const json& j, const Range& fallback, const std::string& where) {
  if (j.is_null()) return fallback;
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw Error(Errc::kConfig, where + ": expected [min, max]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json range_json(const Range& r) { return json::array({r.min, r.max}); }

constexpr std::pair<LayoutMode, std::string_view> kModes[] = {
    {LayoutMode::kLine, "line"}, {LayoutMode::kPage, "page"}, {LayoutMode::kPoster, "poster"}};
constexpr std::pair<Alignment, std::string_view> kAlignments[] = {
    {Alignment::kRight, "right"}, {Alignment::kCenter, "center"}, {Alignment::kJustified, "justified"}};

template <typename E, std::size_t N>
std::string_view name_of(const std::pair<E, std::string_view> (&table)[N], E v) {
  for (auto [e, n] : table)
    if (e == v) return n;
  return "?";
}

template <typename E, std::size_t N>
E parse_enum(const std::pair<E, std::string_view> (&table)[N], const std::string& s, const std::string& where) {
  for (auto [e, n] : table)
    if (n == s) return e;
  throw Error(Errc::kConfig, where + ": unknown value '" + s + "'");
}

struct NamedDistortion {
  const char* name;
  Distortion Distortions::*member;
};

constexpr NamedDistortion kDistortionNames[] = {
    {"perspective_warp", &Distortions::perspective_warp},
    {"rotation", &Distortions::rotation},
    {"gaussian_blur", &Distortions::gaussian_blur},
    {"gaussian_noise", &Distortions::gaussian_noise},
    {"brightness", &Distortions::brightness},
    {"contrast", &Distortions::contrast},
    {"jpeg_artifacts", &Distortions::jpeg_artifacts},
};

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return base / p;
}

// ---------------------------------------------------------------- text

std::vector<std::string> load_corpus(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (count_words(line) > 0) lines.push_back(line);
  }
  return lines;
}

std::vector<std::u32string> split_words(std::string_view text) {
  std::vector<std::u32string> words;
  std::u32string cur;
  for (char32_t cp : unicode::decode(text)) {
    if (unicode::is_space(cp)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(cp);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

bool is_format_char(char32_t cp) {
  return unicode::CharacterDatabase::instance().general_category(cp) == "Cf";
}

/// Codepoints that must have glyphs to render `text`.
void collect_glyphs(std::string_view text, std::set<char32_t>& out) {
  for (const auto& w : split_words(text))
    for (const auto& g : shaping::shape_line(w).glyphs)
      if (!is_format_char(g.codepoint)) out.insert(g.codepoint);
}

std::string hex_cp(char32_t cp) { return fmt::format("U+{:04X}", static_cast<std::uint32_t>(cp)); }

// ---------------------------------------------------------------- layout

struct PlacedGlyph {
  char32_t cp;
  double pen_x;
  double advance;
  bool draw;
};

struct LaidLine {
  std::vector<std::u32string> words;   // logical order
  std::vector<PlacedGlyph> glyphs;     // visual order
  std::vector<std::pair<double, double>> word_spans;  // [left, right) per word
  double left = 0, right = 0;
  int baseline = 0;
};

class Measurer {
 public:
  Measurer(const FontFile& font, double size) : font_(font), size_(size) {}

  double advance(char32_t cp, bool mark) const {
    if (mark || is_format_char(cp)) return 0.0;
    if (!unicode::is_space(cp) && !font_.has_glyph(cp))
      throw Error(Errc::kFontRender, font_.name() + " has no glyph for " + hex_cp(cp));
    return font_.advance(cp, size_);
  }

  double word_width(const std::u32string& w) const {
    double total = 0;
    for (const auto& g : shaping::shape_line(w).glyphs) total += advance(g.codepoint, g.mark);
    return total;
  }

  double space() const { return advance(U' ', false); }

  /// Pen x for a mark centred over the base glyph it follows.
  double mark_pen(char32_t cp, double base_x, double base_adv) const {
    auto b = font_.bounds(cp);
    const double scale = size_ / font_.units_per_em();
    const double centre = b ? (b->x_min + b->x_max) / 2.0 * scale : 0.0;
    return base_x + base_adv / 2.0 - centre;
  }

 private:
  const FontFile& font_;
  double size_;
};

/// Greedy wrap of logical words into lines no wider than `avail`.
std::optional<std::vector<std::vector<std::u32string>>> wrap(const std::vector<std::u32string>& words,
                                                             const Measurer& m, double avail, int max_lines) {
  std::vector<std::vector<std::u32string>> lines;
  const double space = m.space();
  double width = 0;
  for (const auto& w : words) {
    const double ww = m.word_width(w);
    if (ww > avail) return std::nullopt;
    if (!lines.empty() && width + space + ww <= avail) {
      lines.back().push_back(w);
      width += space + ww;
    } else {
      if (static_cast<int>(lines.size()) == max_lines) return std::nullopt;
      lines.push_back({w});
      width = ww;
    }
  }
  return lines;
}

LaidLine place_line(std::vector<std::u32string> words, const Measurer& m, const Layout& layout, int canvas_w,
                    bool last_line) {
  LaidLine out;
  std::u32string logical;
  std::vector<int> word_of;  // logical index -> word number, -1 for separators
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) {
      logical.push_back(U' ');
      word_of.push_back(-1);
    }
    logical += words[i];
    word_of.insert(word_of.end(), words[i].size(), static_cast<int>(i));
  }
  const auto shaped = shaping::shape_line(logical);

  double natural = 0;
  std::size_t gaps = 0;
  for (const auto& g : shaped.glyphs) {
    natural += m.advance(g.codepoint, g.mark);
    if (g.codepoint == U' ') ++gaps;
  }
  const double avail = canvas_w - 2.0 * layout.margin;
  const bool rtl = shaped.direction == shaping::Direction::kRtl;
  double stretch = 0;
  double x0 = 0;
  switch (layout.alignment) {
    case Alignment::kRight:
      x0 = canvas_w - layout.margin - natural;
      break;
    case Alignment::kCenter:
      x0 = layout.margin + (avail - natural) / 2.0;
      break;
    case Alignment::kJustified:
      if (!last_line && gaps > 0) {
        stretch = (avail - natural) / static_cast<double>(gaps);
        x0 = layout.margin;
      } else {
        x0 = rtl ? canvas_w - layout.margin - natural : layout.margin;
      }
      break;
  }

  out.word_spans.assign(words.size(), {1e18, -1e18});
  double pen = x0, base_x = x0, base_adv = 0;
  for (const auto& g : shaped.glyphs) {
    const double adv = m.advance(g.codepoint, g.mark);
    PlacedGlyph p{g.codepoint, pen, adv, !unicode::is_space(g.codepoint) && !is_format_char(g.codepoint)};
    if (g.mark) {
      p.pen_x = m.mark_pen(g.codepoint, base_x, base_adv);
    } else {
      base_x = pen;
      base_adv = adv;
      if (int w = word_of[g.source]; w >= 0) {
        out.word_spans[w].first = std::min(out.word_spans[w].first, pen);
        out.word_spans[w].second = std::max(out.word_spans[w].second, pen + adv);
      }
      pen += adv + (g.codepoint == U' ' ? stretch : 0.0);
    }
    out.glyphs.push_back(p);
  }
  out.left = x0;
  out.right = pen;
  out.words = std::move(words);
  return out;
}

// ---------------------------------------------------------------- raster

cv::freetype::FreeType2& freetype_for(const std::string& path) {
  thread_local std::map<std::string, cv::Ptr<cv::freetype::FreeType2>> cache;
  auto& ft = cache[path];
  if (!ft) {
    ft = cv::freetype::createFreeType2();
    ft->loadFontData(path, 0);
  }
  return *ft;
}

/// OpenCV warps address pixel centres; boxes use pixel edges.
cv::Mat to_opencv(const Mat3& edge) {
  const Mat3 m = geometry::translation(-0.5, -0.5) * edge * geometry::translation(0.5, 0.5);
  cv::Mat out(3, 3, CV_64F);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.at<double>(r, c) = m(r, c);
  return out;
}

void add_gaussian_noise(cv::Mat& img, double stddev, SplitMix& rng) {
  double spare = 0;
  bool have_spare = false;
  auto normal = [&] {
    if (have_spare) {
      have_spare = false;
      return spare;
    }
    double u1 = rng.uniform();
    while (u1 <= 0.0) u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare = r * std::sin(2.0 * M_PI * u2);
    have_spare = true;
    return r * std::cos(2.0 * M_PI * u2);
  };
  for (int y = 0; y < img.rows; ++y) {
    auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      const double n = normal() * stddev;
      for (int c = 0; c < 3; ++c) row[x][c] = cv::saturate_cast<std::uint8_t>(row[x][c] + n);
    }
  }
}

struct LoadedBackground {
  Background spec;
  cv::Mat image;  // BGR, image kind only
  std::string id;
};

struct LoadedFont {
  std::string path;
  std::string name;
  FontFile file;
};

/// Index drawn with probability proportional to weight(i).
template <typename Weight>
std::size_t weighted_pick(std::size_t n, Weight weight, SplitMix& rng) {
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) total += weight(i);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < n; ++i) {
    if (u < weight(i)) return i;
    u -= weight(i);
  }
  return n - 1;
}

struct Draw {
  bool on;
  double value;
};

Draw draw(const Distortion& d, SplitMix& rng) {
  const bool on = rng.bernoulli(d.p);
  return {on, rng.uniform(d.range.min, d.range.max)};
}

}  // namespace

// ---------------------------------------------------------------- config

void to_json(json& j, const ForgeConfig& c) {
  json fonts = json::array();
  for (const auto& f : c.fonts) fonts.push_back({{"path", f.path}, {"weight", f.weight}});
  json bgs = json::array();
  for (const auto& b : c.backgrounds) {
    if (b.kind == Background::Kind::kSolid)
      bgs.push_back({{"kind", "solid"}, {"gray", json::array({b.gray_min, b.gray_max})}, {"weight", b.weight}});
    else
      bgs.push_back({{"kind", "image"}, {"path", b.path}, {"weight", b.weight}});
  }
  json dist = json::object();
  for (const auto& d : kDistortionNames) {
    const Distortion& v = c.distortions.*d.member;
    dist[d.name] = {{"p", v.p}, {"range", range_json(v.range)}};
  }
  const Layout& l = c.layout;
  j = {{"master_seed", c.master_seed},
       {"corpus_path", c.corpus_path},
       {"fonts", fonts},
       {"backgrounds", bgs},
       {"layout",
        {{"mode", name_of(kModes, l.mode)},
         {"width", l.width},
         {"height", l.height},
         {"margin", l.margin},
         {"line_spacing", l.line_spacing},
         {"max_lines", l.max_lines},
         {"alignment", name_of(kAlignments, l.alignment)},
         {"max_words", l.max_words}}},
       {"font_size_range", range_json(c.font_size_range)},
       {"distortions", dist},
       {"output", {{"format", c.output.format}, {"count", c.output.count}}}};
}

void from_json(const json& j, ForgeConfig& c) {
  require_keys(j,
               {"master_seed", "corpus_path", "fonts", "backgrounds", "layout", "font_size_range", "distortions",
                "output"},
               "forge");
  c = ForgeConfig{};
  c.master_seed = get<std::uint64_t>(j, "master_seed", 0, "forge");
  c.corpus_path = get<std::string>(j, "corpus_path", "", "forge");
  for (const auto& f : j.value("fonts", json::array())) {
    require_keys(f, {"path", "weight"}, "fonts[]");
    c.fonts.push_back({get<std::string>(f, "path", "", "fonts[]"), get<double>(f, "weight", 1.0, "fonts[]")});
  }
  for (const auto& b : j.value("backgrounds", json::array())) {
    require_keys(b, {"kind", "gray", "path", "weight"}, "backgrounds[]");
    Background bg;
    const auto kind = get<std::string>(b, "kind", "solid", "backgrounds[]");
    if (kind == "solid") {
      const Range g = range_from(b.value("gray", json()), {255, 255}, "backgrounds[].gray");
      bg.gray_min = static_cast<int>(g.min);
      bg.gray_max = static_cast<int>(g.max);
    } else if (kind == "image") {
      bg.kind = Background::Kind::kImage;
      bg.path = get<std::string>(b, "path", "", "backgrounds[]");
    } else {
      throw Error(Errc::kConfig, "backgrounds[].kind: unknown value '" + kind + "'");
    }
    bg.weight = get<double>(b, "weight", 1.0, "backgrounds[]");
    c.backgrounds.push_back(bg);
  }
  if (auto it = j.find("layout"); it != j.end()) {
    const json& l = *it;
    require_keys(l, {"mode", "width", "height", "margin", "line_spacing", "max_lines", "alignment", "max_words"},
                 "layout");
    Layout& o = c.layout;
    o.mode = parse_enum(kModes, get<std::string>(l, "mode", "line", "layout"), "layout.mode");
    o.width = get<int>(l, "width", o.width, "layout");
    o.height = get<int>(l, "height", o.height, "layout");
    o.margin = get<int>(l, "margin", o.margin, "layout");
    o.line_spacing = get<double>(l, "line_spacing", o.line_spacing, "layout");
    o.max_lines = get<int>(l, "max_lines", o.max_lines, "layout");
    o.alignment = parse_enum(kAlignments, get<std::string>(l, "alignment", "right", "layout"), "layout.alignment");
    o.max_words = get<int>(l, "max_words", o.max_words, "layout");
  }
  c.font_size_range = range_from(j.value("font_size_range", json()), c.font_size_range, "font_size_range");
  if (auto it = j.find("distortions"); it != j.end()) {
    if (!it->is_object()) throw Error(Errc::kConfig, "distortions: expected an object");
    for (const auto& [key, val] : it->items()) {
      auto d = std::find_if(std::begin(kDistortionNames), std::end(kDistortionNames),
                            [&](const NamedDistortion& n) { return key == n.name; });
      if (d == std::end(kDistortionNames)) throw Error(Errc::kConfig, "distortions: unknown key '" + key + "'");
      const std::string where = "distortions." + key;
      require_keys(val, {"p", "range"}, where);
      Distortion& out = c.distortions.*(d->member);
      out.p = get<double>(val, "p", 0.0, where);
      out.range = range_from(val.value("range", json()), out.range, where + ".range");
    }
  }
  if (auto it = j.find("output"); it != j.end()) {
    require_keys(*it, {"format", "count"}, "output");
    c.output.format = get<std::string>(*it, "format", "png", "output");
    c.output.count = get<std::size_t>(*it, "count", c.output.count, "output");
  }
}

ForgeConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(Errc::kConfig, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(Errc::kConfig, e.what());
  }
  return load_config(j, path.parent_path());
}

ForgeConfig load_config(const json& j, const fs::path& base) {
  ForgeConfig c = j.get<ForgeConfig>();
  c.corpus_path = resolve(base, c.corpus_path).string();
  for (auto& f : c.fonts) f.path = resolve(base, f.path).string();
  for (auto& b : c.backgrounds)
    if (b.kind == Background::Kind::kImage) b.path = resolve(base, b.path).string();
  return c;
}

std::vector<std::string> validate_config(const ForgeConfig& cfg) {
  std::vector<std::string> diags;
  auto check_range = [&](const std::string& where, const Range& r) {
    if (!(r.min <= r.max)) diags.push_back(where + ": min > max");
  };

  std::set<char32_t> needed;
  if (cfg.corpus_path.empty()) {
    diags.push_back("corpus_path: empty");
  } else {
    try {
      auto lines = load_corpus(cfg.corpus_path);
      if (lines.empty()) diags.push_back("corpus_path: no text lines");
      for (const auto& l : lines) collect_glyphs(l, needed);
    } catch (const Error& e) {
      diags.push_back("corpus_path: " + std::string(e.what()));
    }
  }

  if (cfg.fonts.empty()) diags.push_back("fonts: empty");
  for (std::size_t i = 0; i < cfg.fonts.size(); ++i) {
    const std::string where = "fonts[" + std::to_string(i) + "]";
    if (!(cfg.fonts[i].weight > 0)) diags.push_back(where + ".weight: must be > 0");
    try {
      auto font = FontFile::load(cfg.fonts[i].path);
      if (auto gaps = font.missing(0xFE8D, 0xFEFC); !gaps.empty())
        diags.push_back(where + ": font lacks Arabic presentation forms (" + std::to_string(gaps.size()) +
                        " of U+FE8D..U+FEFC missing)");
      std::vector<std::string> absent;
      for (char32_t cp : needed)
        if (!unicode::is_space(cp) && !font.has_glyph(cp)) absent.push_back(hex_cp(cp));
      if (!absent.empty()) {
        std::string list;
        for (std::size_t k = 0; k < std::min<std::size_t>(absent.size(), 8); ++k) list += (k ? " " : "") + absent[k];
        diags.push_back(where + ": no glyph for " + std::to_string(absent.size()) + " corpus characters (" + list +
                        (absent.size() > 8 ? " ..." : "") + ")");
      }
    } catch (const Error& e) {
      diags.push_back(where + ": " + std::string(e.what()));
    }
  }

  if (cfg.backgrounds.empty()) diags.push_back("backgrounds: empty");
  for (std::size_t i = 0; i < cfg.backgrounds.size(); ++i) {
    const auto& b = cfg.backgrounds[i];
    const std::string where = "backgrounds[" + std::to_string(i) + "]";
    if (!(b.weight > 0)) diags.push_back(where + ".weight: must be > 0");
    if (b.kind == Background::Kind::kSolid) {
      if (b.gray_min < 0 || b.gray_max > 255 || b.gray_min > b.gray_max)
        diags.push_back(where + ".gray: need 0 <= min <= max <= 255");
    } else if (cv::imread(b.path, cv::IMREAD_COLOR).empty()) {
      diags.push_back(where + ": cannot read image " + b.path);
    }
  }

  const Layout& l = cfg.layout;
  if (l.width <= 0) diags.push_back("layout.width: must be > 0");
  if (l.height < 0) diags.push_back("layout.height: must be >= 0");
  if (l.mode != LayoutMode::kLine && l.height <= 0) diags.push_back("layout.height: required for page and poster");
  if (l.margin < 0) diags.push_back("layout.margin: must be >= 0");
  if (2 * l.margin >= l.width) diags.push_back("layout.margin: leaves no room for text");
  if (!(l.line_spacing >= 1.0)) diags.push_back("layout.line_spacing: must be >= 1");
  if (l.max_lines < 1) diags.push_back("layout.max_lines: must be >= 1");
  if (l.max_words < 0) diags.push_back("layout.max_words: must be >= 0");

  check_range("font_size_range", cfg.font_size_range);
  if (!(cfg.font_size_range.min >= 4)) diags.push_back("font_size_range: min must be >= 4 px");
  if (std::ceil(cfg.font_size_range.min) > std::floor(cfg.font_size_range.max))
    diags.push_back("font_size_range: contains no whole pixel size");

  for (const auto& d : kDistortionNames) {
    const Distortion& v = cfg.distortions.*d.member;
    const std::string where = std::string("distortions.") + d.name;
    if (!(v.p >= 0.0 && v.p <= 1.0)) diags.push_back(where + ".p out of [0,1]");
    check_range(where + ".range", v.range);
  }
  const auto& D = cfg.distortions;
  if (D.perspective_warp.range.min < 0 || D.perspective_warp.range.max >= 0.5)
    diags.push_back("distortions.perspective_warp.range: must lie in [0, 0.5)");
  if (D.gaussian_blur.range.min < 0) diags.push_back("distortions.gaussian_blur.range: sigma must be >= 0");
  if (D.gaussian_noise.range.min < 0) diags.push_back("distortions.gaussian_noise.range: stddev must be >= 0");
  if (D.contrast.range.min <= 0) diags.push_back("distortions.contrast.range: gain must be > 0");
  if (D.jpeg_artifacts.range.min < 1 || D.jpeg_artifacts.range.max > 100)
    diags.push_back("distortions.jpeg_artifacts.range: quality must lie in [1, 100]");

  if (cfg.output.format != "png") diags.push_back("output.format: only png is supported");
  if (cfg.output.count < 1) diags.push_back("output.count: must be >= 1");
  return diags;
}

// ---------------------------------------------------------------- generator

struct Forge::Impl {
  ForgeConfig cfg;
  std::vector<std::string> corpus;
  std::vector<LoadedFont> fonts;
  std::vector<double> font_weights;
  std::vector<LoadedBackground> backgrounds;

  Sample generate(std::size_t index) const;
};

Forge::Forge(ForgeConfig cfg) : impl_(std::make_unique<Impl>()) {
  if (auto diags = validate_config(cfg); !diags.empty()) {
    std::string msg;
    for (const auto& d : diags) msg += (msg.empty() ? "" : "; ") + d;
    throw Error(Errc::kConfig, msg);
  }
  impl_->corpus = load_corpus(cfg.corpus_path);
  for (const auto& f : cfg.fonts)
    impl_->fonts.push_back({f.path, fs::path(f.path).stem().string(), FontFile::load(f.path)});
  for (const auto& b : cfg.backgrounds) {
    LoadedBackground lb{b, {}, {}};
    if (b.kind == Background::Kind::kImage) {
      lb.image = cv::imread(b.path, cv::IMREAD_COLOR);
      lb.id = "image:" + fs::path(b.path).filename().string();
    }
    impl_->backgrounds.push_back(std::move(lb));
  }
  impl_->cfg = std::move(cfg);
}

Forge::~Forge() = default;
Forge::Forge(Forge&&) noexcept = default;
Forge& Forge::operator=(Forge&&) noexcept = default;

const ForgeConfig& Forge::config() const noexcept { return impl_->cfg; }

Sample Forge::generate(std::size_t index) const { return impl_->generate(index); }

std::string sample_id_for(std::uint64_t sample_seed) { return fmt::format("syn-{:016x}", sample_seed); }

Sample Forge::Impl::generate(std::size_t index) const {
  const std::uint64_t seed = derive_seed(cfg.master_seed, index);
  SplitMix text_rng(derive_seed(seed, 1)), style_rng(derive_seed(seed, 2)), distort_rng(derive_seed(seed, 3));
  const Layout& layout = cfg.layout;

  // Text.
  auto words = split_words(corpus[static_cast<std::size_t>(text_rng.uniform_int(0, std::int64_t(corpus.size()) - 1))]);
  if (layout.max_words > 0 && words.size() > static_cast<std::size_t>(layout.max_words)) {
    const auto start = static_cast<std::size_t>(text_rng.uniform_int(0, std::int64_t(words.size() - layout.max_words)));
    words = std::vector(words.begin() + start, words.begin() + start + layout.max_words);
  }

  // Style.
  const LoadedFont& font = fonts[weighted_pick(fonts.size(), [&](std::size_t i) { return cfg.fonts[i].weight; }, style_rng)];
  const int size_min = static_cast<int>(std::ceil(cfg.font_size_range.min));
  const int size_max = static_cast<int>(std::floor(cfg.font_size_range.max));
  const int drawn_size = static_cast<int>(style_rng.uniform_int(size_min, size_max));
  const LoadedBackground& bg =
      backgrounds[weighted_pick(backgrounds.size(), [&](std::size_t i) { return backgrounds[i].spec.weight; }, style_rng)];
  const int solid_gray = static_cast<int>(style_rng.uniform_int(bg.spec.gray_min, bg.spec.gray_max));
  const double crop_u = style_rng.uniform(), crop_v = style_rng.uniform();
  const int ink = static_cast<int>(style_rng.uniform_int(0, 60));

  // Fit: shrink from the drawn size until the wrapped text fits.
  const double avail_w = layout.width - 2.0 * layout.margin;
  const int max_lines = layout.mode == LayoutMode::kLine ? 1 : layout.max_lines;
  int size = drawn_size;
  std::vector<std::vector<std::u32string>> lines;
  for (; size >= size_min; --size) {
    Measurer m(font.file, size);
    auto wrapped = wrap(words, m, avail_w, max_lines);
    if (!wrapped) continue;
    if (layout.mode != LayoutMode::kLine) {
      const double block = font.file.ascent(size) + font.file.descent(size) +
                           (static_cast<double>(wrapped->size()) - 1) * size * layout.line_spacing;
      if (block > layout.height - 2.0 * layout.margin) continue;
    }
    lines = std::move(*wrapped);
    break;
  }
  if (lines.empty()) {
    throw Error(Errc::kTextTooLong, fmt::format("sample {}: {} words do not fit at {} px", index, words.size(), size_min));
  }

  // Layout.
  const Measurer m(font.file, size);
  const double ascent = font.file.ascent(size), descent = font.file.descent(size);
  const double pitch = size * layout.line_spacing;
  const int width = layout.width;
  const int height = layout.mode == LayoutMode::kLine && layout.height == 0
                         ? 2 * layout.margin + static_cast<int>(std::ceil(ascent + descent))
                         : layout.height;
  const double block = ascent + descent + (static_cast<double>(lines.size()) - 1) * pitch;
  double top = layout.margin;
  if (layout.mode == LayoutMode::kPoster) top += (height - 2.0 * layout.margin - block) / 2.0;
  std::vector<LaidLine> laid;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    laid.push_back(place_line(std::move(lines[i]), m, layout, width, i + 1 == lines.size()));
    laid.back().baseline = static_cast<int>(std::lround(top + ascent + static_cast<double>(i) * pitch));
  }

  // Background.
  cv::Mat img;
  std::string bg_id;
  if (bg.spec.kind == Background::Kind::kSolid) {
    img = cv::Mat(height, width, CV_8UC3, cv::Scalar::all(solid_gray));
    bg_id = "solid:" + std::to_string(solid_gray);
  } else {
    cv::Mat src = bg.image;
    if (src.cols < width || src.rows < height) {
      const double scale = std::max(double(width) / src.cols, double(height) / src.rows);
      cv::resize(src, src, cv::Size(std::max(width, int(std::ceil(src.cols * scale))),
                                    std::max(height, int(std::ceil(src.rows * scale)))),
                 0, 0, cv::INTER_LINEAR);
    }
    const int ox = static_cast<int>(crop_u * (src.cols - width + 1));
    const int oy = static_cast<int>(crop_v * (src.rows - height + 1));
    img = src(cv::Rect(ox, oy, width, height)).clone();
    bg_id = fmt::format("{}@{},{}", bg.id, ox, oy);
  }
  const int text_gray = cv::mean(img)[0] < 128 ? 255 - ink : ink;

  // Raster.
  auto& ft = freetype_for(font.path);
  std::string utf8;
  for (const auto& line : laid) {
    for (const auto& g : line.glyphs) {
      if (!g.draw) continue;
      utf8.clear();
      unicode::append_utf8(utf8, g.cp);
      ft.putText(img, utf8, cv::Point(static_cast<int>(std::lround(g.pen_x)), line.baseline), size,
                 cv::Scalar::all(text_gray), -1, cv::LINE_AA, true);
    }
  }

  // Boxes before distortion, snapped outward to whole pixels.
  std::vector<geometry::PixelBox> line_boxes;
  std::vector<WordBox> word_boxes;
  std::string ground_truth;
  for (const auto& line : laid) {
    const double y0 = line.baseline - ascent, h = ascent + descent;
    line_boxes.push_back(geometry::enclosing_pixels(geometry::Box<double>{line.left, y0, line.right - line.left, h}));
    std::string text;
    for (std::size_t w = 0; w < line.words.size(); ++w) {
      const auto [l, r] = line.word_spans[w];
      const std::string word = unicode::encode(line.words[w]);
      word_boxes.push_back({geometry::enclosing_pixels(geometry::Box<double>{l, y0, r - l, h}), word});
      text += (w ? " " : "") + word;
    }
    ground_truth += (ground_truth.empty() ? "" : "\n") + text;
  }

  // Distortions, in fixed order. Both the coin and the parameter are always
  // drawn so every sample consumes the same stream.
  const Distortions& D = cfg.distortions;
  Mat3 H = Mat3::Identity();
  std::vector<AppliedDistortion> applied;

  const Draw warp = draw(D.perspective_warp, distort_rng);
  double offsets[8];
  for (double& o : offsets) o = distort_rng.uniform();
  if (warp.on && warp.value > 0) {
    const float w = float(img.cols), h = float(img.rows);
    const cv::Point2f src[4] = {{0, 0}, {w, 0}, {w, h}, {0, h}};
    const float sx[4] = {1, -1, -1, 1}, sy[4] = {1, 1, -1, -1};  // inward
    cv::Point2f dst[4];
    AppliedDistortion a{"perspective_warp", {{"ratio", warp.value}}};
    static const char* kCorner[4] = {"tl", "tr", "br", "bl"};
    for (int k = 0; k < 4; ++k) {
      const double dx = offsets[2 * k] * warp.value * w, dy = offsets[2 * k + 1] * warp.value * h;
      dst[k] = {src[k].x + sx[k] * float(dx), src[k].y + sy[k] * float(dy)};
      a.params[std::string(kCorner[k]) + "_dx"] = sx[k] * float(dx);
      a.params[std::string(kCorner[k]) + "_dy"] = sy[k] * float(dy);
    }
    const cv::Mat P = cv::getPerspectiveTransform(src, dst);
    Mat3 step;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) step(r, c) = P.at<double>(r, c);
    cv::warpPerspective(img, img, to_opencv(step), img.size(), cv::INTER_LINEAR, cv::BORDER_REPLICATE);
    H = step * H;
    applied.push_back(std::move(a));
  }

  const Draw rot = draw(D.rotation, distort_rng);
  if (rot.on && rot.value != 0.0) {
    const auto r = geometry::rotation_expanding(rot.value, img.cols, img.rows);
    cv::Mat cvm = to_opencv(r.transform);
    cv::warpAffine(img, img, cvm.rowRange(0, 2), cv::Size(r.width, r.height), cv::INTER_LINEAR, cv::BORDER_REPLICATE);
    H = r.transform * H;
    applied.push_back({"rotation", {{"degrees", rot.value}}});
  }

  const Draw blur = draw(D.gaussian_blur, distort_rng);
  if (blur.on && blur.value > 0) {
    cv::GaussianBlur(img, img, cv::Size(0, 0), blur.value, blur.value, cv::BORDER_REPLICATE);
    applied.push_back({"gaussian_blur", {{"sigma", blur.value}}});
  }

  const Draw noise = draw(D.gaussian_noise, distort_rng);
  SplitMix noise_rng(distort_rng.next());
  if (noise.on && noise.value > 0) {
    add_gaussian_noise(img, noise.value, noise_rng);
    applied.push_back({"gaussian_noise", {{"stddev", noise.value}}});
  }

  const Draw bright = draw(D.brightness, distort_rng);
  const Draw contrast = draw(D.contrast, distort_rng);
  if (bright.on || contrast.on) {
    const double gain = contrast.on ? contrast.value : 1.0;
    const double shift = bright.on ? bright.value : 0.0;
    img.convertTo(img, -1, gain, 128.0 * (1.0 - gain) + shift);
    if (bright.on) applied.push_back({"brightness", {{"delta", bright.value}}});
    if (contrast.on) applied.push_back({"contrast", {{"gain", contrast.value}}});
  }

  const Draw jpeg = draw(D.jpeg_artifacts, distort_rng);
  if (jpeg.on) {
    const int quality = std::clamp(static_cast<int>(std::lround(jpeg.value)), 1, 100);
    std::vector<std::uint8_t> buf;
    cv::imencode(".jpg", img, buf, {cv::IMWRITE_JPEG_QUALITY, quality});
    img = cv::imdecode(buf, cv::IMREAD_COLOR);
    applied.push_back({"jpeg_artifacts", {{"quality", double(quality)}}});
  }

  // Boxes through the accumulated geometry.
  auto map_box = [&](const geometry::PixelBox& b) {
    return geometry::clamp(geometry::enclosing_pixels(geometry::transform_box(b.cast<double>(), H)), img.cols,
                           img.rows);
  };
  Sample out;
  SampleRecord& rec = out.record;
  for (const auto& b : line_boxes) rec.line_boxes.push_back(map_box(b));
  for (auto& w : word_boxes) rec.word_boxes.push_back({map_box(w.box), std::move(w.word)});

  std::vector<std::uint8_t> png;
  cv::imencode(".png", img, png);
  out.png.assign(png.begin(), png.end());

  rec.sample_id = sample_id_for(seed);
  rec.image_path = "images/" + rec.sample_id + ".png";
  rec.content_hash = sha256_hex(out.png);
  rec.width = img.cols;
  rec.height = img.rows;
  rec.ground_truth = std::move(ground_truth);
  rec.provenance = Provenance::kSynthetic;
  RenderMeta meta;
  meta.font = font.name;
  meta.font_size = size;
  meta.background = bg_id;
  meta.layout = std::string(name_of(kModes, layout.mode));
  meta.text_gray = text_gray;
  meta.distortions = std::move(applied);
  meta.sample_seed = seed;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) meta.transform.push_back(H(r, c));
  rec.render_meta = std::move(meta);
  return out;
}

Manifest generate_dataset(const Forge& forge, const fs::path& out_dir, const DatasetOptions& opts) {
  const ForgeConfig& cfg = forge.config();
  const fs::path images = out_dir / "images";
  const bool occupied = fs::exists(out_dir / "manifest.jsonl") || (fs::exists(images) && !fs::is_empty(images));
  if (occupied && !opts.overwrite)
    throw Error(Errc::kOutputExists, out_dir.string() + " already holds a dataset (use --overwrite)");
  if (occupied) fs::remove_all(images);
  fs::create_directories(images);

  Manifest m;
  m.root = out_dir;
  json skipped = json::array();
  const std::size_t target = cfg.output.count;
  const std::size_t max_skips = 1000 + 10 * target;
  std::size_t next = 0;
  while (m.records.size() < target) {
    const std::size_t need = target - m.records.size();
    std::vector<std::optional<SampleRecord>> got(need);
    std::vector<std::string> why(need);
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr fatal;
    std::mutex fatal_mu;
    auto worker = [&] {
      for (std::size_t k = cursor++; k < need; k = cursor++) {
        try {
          Sample s = forge.generate(next + k);
          write_file(out_dir / s.record.image_path, s.png);
          got[k] = std::move(s.record);
        } catch (const Error& e) {
          if (e.code() == Errc::kTextTooLong) {
            why[k] = e.what();
            continue;
          }
          std::lock_guard lock(fatal_mu);
          if (!fatal) fatal = std::current_exception();
        } catch (...) {
          std::lock_guard lock(fatal_mu);
          if (!fatal) fatal = std::current_exception();
        }
      }
    };
    {
      std::vector<std::jthread> pool;
      const std::size_t n = std::clamp<std::size_t>(opts.jobs, 1, need);
      for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    }
    if (fatal) std::rethrow_exception(fatal);
    for (std::size_t k = 0; k < need; ++k) {
      if (got[k]) {
        m.records.push_back(std::move(*got[k]));
      } else {
        spdlog::warn("skipped index {}: {}", next + k, why[k]);
        skipped.push_back({{"index", next + k}, {"reason", why[k]}});
      }
    }
    next += need;
    if (skipped.size() > max_skips)
      throw Error(Errc::kTextTooLong, fmt::format("{} samples skipped; corpus lines are too long for the layout", skipped.size()));
  }
  m.stats = compute_stats(m);
  m.generator = opts.generator.is_object() ? opts.generator : json::object();
  m.generator["skipped"] = skipped;
  write_manifest(m, out_dir, true);
  return m;
}

}  // namespace qalam::forge
