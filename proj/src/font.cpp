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

#include "qalam/font.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <string_view>

#include "qalam/errors.hpp"

namespace qalam {

namespace {

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, std::string_view name)
      : data_(data), name_(name) {}

  void need(std::size_t off, std::size_t len) const {
    if (off > data_.size() || len > data_.size() - off) {
      throw Error(Errc::kConfig, "font " + std::string(name_) + ": truncated table data");
    }
  }
  std::uint8_t u8(std::size_t off) const {
    need(off, 1);
    return data_[off];
  }
  std::uint16_t u16(std::size_t off) const {
    need(off, 2);
    return static_cast<std::uint16_t>(data_[off] << 8 | data_[off + 1]);
  }
  std::int16_t i16(std::size_t off) const { return static_cast<std::int16_t>(u16(off)); }
  std::uint32_t u32(std::size_t off) const {
    need(off, 4);
    return std::uint32_t{data_[off]} << 24 | std::uint32_t{data_[off + 1]} << 16 |
           std::uint32_t{data_[off + 2]} << 8 | data_[off + 3];
  }

 private:
  const std::vector<std::uint8_t>& data_;
  std::string_view name_;
};

void read_format4(const Reader& r, std::size_t base,
                  std::map<char32_t, std::uint16_t>& out) {
  const std::size_t segs = r.u16(base + 6) / 2;
  const std::size_t ends = base + 14;
  const std::size_t starts = ends + 2 * segs + 2;
  const std::size_t deltas = starts + 2 * segs;
  const std::size_t offsets = deltas + 2 * segs;
  for (std::size_t s = 0; s < segs; ++s) {
    const std::uint16_t end = r.u16(ends + 2 * s);
    const std::uint16_t start = r.u16(starts + 2 * s);
    const std::uint16_t delta = r.u16(deltas + 2 * s);
    const std::uint16_t range_offset = r.u16(offsets + 2 * s);
    if (start > end) continue;
    for (std::uint32_t c = start; c <= end && c != 0xFFFF; ++c) {
      std::uint16_t glyph = 0;
      if (range_offset == 0) {
        glyph = static_cast<std::uint16_t>(c + delta);
      } else {
        std::size_t at = offsets + 2 * s + range_offset + 2 * (c - start);
        glyph = r.u16(at);
        if (glyph != 0) glyph = static_cast<std::uint16_t>(glyph + delta);
      }
      if (glyph != 0) out.emplace(static_cast<char32_t>(c), glyph);
    }
  }
}

void read_format12(const Reader& r, std::size_t base,
                   std::map<char32_t, std::uint16_t>& out) {
  const std::uint32_t groups = r.u32(base + 12);
  for (std::uint32_t g = 0; g < groups; ++g) {
    const std::size_t at = base + 16 + 12 * static_cast<std::size_t>(g);
    const std::uint32_t start = r.u32(at), end = r.u32(at + 4), glyph = r.u32(at + 8);
    if (end < start || end > 0x10FFFF) continue;
    for (std::uint32_t c = start; c <= end; ++c) {
      const std::uint32_t gid = glyph + (c - start);
      if (gid != 0 && gid <= 0xFFFF) out.emplace(static_cast<char32_t>(c), static_cast<std::uint16_t>(gid));
    }
  }
}

}  // namespace

FontFile FontFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kConfig, "cannot read font " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(std::move(bytes), path.stem().string());
}

FontFile FontFile::parse(std::vector<std::uint8_t> bytes, std::string name) {
  FontFile font;
  font.name_ = std::move(name);
  Reader r(bytes, font.name_);
  const std::uint32_t tag = r.u32(0);
  if (tag != 0x00010000 && tag != 0x4F54544F /* OTTO */ && tag != 0x74727565 /* true */) {
    throw Error(Errc::kConfig, "font " + font.name_ + ": not a TrueType/OpenType file");
  }
  std::map<std::string, std::pair<std::size_t, std::size_t>> tables;
  const std::uint16_t num_tables = r.u16(4);
  for (std::uint16_t i = 0; i < num_tables; ++i) {
    const std::size_t rec = 12 + 16 * static_cast<std::size_t>(i);
    std::string t;
    for (int k = 0; k < 4; ++k) t.push_back(static_cast<char>(r.u8(rec + k)));
    tables[t] = {r.u32(rec + 8), r.u32(rec + 12)};
  }
  auto table = [&](const char* t) {
    auto it = tables.find(t);
    if (it == tables.end()) throw Error(Errc::kConfig, "font " + font.name_ + ": missing '" + t + "' table");
    return it->second.first;
  };

  const std::size_t head = table("head");
  font.units_per_em_ = r.u16(head + 18);
  if (font.units_per_em_ == 0) throw Error(Errc::kConfig, "font " + font.name_ + ": zero unitsPerEm");
  const int loca_format = r.i16(head + 50);

  const std::size_t hhea = table("hhea");
  font.ascender_ = r.i16(hhea + 4);
  font.descender_ = r.i16(hhea + 6);
  const std::uint16_t n_metrics = r.u16(hhea + 34);

  const std::size_t maxp = table("maxp");
  const std::uint16_t n_glyphs = r.u16(maxp + 4);

  const std::size_t hmtx = table("hmtx");
  font.advances_.resize(n_glyphs);
  for (std::size_t g = 0; g < n_glyphs; ++g) {
    font.advances_[g] = n_metrics == 0 ? 0 : r.u16(hmtx + 4 * std::min<std::size_t>(g, n_metrics - 1u));
  }

  // Prefer a full-repertoire (format 12) subtable, then Unicode BMP format 4.
  const std::size_t cmap = table("cmap");
  std::map<char32_t, std::uint16_t> mapping;
  std::size_t best4 = 0, best12 = 0;
  for (std::uint16_t i = 0, n = r.u16(cmap + 2); i < n; ++i) {
    const std::size_t rec = cmap + 4 + 8 * static_cast<std::size_t>(i);
    const std::uint16_t platform = r.u16(rec), encoding = r.u16(rec + 2);
    const std::size_t sub = cmap + r.u32(rec + 4);
    const bool unicode = platform == 0 || (platform == 3 && (encoding == 1 || encoding == 10));
    if (!unicode) continue;
    const std::uint16_t format = r.u16(sub);
    if (format == 12 && !best12) best12 = sub;
    if (format == 4 && !best4) best4 = sub;
  }
  if (best12) read_format12(r, best12, mapping);
  else if (best4) read_format4(r, best4, mapping);
  else throw Error(Errc::kConfig, "font " + font.name_ + ": no Unicode cmap subtable");
  font.cmap_.assign(mapping.begin(), mapping.end());

  if (tables.count("loca") && tables.count("glyf")) {
    const std::size_t loca = table("loca"), glyf = table("glyf");
    font.bounds_.resize(n_glyphs);
    for (std::size_t g = 0; g < n_glyphs; ++g) {
      const std::size_t off = loca_format == 0 ? 2u * r.u16(loca + 2 * g) : r.u32(loca + 4 * g);
      const std::size_t next = loca_format == 0 ? 2u * r.u16(loca + 2 * (g + 1)) : r.u32(loca + 4 * (g + 1));
      if (next <= off) continue;  // empty glyph
      const std::size_t at = glyf + off;
      font.bounds_[g] = {r.i16(at + 2), r.i16(at + 4), r.i16(at + 6), r.i16(at + 8)};
    }
  }
  return font;
}

std::optional<std::uint16_t> FontFile::glyph_index(char32_t cp) const noexcept {
  auto it = std::lower_bound(cmap_.begin(), cmap_.end(), cp,
                             [](const auto& e, char32_t c) { return e.first < c; });
  if (it == cmap_.end() || it->first != cp) return std::nullopt;
  return it->second;
}

double FontFile::advance(char32_t cp, double size_px) const noexcept {
  auto g = glyph_index(cp);
  std::uint16_t units = g && *g < advances_.size() ? advances_[*g] : (advances_.empty() ? 0 : advances_[0]);
  return units * size_px / units_per_em_;
}

double FontFile::ascent(double size_px) const noexcept { return ascender_ * size_px / units_per_em_; }

double FontFile::descent(double size_px) const noexcept { return -descender_ * size_px / units_per_em_; }

std::optional<GlyphBounds> FontFile::bounds(char32_t cp) const noexcept {
  auto g = glyph_index(cp);
  if (!g || *g >= bounds_.size()) return std::nullopt;
  return bounds_[*g];
}

std::vector<char32_t> FontFile::missing(char32_t first, char32_t last) const {
  std::vector<char32_t> out;
  for (char32_t c = first; c <= last; ++c) {
    if (!has_glyph(c)) out.push_back(c);
  }
  return out;
}

}  // namespace qalam
