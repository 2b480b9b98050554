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

#include "qalam/manifest.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "qalam/errors.hpp"
#include "qalam/io.hpp"
#include "qalam/unicode.hpp"

namespace qalam {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::pair<Provenance, std::string_view>, 6> kProvenanceNames{{
    {Provenance::kSynthetic, "synthetic"},
    {Provenance::kScannedLiterature, "scanned_literature"},
    {Provenance::kSocialMedia, "social_media"},
    {Provenance::kEducational, "educational"},
    {Provenance::kRecipe, "recipe"},
    {Provenance::kExternal, "external"},
}};

constexpr std::array<std::pair<Split, std::string_view>, 3> kSplitNames{{
    {Split::kTrain, "train"},
    {Split::kValidation, "validation"},
    {Split::kBench, "bench"},
}};

void require_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view what) {
  if (!j.is_object()) throw Error(Errc::kConfig, std::string(what) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(Errc::kConfig, std::string(what) + ": unknown key '" + key + "'");
  }
}

json box_json(const geometry::PixelBox& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

geometry::PixelBox box_from(const json& j) {
  require_keys(j, {"x", "y", "w", "h"}, "box");
  return {j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(), j.at("h").get<int>()};
}

json meta_json(const RenderMeta& m) {
  json d = json::array();
  for (const auto& a : m.distortions) d.push_back({{"name", a.name}, {"params", a.params}});
  return {{"font", m.font},          {"font_size", m.font_size}, {"background", m.background},
          {"layout", m.layout},      {"text_gray", m.text_gray}, {"distortions", d},
          {"sample_seed", m.sample_seed}, {"transform", m.transform}};
}

RenderMeta meta_from(const json& j) {
  require_keys(j, {"font", "font_size", "background", "layout", "text_gray", "distortions", "sample_seed", "transform"},
               "render_meta");
  RenderMeta m;
  m.font = j.at("font").get<std::string>();
  m.font_size = j.at("font_size").get<int>();
  m.background = j.at("background").get<std::string>();
  m.layout = j.value("layout", "");
  m.text_gray = j.value("text_gray", 0);
  for (const auto& d : j.at("distortions")) {
    require_keys(d, {"name", "params"}, "render_meta.distortions");
    m.distortions.push_back({d.at("name").get<std::string>(), d.at("params").get<std::map<std::string, double>>()});
  }
  m.sample_seed = j.at("sample_seed").get<std::uint64_t>();
  m.transform = j.value("transform", std::vector<double>{});
  return m;
}

fs::path manifest_file(const fs::path& p) {
  return fs::is_directory(p) ? p / "manifest.jsonl" : p;
}

}  // namespace

std::string_view to_string(Provenance p) noexcept {
  for (auto [v, n] : kProvenanceNames)
    if (v == p) return n;
  return "unknown";
}

Provenance parse_provenance(std::string_view name) {
  for (auto [v, n] : kProvenanceNames)
    if (n == name) return v;
  throw Error(Errc::kConfig, "unknown provenance '" + std::string(name) + "'");
}

std::string_view provenance_class(Provenance p) noexcept {
  return p == Provenance::kSynthetic ? "synthetic" : "real";
}

std::string_view to_string(Split s) noexcept {
  for (auto [v, n] : kSplitNames)
    if (v == s) return n;
  return "unknown";
}

Split parse_split(std::string_view name) {
  for (auto [v, n] : kSplitNames)
    if (n == name) return v;
  throw Error(Errc::kConfig, "unknown split '" + std::string(name) + "'");
}

std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char32_t cp : unicode::decode(text)) {
    const bool space = unicode::is_space(cp);
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

ManifestStats compute_stats(const Manifest& m) {
  ManifestStats s;
  s.samples = m.records.size();
  for (const auto& r : m.records) {
    s.total_words += count_words(r.ground_truth);
    ++s.provenance_histogram[std::string(to_string(r.provenance))];
    if (auto it = m.split_assignments.find(r.sample_id); it != m.split_assignments.end())
      ++s.split_counts[std::string(to_string(it->second))];
  }
  return s;
}

void to_json(json& j, const SampleRecord& r) {
  json words = json::array();
  for (const auto& w : r.word_boxes) words.push_back({{"box", box_json(w.box)}, {"word", w.word}});
  json lines = json::array();
  for (const auto& b : r.line_boxes) lines.push_back(box_json(b));
  j = {{"sample_id", r.sample_id},
       {"image_path", r.image_path},
       {"content_hash", r.content_hash},
       {"width", r.width},
       {"height", r.height},
       {"ground_truth", r.ground_truth},
       {"line_boxes", lines},
       {"word_boxes", words},
       {"provenance", to_string(r.provenance)},
       {"render_meta", r.render_meta ? meta_json(*r.render_meta) : json(nullptr)}};
}

void from_json(const json& j, SampleRecord& r) {
  require_keys(j,
               {"sample_id", "image_path", "content_hash", "width", "height", "ground_truth", "line_boxes",
                "word_boxes", "provenance", "render_meta", "split"},
               "record");
  r = {};
  r.sample_id = j.at("sample_id").get<std::string>();
  r.image_path = j.at("image_path").get<std::string>();
  r.content_hash = j.value("content_hash", "");
  r.width = j.value("width", 0);
  r.height = j.value("height", 0);
  r.ground_truth = j.at("ground_truth").get<std::string>();
  for (const auto& b : j.value("line_boxes", json::array())) r.line_boxes.push_back(box_from(b));
  for (const auto& w : j.value("word_boxes", json::array())) {
    require_keys(w, {"box", "word"}, "word_boxes");
    r.word_boxes.push_back({box_from(w.at("box")), w.at("word").get<std::string>()});
  }
  r.provenance = parse_provenance(j.at("provenance").get<std::string>());
  if (auto it = j.find("render_meta"); it != j.end() && !it->is_null()) r.render_meta = meta_from(*it);
}

void to_json(json& j, const ManifestStats& s) {
  j = {{"samples", s.samples},
       {"total_words", s.total_words},
       {"provenance_histogram", s.provenance_histogram},
       {"split_counts", s.split_counts}};
}

void from_json(const json& j, ManifestStats& s) {
  require_keys(j, {"samples", "total_words", "provenance_histogram", "split_counts"}, "stats");
  s.samples = j.at("samples").get<std::size_t>();
  s.total_words = j.at("total_words").get<std::size_t>();
  s.provenance_histogram = j.value("provenance_histogram", std::map<std::string, std::size_t>{});
  s.split_counts = j.value("split_counts", std::map<std::string, std::size_t>{});
}

std::string record_line(const SampleRecord& r, const Manifest& m) {
  json j = r;
  if (auto it = m.split_assignments.find(r.sample_id); it != m.split_assignments.end())
    j["split"] = to_string(it->second);
  return j.dump();
}

Manifest read_manifest(const fs::path& path) {
  const fs::path file = manifest_file(path);
  Manifest m;
  m.root = file.parent_path();
  const fs::path stats_file = m.root / "stats.json";
  bool have_stats = false;
  if (fs::exists(stats_file)) {
    json s;
    try {
      s = json::parse(read_file(stats_file));
    } catch (const json::exception& e) {
      throw Error(Errc::kIo, stats_file.string() + ": " + e.what());
    }
    m.schema_version = s.value("schema_version", 0);
    if (m.schema_version > kManifestSchemaVersion)
      throw Error(Errc::kSchemaVersion, file.string() + ": schema_version " + std::to_string(m.schema_version) +
                                            " is newer than supported " + std::to_string(kManifestSchemaVersion));
    if (s.contains("stats")) {
      m.stats = s.at("stats").get<ManifestStats>();
      have_stats = true;
    }
    if (s.contains("generator")) m.generator = s.at("generator");
  }
  std::istringstream in(read_file(file));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      auto r = j.get<SampleRecord>();
      if (auto it = j.find("split"); it != j.end()) m.split_assignments[r.sample_id] = parse_split(it->get<std::string>());
      m.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(Errc::kIo, file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_stats) m.stats = compute_stats(m);
  return m;
}

Manifest rebase(Manifest m, const fs::path& new_root) {
  if (m.root.empty()) {
    m.root = new_root;
    return m;
  }
  const fs::path from = fs::weakly_canonical(fs::absolute(m.root));
  const fs::path to = fs::weakly_canonical(fs::absolute(new_root));
  if (from != to) {
    for (auto& r : m.records) {
      const fs::path abs = fs::weakly_canonical(from / r.image_path);
      r.image_path = abs.lexically_relative(to).generic_string();
    }
  }
  m.root = new_root;
  return m;
}

void write_manifest(const Manifest& m, const fs::path& dir, bool overwrite) {
  const fs::path file = dir / "manifest.jsonl";
  if (!overwrite && fs::exists(file)) throw Error(Errc::kOutputExists, file.string() + " exists (use --overwrite)");
  fs::create_directories(dir);
  const Manifest out = rebase(m, dir);
  std::string body;
  for (const auto& r : out.records) {
    body += record_line(r, out);
    body += '\n';
  }
  json stats = {{"schema_version", out.schema_version}, {"stats", out.stats}, {"generator", out.generator}};
  write_file_atomic(dir / "stats.json", stats.dump(2) + "\n");
  write_file_atomic(file, body);
}

std::string manifest_digest(const Manifest& m) {
  std::string body;
  for (const auto& r : m.records) {
    body += record_line(r, m);
    body += '\n';
  }
  return sha256_hex(body);
}

}  // namespace qalam
