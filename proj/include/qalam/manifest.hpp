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

#pragma once

// Sample records and manifests: the on-disk dataset format shared by the
// generator, real-data ingest, review export and benchmarks.
//
// A manifest directory holds `manifest.jsonl` (one SampleRecord per line,
// in order) and `stats.json` (schema version, statistics, provenance of the
// command that wrote it). Image paths are relative to that directory.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qalam/geometry.hpp"

namespace qalam {

inline constexpr int kManifestSchemaVersion = 1;

enum class Provenance { kSynthetic, kScannedLiterature, kSocialMedia, kEducational, kRecipe, kExternal };

std::string_view to_string(Provenance p) noexcept;
/// Throws Error(kConfig) for unknown names.
Provenance parse_provenance(std::string_view name);
/// "synthetic" for generated samples, "real" for everything else.
std::string_view provenance_class(Provenance p) noexcept;

enum class Split { kTrain, kValidation, kBench };

std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view name);

struct WordBox {
  geometry::PixelBox box;
  std::string word;

  bool operator==(const WordBox&) const = default;
};

struct AppliedDistortion {
  std::string name;
  std::map<std::string, double> params;

  bool operator==(const AppliedDistortion&) const = default;
};

struct RenderMeta {
  std::string font;
  int font_size = 0;
  std::string background;
  std::string layout;
  int text_gray = 0;
  std::vector<AppliedDistortion> distortions;
  std::uint64_t sample_seed = 0;
  std::vector<double> transform;  // row-major 3x3, undistorted -> final pixels

  bool operator==(const RenderMeta&) const = default;
};

struct SampleRecord {
  std::string sample_id;
  std::string image_path;
  std::string content_hash;  // SHA-256 of the image file
  int width = 0;
  int height = 0;
  std::string ground_truth;
  std::vector<geometry::PixelBox> line_boxes;
  std::vector<WordBox> word_boxes;
  Provenance provenance = Provenance::kSynthetic;
  std::optional<RenderMeta> render_meta;

  bool operator==(const SampleRecord&) const = default;
};

struct ManifestStats {
  std::size_t samples = 0;
  std::size_t total_words = 0;
  std::map<std::string, std::size_t> provenance_histogram;
  std::map<std::string, std::size_t> split_counts;

  bool operator==(const ManifestStats&) const = default;
};

struct Manifest {
  std::vector<SampleRecord> records;
  std::map<std::string, Split> split_assignments;
  ManifestStats stats;
  int schema_version = kManifestSchemaVersion;
  nlohmann::json generator = nlohmann::json::object();  // tool version, config echo, seed
  std::filesystem::path root;                            // image paths resolve against this

  std::filesystem::path image_file(const SampleRecord& r) const { return root / r.image_path; }
};

/// Whitespace-delimited tokens of raw text; the "words" of dataset stats.
std::size_t count_words(std::string_view text);

ManifestStats compute_stats(const Manifest& m);

void to_json(nlohmann::json& j, const SampleRecord& r);
void from_json(const nlohmann::json& j, SampleRecord& r);
void to_json(nlohmann::json& j, const ManifestStats& s);
void from_json(const nlohmann::json& j, ManifestStats& s);

/// One record per line, keys sorted, with "split" added when assigned.
std::string record_line(const SampleRecord& r, const Manifest& m);

/// `path` is a manifest directory or its manifest.jsonl. Throws
/// Error(kSchemaVersion) for manifests newer than this build understands.
Manifest read_manifest(const std::filesystem::path& path);

/// Writes manifest.jsonl and stats.json into `dir` using the stored stats.
/// Refuses (Error(kOutputExists)) to replace an existing manifest unless
/// `overwrite`.
void write_manifest(const Manifest& m, const std::filesystem::path& dir, bool overwrite);

/// Rewrites image paths so they resolve from `new_root`.
Manifest rebase(Manifest m, const std::filesystem::path& new_root);

/// SHA-256 of the manifest.jsonl bytes a manifest would be written as.
std::string manifest_digest(const Manifest& m);

}  // namespace qalam
