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

// Synthetic text-image generator. Each sample is a pure function of
// (config, index): corpus text is wrapped and shaped, rasterized onto a
// background, pushed through a fixed distortion chain, and returned with
// line and word boxes mapped through the same geometry.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qalam/manifest.hpp"

namespace qalam::forge {

struct Range {
  double min = 0;
  double max = 0;
};

struct FontChoice {
  std::string path;
  double weight = 1;
};

struct Background {
  enum class Kind { kSolid, kImage };
  Kind kind = Kind::kSolid;
  int gray_min = 255;  // solid only
  int gray_max = 255;
  std::string path;  // image only
  double weight = 1;
};

enum class LayoutMode { kLine, kPage, kPoster };
enum class Alignment { kRight, kCenter, kJustified };

struct Layout {
  LayoutMode mode = LayoutMode::kLine;
  int width = 640;
  int height = 0;  // 0 in line mode: fit to the text line
  int margin = 16;
  double line_spacing = 1.5;  // baseline-to-baseline, in em
  int max_lines = 1;
  Alignment alignment = Alignment::kRight;
  int max_words = 0;  // 0 keeps the whole corpus line
};

struct Distortion {
  double p = 0;
  Range range;
};

/// Applied in member order.
struct Distortions {
  Distortion perspective_warp{0, {0.0, 0.05}};  // corner displacement, fraction of side
  Distortion rotation{0, {-5, 5}};               // degrees
  Distortion gaussian_blur{0, {0.3, 1.2}};       // sigma, px
  Distortion gaussian_noise{0, {2, 10}};         // stddev, grey levels
  Distortion brightness{0, {-30, 30}};           // added grey levels
  Distortion contrast{0, {0.7, 1.3}};            // gain about mid-grey
  Distortion jpeg_artifacts{0, {30, 90}};        // quality
};

struct Output {
  std::string format = "png";
  std::size_t count = 100;
};

struct ForgeConfig {
  std::uint64_t master_seed = 0;
  std::string corpus_path;
  std::vector<FontChoice> fonts;
  std::vector<Background> backgrounds;
  Layout layout;
  Range font_size_range{28, 40};  // pixels per em
  Distortions distortions;
  Output output;
};

void to_json(nlohmann::json& j, const ForgeConfig& c);
/// Throws Error(kConfig) on unknown keys or wrong types.
void from_json(const nlohmann::json& j, ForgeConfig& c);

/// Parses a JSON config file; relative paths resolve against its directory.
ForgeConfig load_config(const std::filesystem::path& path);
/// Same, for a config already parsed; relative paths resolve against `base`.
ForgeConfig load_config(const nlohmann::json& j, const std::filesystem::path& base);

/// Every problem found, as "field: message" lines. Empty means valid.
std::vector<std::string> validate_config(const ForgeConfig& cfg);

struct Sample {
  SampleRecord record;
  std::string png;  // encoded image; record.content_hash is its SHA-256
};

/// Owns loaded fonts, backgrounds and corpus. generate() is const and safe
/// to call concurrently.
class Forge {
 public:
  /// Throws Error(kConfig) listing validate_config diagnostics.
  explicit Forge(ForgeConfig cfg);
  ~Forge();
  Forge(Forge&&) noexcept;
  Forge& operator=(Forge&&) noexcept;

  const ForgeConfig& config() const noexcept;

  /// Throws Error(kTextTooLong) when the drawn text cannot fit at the
  /// smallest font size, Error(kFontRender) for a glyph the font lacks.
  Sample generate(std::size_t index) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sample_id_for(std::uint64_t sample_seed);

struct DatasetOptions {
  std::size_t jobs = 1;
  bool overwrite = false;
  nlohmann::json generator = nlohmann::json::object();  // merged into the manifest's generator echo
};

/// Generates cfg.output.count samples into `out_dir` (images/, manifest.jsonl,
/// stats.json). Skipped indices are replaced by later ones, so the result
/// does not depend on `jobs`. Throws Error(kOutputExists) for a non-empty
/// target unless overwriting.
Manifest generate_dataset(const Forge& forge, const std::filesystem::path& out_dir, const DatasetOptions& opts);

}  // namespace qalam::forge
