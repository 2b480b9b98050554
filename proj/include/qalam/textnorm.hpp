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

// Scoring-time text normalization: harakat removal, line-break
// standardization and whitespace collapsing. Applied identically to ground
// truth and model output.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace qalam {

/// Sorted set of codepoints; cheap membership test by binary search.
class CodepointSet {
 public:
  CodepointSet() = default;
  explicit CodepointSet(std::vector<char32_t> cps);

  bool contains(char32_t cp) const noexcept;
  const std::vector<char32_t>& values() const noexcept { return cps_; }
  std::size_t size() const noexcept { return cps_.size(); }
  bool operator==(const CodepointSet&) const = default;

  /// Compact range form, e.g. {"064B..065F", "0670"}.
  std::vector<std::string> to_ranges() const;
  static CodepointSet from_ranges(const std::vector<std::string>& ranges);

 private:
  std::vector<char32_t> cps_;
};

struct NormalizationConfig {
  bool strip_diacritics = true;
  CodepointSet diacritic_set = default_diacritics();
  bool collapse_whitespace = true;
  bool preserve_line_breaks = true;
  bool remove_tatweel = false;
  bool nfc = false;

  /// Nonspacing marks (Mn) in U+064B..065F, U+0670, U+06D6..06ED, U+08D3..08FF.
  static CodepointSet default_diacritics();

  /// Violations of the config invariants; empty when valid.
  std::vector<std::string> validate() const;

  bool operator==(const NormalizationConfig&) const = default;
};

void to_json(nlohmann::json& j, const NormalizationConfig& cfg);
/// Unknown keys are rejected with Error(kConfig).
void from_json(const nlohmann::json& j, NormalizationConfig& cfg);

struct NormalizedText {
  std::u32string text;
  std::size_t source_length_chars = 0;
  std::size_t removed_marks = 0;

  std::string utf8() const;
};

bool is_diacritic(char32_t cp, const NormalizationConfig& cfg) noexcept;

NormalizedText normalize(std::u32string_view raw, const NormalizationConfig& cfg);
NormalizedText normalize(std::string_view raw_utf8, const NormalizationConfig& cfg);

}  // namespace qalam
