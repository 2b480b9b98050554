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

// Minimal TrueType/OpenType table reader: character coverage (cmap formats
// 4 and 12), horizontal metrics and glyph bounding boxes. Enough to lay out
// pre-shaped presentation-form glyphs without a shaping engine.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qalam {

struct GlyphBounds {
  std::int16_t x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

class FontFile {
 public:
  /// Throws Error(kConfig) if the file is unreadable or not an sfnt font.
  static FontFile load(const std::filesystem::path& path);
  static FontFile parse(std::vector<std::uint8_t> bytes, std::string name = {});

  const std::string& name() const noexcept { return name_; }
  int units_per_em() const noexcept { return units_per_em_; }

  std::optional<std::uint16_t> glyph_index(char32_t cp) const noexcept;
  bool has_glyph(char32_t cp) const noexcept { return glyph_index(cp).has_value(); }

  /// Metrics scaled to a pixel em size.
  double advance(char32_t cp, double size_px) const noexcept;
  double ascent(double size_px) const noexcept;
  double descent(double size_px) const noexcept;  // positive below the baseline
  std::optional<GlyphBounds> bounds(char32_t cp) const noexcept;

  /// Codepoints in [first, last] the font does not map.
  std::vector<char32_t> missing(char32_t first, char32_t last) const;

 private:
  FontFile() = default;

  std::string name_;
  int units_per_em_ = 1000;
  int ascender_ = 0;
  int descender_ = 0;
  std::vector<std::pair<char32_t, std::uint16_t>> cmap_;  // sorted by codepoint
  std::vector<std::uint16_t> advances_;
  std::vector<GlyphBounds> bounds_;  // empty for CFF-flavoured fonts
};

}  // namespace qalam
