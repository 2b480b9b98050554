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

// Table-driven Arabic shaping: cursive joining, the mandatory lam-alef
// ligatures and a simplified bidirectional reordering. Output glyphs are
// Arabic presentation-form codepoints in visual (left-to-right) order.

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qalam::shaping {

enum class JoiningClass { kDual, kRight, kLeft, kNonJoining, kTransparent, kJoinCausing };

std::string_view to_string(JoiningClass c) noexcept;

/// Table lookup; codepoints outside the tables are kNonJoining.
JoiningClass joining_class(char32_t cp) noexcept;

/// Presentation form of `cp` given its joins. Letters without the requested
/// form fall back (medial -> final -> initial -> isolated, initial -> isolated,
/// final -> isolated). Empty when `cp` has no presentation forms at all; the
/// caller then renders the raw codepoint.
std::optional<char32_t> contextual_form(char32_t cp, bool joins_prev, bool joins_next) noexcept;

/// Lam-alef ligature for lam followed by `alef` (one of U+0622, U+0623,
/// U+0625, U+0627); final form when the lam joins the preceding letter.
std::optional<char32_t> lam_alef_ligature(char32_t alef, bool joins_prev) noexcept;

bool is_lam_alef_ligature(char32_t cp) noexcept;

/// True for U+FB50..U+FDFF and U+FE70..U+FEFF.
constexpr bool is_presentation_form(char32_t cp) noexcept {
  return (cp >= 0xFB50 && cp <= 0xFDFF) || (cp >= 0xFE70 && cp <= 0xFEFF);
}

enum class Direction { kLtr, kRtl };

struct ShapedGlyph {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  char32_t codepoint = 0;
  std::size_t source = 0;          // logical index of the (first) source codepoint
  std::size_t partner = kNone;     // alef index for a lam-alef ligature
  bool mark = false;               // zero-advance mark riding on the preceding glyph

  bool operator==(const ShapedGlyph&) const = default;
};

struct ShapedLine {
  std::vector<ShapedGlyph> glyphs;  // visual order, left to right
  Direction direction = Direction::kLtr;
  std::size_t ligatures_applied = 0;
};

/// Shapes one line of logical-order text. Throws Error(kUsage) if the line
/// contains a line feed.
ShapedLine shape_line(std::u32string_view logical);

}  // namespace qalam::shaping
