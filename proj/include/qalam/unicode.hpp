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

// UTF-8 <-> UTF-32 conversion and the character-database subset shared by
// text normalization and shaping.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qalam::unicode {

/// Decodes UTF-8. Malformed sequences decode to U+FFFD, one per bad byte.
std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view text);
void append_utf8(std::string& out, char32_t cp);

constexpr bool is_arabic_block(char32_t cp) noexcept {
  return (cp >= 0x0600 && cp <= 0x08FF) || (cp >= 0xFB50 && cp <= 0xFDFF) ||
         (cp >= 0xFE70 && cp <= 0xFEFF);
}

/// Space, tab, line/paragraph separators and the Unicode Zs spaces.
bool is_space(char32_t cp) noexcept;

enum class JoiningType : std::uint8_t { kNone, kDual, kRight, kLeft, kCausing, kTransparent };

enum class FormTag : std::uint8_t { kIsolated, kFinal, kInitial, kMedial };

struct CharInfo {
  char32_t cp = 0;
  std::string general_category;  // two-letter code, e.g. "Mn"
  int combining_class = 0;
  std::string bidi_class;
  std::optional<FormTag> form;   // set for contextual presentation forms
  std::vector<char32_t> decomposition;
};

/// Parsed tables from data/unicode. Built once, read-only afterwards.
class CharacterDatabase {
 public:
  static const CharacterDatabase& instance();

  /// Parses the two table texts. Throws Error(kConfig) on malformed lines.
  CharacterDatabase(std::string_view unicode_data, std::string_view arabic_shaping);

  const CharInfo* find(char32_t cp) const noexcept;
  /// Empty string for codepoints outside the vendored ranges.
  std::string_view general_category(char32_t cp) const noexcept;
  bool is_nonspacing_mark(char32_t cp) const noexcept;
  JoiningType joining_type(char32_t cp) const noexcept;

  const std::vector<CharInfo>& entries() const noexcept { return entries_; }

 private:
  std::vector<CharInfo> entries_;  // sorted by cp
  std::vector<std::pair<char32_t, JoiningType>> joining_;  // explicit entries, sorted
};

}  // namespace qalam::unicode
