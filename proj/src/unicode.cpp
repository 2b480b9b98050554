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

#include "qalam/unicode.hpp"

#include <algorithm>
#include <charconv>

#include "qalam/errors.hpp"

namespace qalam::unicode {

namespace detail {
extern const std::string_view kUnicodeData;
extern const std::string_view kArabicShaping;
}  // namespace detail

std::u32string decode(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  const auto* p = reinterpret_cast<const unsigned char*>(utf8.data());
  const auto* end = p + utf8.size();
  while (p < end) {
    unsigned char b = *p;
    if (b < 0x80) {
      out.push_back(b);
      ++p;
      continue;
    }
    int len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if ((b & 0xE0) == 0xC0) {
      len = 2, cp = b & 0x1F, min = 0x80;
    } else if ((b & 0xF0) == 0xE0) {
      len = 3, cp = b & 0x0F, min = 0x800;
    } else if ((b & 0xF8) == 0xF0) {
      len = 4, cp = b & 0x07, min = 0x10000;
    }
    bool ok = len > 0 && end - p >= len;
    for (int i = 1; ok && i < len; ++i) {
      if ((p[i] & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (p[i] & 0x3F);
    }
    if (ok && (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (!ok) {
      out.push_back(0xFFFD);
      ++p;
      continue;
    }
    out.push_back(cp);
    p += len;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size() * 2);
  for (char32_t cp : text) append_utf8(out, cp);
  return out;
}

bool is_space(char32_t cp) noexcept {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(';', start);
    std::string_view f = line.substr(start, pos == std::string_view::npos ? line.npos : pos - start);
    while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\r')) f.remove_suffix(1);
    fields.push_back(f);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

char32_t parse_hex(std::string_view s, std::string_view line) {
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value, 16);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(Errc::kConfig, "bad codepoint in unicode table line: " + std::string(line));
  }
  return static_cast<char32_t>(value);
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  while (!text.empty()) {
    size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.remove_suffix(1);
    if (!line.empty()) fn(line);
  }
}

JoiningType parse_joining(std::string_view s, std::string_view line) {
  if (s == "D") return JoiningType::kDual;
  if (s == "R") return JoiningType::kRight;
  if (s == "L") return JoiningType::kLeft;
  if (s == "C") return JoiningType::kCausing;
  if (s == "T") return JoiningType::kTransparent;
  if (s == "U") return JoiningType::kNone;
  throw Error(Errc::kConfig, "bad joining type in line: " + std::string(line));
}

}  // namespace

CharacterDatabase::CharacterDatabase(std::string_view unicode_data,
                                     std::string_view arabic_shaping) {
  for_each_line(unicode_data, [&](std::string_view line) {
    auto f = split_fields(line);
    if (f.size() < 6) throw Error(Errc::kConfig, "short UnicodeData line: " + std::string(line));
    CharInfo info;
    info.cp = parse_hex(f[0], line);
    info.general_category = std::string(f[2]);
    std::from_chars(f[3].data(), f[3].data() + f[3].size(), info.combining_class);
    info.bidi_class = std::string(f[4]);
    std::string_view decomp = f[5];
    if (!decomp.empty() && decomp.front() == '<') {
      size_t close = decomp.find('>');
      std::string_view tag = decomp.substr(1, close - 1);
      if (tag == "isolated") info.form = FormTag::kIsolated;
      else if (tag == "final") info.form = FormTag::kFinal;
      else if (tag == "initial") info.form = FormTag::kInitial;
      else if (tag == "medial") info.form = FormTag::kMedial;
      decomp.remove_prefix(close + 1);
    }
    while (!decomp.empty()) {
      while (!decomp.empty() && decomp.front() == ' ') decomp.remove_prefix(1);
      size_t sp = decomp.find(' ');
      std::string_view tok = decomp.substr(0, sp);
      if (!tok.empty()) info.decomposition.push_back(parse_hex(tok, line));
      decomp.remove_prefix(sp == std::string_view::npos ? decomp.size() : sp);
    }
    entries_.push_back(std::move(info));
  });
  std::sort(entries_.begin(), entries_.end(),
            [](const CharInfo& a, const CharInfo& b) { return a.cp < b.cp; });

  for_each_line(arabic_shaping, [&](std::string_view line) {
    auto f = split_fields(line);
    if (f.size() < 3) throw Error(Errc::kConfig, "short ArabicShaping line: " + std::string(line));
    joining_.emplace_back(parse_hex(f[0], line), parse_joining(f[2], line));
  });
  std::sort(joining_.begin(), joining_.end());
}

const CharacterDatabase& CharacterDatabase::instance() {
  static const CharacterDatabase db(detail::kUnicodeData, detail::kArabicShaping);
  return db;
}

const CharInfo* CharacterDatabase::find(char32_t cp) const noexcept {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), cp,
                             [](const CharInfo& e, char32_t c) { return e.cp < c; });
  return (it != entries_.end() && it->cp == cp) ? &*it : nullptr;
}

std::string_view CharacterDatabase::general_category(char32_t cp) const noexcept {
  const CharInfo* info = find(cp);
  return info ? std::string_view(info->general_category) : std::string_view{};
}

bool CharacterDatabase::is_nonspacing_mark(char32_t cp) const noexcept {
  return general_category(cp) == "Mn";
}

JoiningType CharacterDatabase::joining_type(char32_t cp) const noexcept {
  auto it = std::lower_bound(joining_.begin(), joining_.end(), cp,
                             [](const auto& e, char32_t c) { return e.first < c; });
  if (it != joining_.end() && it->first == cp) return it->second;
  auto gc = general_category(cp);
  if (gc == "Mn" || gc == "Me" || gc == "Cf") return JoiningType::kTransparent;
  return JoiningType::kNone;
}

}  // namespace qalam::unicode
