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

#include "qalam/textnorm.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include <nlohmann/json.hpp>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "qalam/errors.hpp"
#include "qalam/unicode.hpp"

namespace qalam {

CodepointSet::CodepointSet(std::vector<char32_t> cps) : cps_(std::move(cps)) {
  std::sort(cps_.begin(), cps_.end());
  cps_.erase(std::unique(cps_.begin(), cps_.end()), cps_.end());
}

bool CodepointSet::contains(char32_t cp) const noexcept {
  return std::binary_search(cps_.begin(), cps_.end(), cp);
}

namespace {

std::string hex(char32_t cp) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04X", static_cast<unsigned>(cp));
  return buf;
}

char32_t parse_cp(std::string_view s) {
  if (s.starts_with("U+") || s.starts_with("u+")) s.remove_prefix(2);
  unsigned v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc{} || p != s.data() + s.size() || v > 0x10FFFF) {
    throw Error(Errc::kConfig, "bad codepoint '" + std::string(s) + "'");
  }
  return static_cast<char32_t>(v);
}

bool is_line_break(char32_t cp) {
  return cp == U'\n' || cp == 0x0B || cp == 0x0C || cp == 0x85 || cp == 0x2028 ||
         cp == 0x2029;
}

std::u32string to_nfc(std::u32string_view in) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(Errc::kConfig, "ICU NFC normalizer unavailable");
  auto src = icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(in.data()),
                                           static_cast<int32_t>(in.size()));
  icu::UnicodeString dst = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw Error(Errc::kConfig, "NFC normalization failed");
  std::u32string out(static_cast<size_t>(dst.countChar32()), U'\0');
  dst.toUTF32(reinterpret_cast<UChar32*>(out.data()), static_cast<int32_t>(out.size()), status);
  return out;
}

}  // namespace

std::vector<std::string> CodepointSet::to_ranges() const {
  std::vector<std::string> out;
  for (size_t i = 0; i < cps_.size();) {
    size_t j = i;
    while (j + 1 < cps_.size() && cps_[j + 1] == cps_[j] + 1) ++j;
    out.push_back(i == j ? hex(cps_[i]) : hex(cps_[i]) + ".." + hex(cps_[j]));
    i = j + 1;
  }
  return out;
}

CodepointSet CodepointSet::from_ranges(const std::vector<std::string>& ranges) {
  std::vector<char32_t> cps;
  for (const auto& r : ranges) {
    std::string_view sv = r;
    if (auto dots = sv.find(".."); dots != std::string_view::npos) {
      char32_t lo = parse_cp(sv.substr(0, dots));
      char32_t hi = parse_cp(sv.substr(dots + 2));
      if (lo > hi) throw Error(Errc::kConfig, "inverted codepoint range '" + r + "'");
      for (char32_t c = lo; c <= hi; ++c) cps.push_back(c);
    } else {
      cps.push_back(parse_cp(sv));
    }
  }
  return CodepointSet(std::move(cps));
}

CodepointSet NormalizationConfig::default_diacritics() {
  static const CodepointSet set = [] {
    const auto& db = unicode::CharacterDatabase::instance();
    std::vector<char32_t> cps;
    auto add = [&](char32_t lo, char32_t hi) {
      for (char32_t c = lo; c <= hi; ++c) {
        if (db.is_nonspacing_mark(c)) cps.push_back(c);
      }
    };
    add(0x064B, 0x065F);
    add(0x0670, 0x0670);
    add(0x06D6, 0x06ED);
    add(0x08D3, 0x08FF);
    return CodepointSet(std::move(cps));
  }();
  return set;
}

std::vector<std::string> NormalizationConfig::validate() const {
  std::vector<std::string> diags;
  const auto& db = unicode::CharacterDatabase::instance();
  for (char32_t cp : diacritic_set.values()) {
    if (!db.is_nonspacing_mark(cp)) {
      diags.push_back("norm.diacritic_set: U+" + hex(cp) + " is not a nonspacing mark (Mn)");
    }
  }
  return diags;
}

void to_json(nlohmann::json& j, const NormalizationConfig& cfg) {
  j = nlohmann::json{{"strip_diacritics", cfg.strip_diacritics},
                     {"diacritic_set", cfg.diacritic_set.to_ranges()},
                     {"collapse_whitespace", cfg.collapse_whitespace},
                     {"preserve_line_breaks", cfg.preserve_line_breaks},
                     {"remove_tatweel", cfg.remove_tatweel},
                     {"nfc", cfg.nfc}};
}

void from_json(const nlohmann::json& j, NormalizationConfig& cfg) {
  if (!j.is_object()) throw Error(Errc::kConfig, "norm: expected an object");
  cfg = NormalizationConfig{};
  for (const auto& [key, value] : j.items()) {
    if (key == "strip_diacritics") cfg.strip_diacritics = value.get<bool>();
    else if (key == "diacritic_set")
      cfg.diacritic_set = CodepointSet::from_ranges(value.get<std::vector<std::string>>());
    else if (key == "collapse_whitespace") cfg.collapse_whitespace = value.get<bool>();
    else if (key == "preserve_line_breaks") cfg.preserve_line_breaks = value.get<bool>();
    else if (key == "remove_tatweel") cfg.remove_tatweel = value.get<bool>();
    else if (key == "nfc") cfg.nfc = value.get<bool>();
    else throw Error(Errc::kConfig, "norm: unknown key '" + key + "'");
  }
}

std::string NormalizedText::utf8() const { return unicode::encode(text); }

bool is_diacritic(char32_t cp, const NormalizationConfig& cfg) noexcept {
  return cfg.diacritic_set.contains(cp);
}

NormalizedText normalize(std::u32string_view raw, const NormalizationConfig& cfg) {
  NormalizedText result;
  result.source_length_chars = raw.size();

  std::u32string composed;
  if (cfg.nfc) {
    composed = to_nfc(raw);
    raw = composed;
  }

  // Mark removal and line-break standardization.
  std::u32string s;
  s.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    char32_t cp = raw[i];
    if (cfg.strip_diacritics && cfg.diacritic_set.contains(cp)) {
      ++result.removed_marks;
      continue;
    }
    if (cfg.remove_tatweel && cp == 0x0640) continue;
    if (cp == U'\r') {
      if (i + 1 < raw.size() && raw[i + 1] == U'\n') ++i;
      s.push_back(U'\n');
      continue;
    }
    if (is_line_break(cp)) {
      s.push_back(cfg.collapse_whitespace ? U'\n' : cp);
      continue;
    }
    s.push_back(cp);
  }
  if (!cfg.collapse_whitespace) {
    result.text = std::move(s);
    return result;
  }

  // Split into lines, collapse horizontal runs, trim, and drop blank lines.
  std::vector<std::u32string> lines;
  std::u32string line;
  bool pending_space = false;
  auto flush = [&] {
    if (!line.empty()) lines.push_back(std::move(line));
    line.clear();
    pending_space = false;
  };
  for (char32_t cp : s) {
    if (cp == U'\n') {
      flush();
    } else if (unicode::is_space(cp)) {
      pending_space = !line.empty();
    } else {
      if (pending_space) line.push_back(U' ');
      pending_space = false;
      line.push_back(cp);
    }
  }
  flush();

  const char32_t joiner = cfg.preserve_line_breaks ? U'\n' : U' ';
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i) result.text.push_back(joiner);
    result.text += lines[i];
  }
  return result;
}

NormalizedText normalize(std::string_view raw_utf8, const NormalizationConfig& cfg) {
  return normalize(unicode::decode(raw_utf8), cfg);
}

}  // namespace qalam
