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

#include "qalam/shaping.hpp"

#include <algorithm>
#include <array>
#include <unordered_map>

#include "qalam/errors.hpp"
#include "qalam/unicode.hpp"

namespace qalam::shaping {

namespace {

using unicode::CharacterDatabase;
using unicode::FormTag;

constexpr bool is_alef_variant(char32_t cp) {
  return cp == 0x0622 || cp == 0x0623 || cp == 0x0625 || cp == 0x0627;
}

struct FormTables {
  // base letter -> forms indexed by FormTag
  std::unordered_map<char32_t, std::array<char32_t, 4>> letters;
  // alef variant -> {isolated, final} lam-alef ligature
  std::unordered_map<char32_t, std::array<char32_t, 2>> lam_alef;
};

const FormTables& tables() {
  static const FormTables t = [] {
    FormTables out;
    for (const auto& info : CharacterDatabase::instance().entries()) {
      if (!info.form || !is_presentation_form(info.cp)) continue;
      const auto tag = static_cast<std::size_t>(*info.form);
      if (info.decomposition.size() == 1) {
        auto [it, inserted] = out.letters.try_emplace(info.decomposition[0]);
        if (inserted) it->second.fill(0);
        if (it->second[tag] == 0) it->second[tag] = info.cp;
      } else if (info.decomposition.size() == 2 && info.decomposition[0] == 0x0644 &&
                 is_alef_variant(info.decomposition[1]) &&
                 (*info.form == FormTag::kIsolated || *info.form == FormTag::kFinal)) {
        auto [it, inserted] = out.lam_alef.try_emplace(info.decomposition[1]);
        if (inserted) it->second.fill(0);
        it->second[*info.form == FormTag::kIsolated ? 0 : 1] = info.cp;
      }
    }
    return out;
  }();
  return t;
}

bool joins_on_prev_side(JoiningClass c) {
  return c == JoiningClass::kDual || c == JoiningClass::kRight || c == JoiningClass::kJoinCausing;
}

bool joins_on_next_side(JoiningClass c) {
  return c == JoiningClass::kDual || c == JoiningClass::kLeft || c == JoiningClass::kJoinCausing;
}

bool is_mark(char32_t cp) {
  auto gc = CharacterDatabase::instance().general_category(cp);
  return gc == "Mn" || gc == "Me";
}

enum class BidiKind { kRtl, kLtr, kNeutral };

BidiKind bidi_kind(char32_t cp) {
  if (const auto* info = CharacterDatabase::instance().find(cp)) {
    const auto& b = info->bidi_class;
    if (b == "AL" || b == "R") return BidiKind::kRtl;
    if (b == "L" || b == "EN" || b == "AN") return BidiKind::kLtr;
    return BidiKind::kNeutral;
  }
  if ((cp >= U'0' && cp <= U'9') || (cp >= U'A' && cp <= U'Z') || (cp >= U'a' && cp <= U'z')) {
    return BidiKind::kLtr;
  }
  if ((cp >= 0xC0 && cp <= 0x24F && cp != 0xD7 && cp != 0xF7) || (cp >= 0x370 && cp <= 0x52F)) {
    return BidiKind::kLtr;
  }
  if (cp >= 0x0590 && cp <= 0x05FF) return BidiKind::kRtl;
  return BidiKind::kNeutral;
}

bool is_arabic_letter(char32_t cp) {
  if (!unicode::is_arabic_block(cp)) return false;
  auto gc = CharacterDatabase::instance().general_category(cp);
  return !gc.empty() && gc.front() == 'L';
}

char32_t mirror(char32_t cp) {
  switch (cp) {
    case U'(': return U')';
    case U')': return U'(';
    case U'[': return U']';
    case U']': return U'[';
    case U'{': return U'}';
    case U'}': return U'{';
    case U'<': return U'>';
    case U'>': return U'<';
    case 0xAB: return 0xBB;
    case 0xBB: return 0xAB;
    default: return cp;
  }
}

struct Cluster {
  std::vector<ShapedGlyph> glyphs;  // base first, then marks
  BidiKind kind = BidiKind::kNeutral;
};

}  // namespace

std::string_view to_string(JoiningClass c) noexcept {
  switch (c) {
    case JoiningClass::kDual: return "Dual";
    case JoiningClass::kRight: return "Right";
    case JoiningClass::kLeft: return "Left";
    case JoiningClass::kNonJoining: return "NonJoining";
    case JoiningClass::kTransparent: return "Transparent";
    case JoiningClass::kJoinCausing: return "JoinCausing";
  }
  return "NonJoining";
}

JoiningClass joining_class(char32_t cp) noexcept {
  switch (CharacterDatabase::instance().joining_type(cp)) {
    case unicode::JoiningType::kDual: return JoiningClass::kDual;
    case unicode::JoiningType::kRight: return JoiningClass::kRight;
    case unicode::JoiningType::kLeft: return JoiningClass::kLeft;
    case unicode::JoiningType::kCausing: return JoiningClass::kJoinCausing;
    case unicode::JoiningType::kTransparent: return JoiningClass::kTransparent;
    case unicode::JoiningType::kNone: break;
  }
  return JoiningClass::kNonJoining;
}

std::optional<char32_t> contextual_form(char32_t cp, bool joins_prev, bool joins_next) noexcept {
  const auto& letters = tables().letters;
  auto it = letters.find(cp);
  if (it == letters.end()) return std::nullopt;
  const auto& forms = it->second;
  auto get = [&](FormTag t) { return forms[static_cast<std::size_t>(t)]; };

  std::array<FormTag, 4> chain{};
  std::size_t n = 0;
  if (joins_prev && joins_next) {
    chain = {FormTag::kMedial, FormTag::kFinal, FormTag::kInitial, FormTag::kIsolated};
    n = 4;
  } else if (joins_prev) {
    chain = {FormTag::kFinal, FormTag::kIsolated};
    n = 2;
  } else if (joins_next) {
    chain = {FormTag::kInitial, FormTag::kIsolated};
    n = 2;
  } else {
    chain = {FormTag::kIsolated};
    n = 1;
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (char32_t f = get(chain[k])) return f;
  }
  return std::nullopt;
}

std::optional<char32_t> lam_alef_ligature(char32_t alef, bool joins_prev) noexcept {
  const auto& lig = tables().lam_alef;
  auto it = lig.find(alef);
  if (it == lig.end()) return std::nullopt;
  char32_t cp = it->second[joins_prev ? 1 : 0];
  return cp ? std::optional<char32_t>(cp) : std::nullopt;
}

bool is_lam_alef_ligature(char32_t cp) noexcept {
  for (const auto& [alef, forms] : tables().lam_alef) {
    if (forms[0] == cp || forms[1] == cp) return true;
  }
  return false;
}

ShapedLine shape_line(std::u32string_view text) {
  if (text.find(U'\n') != std::u32string_view::npos) {
    throw Error(Errc::kUsage, "shape_line: input contains a line feed");
  }
  const std::size_t n = text.size();
  constexpr std::size_t kNone = ShapedGlyph::kNone;

  std::vector<JoiningClass> cls(n);
  for (std::size_t i = 0; i < n; ++i) cls[i] = joining_class(text[i]);

  // Nearest non-transparent neighbours.
  std::vector<std::size_t> prev(n, kNone), next(n, kNone);
  for (std::size_t i = 0, last = kNone; i < n; ++i) {
    prev[i] = last;
    if (cls[i] != JoiningClass::kTransparent) last = i;
  }
  for (std::size_t i = n, last = kNone; i-- > 0;) {
    next[i] = last;
    if (cls[i] != JoiningClass::kTransparent) last = i;
  }
  auto joins_prev = [&](std::size_t i) {
    return prev[i] != kNone && joins_on_prev_side(cls[i]) && joins_on_next_side(cls[prev[i]]);
  };
  auto joins_next = [&](std::size_t i) {
    return next[i] != kNone && joins_on_next_side(cls[i]) && joins_on_prev_side(cls[next[i]]);
  };

  ShapedLine line;
  std::vector<Cluster> clusters;
  std::vector<bool> consumed(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (consumed[i]) continue;
    const char32_t cp = text[i];
    if (is_mark(cp) && !clusters.empty()) {
      clusters.back().glyphs.push_back({cp, i, kNone, true});
      continue;
    }
    Cluster c;
    c.kind = bidi_kind(cp);
    ShapedGlyph g{cp, i, kNone, is_mark(cp)};
    if (cls[i] != JoiningClass::kTransparent) {
      std::size_t alef = next[i];
      std::optional<char32_t> lig;
      if (cp == 0x0644 && alef != kNone && is_alef_variant(text[alef])) {
        lig = lam_alef_ligature(text[alef], joins_prev(i));
      }
      if (lig) {
        g.codepoint = *lig;
        g.partner = alef;
        consumed[alef] = true;
        ++line.ligatures_applied;
      } else if (auto form = contextual_form(cp, joins_prev(i), joins_next(i))) {
        g.codepoint = *form;
      }
    }
    c.glyphs.push_back(g);
    clusters.push_back(std::move(c));
  }

  bool rtl = std::any_of(text.begin(), text.end(), is_arabic_letter);
  line.direction = rtl ? Direction::kRtl : Direction::kLtr;
  if (rtl) {
    // Neutrals take the LTR direction only when enclosed by LTR clusters.
    const std::size_t m = clusters.size();
    std::vector<bool> ltr(m, false);
    for (std::size_t k = 0; k < m; ++k) {
      if (clusters[k].kind == BidiKind::kLtr) {
        ltr[k] = true;
      } else if (clusters[k].kind == BidiKind::kNeutral) {
        std::size_t a = k, b = k;
        while (a-- > 0 && clusters[a].kind == BidiKind::kNeutral) {}
        while (++b < m && clusters[b].kind == BidiKind::kNeutral) {}
        ltr[k] = a < m && b < m && clusters[a].kind == BidiKind::kLtr &&
                 clusters[b].kind == BidiKind::kLtr;
      }
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (!ltr[k] && clusters[k].kind == BidiKind::kNeutral) {
        auto& base = clusters[k].glyphs.front();
        base.codepoint = mirror(base.codepoint);
      }
    }
    std::vector<std::size_t> order(m);
    for (std::size_t k = 0; k < m; ++k) order[k] = m - 1 - k;
    for (std::size_t k = 0; k < m;) {
      if (!ltr[order[k]]) {
        ++k;
        continue;
      }
      std::size_t e = k;
      while (e < m && ltr[order[e]]) ++e;
      std::reverse(order.begin() + static_cast<std::ptrdiff_t>(k),
                   order.begin() + static_cast<std::ptrdiff_t>(e));
      k = e;
    }
    for (std::size_t k : order) {
      for (const auto& g : clusters[k].glyphs) line.glyphs.push_back(g);
    }
  } else {
    for (const auto& c : clusters) {
      for (const auto& g : c.glyphs) line.glyphs.push_back(g);
    }
  }
  return line;
}

}  // namespace qalam::shaping
