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

// Standalone re-implementation of the noisy_oracle corruption protocol and
// of CER over harakat-free, whitespace-free text, written from the
// documented algorithm rather than the library code.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "support/oracles.hpp"

namespace qalam::testing::noisy {

inline std::uint64_t finalize(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct Stream {
  std::uint64_t state;
  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double unit() { return static_cast<double>(next() >> 11) / 9007199254740992.0; }
};

inline std::uint64_t fnv(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

inline bool whitespace(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

/// Harakat handled by the oracle; inputs must not contain other marks.
inline bool haraka(char32_t c) { return (c >= 0x064B && c <= 0x065F) || c == 0x0670; }

inline std::u32string corrupt(const std::u32string& gt, double p, std::uint64_t seed, std::string_view id) {
  static const std::u32string letters = U"بتثجحخدذرزسشصضطظعغفقكلمنو";
  Stream rng{finalize(seed ^ finalize(fnv(id)))};
  std::u32string out = gt;
  for (char32_t& c : out) {
    if (whitespace(c) || !(rng.unit() < p)) continue;
    std::u32string others;
    for (char32_t l : letters)
      if (l != c) others += l;
    c = others[rng.next() % others.size()];
  }
  return out;
}

inline std::u32string cer_view(const std::u32string& s) {
  std::u32string out;
  for (char32_t c : s)
    if (!whitespace(c) && !haraka(c)) out += c;
  return out;
}

struct Totals {
  std::size_t distance = 0;
  std::size_t reference = 0;
  double micro() const { return static_cast<double>(distance) / static_cast<double>(reference); }
};

/// `samples` holds (sample_id, ground truth) pairs.
inline Totals expected_cer(const std::vector<std::pair<std::string, std::u32string>>& samples, double p,
                           std::uint64_t seed) {
  Totals t;
  for (const auto& [id, gt] : samples) {
    const std::u32string ref = cer_view(gt);
    if (ref.empty()) continue;
    t.distance += full_matrix_distance(ref, cer_view(corrupt(gt, p, seed, id)));
    t.reference += ref.size();
  }
  return t;
}

}  // namespace qalam::testing::noisy
