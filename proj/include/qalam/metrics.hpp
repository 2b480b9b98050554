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

// Character and word error rates over normalized text. Edit distances use
// unit costs; rates are distance over reference length and are not clamped.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qalam/textnorm.hpp"

namespace qalam {

struct EditDistanceResult {
  std::size_t distance = 0;
  std::size_t reference_length = 0;
  std::size_t hypothesis_length = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  bool operator==(const EditDistanceResult&) const = default;
};

namespace detail {

struct EditCell {
  std::uint32_t cost = 0;
  std::uint32_t sub = 0;
  std::uint32_t ins = 0;
  std::uint32_t del = 0;
};

}  // namespace detail

/// Unit-cost Levenshtein distance between token sequences.
///
/// Operation counts follow one optimal alignment, chosen cell by cell in the
/// forward recurrence with ties resolved substitution (or match) first, then
/// deletion, then insertion. Common prefixes and suffixes are matched before
/// the recurrence runs.
template <typename T>
EditDistanceResult levenshtein(std::span<const T> ref, std::span<const T> hyp) {
  EditDistanceResult r;
  r.reference_length = ref.size();
  r.hypothesis_length = hyp.size();

  std::size_t prefix = 0;
  while (prefix < ref.size() && prefix < hyp.size() && ref[prefix] == hyp[prefix]) ++prefix;
  ref = ref.subspan(prefix);
  hyp = hyp.subspan(prefix);
  std::size_t suffix = 0;
  while (suffix < ref.size() && suffix < hyp.size() &&
         ref[ref.size() - 1 - suffix] == hyp[hyp.size() - 1 - suffix]) {
    ++suffix;
  }
  ref = ref.first(ref.size() - suffix);
  hyp = hyp.first(hyp.size() - suffix);

  using detail::EditCell;
  std::vector<EditCell> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 1; j <= hyp.size(); ++j) {
    prev[j] = prev[j - 1];
    ++prev[j].cost;
    ++prev[j].ins;
  }
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = prev[0];
    ++cur[0].cost;
    ++cur[0].del;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const bool same = ref[i - 1] == hyp[j - 1];
      const std::uint32_t diag = prev[j - 1].cost + (same ? 0u : 1u);
      const std::uint32_t up = prev[j].cost + 1;
      const std::uint32_t left = cur[j - 1].cost + 1;
      if (diag <= up && diag <= left) {
        cur[j] = prev[j - 1];
        cur[j].cost = diag;
        if (!same) ++cur[j].sub;
      } else if (up <= left) {
        cur[j] = prev[j];
        cur[j].cost = up;
        ++cur[j].del;
      } else {
        cur[j] = cur[j - 1];
        cur[j].cost = left;
        ++cur[j].ins;
      }
    }
    std::swap(prev, cur);
  }
  const EditCell& end = prev[hyp.size()];
  r.distance = end.cost;
  r.substitutions = end.sub;
  r.insertions = end.ins;
  r.deletions = end.del;
  return r;
}

template <typename Seq>
EditDistanceResult levenshtein(const Seq& ref, const Seq& hyp) {
  using T = std::remove_cvref_t<decltype(*std::begin(ref))>;
  return levenshtein<T>(std::span<const T>(std::data(ref), std::size(ref)),
                        std::span<const T>(std::data(hyp), std::size(hyp)));
}

/// Rate plus the edit counts it was computed from.
struct RateResult {
  double rate = 0.0;
  EditDistanceResult edit;
};

/// Codepoints left after normalization with every whitespace codepoint removed.
std::u32string cer_units(std::u32string_view normalized);
/// Whitespace-delimited tokens of normalized text.
std::vector<std::u32string> wer_units(std::u32string_view normalized);

/// Throws Error(kEmptyReference) when the normalized ground truth has no
/// non-whitespace character.
RateResult cer(std::string_view ground_truth, std::string_view hypothesis,
               const NormalizationConfig& cfg);
RateResult wer(std::string_view ground_truth, std::string_view hypothesis,
               const NormalizationConfig& cfg);

struct ScoreCard {
  std::string sample_id;
  double cer = 0.0;
  double wer = 0.0;
  EditDistanceResult char_edit;
  EditDistanceResult word_edit;

  bool operator==(const ScoreCard&) const = default;
};

/// Normalizes both strings once and fills both rates.
ScoreCard score(std::string sample_id, std::string_view ground_truth,
                std::string_view hypothesis, const NormalizationConfig& cfg);

struct AggregateScore {
  double micro_cer = 0.0;
  double micro_wer = 0.0;
  double macro_cer = 0.0;
  double macro_wer = 0.0;
  std::size_t n_samples = 0;

  bool operator==(const AggregateScore&) const = default;
};

/// Throws Error(kEmptyRun) for an empty card list. Independent of card order.
AggregateScore aggregate(std::span<const ScoreCard> cards);

void to_json(nlohmann::json& j, const EditDistanceResult& e);
void from_json(const nlohmann::json& j, EditDistanceResult& e);
void to_json(nlohmann::json& j, const ScoreCard& c);
void from_json(const nlohmann::json& j, ScoreCard& c);
void to_json(nlohmann::json& j, const AggregateScore& a);
void from_json(const nlohmann::json& j, AggregateScore& a);

}  // namespace qalam
