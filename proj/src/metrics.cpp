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

#include "qalam/metrics.hpp"

#include <nlohmann/json.hpp>

#include "qalam/errors.hpp"
#include "qalam/unicode.hpp"

namespace qalam {

std::u32string cer_units(std::u32string_view normalized) {
  std::u32string out;
  out.reserve(normalized.size());
  for (char32_t cp : normalized) {
    if (!unicode::is_space(cp)) out.push_back(cp);
  }
  return out;
}

std::vector<std::u32string> wer_units(std::u32string_view normalized) {
  std::vector<std::u32string> tokens;
  std::u32string cur;
  for (char32_t cp : normalized) {
    if (unicode::is_space(cp)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(cp);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

RateResult char_rate(std::u32string_view gt_norm, std::u32string_view hyp_norm) {
  auto ref = cer_units(gt_norm);
  if (ref.empty()) {
    throw Error(Errc::kEmptyReference, "ground truth has no characters after normalization");
  }
  RateResult r;
  r.edit = levenshtein(ref, cer_units(hyp_norm));
  r.rate = static_cast<double>(r.edit.distance) / static_cast<double>(ref.size());
  return r;
}

RateResult word_rate(std::u32string_view gt_norm, std::u32string_view hyp_norm) {
  auto ref = wer_units(gt_norm);
  if (ref.empty()) {
    throw Error(Errc::kEmptyReference, "ground truth has no words after normalization");
  }
  RateResult r;
  r.edit = levenshtein(ref, wer_units(hyp_norm));
  r.rate = static_cast<double>(r.edit.distance) / static_cast<double>(ref.size());
  return r;
}

}  // namespace

RateResult cer(std::string_view ground_truth, std::string_view hypothesis,
               const NormalizationConfig& cfg) {
  return char_rate(normalize(ground_truth, cfg).text, normalize(hypothesis, cfg).text);
}

RateResult wer(std::string_view ground_truth, std::string_view hypothesis,
               const NormalizationConfig& cfg) {
  return word_rate(normalize(ground_truth, cfg).text, normalize(hypothesis, cfg).text);
}

ScoreCard score(std::string sample_id, std::string_view ground_truth,
                std::string_view hypothesis, const NormalizationConfig& cfg) {
  auto gt = normalize(ground_truth, cfg);
  auto hyp = normalize(hypothesis, cfg);
  ScoreCard card;
  card.sample_id = std::move(sample_id);
  auto c = char_rate(gt.text, hyp.text);
  auto w = word_rate(gt.text, hyp.text);
  card.cer = c.rate;
  card.char_edit = c.edit;
  card.wer = w.rate;
  card.word_edit = w.edit;
  return card;
}

AggregateScore aggregate(std::span<const ScoreCard> cards) {
  if (cards.empty()) throw Error(Errc::kEmptyRun, "no scorable samples");
  AggregateScore agg;
  agg.n_samples = cards.size();
  std::size_t char_dist = 0, char_len = 0, word_dist = 0, word_len = 0;
  std::vector<double> cers, wers;
  cers.reserve(cards.size());
  wers.reserve(cards.size());
  for (const auto& c : cards) {
    char_dist += c.char_edit.distance;
    char_len += c.char_edit.reference_length;
    word_dist += c.word_edit.distance;
    word_len += c.word_edit.reference_length;
    cers.push_back(c.cer);
    wers.push_back(c.wer);
  }
  // Summing in sorted order makes the macro mean independent of card order.
  auto mean = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  agg.micro_cer = char_len ? static_cast<double>(char_dist) / static_cast<double>(char_len) : 0.0;
  agg.micro_wer = word_len ? static_cast<double>(word_dist) / static_cast<double>(word_len) : 0.0;
  agg.macro_cer = mean(cers);
  agg.macro_wer = mean(wers);
  return agg;
}

void to_json(nlohmann::json& j, const EditDistanceResult& e) {
  j = nlohmann::json{{"distance", e.distance},
                     {"reference_length", e.reference_length},
                     {"hypothesis_length", e.hypothesis_length},
                     {"substitutions", e.substitutions},
                     {"insertions", e.insertions},
                     {"deletions", e.deletions}};
}

void from_json(const nlohmann::json& j, EditDistanceResult& e) {
  j.at("distance").get_to(e.distance);
  j.at("reference_length").get_to(e.reference_length);
  j.at("hypothesis_length").get_to(e.hypothesis_length);
  j.at("substitutions").get_to(e.substitutions);
  j.at("insertions").get_to(e.insertions);
  j.at("deletions").get_to(e.deletions);
}

void to_json(nlohmann::json& j, const ScoreCard& c) {
  j = nlohmann::json{{"sample_id", c.sample_id}, {"cer", c.cer},
                     {"wer", c.wer},             {"char_edit", c.char_edit},
                     {"word_edit", c.word_edit}};
}

void from_json(const nlohmann::json& j, ScoreCard& c) {
  j.at("sample_id").get_to(c.sample_id);
  j.at("cer").get_to(c.cer);
  j.at("wer").get_to(c.wer);
  j.at("char_edit").get_to(c.char_edit);
  j.at("word_edit").get_to(c.word_edit);
}

void to_json(nlohmann::json& j, const AggregateScore& a) {
  j = nlohmann::json{{"micro_cer", a.micro_cer}, {"micro_wer", a.micro_wer},
                     {"macro_cer", a.macro_cer}, {"macro_wer", a.macro_wer},
                     {"n_samples", a.n_samples}};
}

void from_json(const nlohmann::json& j, AggregateScore& a) {
  j.at("micro_cer").get_to(a.micro_cer);
  j.at("micro_wer").get_to(a.micro_wer);
  j.at("macro_cer").get_to(a.macro_cer);
  j.at("macro_wer").get_to(a.macro_wer);
  j.at("n_samples").get_to(a.n_samples);
}

}  // namespace qalam
