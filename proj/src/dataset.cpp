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

#include "qalam/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>

#include "qalam/errors.hpp"
#include "qalam/io.hpp"
#include "qalam/rng.hpp"

namespace qalam {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_image(const fs::path& p) {
  static const std::set<std::string> kExt{".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp", ".webp"};
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kExt.contains(ext);
}

std::map<std::string, std::string> read_transcript_jsonl(const fs::path& file) {
  std::map<std::string, std::string> out;
  std::istringstream in(read_file(file));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      out[fs::path(j.at("image").get<std::string>()).filename().string()] = j.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(Errc::kLayout, file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Indices of `idx` kept after a seeded downsample to `keep`, in original order.
std::vector<std::size_t> downsample(std::vector<std::size_t> idx, std::size_t keep, std::uint64_t seed) {
  SplitMix rng(seed);
  shuffle(std::span(idx), rng);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

IngestResult ingest_real(const fs::path& dir, Provenance provenance, const std::optional<fs::path>& transcripts) {
  if (!fs::is_directory(dir)) throw Error(Errc::kIo, dir.string() + ": not a directory");
  std::optional<std::map<std::string, std::string>> table;
  if (transcripts && fs::is_regular_file(*transcripts)) table = read_transcript_jsonl(*transcripts);
  const fs::path txt_dir = transcripts && fs::is_directory(*transcripts) ? *transcripts : dir;

  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image(e.path())) images.push_back(e.path());
  std::sort(images.begin(), images.end());

  IngestResult out;
  out.manifest.root = dir;
  for (const auto& img : images) {
    const std::string name = img.filename().string();
    std::optional<std::string> text;
    if (table) {
      if (auto it = table->find(name); it != table->end()) text = it->second;
    } else if (fs::path t = txt_dir / img.stem().concat(".txt"); fs::exists(t)) {
      text = read_file(t);
    }
    if (!text) {
      out.diagnostics.push_back({"MissingTranscript", name + ": no transcript"});
      continue;
    }
    const std::string bytes = read_file(img);
    cv::Mat decoded = cv::imdecode(cv::Mat(1, static_cast<int>(bytes.size()), CV_8U, const_cast<char*>(bytes.data())),
                                   cv::IMREAD_UNCHANGED);
    if (decoded.empty()) {
      out.diagnostics.push_back({"UnreadableImage", name + ": cannot decode"});
      continue;
    }
    SampleRecord r;
    r.content_hash = sha256_hex(bytes);
    r.sample_id = "real-" + sha256_hex(r.content_hash + "/" + name).substr(0, 16);
    r.image_path = name;
    r.width = decoded.cols;
    r.height = decoded.rows;
    r.ground_truth = std::move(*text);
    r.provenance = provenance;
    out.manifest.records.push_back(std::move(r));
  }
  out.manifest.stats = compute_stats(out.manifest);
  return out;
}

Manifest split(Manifest m, const std::map<Split, double>& ratios, std::uint64_t seed) {
  if (ratios.empty()) throw Error(Errc::kConfig, "split: no ratios");
  double sum = 0;
  for (auto [s, f] : ratios) {
    if (!(f >= 0.0 && f <= 1.0)) throw Error(Errc::kConfig, "split: fraction for " + std::string(to_string(s)) + " out of [0,1]");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::kConfig, "split: fractions sum to " + std::to_string(sum));

  const std::size_t n = m.records.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix rng(seed);
  shuffle(std::span(order), rng);

  std::map<Split, std::size_t> counts;
  std::size_t assigned = 0;
  Split largest = ratios.begin()->first;
  for (auto [s, f] : ratios) {
    // The epsilon absorbs representation error, e.g. 0.87 * 300.
    counts[s] = static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
    assigned += counts[s];
    if (f > ratios.at(largest)) largest = s;
  }
  counts[largest] += n - assigned;

  m.split_assignments.clear();
  std::size_t pos = 0;
  for (auto [s, c] : counts)
    for (std::size_t k = 0; k < c; ++k) m.split_assignments[m.records[order[pos++]].sample_id] = s;
  m.stats = compute_stats(m);
  return m;
}

Manifest merge(const Manifest& a, const Manifest& b, const std::optional<std::map<std::string, double>>& target_mix,
               std::uint64_t seed) {
  Manifest out;
  out.root = a.root;
  out.generator = {{"merged", json::array({a.generator, b.generator})}};
  std::unordered_set<std::string> seen;
  const Manifest b_rebased = a.root.empty() ? b : rebase(b, a.root);
  for (const Manifest* src : {&a, &b_rebased}) {
    for (const auto& r : src->records) {
      if (!seen.insert(r.sample_id).second) throw Error(Errc::kDuplicateSampleId, r.sample_id);
      out.records.push_back(r);
      if (auto it = src->split_assignments.find(r.sample_id); it != src->split_assignments.end())
        out.split_assignments.emplace(r.sample_id, it->second);
    }
  }

  if (target_mix) {
    for (const auto& [k, v] : *target_mix) {
      if (k != "synthetic" && k != "real") throw Error(Errc::kConfig, "merge: unknown provenance class '" + k + "'");
      if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::kConfig, "merge: fraction for " + k + " out of [0,1]");
    }
    const double fs_ = target_mix->contains("synthetic") ? target_mix->at("synthetic") : 0.0;
    const double fr = target_mix->contains("real") ? target_mix->at("real") : 0.0;
    if (std::abs(fs_ + fr - 1.0) > 1e-9) throw Error(Errc::kConfig, "merge: mix fractions must sum to 1");

    std::vector<std::size_t> syn, real;
    for (std::size_t i = 0; i < out.records.size(); ++i)
      (out.records[i].provenance == Provenance::kSynthetic ? syn : real).push_back(i);
    const double s = static_cast<double>(syn.size()), r = static_cast<double>(real.size());

    std::vector<std::size_t> keep_syn = syn, keep_real = real;
    const auto want_syn = fr == 0.0 ? syn.size() : static_cast<std::size_t>(std::llround(r * fs_ / fr));
    if (want_syn < syn.size()) {
      keep_syn = downsample(syn, want_syn, seed);
    } else {
      const auto want_real = fs_ == 0.0 ? real.size() : static_cast<std::size_t>(std::llround(s * fr / fs_));
      if (want_real < real.size()) keep_real = downsample(real, want_real, seed);
    }
    std::vector<std::size_t> keep;
    std::merge(keep_syn.begin(), keep_syn.end(), keep_real.begin(), keep_real.end(), std::back_inserter(keep));
    std::vector<SampleRecord> kept;
    std::map<std::string, Split> kept_splits;
    for (std::size_t i : keep) {
      auto& rec = out.records[i];
      if (auto it = out.split_assignments.find(rec.sample_id); it != out.split_assignments.end())
        kept_splits.emplace(rec.sample_id, it->second);
      kept.push_back(std::move(rec));
    }
    out.records = std::move(kept);
    out.split_assignments = std::move(kept_splits);
  }
  out.stats = compute_stats(out);
  return out;
}

std::vector<Diagnostic> verify(const Manifest& m) {
  std::vector<Diagnostic> out;
  std::unordered_set<std::string> ids;
  for (const auto& r : m.records)
    if (!ids.insert(r.sample_id).second) out.push_back({"duplicate-id", r.sample_id});
  for (const auto& [id, _] : m.split_assignments)
    if (!ids.contains(id)) out.push_back({"unknown-split-id", id});

  std::vector<std::optional<Diagnostic>> file_diags(m.records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < m.records.size(); i = next++) {
      const auto& r = m.records[i];
      const fs::path p = m.image_file(r);
      if (!fs::is_regular_file(p)) {
        file_diags[i] = Diagnostic{"missing-image", r.sample_id + ": " + p.string()};
      } else if (!r.content_hash.empty()) {
        try {
          if (sha256_file(p) != r.content_hash) file_diags[i] = Diagnostic{"hash-mismatch", r.sample_id + ": " + p.string()};
        } catch (const Error& e) {
          file_diags[i] = Diagnostic{"missing-image", r.sample_id + ": " + e.what()};
        }
      }
    }
  };
  const unsigned n_threads = std::clamp(std::thread::hardware_concurrency(), 1u, 8u);
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  pool.clear();
  for (auto& d : file_diags)
    if (d) out.push_back(std::move(*d));

  for (const auto& r : m.records) {
    if (r.width <= 0 || r.height <= 0) continue;
    auto inside = [&](const geometry::PixelBox& b) {
      return b.w >= 0 && b.h >= 0 && b.x >= 0 && b.y >= 0 && b.right() <= r.width && b.bottom() <= r.height;
    };
    bool ok = std::all_of(r.line_boxes.begin(), r.line_boxes.end(), inside);
    for (const auto& w : r.word_boxes) ok = ok && inside(w.box);
    if (!ok) out.push_back({"box-out-of-bounds", r.sample_id});
  }

  const ManifestStats s = compute_stats(m);
  auto mismatch = [&](const std::string& field, const std::string& stored, const std::string& actual) {
    out.push_back({"stats-mismatch", field + ": stored " + stored + ", recomputed " + actual});
  };
  if (s.samples != m.stats.samples) mismatch("samples", std::to_string(m.stats.samples), std::to_string(s.samples));
  if (s.total_words != m.stats.total_words)
    mismatch("total_words", std::to_string(m.stats.total_words), std::to_string(s.total_words));
  if (s.provenance_histogram != m.stats.provenance_histogram)
    mismatch("provenance_histogram", json(m.stats.provenance_histogram).dump(), json(s.provenance_histogram).dump());
  if (s.split_counts != m.stats.split_counts)
    mismatch("split_counts", json(m.stats.split_counts).dump(), json(s.split_counts).dump());
  return out;
}

}  // namespace qalam
