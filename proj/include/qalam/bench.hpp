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

// Benchmark runner: obtains hypotheses from a model adapter for every bench
// record, scores them with the metrics module and builds reports and
// leaderboards.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qalam/manifest.hpp"
#include "qalam/metrics.hpp"
#include "qalam/net.hpp"
#include "qalam/textnorm.hpp"

namespace qalam::bench {

/// Parsed form of an adapter spec string:
///   echo
///   noisy:<p>[,<seed>]          or noisy:p=<p>,seed=<seed>
///   subprocess:<command line>   image path appended as the last argument
///   http:<url>                  POST {image, prompt?} -> {text}
struct AdapterSpec {
  enum class Kind { kEcho, kNoisy, kSubprocess, kHttp } kind = Kind::kEcho;
  double p = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> command;
  std::string url;
  std::string prompt;
  std::string credential_env = "QALAM_BENCH_KEY";  // bearer token for http, if set
  std::string model_id;                            // defaults from the kind
  int timeout_ms = 60000;
  std::string source;   // the spec string as given
};

/// Throws Error(kUsage) for a malformed spec.
AdapterSpec parse_adapter_spec(std::string_view spec);
void to_json(nlohmann::json& j, const AdapterSpec& s);

class Adapter {
 public:
  virtual ~Adapter() = default;
  /// Throws Error(kTimeout) or Error(kAdapterFailure) for a per-sample
  /// failure and Error(kAdapterUnavailable) when no sample can succeed.
  virtual std::string transcribe(const SampleRecord& record, const std::filesystem::path& image) = 0;
  virtual std::string model_id() const = 0;
  /// Echoed into reports.
  virtual nlohmann::json describe() const { return {{"model_id", model_id()}}; }
};

std::unique_ptr<Adapter> make_adapter(const AdapterSpec& spec,
                                      std::shared_ptr<HttpTransport> transport = default_transport());

/// Replaces each non-whitespace codepoint with probability p by a different
/// letter of kNoiseAlphabet. The stream is SplitMix(derive_seed(seed,
/// fnv1a64(sample_id))): one uniform() per non-whitespace codepoint, plus one
/// uniform_int over the remaining letters for each replacement.
std::string corrupt(std::string_view text, double p, std::uint64_t seed, std::string_view sample_id);
inline constexpr std::u32string_view kNoiseAlphabet = U"بتثجحخدذرزسشصضطظعغفقكلمنو";
std::uint64_t fnv1a64(std::string_view s) noexcept;

struct Exclusion {
  std::string sample_id;
  std::string reason;  // empty_reference | timeout | adapter_failure
  std::string message;
  bool operator==(const Exclusion&) const = default;
};

struct BenchReport {
  std::string benchmark_id;
  std::string manifest_digest;
  std::string model_id;
  nlohmann::json adapter;
  NormalizationConfig norm;
  std::vector<ScoreCard> cards;  // manifest order
  AggregateScore aggregate;
  std::vector<Exclusion> excluded;
  std::size_t n_samples = 0;
  nlohmann::json generator = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const BenchReport& r);
void from_json(const nlohmann::json& j, BenchReport& r);

/// Wall-clock figures, kept out of the report so reports stay reproducible.
struct Timing {
  double total_ms = 0;
  double mean_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  double max_ms = 0;
};

void to_json(nlohmann::json& j, const Timing& t);

struct RunOptions {
  int concurrency = 4;
  int max_retries = 0;  // extra attempts after a failed or timed-out sample
  std::string benchmark_id;  // defaults to the manifest directory name
  bool verify = true;
};

struct RunResult {
  BenchReport report;
  Timing timing;
};

/// Scores the bench split (every record when the manifest has no split
/// assignments). Errors: kAdapterUnavailable aborts; kUsage when the
/// manifest fails verification or has no bench records; kEmptyRun when
/// every sample is excluded.
RunResult run_benchmark(const Manifest& m, Adapter& adapter, const NormalizationConfig& norm,
                        const RunOptions& opts = {});

struct LeaderboardRow {
  std::size_t rank = 0;
  std::string model_id;
  AggregateScore aggregate;
  std::size_t n_excluded = 0;
};

struct Leaderboard {
  std::string benchmark_id;
  std::string manifest_digest;
  NormalizationConfig norm;
  std::vector<LeaderboardRow> rows;  // ascending micro CER
};

/// Throws Error(kMismatchedBenchmark) when digests or normalization
/// configs differ, Error(kEmptyRun) for no reports.
Leaderboard compare(const std::vector<BenchReport>& reports);

std::string to_csv(const Leaderboard& lb);
std::string to_markdown(const Leaderboard& lb);
nlohmann::json to_json(const Leaderboard& lb);
/// Bar-plot description: {type, title, y_label, labels, values, secondary}.
nlohmann::json plot_description(const Leaderboard& lb);
std::string render_svg(const nlohmann::json& plot);

enum class ImportFormat { kImagesTxt, kImagesJsonl };
ImportFormat parse_import_format(std::string_view name);

/// images+txt: every image has a same-stem .txt. images+jsonl: exactly one
/// .jsonl in `dir` with {image, text} rows covering every image. Throws
/// Error(kLayout) naming the first offending path.
Manifest import_external(const std::filesystem::path& dir, ImportFormat format);

}  // namespace qalam::bench
