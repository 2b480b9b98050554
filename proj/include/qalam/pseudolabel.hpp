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

// Pseudo-labelling client: sends an image and prompt to a vision-language
// inference endpoint and keeps the extracted transcription. Responses are
// cached by (image digest, prompt digest, model id); requests share a
// sliding-window rate limiter and retry transient failures with backoff.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qalam/manifest.hpp"
#include "qalam/net.hpp"

namespace qalam::pseudolabel {

/// Reconstructed default; the original prompt is unpublished.
std::string_view default_prompt() noexcept;

inline constexpr std::string_view kImagePlaceholder = "{image}";

struct LabelerConfig {
  std::string endpoint;
  std::string provider = "generic";  // generic | gemini | openai
  std::string model_id = "gemini-2.0-flash";
  std::string credential_env = "QALAM_LABELER_KEY";
  std::string prompt_template{default_prompt()};
  int max_retries = 4;
  int backoff_initial_ms = 500;
  double backoff_multiplier = 2.0;
  int backoff_max_ms = 30000;
  double rate_limit = 60;  // requests per minute
  std::string cache_dir = "cache";
  int concurrency = 4;
  int timeout_ms = 60000;
};

void to_json(nlohmann::json& j, const LabelerConfig& c);
/// Throws Error(kConfig) on unknown keys or wrong types.
void from_json(const nlohmann::json& j, LabelerConfig& c);
std::vector<std::string> validate_config(const LabelerConfig& c);

struct PseudoLabel {
  std::string sample_id;
  std::string text;
  std::string model_id;
  std::int64_t latency_ms = 0;
  int attempt_count = 0;
  std::string raw_response_digest;

  bool operator==(const PseudoLabel&) const = default;
};

void to_json(nlohmann::json& j, const PseudoLabel& l);
void from_json(const nlohmann::json& j, PseudoLabel& l);

struct LabelFailure {
  std::string sample_id;
  std::string error;  // Errc name
  std::string message;
};

/// At most floor(rate) acquisitions in any 60 s window (for rate < 1, one
/// per 60/rate seconds).
class RateLimiter {
 public:
  RateLimiter(double per_minute, std::shared_ptr<Clock> clock);
  /// Blocks until a slot is free; returns the granted time.
  Clock::time_point acquire();

 private:
  std::size_t capacity_;
  std::chrono::nanoseconds window_;
  std::shared_ptr<Clock> clock_;
  std::mutex mu_;
  std::deque<Clock::time_point> granted_;
};

/// Text inside the first ``` fence if any, else the whole reply; outer
/// whitespace trimmed. Empty when nothing usable remains.
std::string extract_transcription(std::string_view reply);

class Labeler {
 public:
  /// Reads the credential from cfg.credential_env; throws Error(kAuth) if
  /// it is unset and Error(kConfig) for an invalid config.
  explicit Labeler(LabelerConfig cfg, std::shared_ptr<Clock> clock = steady_clock(),
                   std::shared_ptr<HttpTransport> transport = default_transport());

  /// Throws Error(kAuth), Error(kRateLimited) or Error(kTransient) once
  /// retries run out, Error(kExtraction) for an unusable reply and
  /// Error(kUnreadableImage) when the bytes do not decode.
  PseudoLabel label_image(std::string_view image, const std::string& sample_id) const;

  const LabelerConfig& config() const noexcept { return cfg_; }
  std::size_t network_calls() const noexcept { return calls_; }
  /// Replaces every occurrence of the credential.
  std::string scrub(std::string text) const;
  std::filesystem::path cache_path(std::string_view image) const;

 private:
  struct Request {
    std::string url;
    HttpHeaders headers;
    std::string body;
  };
  Request build_request(std::string_view image) const;
  std::string reply_text(const std::string& body) const;

  LabelerConfig cfg_;
  std::string credential_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<HttpTransport> transport_;
  std::unique_ptr<RateLimiter> limiter_;
  mutable std::atomic<std::size_t> calls_{0};
};

struct BatchResult {
  std::vector<PseudoLabel> labels;  // manifest order
  std::vector<LabelFailure> failures;
};

/// Labels every record with an empty ground truth that `done` does not
/// already cover, with at most cfg.concurrency requests in flight. Only
/// Error(kAuth) aborts the batch.
BatchResult label_batch(const Manifest& m, const Labeler& labeler, const std::vector<PseudoLabel>& done = {});

std::vector<PseudoLabel> read_labels(const std::filesystem::path& jsonl);
void write_labels(const std::vector<PseudoLabel>& labels, const std::filesystem::path& jsonl);

/// Copies label texts into empty ground truths. Refuses (Error(kUsage))
/// unless `trust` is set, since unreviewed labels are not ground truth.
Manifest apply_labels(Manifest m, const std::vector<PseudoLabel>& labels, bool trust);

}  // namespace qalam::pseudolabel
