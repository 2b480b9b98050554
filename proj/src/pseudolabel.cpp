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

#include "qalam/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>
#include <spdlog/spdlog.h>

#include "qalam/errors.hpp"
#include "qalam/io.hpp"

namespace qalam::pseudolabel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kDefaultPrompt =
    "Transcribe all visible Arabic/Darija text in this image exactly as written. "
    "Preserve line breaks. Output the text only, with no commentary.\n{image}";

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::string_view mime_type(std::string_view bytes) {
  if (bytes.starts_with("\x89PNG")) return "image/png";
  if (bytes.starts_with("\xFF\xD8")) return "image/jpeg";
  if (bytes.starts_with("RIFF")) return "image/webp";
  if (bytes.starts_with("II*") || bytes.starts_with("MM")) return "image/tiff";
  if (bytes.starts_with("BM")) return "image/bmp";
  return "application/octet-stream";
}

std::string safe_dir_name(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s;
}

const std::unordered_set<std::string>& providers() {
  static const std::unordered_set<std::string> p{"generic", "gemini", "openai"};
  return p;
}

}  // namespace

std::string_view default_prompt() noexcept { return kDefaultPrompt; }

void to_json(json& j, const LabelerConfig& c) {
  j = {{"endpoint", c.endpoint},
       {"provider", c.provider},
       {"model_id", c.model_id},
       {"credential_env", c.credential_env},
       {"prompt_template", c.prompt_template},
       {"max_retries", c.max_retries},
       {"backoff", {{"initial_ms", c.backoff_initial_ms}, {"multiplier", c.backoff_multiplier}, {"max_ms", c.backoff_max_ms}}},
       {"rate_limit", c.rate_limit},
       {"cache_dir", c.cache_dir},
       {"concurrency", c.concurrency},
       {"timeout_ms", c.timeout_ms}};
}

void from_json(const json& j, LabelerConfig& c) {
  static const std::unordered_set<std::string> kKeys{"endpoint",    "provider",   "model_id",  "credential_env",
                                                     "prompt_template", "max_retries", "backoff", "rate_limit",
                                                     "cache_dir",   "concurrency", "timeout_ms"};
  if (!j.is_object()) throw Error(Errc::kConfig, "labeler: expected an object");
  for (const auto& [k, _] : j.items())
    if (!kKeys.contains(k)) throw Error(Errc::kConfig, "labeler: unknown key '" + k + "'");
  c = LabelerConfig{};
  try {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.provider = j.value("provider", c.provider);
    c.model_id = j.value("model_id", c.model_id);
    c.credential_env = j.value("credential_env", c.credential_env);
    c.prompt_template = j.value("prompt_template", c.prompt_template);
    c.max_retries = j.value("max_retries", c.max_retries);
    if (auto it = j.find("backoff"); it != j.end()) {
      for (const auto& [k, _] : it->items())
        if (k != "initial_ms" && k != "multiplier" && k != "max_ms")
          throw Error(Errc::kConfig, "labeler.backoff: unknown key '" + k + "'");
      c.backoff_initial_ms = it->value("initial_ms", c.backoff_initial_ms);
      c.backoff_multiplier = it->value("multiplier", c.backoff_multiplier);
      c.backoff_max_ms = it->value("max_ms", c.backoff_max_ms);
    }
    c.rate_limit = j.value("rate_limit", c.rate_limit);
    c.cache_dir = j.value("cache_dir", c.cache_dir);
    c.concurrency = j.value("concurrency", c.concurrency);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  } catch (const json::exception& e) {
    throw Error(Errc::kConfig, std::string("labeler: ") + e.what());
  }
}

std::vector<std::string> validate_config(const LabelerConfig& c) {
  std::vector<std::string> d;
  if (!c.endpoint.starts_with("http://") && !c.endpoint.starts_with("https://"))
    d.push_back("endpoint: must be an http:// or https:// URL");
  if (!providers().contains(c.provider)) d.push_back("provider: must be generic, gemini or openai");
  if (c.model_id.empty()) d.push_back("model_id: empty");
  if (c.credential_env.empty()) d.push_back("credential_env: empty");
  if (c.prompt_template.empty()) d.push_back("prompt_template: empty");
  else if (c.prompt_template.find(kImagePlaceholder) == std::string::npos)
    d.push_back("prompt_template: missing {image} placeholder");
  if (c.max_retries < 0) d.push_back("max_retries: must be >= 0");
  if (c.backoff_initial_ms < 0) d.push_back("backoff.initial_ms: must be >= 0");
  if (!(c.backoff_multiplier >= 1.0)) d.push_back("backoff.multiplier: must be >= 1");
  if (c.backoff_max_ms < c.backoff_initial_ms) d.push_back("backoff.max_ms: below initial_ms");
  if (!(c.rate_limit > 0)) d.push_back("rate_limit: must be > 0");
  if (c.cache_dir.empty()) d.push_back("cache_dir: empty");
  if (c.concurrency < 1) d.push_back("concurrency: must be >= 1");
  if (c.timeout_ms <= 0) d.push_back("timeout_ms: must be > 0");
  return d;
}

void to_json(json& j, const PseudoLabel& l) {
  j = {{"sample_id", l.sample_id},   {"text", l.text},
       {"model_id", l.model_id},     {"latency_ms", l.latency_ms},
       {"attempt_count", l.attempt_count}, {"raw_response_digest", l.raw_response_digest}};
}

void from_json(const json& j, PseudoLabel& l) {
  l.sample_id = j.at("sample_id").get<std::string>();
  l.text = j.at("text").get<std::string>();
  l.model_id = j.value("model_id", "");
  l.latency_ms = j.value("latency_ms", std::int64_t{0});
  l.attempt_count = j.value("attempt_count", 0);
  l.raw_response_digest = j.value("raw_response_digest", "");
}

// ---------------------------------------------------------------- limiter

RateLimiter::RateLimiter(double per_minute, std::shared_ptr<Clock> clock) : clock_(std::move(clock)) {
  if (!(per_minute > 0)) throw Error(Errc::kConfig, "rate_limit must be > 0");
  using namespace std::chrono;
  if (per_minute >= 1) {
    capacity_ = static_cast<std::size_t>(std::floor(per_minute));
    window_ = minutes(1);
  } else {
    capacity_ = 1;
    window_ = duration_cast<nanoseconds>(duration<double>(60.0 / per_minute));
  }
}

Clock::time_point RateLimiter::acquire() {
  for (;;) {
    Clock::time_point wake;
    {
      std::lock_guard lock(mu_);
      const auto now = clock_->now();
      while (!granted_.empty() && granted_.front() + window_ <= now) granted_.pop_front();
      if (granted_.size() < capacity_) {
        granted_.push_back(now);
        return now;
      }
      wake = granted_.front() + window_;
    }
    clock_->sleep_until(wake);
  }
}

// ---------------------------------------------------------------- labeler

std::string extract_transcription(std::string_view reply) {
  const auto open = reply.find("```");
  if (open == std::string_view::npos) return trim(reply);
  auto body_start = reply.find('\n', open + 3);
  if (body_start == std::string_view::npos) return {};
  ++body_start;
  const auto close = reply.find("```", body_start);
  return trim(reply.substr(body_start, close == std::string_view::npos ? std::string_view::npos : close - body_start));
}

Labeler::Labeler(LabelerConfig cfg, std::shared_ptr<Clock> clock, std::shared_ptr<HttpTransport> transport)
    : cfg_(std::move(cfg)), clock_(std::move(clock)), transport_(std::move(transport)) {
  if (auto d = validate_config(cfg_); !d.empty()) {
    std::string msg;
    for (const auto& x : d) msg += (msg.empty() ? "" : "; ") + x;
    throw Error(Errc::kConfig, msg);
  }
  const char* cred = std::getenv(cfg_.credential_env.c_str());
  if (cred == nullptr || *cred == '\0')
    throw Error(Errc::kAuth, "credential environment variable " + cfg_.credential_env + " is not set");
  credential_ = cred;
  limiter_ = std::make_unique<RateLimiter>(cfg_.rate_limit, clock_);
}

std::string Labeler::scrub(std::string text) const {
  if (credential_.empty()) return text;
  for (auto pos = text.find(credential_); pos != std::string::npos; pos = text.find(credential_, pos))
    text.replace(pos, credential_.size(), "[redacted]");
  return text;
}

fs::path Labeler::cache_path(std::string_view image) const {
  const std::string key = sha256_hex(image) + "\n" + sha256_hex(cfg_.prompt_template) + "\n" + cfg_.model_id;
  return fs::path(cfg_.cache_dir) / safe_dir_name(cfg_.model_id) / (sha256_hex(key) + ".json");
}

Labeler::Request Labeler::build_request(std::string_view image) const {
  const auto at = cfg_.prompt_template.find(kImagePlaceholder);
  const std::string before = trim(cfg_.prompt_template.substr(0, at));
  const std::string after = trim(cfg_.prompt_template.substr(at + kImagePlaceholder.size()));
  const std::string mime(mime_type(image));
  const std::string b64 =
      base64_encode({reinterpret_cast<const std::uint8_t*>(image.data()), image.size()});
  Request r;
  r.url = cfg_.endpoint;
  if (cfg_.provider == "generic") {
    std::string prompt = before;
    if (!after.empty()) prompt += (prompt.empty() ? "" : "\n") + after;
    r.headers = {{"Authorization", "Bearer " + credential_}};
    r.body = json{{"model", cfg_.model_id}, {"prompt", prompt}, {"image", b64}, {"mime_type", mime}}.dump();
  } else if (cfg_.provider == "gemini") {
    if (r.url.find(":generateContent") == std::string::npos) {
      while (r.url.ends_with('/')) r.url.pop_back();
      r.url += "/models/" + cfg_.model_id + ":generateContent";
    }
    json parts = json::array();
    if (!before.empty()) parts.push_back({{"text", before}});
    parts.push_back({{"inline_data", {{"mime_type", mime}, {"data", b64}}}});
    if (!after.empty()) parts.push_back({{"text", after}});
    r.headers = {{"x-goog-api-key", credential_}};
    r.body = json{{"contents", json::array({{{"role", "user"}, {"parts", parts}}})}}.dump();
  } else {
    json content = json::array();
    if (!before.empty()) content.push_back({{"type", "text"}, {"text", before}});
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:" + mime + ";base64," + b64}}}});
    if (!after.empty()) content.push_back({{"type", "text"}, {"text", after}});
    r.headers = {{"Authorization", "Bearer " + credential_}};
    r.body = json{{"model", cfg_.model_id},
                  {"messages", json::array({{{"role", "user"}, {"content", content}}})}}
                 .dump();
  }
  return r;
}

std::string Labeler::reply_text(const std::string& body) const {
  try {
    const json j = json::parse(body);
    if (cfg_.provider == "generic") return j.at("text").get<std::string>();
    if (cfg_.provider == "gemini") {
      std::string out;
      for (const auto& p : j.at("candidates").at(0).at("content").at("parts"))
        if (p.contains("text")) out += p.at("text").get<std::string>();
      return out;
    }
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::kExtraction, "response has no transcription field");
  }
}

PseudoLabel Labeler::label_image(std::string_view image, const std::string& sample_id) const {
  if (cv::imdecode(cv::Mat(1, static_cast<int>(image.size()), CV_8U, const_cast<char*>(image.data())),
                   cv::IMREAD_UNCHANGED)
          .empty())
    throw Error(Errc::kUnreadableImage, sample_id + ": image does not decode");

  PseudoLabel label;
  label.sample_id = sample_id;
  label.model_id = cfg_.model_id;
  const fs::path cached = cache_path(image);
  if (fs::exists(cached)) {
    try {
      const json c = json::parse(read_file(cached));
      label.text = c.at("text").get<std::string>();
      label.latency_ms = c.value("latency_ms", std::int64_t{0});
      label.raw_response_digest = c.value("raw_response_digest", "");
      label.attempt_count = 0;
      return label;
    } catch (const std::exception&) {
      spdlog::warn("ignoring unreadable cache entry {}", cached.string());
    }
  }

  const Request req = build_request(image);
  Errc last = Errc::kTransient;
  std::string last_msg;
  for (int attempt = 1; attempt <= cfg_.max_retries + 1; ++attempt) {
    limiter_->acquire();
    const auto t0 = clock_->now();
    HttpResponse res = transport_->post(req.url, req.headers, req.body, "application/json", cfg_.timeout_ms);
    ++calls_;
    label.attempt_count = attempt;
    label.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(clock_->now() - t0).count();

    if (res.status >= 200 && res.status < 300) {
      label.raw_response_digest = sha256_hex(res.body);
      label.text = extract_transcription(reply_text(res.body));
      if (label.text.empty()) throw Error(Errc::kExtraction, sample_id + ": reply contains no transcription");
      fs::create_directories(cached.parent_path());
      write_file_atomic(cached, json{{"text", label.text},
                                     {"model_id", label.model_id},
                                     {"latency_ms", label.latency_ms},
                                     {"raw_response_digest", label.raw_response_digest}}
                                    .dump());
      return label;
    }
    const std::string detail = scrub(res.status == 0 ? res.error : "HTTP " + std::to_string(res.status) + ": " +
                                                                      res.body.substr(0, 200));
    if (res.status == 401 || res.status == 403) throw Error(Errc::kAuth, sample_id + ": " + detail);
    const bool retryable = res.status == 0 || res.status == 408 || res.status == 429 || res.status >= 500;
    if (!retryable) throw Error(Errc::kIo, sample_id + ": endpoint rejected the request: " + detail);
    last = res.status == 429 ? Errc::kRateLimited : Errc::kTransient;
    last_msg = detail;
    if (attempt > cfg_.max_retries) break;

    double delay = cfg_.backoff_initial_ms * std::pow(cfg_.backoff_multiplier, attempt - 1);
    delay = std::min<double>(delay, cfg_.backoff_max_ms);
    if (auto it = res.headers.find("retry-after"); it != res.headers.end()) {
      try {
        delay = std::max(delay, 1000.0 * std::stod(it->second));
      } catch (const std::exception&) {
      }
    }
    spdlog::info("{}: attempt {} failed ({}), retrying in {} ms", sample_id, attempt, detail, std::lround(delay));
    clock_->sleep_for(std::chrono::milliseconds(std::lround(delay)));
  }
  throw Error(last, sample_id + ": giving up after " + std::to_string(cfg_.max_retries + 1) + " attempts: " + last_msg);
}

// ---------------------------------------------------------------- batch

BatchResult label_batch(const Manifest& m, const Labeler& labeler, const std::vector<PseudoLabel>& done) {
  std::unordered_map<std::string, PseudoLabel> have;
  for (const auto& l : done) have.emplace(l.sample_id, l);

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < m.records.size(); ++i)
    if (trim(m.records[i].ground_truth).empty() && !have.contains(m.records[i].sample_id)) todo.push_back(i);

  std::vector<std::optional<PseudoLabel>> got(todo.size());
  std::vector<std::optional<LabelFailure>> failed(todo.size());
  std::atomic<std::size_t> cursor{0};
  std::atomic<bool> abort{false};
  std::exception_ptr auth_error;
  std::mutex mu;

  auto worker = [&] {
    for (std::size_t k = cursor++; k < todo.size() && !abort; k = cursor++) {
      const SampleRecord& r = m.records[todo[k]];
      try {
        got[k] = labeler.label_image(read_file(m.image_file(r)), r.sample_id);
      } catch (const Error& e) {
        if (e.code() == Errc::kAuth) {
          std::lock_guard lock(mu);
          if (!auth_error) auth_error = std::make_exception_ptr(Error(Errc::kAuth, labeler.scrub(e.what())));
          abort = true;
          return;
        }
        failed[k] = LabelFailure{r.sample_id, std::string(errc_name(e.code())), labeler.scrub(e.what())};
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(labeler.config().concurrency), std::max<std::size_t>(todo.size(), 1));
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (auth_error) std::rethrow_exception(auth_error);

  BatchResult out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& id = m.records[i].sample_id;
    if (auto it = have.find(id); it != have.end()) out.labels.push_back(it->second);
    if (k < todo.size() && todo[k] == i) {
      if (got[k]) out.labels.push_back(std::move(*got[k]));
      if (failed[k]) out.failures.push_back(std::move(*failed[k]));
      ++k;
    }
  }
  return out;
}

std::vector<PseudoLabel> read_labels(const fs::path& jsonl) {
  std::vector<PseudoLabel> out;
  std::istringstream in(read_file(jsonl));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<PseudoLabel>());
    } catch (const json::exception& e) {
      throw Error(Errc::kIo, jsonl.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_labels(const std::vector<PseudoLabel>& labels, const fs::path& jsonl) {
  std::string body;
  for (const auto& l : labels) body += json(l).dump() + "\n";
  if (jsonl.has_parent_path()) fs::create_directories(jsonl.parent_path());
  write_file_atomic(jsonl, body);
}

Manifest apply_labels(Manifest m, const std::vector<PseudoLabel>& labels, bool trust) {
  if (!trust)
    throw Error(Errc::kUsage, "pseudo-labels are unreviewed; pass --trust-pseudolabels to use them as ground truth");
  std::unordered_map<std::string, const PseudoLabel*> by_id;
  for (const auto& l : labels) by_id[l.sample_id] = &l;
  for (auto& r : m.records)
    if (auto it = by_id.find(r.sample_id); it != by_id.end() && trim(r.ground_truth).empty()) r.ground_truth = it->second->text;
  m.stats = compute_stats(m);
  return m;
}

}  // namespace qalam::pseudolabel
