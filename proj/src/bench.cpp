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

#include "qalam/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <spdlog/spdlog.h>
#include <sys/wait.h>
#include <unistd.h>

#include "qalam/dataset.hpp"
#include "qalam/errors.hpp"
#include "qalam/io.hpp"
#include "qalam/rng.hpp"
#include "qalam/unicode.hpp"

namespace qalam::bench {

namespace fs = std::filesystem;
using nlohmann::json;
using Clk = std::chrono::steady_clock;

namespace {

std::string format_double(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::vector<std::string> split_command(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  bool in_token = false;
  char quote = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quote) {
      if (c == quote) quote = 0;
      else if (c == '\\' && quote == '"' && i + 1 < s.size()) cur += s[++i];
      else cur += c;
    } else if (c == '\'' || c == '"') {
      quote = c;
      in_token = true;
    } else if (c == '\\' && i + 1 < s.size()) {
      cur += s[++i];
      in_token = true;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      if (in_token) out.push_back(std::move(cur));
      cur.clear();
      in_token = false;
    } else {
      cur += c;
      in_token = true;
    }
  }
  if (quote) throw Error(Errc::kUsage, "unterminated quote in adapter command");
  if (in_token) out.push_back(std::move(cur));
  return out;
}

double parse_probability(const std::string& v) {
  char* end = nullptr;
  const double p = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || !(p >= 0.0 && p <= 1.0))
    throw Error(Errc::kUsage, "noisy: p must be a number in [0,1], got '" + v + "'");
  return p;
}

std::uint64_t parse_seed(const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long s = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno != 0 || v.front() == '-')
    throw Error(Errc::kUsage, "noisy: seed must be an unsigned integer, got '" + v + "'");
  return s;
}

// ---- adapters ---------------------------------------------------------

class EchoAdapter final : public Adapter {
 public:
  explicit EchoAdapter(std::string id) : id_(std::move(id)) {}
  std::string transcribe(const SampleRecord& r, const fs::path&) override { return r.ground_truth; }
  std::string model_id() const override { return id_; }

 private:
  std::string id_;
};

class NoisyAdapter final : public Adapter {
 public:
  NoisyAdapter(double p, std::uint64_t seed, std::string id) : p_(p), seed_(seed), id_(std::move(id)) {}
  std::string transcribe(const SampleRecord& r, const fs::path&) override {
    return corrupt(r.ground_truth, p_, seed_, r.sample_id);
  }
  std::string model_id() const override { return id_; }

 private:
  double p_;
  std::uint64_t seed_;
  std::string id_;
};

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  int exec_errno = 0;
  std::string out;
  std::string err;
};

ProcessResult run_process(const std::vector<std::string>& args, int timeout_ms) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  int out[2], err[2], status_pipe[2];
  if (::pipe2(out, O_CLOEXEC) != 0) throw Error(Errc::kAdapterFailure, "pipe failed");
  if (::pipe2(err, O_CLOEXEC) != 0) {
    ::close(out[0]);
    ::close(out[1]);
    throw Error(Errc::kAdapterFailure, "pipe failed");
  }
  if (::pipe2(status_pipe, O_CLOEXEC) != 0) {
    for (int fd : {out[0], out[1], err[0], err[1]}) ::close(fd);
    throw Error(Errc::kAdapterFailure, "pipe failed");
  }

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {out[0], out[1], err[0], err[1], status_pipe[0], status_pipe[1]}) ::close(fd);
    throw Error(Errc::kAdapterFailure, "fork failed");
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    const int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, 0);
    ::dup2(out[1], 1);
    ::dup2(err[1], 2);
    ::execvp(argv[0], argv.data());
    const int e = errno;
    [[maybe_unused]] ssize_t n = ::write(status_pipe[1], &e, sizeof e);
    ::_exit(127);
  }
  ::close(out[1]);
  ::close(err[1]);
  ::close(status_pipe[1]);

  ProcessResult r;
  int e = 0;
  if (::read(status_pipe[0], &e, sizeof e) == static_cast<ssize_t>(sizeof e)) r.exec_errno = e;
  ::close(status_pipe[0]);

  const auto deadline = Clk::now() + std::chrono::milliseconds(timeout_ms);
  pollfd fds[2] = {{out[0], POLLIN, 0}, {err[0], POLLIN, 0}};
  int open_fds = 2;
  char buf[65536];
  constexpr std::size_t kMaxOutput = 16u << 20;
  while (open_fds > 0 && !r.exec_errno) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clk::now()).count();
    if (left <= 0) {
      r.timed_out = true;
      break;
    }
    const int rc = ::poll(fds, 2, static_cast<int>(left));
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) continue;
    for (int k = 0; k < 2; ++k) {
      if (fds[k].fd < 0 || !(fds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const ssize_t n = ::read(fds[k].fd, buf, sizeof buf);
      if (n > 0) {
        std::string& dst = k == 0 ? r.out : r.err;
        if (dst.size() < kMaxOutput) dst.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || errno != EINTR) {
        ::close(fds[k].fd);
        fds[k].fd = -1;
        --open_fds;
      }
    }
  }
  for (auto& f : fds)
    if (f.fd >= 0) ::close(f.fd);
  if (r.timed_out) ::kill(-pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
  return r;
}

class SubprocessAdapter final : public Adapter {
 public:
  SubprocessAdapter(std::vector<std::string> command, int timeout_ms, std::string id)
      : command_(std::move(command)), timeout_ms_(timeout_ms), id_(std::move(id)) {}

  std::string transcribe(const SampleRecord&, const fs::path& image) override {
    auto args = command_;
    args.push_back(image.string());
    ProcessResult r = run_process(args, timeout_ms_);
    if (r.exec_errno)
      throw Error(Errc::kAdapterUnavailable, "cannot run '" + command_[0] + "': " + std::strerror(r.exec_errno));
    if (r.timed_out) throw Error(Errc::kTimeout, "no answer within " + std::to_string(timeout_ms_) + " ms");
    if (r.exit_code != 0) {
      std::string tail = r.err.substr(0, 500);
      while (!tail.empty() && (tail.back() == '\n' || tail.back() == '\r')) tail.pop_back();
      throw Error(Errc::kAdapterFailure, "exit status " + std::to_string(r.exit_code) + (tail.empty() ? "" : ": " + tail));
    }
    while (!r.out.empty() && (r.out.back() == '\n' || r.out.back() == '\r')) r.out.pop_back();
    return r.out;
  }
  std::string model_id() const override { return id_; }

 private:
  std::vector<std::string> command_;
  int timeout_ms_;
  std::string id_;
};

class HttpAdapter final : public Adapter {
 public:
  HttpAdapter(const AdapterSpec& spec, std::shared_ptr<HttpTransport> transport)
      : url_(spec.url), prompt_(spec.prompt), timeout_ms_(spec.timeout_ms), id_(spec.model_id),
        transport_(std::move(transport)) {
    if (const char* v = std::getenv(spec.credential_env.c_str()); v && *v) token_ = v;
  }

  std::string transcribe(const SampleRecord&, const fs::path& image) override {
    const std::string bytes = read_file(image);
    json body{{"image", base64_encode({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()})}};
    if (!prompt_.empty()) body["prompt"] = prompt_;
    HttpHeaders headers;
    if (!token_.empty()) headers.emplace_back("Authorization", "Bearer " + token_);
    const auto start = Clk::now();
    const HttpResponse res = transport_->post(url_, headers, body.dump(), "application/json", timeout_ms_);
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(Clk::now() - start).count();
    if (res.status == 0) {
      if (elapsed >= timeout_ms_ * 9 / 10) throw Error(Errc::kTimeout, "no answer within " + std::to_string(timeout_ms_) + " ms");
      throw Error(Errc::kAdapterUnavailable, scrub(url_ + ": " + res.error));
    }
    if (res.status != 200)
      throw Error(Errc::kAdapterFailure, scrub("HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 300)));
    const json reply = json::parse(res.body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
      throw Error(Errc::kAdapterFailure, "reply is not {\"text\": string}");
    return reply["text"].get<std::string>();
  }
  std::string model_id() const override { return id_; }

 private:
  std::string scrub(std::string s) const {
    if (token_.empty()) return s;
    for (std::size_t pos; (pos = s.find(token_)) != std::string::npos;) s.replace(pos, token_.size(), "[redacted]");
    return s;
  }

  std::string url_, prompt_;
  int timeout_ms_;
  std::string id_;
  std::string token_;
  std::shared_ptr<HttpTransport> transport_;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> kExt{".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp", ".webp"};
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kExt.contains(ext);
}

}  // namespace

// ---- spec -------------------------------------------------------------

AdapterSpec parse_adapter_spec(std::string_view text) {
  AdapterSpec s;
  s.source = std::string(text);
  const auto colon = text.find(':');
  const std::string kind(text.substr(0, colon));
  const std::string rest = colon == std::string_view::npos ? "" : std::string(text.substr(colon + 1));
  if (kind == "echo" || kind == "echo_oracle") {
    if (!rest.empty()) throw Error(Errc::kUsage, "echo takes no arguments");
    s.kind = AdapterSpec::Kind::kEcho;
    s.model_id = "echo_oracle";
  } else if (kind == "noisy" || kind == "noisy_oracle") {
    s.kind = AdapterSpec::Kind::kNoisy;
    std::vector<std::string> positional;
    bool have_p = false;
    std::stringstream in(rest);
    for (std::string part; std::getline(in, part, ',');) {
      if (const auto eq = part.find('='); eq != std::string::npos) {
        const std::string k = part.substr(0, eq), v = part.substr(eq + 1);
        if (k == "p") s.p = parse_probability(v), have_p = true;
        else if (k == "seed") s.seed = parse_seed(v);
        else throw Error(Errc::kUsage, "noisy: unknown key '" + k + "'");
      } else {
        positional.push_back(part);
      }
    }
    if (positional.size() > 2) throw Error(Errc::kUsage, "noisy: too many arguments");
    if (!positional.empty()) s.p = parse_probability(positional[0]), have_p = true;
    if (positional.size() == 2) s.seed = parse_seed(positional[1]);
    if (!have_p) throw Error(Errc::kUsage, "noisy: p is required, e.g. noisy:0.1,7");
    s.model_id = "noisy_oracle(p=" + format_double(s.p, "%g") + ",seed=" + std::to_string(s.seed) + ")";
  } else if (kind == "subprocess") {
    s.kind = AdapterSpec::Kind::kSubprocess;
    s.command = split_command(rest);
    if (s.command.empty()) throw Error(Errc::kUsage, "subprocess: empty command");
    s.model_id = fs::path(s.command[0]).filename().string();
  } else if (kind == "http" || kind == "https") {
    s.kind = AdapterSpec::Kind::kHttp;
    s.url = rest.starts_with("http://") || rest.starts_with("https://") ? rest : std::string(text);
    if (s.url.find("://") == std::string::npos || s.url.size() <= s.url.find("://") + 3)
      throw Error(Errc::kUsage, "http: expected a URL, e.g. http:http://localhost:8080/ocr");
    s.model_id = s.url;
  } else {
    throw Error(Errc::kUsage, "unknown adapter '" + kind + "' (echo, noisy, subprocess, http)");
  }
  return s;
}

void to_json(json& j, const AdapterSpec& s) {
  static const char* kKinds[] = {"echo_oracle", "noisy_oracle", "subprocess", "http_endpoint"};
  j = json{{"kind", kKinds[static_cast<int>(s.kind)]}, {"spec", s.source}, {"timeout_ms", s.timeout_ms}};
  if (s.kind == AdapterSpec::Kind::kNoisy) j["p"] = s.p, j["seed"] = s.seed;
  if (s.kind == AdapterSpec::Kind::kSubprocess) j["command"] = s.command;
  if (s.kind == AdapterSpec::Kind::kHttp) {
    j["url"] = s.url;
    if (!s.prompt.empty()) j["prompt"] = s.prompt;
  }
}

namespace {

class Described final : public Adapter {
 public:
  Described(std::unique_ptr<Adapter> inner, json desc) : inner_(std::move(inner)), desc_(std::move(desc)) {}
  std::string transcribe(const SampleRecord& r, const fs::path& image) override { return inner_->transcribe(r, image); }
  std::string model_id() const override { return inner_->model_id(); }
  json describe() const override { return desc_; }

 private:
  std::unique_ptr<Adapter> inner_;
  json desc_;
};

std::unique_ptr<Adapter> build(const AdapterSpec& spec, std::shared_ptr<HttpTransport> transport) {
  switch (spec.kind) {
    case AdapterSpec::Kind::kEcho: return std::make_unique<EchoAdapter>(spec.model_id);
    case AdapterSpec::Kind::kNoisy: return std::make_unique<NoisyAdapter>(spec.p, spec.seed, spec.model_id);
    case AdapterSpec::Kind::kSubprocess:
      return std::make_unique<SubprocessAdapter>(spec.command, spec.timeout_ms, spec.model_id);
    case AdapterSpec::Kind::kHttp: return std::make_unique<HttpAdapter>(spec, std::move(transport));
  }
  throw Error(Errc::kUsage, "unknown adapter kind");
}

}  // namespace

std::unique_ptr<Adapter> make_adapter(const AdapterSpec& spec, std::shared_ptr<HttpTransport> transport) {
  if (spec.timeout_ms <= 0) throw Error(Errc::kUsage, "adapter timeout must be positive");
  json desc = spec;
  desc["model_id"] = spec.model_id;
  return std::make_unique<Described>(build(spec, std::move(transport)), std::move(desc));
}

std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string corrupt(std::string_view text, double p, std::uint64_t seed, std::string_view sample_id) {
  SplitMix rng(derive_seed(seed, fnv1a64(sample_id)));
  std::u32string cps = unicode::decode(text);
  std::u32string pool;
  for (char32_t& c : cps) {
    if (unicode::is_space(c)) continue;
    if (rng.uniform() >= p) continue;
    pool.clear();
    for (char32_t a : kNoiseAlphabet)
      if (a != c) pool.push_back(a);
    c = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
  }
  return unicode::encode(cps);
}

// ---- reports ----------------------------------------------------------

void to_json(json& j, const BenchReport& r) {
  json excluded = json::array();
  for (const auto& e : r.excluded) excluded.push_back({{"sample_id", e.sample_id}, {"reason", e.reason}, {"message", e.message}});
  j = json{{"benchmark_id", r.benchmark_id},
           {"manifest_digest", r.manifest_digest},
           {"model_id", r.model_id},
           {"adapter", r.adapter},
           {"normalization", r.norm},
           {"cards", r.cards},
           {"aggregate", r.aggregate},
           {"excluded", excluded},
           {"n_samples", r.n_samples},
           {"n_scored", r.cards.size()},
           {"n_excluded", r.excluded.size()},
           {"generator", r.generator}};
}

void from_json(const json& j, BenchReport& r) {
  r.benchmark_id = j.at("benchmark_id").get<std::string>();
  r.manifest_digest = j.at("manifest_digest").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.adapter = j.at("adapter");
  r.norm = j.at("normalization").get<NormalizationConfig>();
  r.cards = j.at("cards").get<std::vector<ScoreCard>>();
  r.aggregate = j.at("aggregate").get<AggregateScore>();
  r.excluded.clear();
  for (const auto& e : j.at("excluded"))
    r.excluded.push_back({e.at("sample_id").get<std::string>(), e.at("reason").get<std::string>(),
                          e.at("message").get<std::string>()});
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.generator = j.value("generator", json::object());
}

void to_json(json& j, const Timing& t) {
  j = json{{"total_ms", t.total_ms}, {"mean_ms", t.mean_ms}, {"p50_ms", t.p50_ms}, {"p95_ms", t.p95_ms},
           {"max_ms", t.max_ms}};
}

RunResult run_benchmark(const Manifest& m, Adapter& adapter, const NormalizationConfig& norm, const RunOptions& opts) {
  if (const auto problems = norm.validate(); !problems.empty())
    throw Error(Errc::kConfig, "normalization: " + problems.front());
  if (opts.verify) {
    const auto diags = verify(m);
    if (!diags.empty()) {
      std::string msg = "manifest failed verification: " + diags.front().kind + " " + diags.front().message;
      if (diags.size() > 1) msg += " (and " + std::to_string(diags.size() - 1) + " more)";
      throw Error(Errc::kUsage, msg);
    }
  }
  std::vector<const SampleRecord*> records;
  for (const auto& r : m.records) {
    if (m.split_assignments.empty()) records.push_back(&r);
    else if (auto it = m.split_assignments.find(r.sample_id); it != m.split_assignments.end() && it->second == Split::kBench)
      records.push_back(&r);
  }
  if (records.empty()) throw Error(Errc::kUsage, "manifest has no bench records");

  const std::size_t n = records.size();
  std::vector<std::optional<ScoreCard>> cards(n);
  std::vector<std::optional<Exclusion>> excluded(n);
  std::vector<double> ms(n, 0.0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  const int max_retries = std::max(opts.max_retries, 0);

  auto work = [&] {
    for (std::size_t i; !stop && (i = next++) < n;) {
      const SampleRecord& r = *records[i];
      try {
        score(r.sample_id, r.ground_truth, "", norm);
      } catch (const Error& e) {
        if (e.code() != Errc::kEmptyReference) throw;
        excluded[i] = Exclusion{r.sample_id, "empty_reference", "ground truth is empty after normalization"};
        continue;
      }
      const auto t0 = Clk::now();
      for (int attempt = 0;; ++attempt) {
        try {
          const std::string hyp = adapter.transcribe(r, m.image_file(r));
          cards[i] = score(r.sample_id, r.ground_truth, hyp, norm);
          break;
        } catch (const Error& e) {
          if (e.code() == Errc::kAdapterUnavailable) {
            std::lock_guard lock(fatal_mu);
            if (!fatal) fatal = std::current_exception();
            stop = true;
            break;
          }
          if (attempt < max_retries) continue;
          excluded[i] = Exclusion{r.sample_id, e.code() == Errc::kTimeout ? "timeout" : "adapter_failure", e.what()};
          break;
        } catch (const std::exception& e) {
          if (attempt < max_retries) continue;
          excluded[i] = Exclusion{r.sample_id, "adapter_failure", e.what()};
          break;
        }
      }
      ms[i] = std::chrono::duration<double, std::milli>(Clk::now() - t0).count();
    }
  };

  const auto start = Clk::now();
  const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(opts.concurrency, 1)), 1, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        work();
      } catch (...) {
        errors[t] = std::current_exception();
        stop = true;
      }
    });
  for (auto& t : pool) t.join();
  if (fatal) std::rethrow_exception(fatal);
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  RunResult out;
  BenchReport& rep = out.report;
  rep.benchmark_id = opts.benchmark_id;
  if (rep.benchmark_id.empty()) {
    fs::path root = m.root;
    if (root.filename().empty()) root = root.parent_path();
    rep.benchmark_id = root.filename().string();
  }
  rep.manifest_digest = manifest_digest(m);
  rep.model_id = adapter.model_id();
  rep.adapter = adapter.describe();
  rep.norm = norm;
  rep.n_samples = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (cards[i]) rep.cards.push_back(std::move(*cards[i]));
    if (excluded[i]) rep.excluded.push_back(std::move(*excluded[i]));
  }
  if (rep.cards.empty()) throw Error(Errc::kEmptyRun, "every sample was excluded");
  rep.aggregate = aggregate(rep.cards);
  rep.generator = {{"tool", "qalam bench run"}, {"version", QALAM_VERSION}};

  Timing& t = out.timing;
  t.total_ms = std::chrono::duration<double, std::milli>(Clk::now() - start).count();
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0;
  for (double v : sorted) sum += v;
  t.mean_ms = sum / static_cast<double>(n);
  t.p50_ms = sorted[(n - 1) / 2];
  t.p95_ms = sorted[std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1)];
  t.max_ms = sorted.back();
  return out;
}

// ---- leaderboards -----------------------------------------------------

Leaderboard compare(const std::vector<BenchReport>& reports) {
  if (reports.empty()) throw Error(Errc::kEmptyRun, "no reports to compare");
  const BenchReport& first = reports.front();
  for (const auto& r : reports) {
    if (r.manifest_digest != first.manifest_digest)
      throw Error(Errc::kMismatchedBenchmark, "'" + r.model_id + "' was run on manifest " + r.manifest_digest.substr(0, 12) +
                                                  ", '" + first.model_id + "' on " + first.manifest_digest.substr(0, 12));
    if (!(r.norm == first.norm))
      throw Error(Errc::kMismatchedBenchmark, "'" + r.model_id + "' used a different normalization config");
  }
  Leaderboard lb;
  lb.benchmark_id = first.benchmark_id;
  lb.manifest_digest = first.manifest_digest;
  lb.norm = first.norm;
  for (const auto& r : reports) lb.rows.push_back({0, r.model_id, r.aggregate, r.excluded.size()});
  std::stable_sort(lb.rows.begin(), lb.rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
    return std::tie(a.aggregate.micro_cer, a.aggregate.micro_wer, a.model_id) <
           std::tie(b.aggregate.micro_cer, b.aggregate.micro_wer, b.model_id);
  });
  for (std::size_t i = 0; i < lb.rows.size(); ++i) lb.rows[i].rank = i + 1;
  return lb;
}

std::string to_csv(const Leaderboard& lb) {
  std::string out = "rank,model_id,micro_cer,micro_wer,macro_cer,macro_wer,n_samples,n_excluded\n";
  for (const auto& r : lb.rows) {
    out += std::to_string(r.rank) + "," + csv_field(r.model_id) + "," + format_double(r.aggregate.micro_cer) + "," +
           format_double(r.aggregate.micro_wer) + "," + format_double(r.aggregate.macro_cer) + "," +
           format_double(r.aggregate.macro_wer) + "," + std::to_string(r.aggregate.n_samples) + "," +
           std::to_string(r.n_excluded) + "\n";
  }
  return out;
}

std::string to_markdown(const Leaderboard& lb) {
  std::string out = "# " + lb.benchmark_id + "\n\nManifest `" + lb.manifest_digest.substr(0, 16) +
                    "`. Sorted by micro CER, lower is better.\n\n"
                    "| Rank | Model | micro CER | micro WER | macro CER | macro WER | Scored | Excluded |\n"
                    "|---:|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : lb.rows) {
    std::string model = r.model_id;
    for (std::size_t pos = 0; (pos = model.find('|', pos)) != std::string::npos; pos += 2) model.replace(pos, 1, "\\|");
    out += "| " + std::to_string(r.rank) + " | " + model + " | " + format_double(r.aggregate.micro_cer, "%.4f") + " | " +
           format_double(r.aggregate.micro_wer, "%.4f") + " | " + format_double(r.aggregate.macro_cer, "%.4f") + " | " +
           format_double(r.aggregate.macro_wer, "%.4f") + " | " + std::to_string(r.aggregate.n_samples) + " | " +
           std::to_string(r.n_excluded) + " |\n";
  }
  return out;
}

json to_json(const Leaderboard& lb) {
  json rows = json::array();
  for (const auto& r : lb.rows)
    rows.push_back({{"rank", r.rank}, {"model_id", r.model_id}, {"aggregate", r.aggregate}, {"n_excluded", r.n_excluded}});
  return {{"benchmark_id", lb.benchmark_id}, {"manifest_digest", lb.manifest_digest}, {"normalization", lb.norm}, {"rows", rows}};
}

json plot_description(const Leaderboard& lb) {
  json labels = json::array(), cer = json::array(), wer = json::array();
  for (const auto& r : lb.rows) {
    labels.push_back(r.model_id);
    cer.push_back(r.aggregate.micro_cer);
    wer.push_back(r.aggregate.micro_wer);
  }
  return {{"type", "bar"},
          {"title", lb.benchmark_id + ": micro CER (lower is better)"},
          {"y_label", "error rate"},
          {"labels", labels},
          {"values", cer},
          {"series", "micro CER"},
          {"secondary", {{"series", "micro WER"}, {"values", wer}}}};
}

std::string render_svg(const json& plot) {
  const auto labels = plot.at("labels").get<std::vector<std::string>>();
  const auto values = plot.at("values").get<std::vector<double>>();
  std::vector<double> second;
  std::string second_name;
  if (plot.contains("secondary")) {
    second = plot["secondary"].at("values").get<std::vector<double>>();
    second_name = plot["secondary"].value("series", "");
  }
  const std::size_t n = labels.size();
  const double group = 140, left = 70, top = 50, height = 260;
  const double width = left + group * static_cast<double>(std::max<std::size_t>(n, 1)) + 30;
  double vmax = 0;
  for (double v : values) vmax = std::max(vmax, v);
  for (double v : second) vmax = std::max(vmax, v);
  double scale_max = vmax <= 0 ? 1.0 : std::pow(10.0, std::ceil(std::log10(vmax)));
  while (scale_max / 2 >= vmax && vmax > 0) scale_max /= 2;

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_double(width, "%.0f") + "\" height=\"" +
                  format_double(top + height + 90, "%.0f") + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + format_double(width / 2, "%.1f") + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
       xml_escape(plot.value("title", "")) + "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = scale_max * k / 4, y = top + height - height * k / 4;
    s += "<line x1=\"" + format_double(left, "%.1f") + "\" x2=\"" + format_double(width - 20, "%.1f") + "\" y1=\"" +
         format_double(y, "%.1f") + "\" y2=\"" + format_double(y, "%.1f") + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + format_double(left - 6, "%.1f") + "\" y=\"" + format_double(y + 4, "%.1f") +
         "\" text-anchor=\"end\">" + format_double(v, "%.3g") + "</text>\n";
  }
  s += "<text transform=\"rotate(-90)\" x=\"" + format_double(-(top + height / 2), "%.1f") +
       "\" y=\"16\" text-anchor=\"middle\">" + xml_escape(plot.value("y_label", "")) + "</text>\n";
  const double bar = second.empty() ? 70 : 45;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = left + group * static_cast<double>(i) + (group - bar * (second.empty() ? 1 : 2)) / 2;
    auto draw = [&](double x, double v, const char* fill) {
      const double h = height * v / scale_max;
      s += "<rect x=\"" + format_double(x, "%.1f") + "\" y=\"" + format_double(top + height - h, "%.1f") + "\" width=\"" +
           format_double(bar, "%.1f") + "\" height=\"" + format_double(h, "%.1f") + "\" fill=\"" + fill + "\"/>\n";
      s += "<text x=\"" + format_double(x + bar / 2, "%.1f") + "\" y=\"" + format_double(top + height - h - 4, "%.1f") +
           "\" text-anchor=\"middle\" font-size=\"10\">" + format_double(v, "%.4f") + "</text>\n";
    };
    draw(x0, values[i], "#3b6ea8");
    if (i < second.size()) draw(x0 + bar, second[i], "#e0a030");
    s += "<text x=\"" + format_double(left + group * (static_cast<double>(i) + 0.5), "%.1f") + "\" y=\"" +
         format_double(top + height + 18, "%.1f") + "\" text-anchor=\"middle\">" + xml_escape(labels[i]) + "</text>\n";
  }
  const double ly = top + height + 50;
  s += "<rect x=\"" + format_double(left, "%.1f") + "\" y=\"" + format_double(ly - 10, "%.1f") +
       "\" width=\"12\" height=\"12\" fill=\"#3b6ea8\"/><text x=\"" + format_double(left + 18, "%.1f") + "\" y=\"" +
       format_double(ly, "%.1f") + "\">" + xml_escape(plot.value("series", "")) + "</text>\n";
  if (!second.empty())
    s += "<rect x=\"" + format_double(left + 120, "%.1f") + "\" y=\"" + format_double(ly - 10, "%.1f") +
         "\" width=\"12\" height=\"12\" fill=\"#e0a030\"/><text x=\"" + format_double(left + 138, "%.1f") + "\" y=\"" +
         format_double(ly, "%.1f") + "\">" + xml_escape(second_name) + "</text>\n";
  s += "</svg>\n";
  return s;
}

// ---- import -----------------------------------------------------------

ImportFormat parse_import_format(std::string_view name) {
  if (name == "images+txt") return ImportFormat::kImagesTxt;
  if (name == "images+jsonl") return ImportFormat::kImagesJsonl;
  throw Error(Errc::kUsage, "unknown import format '" + std::string(name) + "' (images+txt, images+jsonl)");
}

Manifest import_external(const fs::path& dir, ImportFormat format) {
  if (!fs::is_directory(dir)) throw Error(Errc::kLayout, dir.string() + ": not a directory");
  std::vector<fs::path> images, jsonls;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (is_image_file(e.path())) images.push_back(e.path());
    else if (e.path().extension() == ".jsonl") jsonls.push_back(e.path());
  }
  std::sort(images.begin(), images.end());
  if (images.empty()) throw Error(Errc::kLayout, dir.string() + ": no images");

  std::optional<fs::path> table;
  if (format == ImportFormat::kImagesTxt) {
    for (const auto& img : images) {
      const fs::path txt = fs::path(img).replace_extension(".txt");
      if (!fs::exists(txt)) throw Error(Errc::kLayout, "missing transcript for '" + img.stem().string() + "': " + txt.string());
    }
  } else {
    if (jsonls.size() != 1)
      throw Error(Errc::kLayout, dir.string() + ": expected exactly one .jsonl, found " + std::to_string(jsonls.size()));
    table = jsonls.front();
    std::istringstream in(read_file(*table));
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const json row = json::parse(line, nullptr, false);
      if (row.is_discarded() || !row.is_object() || !row.contains("image") || !row.contains("text") ||
          !row["image"].is_string() || !row["text"].is_string())
        throw Error(Errc::kLayout, table->string() + ":" + std::to_string(lineno) + ": expected {\"image\", \"text\"}");
      const fs::path img = dir / fs::path(row["image"].get<std::string>()).filename();
      if (!fs::exists(img)) throw Error(Errc::kLayout, "image listed but missing: " + img.string());
    }
  }

  IngestResult ingested = ingest_real(dir, Provenance::kExternal, table);
  if (!ingested.diagnostics.empty()) {
    const auto& d = ingested.diagnostics.front();
    throw Error(Errc::kLayout, d.kind + ": " + (dir / d.message.substr(0, d.message.find(':'))).string());
  }
  Manifest m = std::move(ingested.manifest);
  for (const auto& r : m.records) m.split_assignments[r.sample_id] = Split::kBench;
  m.stats = compute_stats(m);
  m.generator = {{"tool", "qalam bench import"},
                 {"version", QALAM_VERSION},
                 {"format", format == ImportFormat::kImagesTxt ? "images+txt" : "images+jsonl"}};
  return m;
}

}  // namespace qalam::bench
