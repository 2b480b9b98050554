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

#include "qalam/review.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <ctime>
#include <set>

#include <fcntl.h>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include "qalam/errors.hpp"
#include "qalam/io.hpp"

namespace qalam::review {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  ::gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<std::string>();
}

json nullable(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

void write_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    const ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(Errc::kIo, "log write failed");
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string fmt_task_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "t%06zu", i + 1);
  return buf;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::string_view to_string(Status s) noexcept {
  switch (s) {
    case Status::kPending: return "pending";
    case Status::kInReview: return "in_review";
    case Status::kCorrected: return "corrected";
    case Status::kApproved: return "approved";
    case Status::kRejected: return "rejected";
  }
  return "pending";
}

Status parse_status(std::string_view name) {
  for (Status s : {Status::kPending, Status::kInReview, Status::kCorrected, Status::kApproved, Status::kRejected})
    if (to_string(s) == name) return s;
  throw Error(Errc::kIo, "unknown task status '" + std::string(name) + "'");
}

void to_json(json& j, const Task& t) {
  j = json{{"task_id", t.task_id},
           {"sample_id", t.sample_id},
           {"image", t.image_path},
           {"pseudo_label", t.pseudo_label},
           {"status", to_string(t.status)},
           {"correction", nullable(t.correction)},
           {"reviewer", nullable(t.reviewer)},
           {"reject_reason", nullable(t.reject_reason)},
           {"updated_at", t.updated_at},
           {"queued_at", t.queued_at}};
}

void from_json(const json& j, Task& t) {
  t.task_id = j.at("task_id").get<std::string>();
  t.sample_id = j.at("sample_id").get<std::string>();
  t.image_path = j.at("image").get<std::string>();
  t.pseudo_label = j.at("pseudo_label").get<std::string>();
  t.status = parse_status(j.at("status").get<std::string>());
  t.correction = optional_string(j, "correction");
  t.reviewer = optional_string(j, "reviewer");
  t.reject_reason = optional_string(j, "reject_reason");
  t.updated_at = j.at("updated_at").get<std::string>();
  t.queued_at = j.at("queued_at").get<std::uint64_t>();
}

void to_json(json& j, const LogEntry& e) {
  j = json{{"seq", e.seq}, {"task_id", e.task_id}, {"transition", e.transition}, {"payload", e.payload},
           {"timestamp", e.timestamp}};
}

void from_json(const json& j, LogEntry& e) {
  e.seq = j.at("seq").get<std::uint64_t>();
  e.task_id = j.at("task_id").get<std::string>();
  e.transition = j.at("transition").get<std::string>();
  e.payload = j.at("payload");
  e.timestamp = j.at("timestamp").get<std::string>();
}

void apply(std::vector<Task>& tasks, std::unordered_map<std::string, std::size_t>& index, const LogEntry& e) {
  if (e.transition == "create") {
    if (index.contains(e.task_id)) throw Error(Errc::kIo, "log creates " + e.task_id + " twice");
    Task t;
    t.task_id = e.task_id;
    t.sample_id = e.payload.at("sample_id").get<std::string>();
    t.image_path = e.payload.at("image").get<std::string>();
    t.pseudo_label = e.payload.at("pseudo_label").get<std::string>();
    t.updated_at = e.timestamp;
    t.queued_at = e.seq;
    index.emplace(t.task_id, tasks.size());
    tasks.push_back(std::move(t));
    return;
  }
  const auto it = index.find(e.task_id);
  if (it == index.end()) throw Error(Errc::kIo, "log refers to unknown task " + e.task_id);
  Task& t = tasks[it->second];
  t.updated_at = e.timestamp;
  if (e.transition == "claim") {
    t.status = Status::kInReview;
    t.reviewer = e.payload.at("reviewer").get<std::string>();
  } else if (e.transition == "approve") {
    t.status = Status::kApproved;
  } else if (e.transition == "correct") {
    t.status = Status::kCorrected;
    t.correction = e.payload.at("text").get<std::string>();
  } else if (e.transition == "reject") {
    t.status = Status::kRejected;
    t.reject_reason = e.payload.at("reason").get<std::string>();
  } else if (e.transition == "release") {
    t.status = Status::kPending;
    t.reviewer.reset();
    t.correction.reset();
    t.reject_reason.reset();
    t.queued_at = e.seq;
  } else {
    throw Error(Errc::kIo, "unknown transition '" + e.transition + "' in log");
  }
}

Project::Project(fs::path dir, Options opts) : dir_(std::move(dir)), opts_(std::move(opts)) {
  if (!opts_.now) opts_.now = utc_now;
}

Project::~Project() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

std::shared_ptr<const Project::State> Project::current() const { return std::atomic_load(&state_); }

void Project::publish(std::shared_ptr<const State> s) { std::atomic_store(&state_, std::move(s)); }

void Project::fault(FaultPoint p) const {
  if (opts_.fault) opts_.fault(p);
}

std::unique_ptr<Project> Project::create(const fs::path& dir, const std::vector<pseudolabel::PseudoLabel>& labels,
                                         const Manifest& m, Options opts) {
  std::unordered_map<std::string, const SampleRecord*> by_id;
  for (const auto& r : m.records) by_id.emplace(r.sample_id, &r);
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!by_id.contains(l.sample_id)) throw Error(Errc::kUnknownSampleId, "label for unknown sample '" + l.sample_id + "'");
    if (!seen.insert(l.sample_id).second) throw Error(Errc::kDuplicateSampleId, "two labels for '" + l.sample_id + "'");
  }
  if (fs::exists(dir / "log.jsonl")) throw Error(Errc::kOutputExists, (dir / "log.jsonl").string() + " exists");
  fs::create_directories(dir);
  write_manifest(m, dir / "manifest", true);

  std::unique_ptr<Project> p(new Project(dir, std::move(opts)));
  p->manifest_ = read_manifest(dir / "manifest");
  std::unordered_map<std::string, std::string> images;
  for (const auto& r : p->manifest_.records) images.emplace(r.sample_id, r.image_path);

  const std::string created = p->opts_.now();
  write_file_atomic(dir / "project.json",
                    json{{"schema_version", kSchemaVersion}, {"created_at", created}, {"tasks", labels.size()}}.dump(2) +
                        "\n");

  p->log_fd_ = ::open((dir / "log.jsonl").c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_APPEND | O_CLOEXEC, 0644);
  if (p->log_fd_ < 0) throw Error(Errc::kIo, "cannot create " + (dir / "log.jsonl").string());

  auto state = std::make_shared<State>();
  std::string body;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    LogEntry e;
    e.seq = i + 1;
    e.task_id = fmt_task_id(i);
    e.transition = "create";
    e.payload = {{"sample_id", labels[i].sample_id},
                 {"image", images.at(labels[i].sample_id)},
                 {"pseudo_label", labels[i].text}};
    e.timestamp = created;
    body += json(e).dump() + '\n';
    apply(state->tasks, state->index, e);
  }
  state->seq = labels.size();
  write_all(p->log_fd_, body);
  if (::fdatasync(p->log_fd_) != 0) throw Error(Errc::kIo, "fsync failed on log");
  fsync_directory(dir);
  p->publish(std::move(state));
  p->snapshot();
  return p;
}

std::unique_ptr<Project> Project::open(const fs::path& dir, Options opts) {
  if (!fs::exists(dir / "project.json")) throw Error(Errc::kIo, dir.string() + " is not a review project");
  const json meta = json::parse(read_file(dir / "project.json"));
  if (meta.at("schema_version").get<int>() > kSchemaVersion)
    throw Error(Errc::kSchemaVersion, "project schema " + meta.at("schema_version").dump() + " is newer than supported");

  std::unique_ptr<Project> p(new Project(dir, std::move(opts)));
  p->manifest_ = read_manifest(dir / "manifest");

  auto state = std::make_shared<State>();
  if (fs::exists(dir / "snapshot.json")) {
    const json snap = json::parse(read_file(dir / "snapshot.json"));
    state->seq = snap.at("seq").get<std::uint64_t>();
    state->tasks = snap.at("tasks").get<std::vector<Task>>();
    for (std::size_t i = 0; i < state->tasks.size(); ++i) state->index.emplace(state->tasks[i].task_id, i);
  }

  const std::uint64_t snapshot_seq = state->seq;
  const fs::path log = dir / "log.jsonl";
  const std::string bytes = read_file(log);
  std::size_t pos = 0, good = 0;
  std::uint64_t last = 0;
  while (pos < bytes.size()) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) break;  // torn tail
    LogEntry e;
    try {
      e = json::parse(std::string_view(bytes).substr(pos, nl - pos)).get<LogEntry>();
    } catch (const json::exception& ex) {
      throw Error(Errc::kIo, log.string() + ": corrupt entry at byte " + std::to_string(pos) + ": " + ex.what());
    }
    if (e.seq != last + 1) throw Error(Errc::kIo, log.string() + ": sequence gap after " + std::to_string(last));
    last = e.seq;
    if (e.seq > state->seq) {
      apply(state->tasks, state->index, e);
      state->seq = e.seq;
    }
    pos = good = nl + 1;
  }
  if (last < state->seq) throw Error(Errc::kIo, "snapshot is ahead of " + log.string());

  p->log_fd_ = ::open(log.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
  if (p->log_fd_ < 0) throw Error(Errc::kIo, "cannot open " + log.string());
  if (good < bytes.size()) {
    spdlog::warn("dropping {} bytes of torn log tail in {}", bytes.size() - good, log.string());
    if (::ftruncate(p->log_fd_, static_cast<off_t>(good)) != 0 || ::fdatasync(p->log_fd_) != 0)
      throw Error(Errc::kIo, "cannot truncate " + log.string());
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().filename().string().starts_with("snapshot.json.tmp.")) fs::remove(entry.path());
  }
  p->since_snapshot_ = last - snapshot_seq;
  p->publish(std::move(state));
  return p;
}

void Project::append(const LogEntry& e) {
  const std::string line = json(e).dump() + '\n';
  const off_t before = ::lseek(log_fd_, 0, SEEK_END);
  try {
    fault(FaultPoint::kBeforeAppend);
    if (opts_.fault) {
      write_all(log_fd_, std::string_view(line).substr(0, line.size() / 2));
      fault(FaultPoint::kTornAppend);
      write_all(log_fd_, std::string_view(line).substr(line.size() / 2));
    } else {
      write_all(log_fd_, line);
    }
    fault(FaultPoint::kAfterAppend);
    if (::fdatasync(log_fd_) != 0) throw Error(Errc::kIo, "fsync failed on log");
  } catch (const Error&) {
    if (before >= 0 && ::ftruncate(log_fd_, before) != 0) spdlog::error("cannot roll back log tail");
    throw;
  }
  fault(FaultPoint::kAfterSync);
}

Task Project::commit(const std::string& task_id, std::string transition, json payload) {
  const auto prev = current();
  LogEntry e;
  e.seq = prev->seq + 1;
  e.task_id = task_id;
  e.transition = std::move(transition);
  e.payload = std::move(payload);
  e.timestamp = opts_.now();
  append(e);
  auto next = std::make_shared<State>(*prev);
  apply(next->tasks, next->index, e);
  next->seq = e.seq;
  Task out = next->tasks[next->index.at(task_id)];
  publish(std::move(next));
  if (opts_.snapshot_every != 0 && ++since_snapshot_ >= opts_.snapshot_every) {
    try {
      snapshot();
    } catch (const Error& ex) {
      spdlog::warn("snapshot failed: {}", ex.what());
    }
  }
  return out;
}

void Project::snapshot() {
  const auto s = current();
  const json snap{{"schema_version", kSchemaVersion}, {"seq", s->seq}, {"tasks", s->tasks}};
  fault(FaultPoint::kBeforeSnapshot);
  write_file_atomic(dir_ / "snapshot.json", snap.dump() + "\n");
  since_snapshot_ = 0;
}

std::optional<Task> Project::claim_next(const std::string& reviewer) {
  if (reviewer.empty()) throw Error(Errc::kUsage, "reviewer must not be empty");
  std::lock_guard lock(writer_);
  const auto s = current();
  const Task* best = nullptr;
  for (const auto& t : s->tasks) {
    if (t.status == Status::kPending && (!best || t.queued_at < best->queued_at)) best = &t;
  }
  if (!best) return std::nullopt;
  return commit(best->task_id, "claim", {{"reviewer", reviewer}});
}

Task Project::submit(const std::string& task_id, const Submission& sub, const std::string& reviewer) {
  std::lock_guard lock(writer_);
  const auto s = current();
  const auto it = s->index.find(task_id);
  if (it == s->index.end()) throw Error(Errc::kUnknownTask, "no task '" + task_id + "'");
  const Task& t = s->tasks[it->second];
  if (t.status == Status::kApproved || t.status == Status::kRejected)
    throw Error(Errc::kIllegalTransition, task_id + " is already " + std::string(to_string(t.status)));
  if (t.status == Status::kPending || t.reviewer != reviewer)
    throw Error(Errc::kNotClaimedByYou, task_id + " is not in review by '" + reviewer + "'");
  switch (sub.action) {
    case Action::kApprove:
      return commit(task_id, "approve", {{"reviewer", reviewer}});
    case Action::kCorrect:
      if (t.status != Status::kInReview) throw Error(Errc::kIllegalTransition, task_id + " is already corrected");
      if (blank(sub.text)) throw Error(Errc::kEmptyCorrection, "empty correction for " + task_id + "; reject instead");
      return commit(task_id, "correct", {{"reviewer", reviewer}, {"text", sub.text}});
    case Action::kReject:
      if (t.status != Status::kInReview) throw Error(Errc::kIllegalTransition, task_id + " is already corrected");
      return commit(task_id, "reject", {{"reviewer", reviewer}, {"reason", sub.text}});
  }
  throw Error(Errc::kUsage, "unknown action");
}

Task Project::release(const std::string& task_id, const std::string& reviewer) {
  std::lock_guard lock(writer_);
  const auto s = current();
  const auto it = s->index.find(task_id);
  if (it == s->index.end()) throw Error(Errc::kUnknownTask, "no task '" + task_id + "'");
  const Task& t = s->tasks[it->second];
  if (t.status == Status::kPending) throw Error(Errc::kIllegalTransition, task_id + " is already pending");
  if (t.status == Status::kInReview && t.reviewer != reviewer)
    throw Error(Errc::kNotClaimedByYou, task_id + " is in review by someone else");
  return commit(task_id, "release", {{"reviewer", reviewer}});
}

std::vector<Task> Project::tasks() const { return current()->tasks; }

std::optional<Task> Project::task(const std::string& task_id) const {
  const auto s = current();
  const auto it = s->index.find(task_id);
  if (it == s->index.end()) return std::nullopt;
  return s->tasks[it->second];
}

Progress Project::progress() const {
  const auto s = current();
  Progress p;
  p.total = s->tasks.size();
  p.seq = s->seq;
  for (Status st : {Status::kPending, Status::kInReview, Status::kCorrected, Status::kApproved, Status::kRejected})
    p.by_status[std::string(to_string(st))] = 0;
  for (const auto& t : s->tasks) ++p.by_status[std::string(to_string(t.status))];
  return p;
}

std::uint64_t Project::last_seq() const { return current()->seq; }

ExportResult Project::export_benchmark(bool partial) const {
  const auto s = current();
  const Progress prog = progress();
  const std::size_t open = prog.by_status.at("pending") + prog.by_status.at("in_review");
  if (open != 0 && !partial)
    throw Error(Errc::kIncompleteProject, std::to_string(open) + " task(s) still pending or in review (use --partial)");

  std::unordered_map<std::string, const SampleRecord*> by_id;
  for (const auto& r : manifest_.records) by_id.emplace(r.sample_id, &r);

  ExportResult out;
  Manifest& m = out.manifest;
  m.root = manifest_.root;
  for (const auto& t : s->tasks) {
    if (t.status != Status::kApproved && t.status != Status::kCorrected) {
      ++out.excluded[std::string(to_string(t.status))];
      continue;
    }
    SampleRecord r = *by_id.at(t.sample_id);
    if (r.ground_truth != t.final_text()) r.word_boxes.clear();
    r.ground_truth = t.final_text();
    m.split_assignments[r.sample_id] = Split::kBench;
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) throw Error(Errc::kEmptyBench, "no approved or corrected tasks to export");
  m.stats = compute_stats(m);
  m.generator = {{"tool", "qalam review export"},
                 {"version", QALAM_VERSION},
                 {"partial", partial},
                 {"log_seq", s->seq},
                 {"excluded", out.excluded}};
  return out;
}

}  // namespace qalam::review
