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

// Review projects: pseudo-labelled tasks moving through a small state
// machine, persisted as an append-only JSONL event log plus snapshots.
//
// Project directory layout:
//   project.json        schema version, creation time, task count
//   manifest/           copy of the source manifest (images stay in place)
//   log.jsonl           one event per line, fsynced before acknowledgement
//   snapshot.json       task states as of some log sequence number

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "qalam/manifest.hpp"
#include "qalam/pseudolabel.hpp"

namespace qalam::review {

enum class Status { kPending, kInReview, kCorrected, kApproved, kRejected };

std::string_view to_string(Status s) noexcept;
Status parse_status(std::string_view name);

struct Task {
  std::string task_id;
  std::string sample_id;
  std::string image_path;  // relative to the project manifest root
  std::string pseudo_label;
  Status status = Status::kPending;
  std::optional<std::string> correction;
  std::optional<std::string> reviewer;
  std::optional<std::string> reject_reason;
  std::string updated_at;
  std::uint64_t queued_at = 0;  // sequence number of the last move to pending

  /// Correction if present, else the pseudo-label.
  const std::string& final_text() const { return correction ? *correction : pseudo_label; }
  bool operator==(const Task&) const = default;
};

void to_json(nlohmann::json& j, const Task& t);
void from_json(const nlohmann::json& j, Task& t);

struct LogEntry {
  std::uint64_t seq = 0;
  std::string task_id;
  std::string transition;  // create | claim | approve | correct | reject | release
  nlohmann::json payload = nlohmann::json::object();
  std::string timestamp;
};

void to_json(nlohmann::json& j, const LogEntry& e);
void from_json(const nlohmann::json& j, LogEntry& e);

enum class Action { kApprove, kCorrect, kReject };

struct Submission {
  Action action = Action::kApprove;
  std::string text;  // correction text, or the reject reason
};

struct Progress {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_status;
  std::uint64_t seq = 0;
};

enum class FaultPoint { kBeforeAppend, kTornAppend, kAfterAppend, kAfterSync, kBeforeSnapshot };

struct Options {
  /// Snapshot after this many log entries; 0 disables periodic snapshots.
  std::size_t snapshot_every = 256;
  /// ISO-8601 UTC timestamps by default.
  std::function<std::string()> now;
  /// Test hook called at each fault point of a mutation.
  std::function<void(FaultPoint)> fault;
};

struct ExportResult {
  Manifest manifest;
  std::map<std::string, std::size_t> excluded;  // status -> count
};

class Project {
 public:
  /// One pending task per label. Throws Error(kUnknownSampleId) for a label
  /// whose sample is not in `m`, Error(kDuplicateSampleId) for two labels
  /// of one sample and Error(kOutputExists) if `dir` already holds a log.
  static std::unique_ptr<Project> create(const std::filesystem::path& dir,
                                         const std::vector<pseudolabel::PseudoLabel>& labels,
                                         const Manifest& m, Options opts = {});
  /// Loads the latest snapshot and replays the log after it. A torn final
  /// line is truncated; corruption elsewhere throws Error(kIo).
  static std::unique_ptr<Project> open(const std::filesystem::path& dir, Options opts = {});

  Project(const Project&) = delete;
  Project& operator=(const Project&) = delete;
  ~Project();

  /// Moves the longest-waiting pending task to in_review for `reviewer`.
  std::optional<Task> claim_next(const std::string& reviewer);
  /// Errors: kUnknownTask, kNotClaimedByYou, kIllegalTransition,
  /// kEmptyCorrection.
  Task submit(const std::string& task_id, const Submission& s, const std::string& reviewer);
  /// Back to pending, dropping reviewer and correction. An in_review task
  /// can only be released by its reviewer.
  Task release(const std::string& task_id, const std::string& reviewer);

  std::vector<Task> tasks() const;
  std::optional<Task> task(const std::string& task_id) const;
  Progress progress() const;
  std::uint64_t last_seq() const;
  const Manifest& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

  /// Approved and corrected tasks as a bench-split manifest with final
  /// texts as ground truth. Throws Error(kIncompleteProject) while tasks
  /// are pending or in review unless `partial`, and Error(kEmptyBench)
  /// when nothing qualifies.
  ExportResult export_benchmark(bool partial) const;

  void snapshot();

 private:
  struct State {
    std::vector<Task> tasks;
    std::unordered_map<std::string, std::size_t> index;
    std::uint64_t seq = 0;
  };

  Project(std::filesystem::path dir, Options opts);
  std::shared_ptr<const State> current() const;
  void publish(std::shared_ptr<const State> s);
  Task commit(const std::string& task_id, std::string transition, nlohmann::json payload);
  void append(const LogEntry& e);
  void fault(FaultPoint p) const;

  std::filesystem::path dir_;
  Options opts_;
  Manifest manifest_;
  std::mutex writer_;
  int log_fd_ = -1;
  std::size_t since_snapshot_ = 0;
  std::shared_ptr<const State> state_;
};

/// Applies one event to `tasks`; shared by live mutations and replay.
void apply(std::vector<Task>& tasks, std::unordered_map<std::string, std::size_t>& index, const LogEntry& e);

}  // namespace qalam::review
