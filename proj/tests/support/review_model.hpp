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

// Independent model of the review state machine, plus a seeded script of
// operations that mixes legal and illegal requests.

#include <sys/wait.h>
#include <unistd.h>

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qalam/errors.hpp"
#include "qalam/review.hpp"
#include "qalam/rng.hpp"

namespace qalam::testing {

struct ModelTask {
  std::string status = "pending";
  std::optional<std::string> reviewer, correction, reason;
  std::uint64_t queued = 0;
};

struct ReviewOp {
  enum Kind { kClaim, kSubmit, kRelease } kind = kClaim;
  std::string task_id;
  std::string reviewer;
  review::Submission submission;
  std::optional<Errc> expect_error;
};

class ReviewModel {
 public:
  explicit ReviewModel(std::size_t n) : tasks_(n) {
    for (std::size_t i = 0; i < n; ++i) tasks_[i].queued = i + 1;
    seq_ = n;
  }

  static std::string id(std::size_t i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "t%06zu", i + 1);
    return buf;
  }

  const std::vector<ModelTask>& tasks() const { return tasks_; }

  std::optional<std::size_t> held_by(const std::string& r, const std::string& status) const {
    for (std::size_t i = 0; i < tasks_.size(); ++i)
      if (tasks_[i].status == status && tasks_[i].reviewer == r) return i;
    return std::nullopt;
  }

  ReviewOp next(SplitMix& rng) const {
    static const char* kReviewers[] = {"amina", "youssef", "salma"};
    ReviewOp op;
    op.reviewer = kReviewers[rng.uniform_int(0, 2)];
    if (auto mine = held_by(op.reviewer, "in_review")) {
      op.task_id = id(*mine);
      if (rng.bernoulli(0.15)) {
        op.kind = ReviewOp::kSubmit;
        op.reviewer = op.reviewer == "amina" ? "salma" : "amina";
        op.expect_error = Errc::kNotClaimedByYou;
        return op;
      }
      switch (rng.uniform_int(0, 4)) {
        case 0: op.kind = ReviewOp::kRelease; break;
        case 1:
          op.kind = ReviewOp::kSubmit;
          op.submission = {review::Action::kCorrect, rng.bernoulli(0.2) ? "" : "تصحيح " + std::to_string(rng.next() % 97)};
          if (op.submission.text.empty()) op.expect_error = Errc::kEmptyCorrection;
          break;
        case 2: op.kind = ReviewOp::kSubmit; op.submission = {review::Action::kReject, "غير مقروء"}; break;
        default: op.kind = ReviewOp::kSubmit; op.submission = {review::Action::kApprove, ""}; break;
      }
      return op;
    }
    if (auto corrected = held_by(op.reviewer, "corrected"); corrected && rng.bernoulli(0.5)) {
      op.kind = ReviewOp::kSubmit;
      op.task_id = id(*corrected);
      op.submission = {review::Action::kApprove, ""};
      return op;
    }
    op.kind = ReviewOp::kClaim;
    return op;
  }

  /// Returns the claimed task id for a claim.
  std::optional<std::string> apply(const ReviewOp& op) {
    if (op.expect_error) return std::nullopt;
    ++seq_;
    if (op.kind == ReviewOp::kClaim) {
      std::optional<std::size_t> best;
      for (std::size_t i = 0; i < tasks_.size(); ++i)
        if (tasks_[i].status == "pending" && (!best || tasks_[i].queued < tasks_[*best].queued)) best = i;
      if (!best) {
        --seq_;
        return std::nullopt;
      }
      tasks_[*best].status = "in_review";
      tasks_[*best].reviewer = op.reviewer;
      return id(*best);
    }
    ModelTask& t = tasks_[std::stoul(op.task_id.substr(1)) - 1];
    if (op.kind == ReviewOp::kRelease) {
      t = ModelTask{};
      t.queued = seq_;
      return std::nullopt;
    }
    switch (op.submission.action) {
      case review::Action::kApprove: t.status = "approved"; break;
      case review::Action::kCorrect: t.status = "corrected"; t.correction = op.submission.text; break;
      case review::Action::kReject: t.status = "rejected"; t.reason = op.submission.text; break;
    }
    return std::nullopt;
  }

  /// Empty when `tasks` matches the model; otherwise a description.
  std::string diff(const std::vector<review::Task>& tasks) const {
    if (tasks.size() != tasks_.size()) return "task count " + std::to_string(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const auto& a = tasks[i];
      const auto& b = tasks_[i];
      if (a.task_id != id(i) || std::string(review::to_string(a.status)) != b.status || a.reviewer != b.reviewer ||
          a.correction != b.correction || a.reject_reason != b.reason || a.queued_at != b.queued)
        return a.task_id + " is " + std::string(review::to_string(a.status)) + ", model says " + b.status;
    }
    return {};
  }

 private:
  std::vector<ModelTask> tasks_;
  std::uint64_t seq_ = 0;
};

/// Runs `op` against a project; returns the error code if it threw.
inline std::optional<Errc> run_op(review::Project& p, const ReviewOp& op) {
  try {
    switch (op.kind) {
      case ReviewOp::kClaim: p.claim_next(op.reviewer); break;
      case ReviewOp::kSubmit: p.submit(op.task_id, op.submission, op.reviewer); break;
      case ReviewOp::kRelease: p.release(op.task_id, op.reviewer); break;
    }
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// Runs `op` in a forked child that is killed at `point` (or right after
// the operation when `point` is empty). Returns true if the child died by
// SIGKILL, i.e. it reached the kill.
inline bool run_in_killed_child(const std::filesystem::path& dir, const ReviewOp& op,
                                std::optional<review::FaultPoint> point, review::Options o) {
  const pid_t pid = ::fork();
  if (pid == 0) {
    if (point) o.fault = [pt = *point](review::FaultPoint p) {
      if (p == pt) ::raise(SIGKILL);
    };
    auto p = review::Project::open(dir, o);
    if (run_op(*p, op) != op.expect_error) ::_exit(3);
    ::raise(SIGKILL);
    ::_exit(4);
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  return WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL;
}

}  // namespace qalam::testing
