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

// HTTP+JSON front end for a review project. See docs/review_api.md.

#include <filesystem>
#include <memory>
#include <string>

#include "qalam/review.hpp"

namespace qalam::review {

struct ServerOptions {
  /// When set, /api/ requests need "Authorization: Bearer <token>".
  std::string token;
  /// Served at / when set (the review UI build).
  std::filesystem::path static_dir;
  /// POST /api/export writes here; defaults to <project>/exports.
  std::filesystem::path export_dir;
};

class Server {
 public:
  Server(Project& project, ServerOptions opts = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws Error(kIo).
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();
  void wait_until_ready();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qalam::review
