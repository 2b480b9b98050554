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

#include "qalam/review_server.hpp"

#include <httplib.h>
#include <openssl/crypto.h>
#include <spdlog/spdlog.h>

#include "qalam/errors.hpp"
#include "qalam/io.hpp"

namespace qalam::review {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int http_status(Errc c) {
  switch (c) {
    case Errc::kUnknownTask:
    case Errc::kUnknownSampleId: return 404;
    case Errc::kNotClaimedByYou:
    case Errc::kIllegalTransition:
    case Errc::kIncompleteProject:
    case Errc::kEmptyBench: return 409;
    case Errc::kEmptyCorrection: return 422;
    case Errc::kUsage: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, std::string_view name, const std::string& message) {
  send_json(res, {{"error", name}, {"message", message}}, status);
}

json task_json(const Task& t) {
  json j = t;
  j["image_url"] = "/api/images/" + httplib::detail::encode_url(t.sample_id);
  return j;
}

std::string mime_for(const fs::path& p) {
  std::string ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  if (ext == ".bmp") return "image/bmp";
  return "application/octet-stream";
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::kUsage, "request body must be a JSON object");
  return j;
}

std::string string_field(const json& j, const char* key, bool required) {
  if (!j.contains(key)) {
    if (required) throw Error(Errc::kUsage, std::string("missing field '") + key + "'");
    return {};
  }
  if (!j[key].is_string()) throw Error(Errc::kUsage, std::string("field '") + key + "' must be a string");
  return j[key].get<std::string>();
}

}  // namespace

struct Server::Impl {
  Project& project;
  ServerOptions opts;
  httplib::Server http;

  Impl(Project& p, ServerOptions o) : project(p), opts(std::move(o)) {
    if (opts.export_dir.empty()) opts.export_dir = project.dir() / "exports";
    routes();
  }

  bool authorized(const httplib::Request& req) const {
    if (opts.token.empty()) return true;
    const std::string expected = "Bearer " + opts.token;
    const std::string got = req.get_header_value("Authorization");
    return got.size() == expected.size() && CRYPTO_memcmp(got.data(), expected.data(), got.size()) == 0;
  }

  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, http_status(e.code()), errc_name(e.code()), e.what());
      } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", req.method, req.path, e.what());
        send_error(res, 500, "InternalError", "internal error");
      }
    };
  }

  void routes() {
    http.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (req.path.rfind("/api/", 0) == 0 && !authorized(req)) {
        send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
    http.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      spdlog::info("{} {} {}", req.method, req.path, res.status);
    });

    http.Get("/api/tasks/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string reviewer = req.get_param_value("reviewer");
      if (reviewer.empty()) throw Error(Errc::kUsage, "query parameter 'reviewer' is required");
      const auto t = project.claim_next(reviewer);
      send_json(res, {{"task", t ? task_json(*t) : json(nullptr)}});
    }));
    http.Get(R"(/api/tasks/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto t = project.task(req.matches[1]);
      if (!t) throw Error(Errc::kUnknownTask, "no task '" + std::string(req.matches[1]) + "'");
      send_json(res, {{"task", task_json(*t)}});
    }));
    http.Post(R"(/api/tasks/([^/]+)/submit)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = body_of(req);
      const std::string reviewer = string_field(body, "reviewer", true);
      const std::string action = string_field(body, "action", true);
      Submission s;
      if (action == "approve") {
        s.action = Action::kApprove;
      } else if (action == "correct") {
        s.action = Action::kCorrect;
        s.text = string_field(body, "text", true);
      } else if (action == "reject") {
        s.action = Action::kReject;
        s.text = string_field(body, "reason", false);
      } else {
        throw Error(Errc::kUsage, "action must be approve, correct or reject");
      }
      send_json(res, {{"task", task_json(project.submit(req.matches[1], s, reviewer))}});
    }));
    http.Post(R"(/api/tasks/([^/]+)/release)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string reviewer = string_field(body_of(req), "reviewer", true);
      send_json(res, {{"task", task_json(project.release(req.matches[1], reviewer))}});
    }));
    http.Get("/api/progress", guarded([this](const httplib::Request&, httplib::Response& res) {
      const Progress p = project.progress();
      json j{{"total", p.total}, {"seq", p.seq}};
      for (const auto& [k, v] : p.by_status) j[k] = v;
      send_json(res, j);
    }));
    http.Get(R"(/api/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const Manifest& m = project.manifest();
      const auto it = std::find_if(m.records.begin(), m.records.end(),
                                   [&](const SampleRecord& r) { return r.sample_id == req.matches[1]; });
      if (it == m.records.end()) throw Error(Errc::kUnknownSampleId, "no sample '" + std::string(req.matches[1]) + "'");
      const fs::path file = m.image_file(*it);
      res.set_content(read_file(file), mime_for(file));
    }));
    http.Post("/api/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = body_of(req);
      const bool partial = body.contains("partial") && body["partial"].is_boolean() && body["partial"].get<bool>();
      ExportResult r = project.export_benchmark(partial);
      const fs::path dir = opts.export_dir / ("bench-" + r.manifest.generator["log_seq"].dump());
      write_manifest(r.manifest, dir, true);
      send_json(res, {{"path", dir.string()},
                      {"stats", r.manifest.stats},
                      {"excluded", r.excluded},
                      {"digest", manifest_digest(rebase(r.manifest, dir))}});
    }));

    if (!opts.static_dir.empty() && !http.set_mount_point("/", opts.static_dir.string()))
      throw Error(Errc::kIo, "cannot serve " + opts.static_dir.string());
  }
};

Server::Server(Project& project, ServerOptions opts) : impl_(std::make_unique<Impl>(project, std::move(opts))) {}

Server::~Server() = default;

int Server::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(Errc::kIo, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() { impl_->http.stop(); }

void Server::wait_until_ready() { impl_->http.wait_until_ready(); }

}  // namespace qalam::review
