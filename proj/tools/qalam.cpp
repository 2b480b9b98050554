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

// qalam: one binary, one subcommand group per module.
//   exit 0 success, 1 operational error, 2 usage or config error.

#include <glob.h>
#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "qalam/bench.hpp"
#include "qalam/dataset.hpp"
#include "qalam/errors.hpp"
#include "qalam/forge.hpp"
#include "qalam/io.hpp"
#include "qalam/manifest.hpp"
#include "qalam/pseudolabel.hpp"
#include "qalam/review.hpp"
#include "qalam/review_server.hpp"
#include "qalam/textnorm.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using qalam::Errc;
using qalam::Error;

namespace {

const std::set<std::string> kRunConfigKeys = {"forge", "dataset", "labeler", "norm", "bench", "log_level", "jobs", "seed"};
const std::set<std::string> kLogLevels = {"trace", "debug", "info", "warn", "error", "critical", "off"};

/// A --config file. Either a run config (only the keys above) or a bare
/// section for the command at hand.
struct RunConfig {
  json file = json::object();
  bool sectioned = true;
  fs::path base = fs::current_path();
  std::optional<std::string> log_level;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;

  json section(const std::string& name) const {
    if (!sectioned) return file;
    auto it = file.find(name);
    return it == file.end() ? json() : *it;
  }
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  try {
    rc.file = json::parse(qalam::read_file(path));
  } catch (const json::exception& e) {
    throw Error(Errc::kConfig, path + ": " + e.what());
  } catch (const Error& e) {
    throw Error(Errc::kConfig, e.what());
  }
  if (!rc.file.is_object()) throw Error(Errc::kConfig, path + ": expected a JSON object");
  rc.base = fs::absolute(path).parent_path();
  rc.sectioned = std::all_of(rc.file.items().begin(), rc.file.items().end(),
                             [](const auto& kv) { return kRunConfigKeys.count(kv.key()) > 0; });
  if (!rc.sectioned) return rc;
  try {
    if (rc.file.contains("log_level")) rc.log_level = rc.file.at("log_level").get<std::string>();
    if (rc.file.contains("jobs")) {
      const auto& j = rc.file.at("jobs");
      if (!j.is_number_unsigned() || j.get<std::size_t>() == 0) throw Error(Errc::kConfig, "jobs: must be a positive integer");
      rc.jobs = j.get<std::size_t>();
    }
    if (rc.file.contains("seed")) {
      const auto& s = rc.file.at("seed");
      if (!s.is_number_unsigned()) throw Error(Errc::kConfig, "seed: must be a non-negative integer");
      rc.seed = s.get<std::uint64_t>();
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kConfig, path + ": " + e.what());
  }
  return rc;
}

void require_only(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::kConfig, where + ": expected an object");
  for (const auto& kv : j.items())
    if (!keys.count(kv.key())) throw Error(Errc::kConfig, where + ": unknown key '" + kv.key() + "'");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_relative() ? base / path : path;
}

struct Globals {
  std::string config;
  std::string log_level;
  std::size_t jobs = 0;
  std::uint64_t seed = 0;
  CLI::Option* jobs_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* log_opt = nullptr;
  RunConfig rc;

  std::size_t effective_jobs() const {
    if (jobs_opt->count()) return std::max<std::size_t>(jobs, 1);
    if (rc.jobs) return *rc.jobs;
    return std::max(1u, std::thread::hardware_concurrency());
  }
  std::optional<std::uint64_t> effective_seed() const {
    if (seed_opt->count()) return seed;
    return rc.seed;
  }
};

json provenance(const std::string& tool, json config, std::optional<std::uint64_t> seed) {
  return {{"tool", "qalam " + tool},
          {"version", QALAM_VERSION},
          {"config", std::move(config)},
          {"seed", seed ? json(*seed) : json(nullptr)}};
}

void refuse_existing(const fs::path& p, bool overwrite) {
  if (!overwrite && fs::exists(p)) throw Error(Errc::kOutputExists, p.string() + " exists (use --overwrite)");
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  qalam::write_file_atomic(p, j.dump(2) + "\n");
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

/// "a=1,b=2" -> {a: 1, b: 2}.
std::map<std::string, double> parse_weights(const std::string& text, const std::string& what) {
  std::map<std::string, double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(Errc::kUsage, what + ": expected name=weight, got '" + item + "'");
    double w = 0;
    try {
      std::size_t used = 0;
      w = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(Errc::kUsage, what + ": bad weight in '" + item + "'");
    }
    if (!(w > 0)) throw Error(Errc::kUsage, what + ": weights must be positive");
    out[item.substr(0, eq)] = w;
    pos = comma + 1;
  }
  return out;
}

std::map<std::string, double> weights_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::kConfig, where + ": expected an object");
  std::map<std::string, double> out;
  for (const auto& kv : j.items()) {
    if (!kv.value().is_number() || !(kv.value().get<double>() > 0))
      throw Error(Errc::kConfig, where + "." + kv.key() + ": must be a positive number");
    out[kv.key()] = kv.value().get<double>();
  }
  return out;
}

void report_diagnostics(const std::vector<qalam::Diagnostic>& diags) {
  for (const auto& d : diags) spdlog::error("{}: {}", d.kind, d.message);
}

using Action = std::function<int()>;

// ------------------------------------------------------------------ forge

void add_forge(CLI::App& app, Globals& g, Action& action) {
  auto* forge = app.add_subcommand("forge", "Synthetic image generation");
  forge->require_subcommand(1);
  auto* gen = forge->add_subcommand("generate", "Render a synthetic dataset");
  struct Opts {
    std::string out;
    std::size_t count = 0;
    bool overwrite = false;
  };
  auto o = std::make_shared<Opts>();
  gen->add_option("--out", o->out, "Output directory")->required();
  auto* count = gen->add_option("--count", o->count, "Number of samples (overrides output.count)");
  gen->add_flag("--overwrite", o->overwrite, "Replace an existing dataset");
  gen->callback([&g, &action, o, count] {
    action = [&g, o, count] {
      const json sec = g.rc.section("forge");
      if (sec.is_null()) throw Error(Errc::kConfig, "forge generate needs a forge config (--config)");
      qalam::forge::ForgeConfig cfg = qalam::forge::load_config(sec, g.rc.base);
      if (auto s = g.effective_seed()) cfg.master_seed = *s;
      if (count->count()) cfg.output.count = o->count;
      const auto diags = qalam::forge::validate_config(cfg);
      for (const auto& d : diags) spdlog::error("{}", d);
      if (!diags.empty()) throw Error(Errc::kConfig, "invalid forge config");
      qalam::forge::Forge f(cfg);
      qalam::forge::DatasetOptions opts;
      opts.jobs = g.effective_jobs();
      opts.overwrite = o->overwrite;
      opts.generator = provenance("forge generate", json(cfg), cfg.master_seed);
      spdlog::info("generating {} samples into {} with {} jobs", cfg.output.count, o->out, opts.jobs);
      const qalam::Manifest m = qalam::forge::generate_dataset(f, o->out, opts);
      print({{"manifest", (fs::path(o->out) / "manifest.jsonl").string()},
             {"samples", m.records.size()},
             {"digest", qalam::manifest_digest(m)}});
      return 0;
    };
  });
}

// ---------------------------------------------------------------- dataset

void add_dataset(CLI::App& app, Globals& g, Action& action) {
  auto* ds = app.add_subcommand("dataset", "Manifest operations");
  ds->require_subcommand(1);

  {
    struct Opts {
      std::string manifest, out, ratios;
      bool overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = ds->add_subcommand("split", "Assign train/validation/bench splits");
    cmd->add_option("--manifest", o->manifest, "Input manifest.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o->out, "Output directory")->required();
    cmd->add_option("--ratios", o->ratios, "Split weights, e.g. train=26162,validation=3930");
    cmd->add_flag("--overwrite", o->overwrite);
    cmd->callback([&g, &action, o] {
      action = [&g, o] {
        const json sec = g.rc.section("dataset");
        if (!sec.is_null()) require_only(sec, {"ratios", "mix"}, "dataset");
        std::map<std::string, double> weights;
        if (!o->ratios.empty()) weights = parse_weights(o->ratios, "--ratios");
        else if (!sec.is_null() && sec.contains("ratios")) weights = weights_from_json(sec.at("ratios"), "dataset.ratios");
        else throw Error(Errc::kUsage, "dataset split needs --ratios or dataset.ratios");
        double total = 0;
        for (const auto& kv : weights) total += kv.second;
        std::map<qalam::Split, double> ratios;
        for (const auto& [name, w] : weights) ratios[qalam::parse_split(name)] = w / total;
        const std::uint64_t seed = g.effective_seed().value_or(0);
        const qalam::Manifest src = qalam::read_manifest(o->manifest);
        qalam::Manifest m = qalam::split(src, ratios, seed);
        m.generator = provenance("dataset split", {{"ratios", weights}, {"manifest", o->manifest}}, seed);
        m.generator["source"] = src.generator;
        qalam::write_manifest(m, o->out, o->overwrite);
        print({{"samples", m.records.size()}, {"split_counts", m.stats.split_counts}});
        return 0;
      };
    });
  }
  {
    struct Opts {
      std::string a, b, out, mix;
      bool overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = ds->add_subcommand("merge", "Merge two manifests");
    cmd->add_option("a", o->a, "First manifest.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("b", o->b, "Second manifest.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o->out, "Output directory")->required();
    cmd->add_option("--mix", o->mix, "Target provenance mix, e.g. synthetic=0.8,scanned_literature=0.2");
    cmd->add_flag("--overwrite", o->overwrite);
    cmd->callback([&g, &action, o] {
      action = [&g, o] {
        const json sec = g.rc.section("dataset");
        if (!sec.is_null()) require_only(sec, {"ratios", "mix"}, "dataset");
        std::optional<std::map<std::string, double>> mix;
        if (!o->mix.empty()) mix = parse_weights(o->mix, "--mix");
        else if (!sec.is_null() && sec.contains("mix")) mix = weights_from_json(sec.at("mix"), "dataset.mix");
        const std::uint64_t seed = g.effective_seed().value_or(0);
        qalam::Manifest m = qalam::merge(qalam::read_manifest(o->a), qalam::read_manifest(o->b), mix, seed);
        json merged = m.generator;
        m.generator = provenance("dataset merge", {{"a", o->a}, {"b", o->b}, {"mix", mix ? json(*mix) : json(nullptr)}}, seed);
        m.generator["source"] = merged;
        qalam::write_manifest(m, o->out, o->overwrite);
        print({{"samples", m.records.size()}, {"provenance", m.stats.provenance_histogram}});
        return 0;
      };
    });
  }
  {
    auto manifest = std::make_shared<std::string>();
    auto* cmd = ds->add_subcommand("verify", "Check hashes, paths and stats");
    cmd->add_option("--manifest", *manifest, "manifest.jsonl")->required()->check(CLI::ExistingFile);
    cmd->callback([&action, manifest] {
      action = [manifest] {
        const qalam::Manifest m = qalam::read_manifest(*manifest);
        const auto diags = qalam::verify(m);
        report_diagnostics(diags);
        print({{"samples", m.records.size()}, {"diagnostics", diags.size()}});
        return diags.empty() ? 0 : 1;
      };
    });
  }
  {
    auto manifest = std::make_shared<std::string>();
    auto* cmd = ds->add_subcommand("stats", "Print the stats block and check it against the records");
    cmd->add_option("--manifest", *manifest, "manifest.jsonl")->required()->check(CLI::ExistingFile);
    cmd->callback([&action, manifest] {
      action = [manifest] {
        const qalam::Manifest m = qalam::read_manifest(*manifest);
        const qalam::ManifestStats fresh = qalam::compute_stats(m);
        const bool same = fresh == m.stats;
        if (!same) spdlog::error("stored stats differ from the records");
        print({{"stats", m.stats}, {"consistent", same}});
        return same ? 0 : 1;
      };
    });
  }
  {
    struct Opts {
      std::string dir, out, provenance = "external", transcripts;
      bool overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = ds->add_subcommand("ingest", "Build a manifest from scanned or photographed images");
    cmd->add_option("--dir", o->dir, "Image directory")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--out", o->out, "Output directory")->required();
    cmd->add_option("--provenance", o->provenance, "Provenance tag")->capture_default_str();
    cmd->add_option("--transcripts", o->transcripts, "Directory of same-stem .txt transcripts");
    cmd->add_flag("--overwrite", o->overwrite);
    cmd->callback([&action, o] {
      action = [o] {
        const qalam::Provenance prov = qalam::parse_provenance(o->provenance);
        std::optional<fs::path> tr;
        if (!o->transcripts.empty()) tr = o->transcripts;
        qalam::IngestResult res = qalam::ingest_real(o->dir, prov, tr);
        for (const auto& d : res.diagnostics) spdlog::warn("{}: {}", d.kind, d.message);
        json g = res.manifest.generator.is_object() ? res.manifest.generator : json::object();
        g.update(provenance("dataset ingest",
                            {{"dir", o->dir}, {"provenance", o->provenance},
                             {"transcripts", o->transcripts.empty() ? json(nullptr) : json(o->transcripts)}},
                            std::nullopt));
        res.manifest.generator = g;
        qalam::write_manifest(res.manifest, o->out, o->overwrite);
        print({{"samples", res.manifest.records.size()}, {"diagnostics", res.diagnostics.size()}});
        return 0;
      };
    });
  }
}

// ------------------------------------------------------------ pseudolabel

void add_pseudolabel(CLI::App& app, Globals& g, Action& action) {
  auto* pl = app.add_subcommand("pseudolabel", "Provisional labels from an external model");
  pl->require_subcommand(1);
  {
    struct Opts {
      std::string manifest, out;
      bool resume = false, overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = pl->add_subcommand("run", "Label every record of a manifest");
    cmd->add_option("--manifest", o->manifest, "manifest.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o->out, "labels.jsonl")->required();
    cmd->add_flag("--resume", o->resume, "Keep labels already in --out and label the rest");
    cmd->add_flag("--overwrite", o->overwrite);
    cmd->callback([&g, &action, o] {
      action = [&g, o] {
        const json sec = g.rc.section("labeler");
        if (sec.is_null()) throw Error(Errc::kConfig, "pseudolabel run needs a labeler config (--config)");
        auto cfg = sec.get<qalam::pseudolabel::LabelerConfig>();
        cfg.cache_dir = resolve(g.rc.base, cfg.cache_dir).string();
        cfg.concurrency = static_cast<int>(std::min<std::size_t>(cfg.concurrency, g.effective_jobs()));
        const auto diags = qalam::pseudolabel::validate_config(cfg);
        for (const auto& d : diags) spdlog::error("{}", d);
        if (!diags.empty()) throw Error(Errc::kConfig, "invalid labeler config");

        const fs::path out = o->out;
        std::vector<qalam::pseudolabel::PseudoLabel> done;
        if (fs::exists(out)) {
          if (o->resume) done = qalam::pseudolabel::read_labels(out);
          else refuse_existing(out, o->overwrite);
        }
        const qalam::Manifest m = qalam::read_manifest(o->manifest);
        qalam::pseudolabel::Labeler labeler(cfg);
        const auto res = qalam::pseudolabel::label_batch(m, labeler, done);
        qalam::pseudolabel::write_labels(res.labels, out);

        json failures = json::array();
        for (const auto& f : res.failures) {
          spdlog::error("{}: {}", f.sample_id, f.message);
          failures.push_back({{"sample_id", f.sample_id}, {"error", f.error}, {"message", f.message}});
        }
        write_json(fs::path(out.string() + ".failures.json"), failures);
        json meta = provenance("pseudolabel run", json(cfg), std::nullopt);
        meta["manifest"] = o->manifest;
        meta["manifest_digest"] = qalam::manifest_digest(m);
        meta["labels"] = res.labels.size();
        meta["failures"] = res.failures.size();
        write_json(fs::path(out.string() + ".meta.json"), meta);
        print({{"labels", res.labels.size()}, {"failures", res.failures.size()}, {"network_calls", labeler.network_calls()}});
        return res.failures.empty() ? 0 : 1;
      };
    });
  }
  {
    struct Opts {
      std::string manifest, labels, out;
      bool trust = false, overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = pl->add_subcommand("apply", "Use pseudo-labels as ground truth for unlabeled records");
    cmd->add_option("--manifest", o->manifest, "manifest.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--labels", o->labels, "labels.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o->out, "Output directory")->required();
    cmd->add_flag("--trust-pseudolabels", o->trust, "Required: accept unreviewed labels");
    cmd->add_flag("--overwrite", o->overwrite);
    cmd->callback([&action, o] {
      action = [o] {
        const qalam::Manifest src = qalam::read_manifest(o->manifest);
        qalam::Manifest m = qalam::pseudolabel::apply_labels(src, qalam::pseudolabel::read_labels(o->labels), o->trust);
        m.generator = provenance("pseudolabel apply",
                                 {{"labels", o->labels}, {"labels_sha256", qalam::sha256_file(o->labels)},
                                  {"trust_pseudolabels", o->trust}},
                                 std::nullopt);
        m.generator["source"] = src.generator;
        qalam::write_manifest(m, o->out, o->overwrite);
        print({{"samples", m.records.size()}});
        return 0;
      };
    });
  }
}

// ----------------------------------------------------------------- review

json progress_json(const qalam::review::Progress& p) {
  json j = {{"total", p.total}, {"seq", p.seq}};
  for (const auto& [k, v] : p.by_status) j[k] = v;
  return j;
}

int serve(qalam::review::Project& project, const std::string& host, int port, qalam::review::ServerOptions opts) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  qalam::review::Server server(project, std::move(opts));
  const int bound = server.bind(host, port);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  spdlog::info("serving {} on http://{}:{}", project.dir().string(), host, bound);
  std::cout << "http://" << host << ":" << bound << std::endl;
  server.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  spdlog::info("stopped");
  return 0;
}

void add_review(CLI::App& app, Action& action) {
  auto* rv = app.add_subcommand("review", "Human review of pseudo-labels");
  rv->require_subcommand(1);
  {
    struct Opts {
      std::string labels, manifest, project;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = rv->add_subcommand("create", "Start a review project");
    cmd->add_option("--labels", o->labels, "labels.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--manifest", o->manifest, "manifest.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--project", o->project, "Project directory")->required();
    cmd->callback([&action, o] {
      action = [o] {
        auto p = qalam::review::Project::create(o->project, qalam::pseudolabel::read_labels(o->labels),
                                                qalam::read_manifest(o->manifest));
        print(progress_json(p->progress()));
        return 0;
      };
    });
  }
  {
    struct Opts {
      std::string project, host = "127.0.0.1", token, static_dir, export_dir;
      int port = 8080;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = rv->add_subcommand("serve", "Serve the review HTTP API");
    cmd->add_option("--project", o->project, "Project directory")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--host", o->host)->capture_default_str();
    cmd->add_option("--port", o->port, "0 picks a free port")->capture_default_str()->check(CLI::Range(0, 65535));
    cmd->add_option("--token", o->token, "Shared bearer token")->envname("QALAM_REVIEW_TOKEN");
    cmd->add_option("--static", o->static_dir, "Review UI build to serve at /")->check(CLI::ExistingDirectory);
    cmd->add_option("--export-dir", o->export_dir, "Where POST /api/export writes");
    cmd->callback([&action, o] {
      action = [o] {
        auto p = qalam::review::Project::open(o->project);
        qalam::review::ServerOptions opts;
        opts.token = o->token;
        opts.static_dir = o->static_dir;
        opts.export_dir = o->export_dir;
        return serve(*p, o->host, o->port, std::move(opts));
      };
    });
  }
  {
    struct Opts {
      std::string project, out;
      bool partial = false, overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = rv->add_subcommand("export", "Write approved and corrected tasks as a bench manifest");
    cmd->add_option("--project", o->project, "Project directory")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--out", o->out, "Output directory")->required();
    cmd->add_flag("--partial", o->partial, "Export even if tasks are still open");
    cmd->add_flag("--overwrite", o->overwrite);
    cmd->callback([&action, o] {
      action = [o] {
        auto p = qalam::review::Project::open(o->project);
        qalam::review::ExportResult res = p->export_benchmark(o->partial);
        res.manifest.generator.update(provenance("review export", {{"project", o->project}, {"partial", o->partial}}, std::nullopt));
        qalam::write_manifest(res.manifest, o->out, o->overwrite);
        print({{"samples", res.manifest.stats.samples},
               {"provenance", res.manifest.stats.provenance_histogram},
               {"excluded", res.excluded}});
        return 0;
      };
    });
  }
  {
    auto project = std::make_shared<std::string>();
    auto* cmd = rv->add_subcommand("progress", "Print task counts by status");
    cmd->add_option("--project", *project, "Project directory")->required()->check(CLI::ExistingDirectory);
    cmd->callback([&action, project] {
      action = [project] {
        print(progress_json(qalam::review::Project::open(*project)->progress()));
        return 0;
      };
    });
  }
}

// ------------------------------------------------------------------ bench

bool is_timing_file(const std::string& path) {
  constexpr std::string_view kSuffix = ".timing.json";
  return path.size() >= kSuffix.size() && path.compare(path.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0;
}

/// Wildcard matches skip the timing sidecars written by bench run.
std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
  std::vector<std::string> out;
  for (const auto& pat : patterns) {
    glob_t gl{};
    const int rc = glob(pat.c_str(), 0, nullptr, &gl);
    const bool wild = pat.find_first_of("*?[") != std::string::npos;
    if (rc == 0)
      for (std::size_t i = 0; i < gl.gl_pathc; ++i)
        if (!wild || !is_timing_file(gl.gl_pathv[i])) out.emplace_back(gl.gl_pathv[i]);
    globfree(&gl);
    if (rc == GLOB_NOMATCH) throw Error(Errc::kUsage, "no reports match '" + pat + "'");
    if (rc != 0) throw Error(Errc::kIo, "cannot expand '" + pat + "'");
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void add_bench(CLI::App& app, Globals& g, Action& action) {
  auto* bn = app.add_subcommand("bench", "Score models against a benchmark manifest");
  bn->require_subcommand(1);
  {
    struct Opts {
      std::string manifest, adapter, norm, out, model_id, benchmark_id, prompt, credential_env;
      int timeout_ms = 0, retries = 0;
      bool no_verify = false, nfc = false, overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = bn->add_subcommand("run", "Transcribe and score every bench record");
    cmd->add_option("--manifest", o->manifest, "Benchmark manifest.jsonl")->required()->check(CLI::ExistingFile);
    auto* adapter = cmd->add_option("--adapter", o->adapter, "echo | noisy:<p>,<seed> | subprocess:<cmd> | http:<url>");
    cmd->add_option("--norm", o->norm, "Normalization config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--out", o->out, "report.json")->required();
    auto* timeout = cmd->add_option("--timeout-ms", o->timeout_ms, "Per-sample adapter timeout")->check(CLI::PositiveNumber);
    auto* retries = cmd->add_option("--retries", o->retries, "Extra attempts per failed sample")->check(CLI::NonNegativeNumber);
    auto* model_id = cmd->add_option("--model-id", o->model_id, "Name shown on the leaderboard");
    cmd->add_option("--benchmark-id", o->benchmark_id);
    auto* prompt = cmd->add_option("--prompt", o->prompt, "Prompt sent to http adapters");
    auto* cred = cmd->add_option("--credential-env", o->credential_env, "Env var holding the http bearer token");
    cmd->add_flag("--no-verify", o->no_verify, "Skip the manifest integrity check");
    cmd->add_flag("--nfc", o->nfc, "Apply NFC before scoring");
    cmd->add_flag("--overwrite", o->overwrite);
    cmd->callback([&g, &action, o, adapter, timeout, retries, model_id, prompt, cred] {
      action = [&g, o, adapter, timeout, retries, model_id, prompt, cred] {
        json sec = g.rc.section("bench");
        if (sec.is_null()) sec = json::object();
        require_only(sec, {"adapter", "timeout_ms", "retries", "model_id", "benchmark_id", "prompt", "credential_env", "verify"}, "bench");
        const auto pick = [&](CLI::Option* opt, const auto& cli, const char* key, auto fallback) {
          using T = decltype(fallback);
          if (opt && opt->count()) return T(cli);
          if (sec.contains(key)) {
            try {
              return sec.at(key).get<T>();
            } catch (const json::exception&) {
              throw Error(Errc::kConfig, std::string("bench.") + key + ": wrong type");
            }
          }
          return fallback;
        };
        const std::string spec_text = pick(adapter, o->adapter, "adapter", std::string());
        if (spec_text.empty()) throw Error(Errc::kUsage, "bench run needs --adapter");
        qalam::bench::AdapterSpec spec = qalam::bench::parse_adapter_spec(spec_text);
        spec.timeout_ms = pick(timeout, o->timeout_ms, "timeout_ms", spec.timeout_ms);
        spec.model_id = pick(model_id, o->model_id, "model_id", spec.model_id);
        spec.prompt = pick(prompt, o->prompt, "prompt", spec.prompt);
        spec.credential_env = pick(cred, o->credential_env, "credential_env", spec.credential_env);

        qalam::NormalizationConfig norm;
        if (!o->norm.empty()) {
          try {
            norm = json::parse(qalam::read_file(o->norm)).get<qalam::NormalizationConfig>();
          } catch (const json::exception& e) {
            throw Error(Errc::kConfig, o->norm + ": " + e.what());
          }
        } else if (const json n = g.rc.section("norm"); !n.is_null()) {
          norm = n.get<qalam::NormalizationConfig>();
        }
        if (o->nfc) norm.nfc = true;
        const auto diags = norm.validate();
        for (const auto& d : diags) spdlog::error("{}", d);
        if (!diags.empty()) throw Error(Errc::kConfig, "invalid normalization config");

        qalam::bench::RunOptions ro;
        ro.concurrency = static_cast<int>(g.effective_jobs());
        ro.max_retries = pick(retries, o->retries, "retries", 0);
        ro.benchmark_id = o->benchmark_id.empty() ? sec.value("benchmark_id", std::string()) : o->benchmark_id;
        ro.verify = !o->no_verify && sec.value("verify", true);

        const fs::path out = o->out;
        const fs::path timing_path = out.parent_path() / (out.stem().string() + ".timing.json");
        refuse_existing(out, o->overwrite);

        const qalam::Manifest m = qalam::read_manifest(o->manifest);
        auto ad = qalam::bench::make_adapter(spec);
        qalam::bench::RunResult res = qalam::bench::run_benchmark(m, *ad, norm, ro);
        std::optional<std::uint64_t> seed;
        if (spec.kind == qalam::bench::AdapterSpec::Kind::kNoisy) seed = spec.seed;
        res.report.generator.update(provenance("bench run",
                                               {{"manifest", o->manifest},
                                                {"adapter", json(spec)},
                                                {"normalization", json(norm)},
                                                {"retries", ro.max_retries},
                                                {"verify", ro.verify},
                                                {"benchmark_id", res.report.benchmark_id}},
                                               seed));
        for (const auto& e : res.report.excluded) spdlog::warn("excluded {} ({}): {}", e.sample_id, e.reason, e.message);
        write_json(out, json(res.report));
        write_json(timing_path, json(res.timing));
        print({{"model_id", res.report.model_id},
               {"aggregate", json(res.report)["aggregate"]},
               {"n_excluded", res.report.excluded.size()}});
        return 0;
      };
    });
  }
  {
    struct Opts {
      std::vector<std::string> reports;
      std::string out;
      bool overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = bn->add_subcommand("compare", "Rank reports of one benchmark");
    cmd->add_option("--reports", o->reports, "Report files or glob patterns")->required();
    cmd->add_option("--out", o->out, "Output prefix; writes .csv .md .svg .json .plot.json")->required();
    cmd->add_flag("--overwrite", o->overwrite);
    cmd->callback([&action, o] {
      action = [o] {
        const auto files = expand_globs(o->reports);
        std::vector<qalam::bench::BenchReport> reports;
        for (const auto& f : files) {
          try {
            reports.push_back(json::parse(qalam::read_file(f)).get<qalam::bench::BenchReport>());
          } catch (const json::exception& e) {
            throw Error(Errc::kIo, f + ": " + e.what());
          }
        }
        const qalam::bench::Leaderboard lb = qalam::bench::compare(reports);

        std::string prefix = o->out;
        for (const char* ext : {".csv", ".md", ".svg", ".json"}) {
          const fs::path p(prefix);
          if (p.extension() == ext) prefix = (p.parent_path() / p.stem()).string();
        }
        const std::vector<std::string> exts = {".csv", ".md", ".svg", ".json", ".plot.json"};
        for (const auto& e : exts) refuse_existing(prefix + e, o->overwrite);
        if (const fs::path parent = fs::path(prefix).parent_path(); !parent.empty()) fs::create_directories(parent);

        json table = qalam::bench::to_json(lb);
        table["generator"] = provenance("bench compare", {{"reports", files}}, std::nullopt);
        const json plot = qalam::bench::plot_description(lb);
        qalam::write_file_atomic(prefix + ".csv", qalam::bench::to_csv(lb));
        qalam::write_file_atomic(prefix + ".md", qalam::bench::to_markdown(lb));
        qalam::write_file_atomic(prefix + ".svg", qalam::bench::render_svg(plot));
        write_json(prefix + ".json", table);
        write_json(prefix + ".plot.json", plot);
        std::cout << qalam::bench::to_csv(lb) << std::flush;
        return 0;
      };
    });
  }
  {
    struct Opts {
      std::string dir, format, out;
      bool overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = bn->add_subcommand("import", "Wrap an external benchmark as a manifest");
    cmd->add_option("--dir", o->dir, "Benchmark directory")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--format", o->format, "images+txt | images+jsonl")->required();
    cmd->add_option("--out", o->out, "Output directory")->required();
    cmd->add_flag("--overwrite", o->overwrite);
    cmd->callback([&action, o] {
      action = [o] {
        qalam::Manifest m = qalam::bench::import_external(o->dir, qalam::bench::parse_import_format(o->format));
        m.generator.update(provenance("bench import", {{"dir", o->dir}, {"format", o->format}}, std::nullopt));
        qalam::write_manifest(m, o->out, o->overwrite);
        print({{"samples", m.records.size()}, {"digest", qalam::manifest_digest(m)}});
        return 0;
      };
    });
  }
}

int exit_code(Errc c) { return c == Errc::kConfig || c == Errc::kUsage ? 2 : 1; }

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("qalam");
  logger->set_pattern("%^%l%$: %v");
  spdlog::set_default_logger(logger);

  CLI::App app{"qalam: Arabic-script OCR data and evaluation toolkit"};
  app.set_version_flag("--version", std::string(QALAM_VERSION));
  app.fallthrough();
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config, "Run config JSON, or a bare section for the command")->check(CLI::ExistingFile);
  g.log_opt = app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|critical|off")->envname("QALAM_LOG_LEVEL");
  g.jobs_opt = app.add_option("--jobs", g.jobs, "Worker threads")->envname("QALAM_JOBS")->check(CLI::PositiveNumber);
  g.seed_opt = app.add_option("--seed", g.seed, "Seed override")->envname("QALAM_SEED");

  Action action;
  add_forge(app, g, action);
  add_dataset(app, g, action);
  add_pseudolabel(app, g, action);
  add_review(app, action);
  add_bench(app, g, action);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    g.rc = load_run_config(g.config);
    std::string level = "info";
    if (g.log_opt->count()) level = g.log_level;
    else if (g.rc.log_level) level = *g.rc.log_level;
    if (!kLogLevels.count(level)) throw Error(Errc::kUsage, "unknown log level '" + level + "'");
    spdlog::set_level(spdlog::level::from_str(level));
    if (!action) throw Error(Errc::kUsage, "no command given");
    return action();
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
