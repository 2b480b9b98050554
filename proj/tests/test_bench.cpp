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

#include <chrono>
#include <cstdlib>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "qalam/bench.hpp"
#include "qalam/errors.hpp"
#include "qalam/io.hpp"
#include "qalam/unicode.hpp"
#include "support/fixtures.hpp"
#include "support/mock_server.hpp"
#include "support/noisy_oracle.hpp"

namespace qalam::bench {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using qalam::testing::TempDir;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::kUsage;
}

Manifest text_manifest(const std::vector<std::string>& texts, const fs::path& root = "/nonexistent") {
  Manifest m;
  m.root = root;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    SampleRecord r;
    r.sample_id = "b" + std::to_string(i);
    r.image_path = r.sample_id + ".png";
    r.ground_truth = texts[i];
    r.provenance = Provenance::kExternal;
    m.records.push_back(r);
    m.split_assignments[r.sample_id] = Split::kBench;
  }
  m.stats = compute_stats(m);
  return m;
}

RunOptions unverified(int concurrency = 4) {
  RunOptions o;
  o.verify = false;
  o.concurrency = concurrency;
  o.benchmark_id = "unit";
  return o;
}

std::vector<std::string> random_lines(std::size_t n, std::uint64_t seed) {
  static const std::u32string letters = U"ابتثجحخدذرزسشصضطظعغفقكلمنهوي";
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::u32string s;
    const std::size_t len = 20 + rng() % 21;
    for (std::size_t k = 0; k < len; ++k) s += (k % 6 == 5) ? U' ' : letters[rng() % letters.size()];
    out.push_back(unicode::encode(s));
  }
  return out;
}

std::vector<std::pair<std::string, std::u32string>> oracle_samples(const Manifest& m) {
  std::vector<std::pair<std::string, std::u32string>> out;
  for (const auto& r : m.records) out.emplace_back(r.sample_id, unicode::decode(r.ground_truth));
  return out;
}

TEST(AdapterSpecParse, Forms) {
  EXPECT_EQ(parse_adapter_spec("echo").kind, AdapterSpec::Kind::kEcho);
  EXPECT_EQ(parse_adapter_spec("echo").model_id, "echo_oracle");
  auto n = parse_adapter_spec("noisy:0.1,7");
  EXPECT_EQ(n.kind, AdapterSpec::Kind::kNoisy);
  EXPECT_DOUBLE_EQ(n.p, 0.1);
  EXPECT_EQ(n.seed, 7u);
  EXPECT_EQ(n.model_id, "noisy_oracle(p=0.1,seed=7)");
  auto kv = parse_adapter_spec("noisy:seed=9,p=0.25");
  EXPECT_DOUBLE_EQ(kv.p, 0.25);
  EXPECT_EQ(kv.seed, 9u);
  auto sp = parse_adapter_spec(R"(subprocess:python3 "my model.py" --beam 4)");
  EXPECT_EQ(sp.command, (std::vector<std::string>{"python3", "my model.py", "--beam", "4"}));
  EXPECT_EQ(sp.model_id, "python3");
  EXPECT_EQ(parse_adapter_spec("http:http://localhost:8080/ocr").url, "http://localhost:8080/ocr");
  EXPECT_EQ(parse_adapter_spec("https://models.example/ocr").url, "https://models.example/ocr");
  for (const char* bad : {"noisy", "noisy:1.5", "noisy:0.1,-3", "noisy:q=1", "subprocess:", "subprocess:'open",
                          "http:", "telepathy", "echo:x"})
    EXPECT_EQ(code_of([&] { parse_adapter_spec(bad); }), Errc::kUsage) << bad;
}

TEST(Corrupt, MatchesIndependentSimulation) {
  for (std::uint64_t seed : {1ull, 7ull, 123456789ull}) {
    for (const auto& line : random_lines(40, seed)) {
      const std::string id = "sample-" + std::to_string(line.size());
      EXPECT_EQ(unicode::decode(corrupt(line, 0.3, seed, id)),
                qalam::testing::noisy::corrupt(unicode::decode(line), 0.3, seed, id));
    }
  }
}

TEST(Corrupt, Properties) {
  const std::string gt = "سلام عليكم 12 abc";
  EXPECT_EQ(corrupt(gt, 0.0, 5, "x"), gt);
  const std::u32string all = unicode::decode(corrupt(gt, 1.0, 5, "x"));
  const std::u32string src = unicode::decode(gt);
  ASSERT_EQ(all.size(), src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (unicode::is_space(src[i])) EXPECT_EQ(all[i], src[i]);
    else EXPECT_NE(all[i], src[i]);
  }
  EXPECT_NE(corrupt(gt, 0.5, 5, "x"), corrupt(gt, 0.5, 5, "y"));
  EXPECT_EQ(corrupt(gt, 0.5, 5, "x"), corrupt(gt, 0.5, 5, "x"));
}

TEST(RunBenchmark, EchoIsPerfect) {
  const Manifest m = text_manifest(random_lines(25, 3));
  auto echo = make_adapter(parse_adapter_spec("echo"));
  const BenchReport r = run_benchmark(m, *echo, {}, unverified()).report;
  EXPECT_EQ(r.aggregate.micro_cer, 0.0);
  EXPECT_EQ(r.aggregate.micro_wer, 0.0);
  EXPECT_EQ(r.cards.size(), 25u);
  EXPECT_EQ(r.model_id, "echo_oracle");
  EXPECT_EQ(r.adapter["kind"], "echo_oracle");
}

TEST(RunBenchmark, NoisyMatchesSimulationAndConcentrates) {
  const Manifest m = text_manifest(random_lines(400, 11));
  const auto expected = qalam::testing::noisy::expected_cer(oracle_samples(m), 0.1, 2024);
  ASSERT_GE(expected.reference, 10000u);
  auto noisy = make_adapter(parse_adapter_spec("noisy:0.1,2024"));
  const BenchReport r = run_benchmark(m, *noisy, {}, unverified()).report;
  std::size_t dist = 0, ref = 0;
  for (const auto& c : r.cards) dist += c.char_edit.distance, ref += c.char_edit.reference_length;
  EXPECT_EQ(dist, expected.distance);
  EXPECT_EQ(ref, expected.reference);
  EXPECT_DOUBLE_EQ(r.aggregate.micro_cer, expected.micro());
  EXPECT_GE(r.aggregate.micro_cer, 0.08);
  EXPECT_LE(r.aggregate.micro_cer, 0.14);
}

TEST(RunBenchmark, ScoringPathIdentity) {
  const Manifest m = text_manifest({"كَتَبَ الولد", "سلام عليكم", "اب ج", "واش نتا مزيان 2024"});
  NormalizationConfig norm;
  auto noisy = make_adapter(parse_adapter_spec("noisy:0.4,1"));
  const BenchReport r = run_benchmark(m, *noisy, norm, unverified()).report;
  ASSERT_EQ(r.cards.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& rec = m.records[i];
    EXPECT_EQ(r.cards[i], score(rec.sample_id, rec.ground_truth, corrupt(rec.ground_truth, 0.4, 1, rec.sample_id), norm));
  }
  EXPECT_EQ(r.aggregate, aggregate(r.cards));
}

TEST(RunBenchmark, ReportIsReproducibleAcrossConcurrency) {
  const Manifest m = text_manifest(random_lines(60, 5));
  auto noisy = make_adapter(parse_adapter_spec("noisy:0.2,3"));
  const std::string a = json(run_benchmark(m, *noisy, {}, unverified(1)).report).dump(2);
  const std::string b = json(run_benchmark(m, *noisy, {}, unverified(8)).report).dump(2);
  EXPECT_EQ(a, b);
  BenchReport round = json::parse(a).get<BenchReport>();
  EXPECT_EQ(json(round).dump(2), a);
}

TEST(RunBenchmark, EmptyReferencesAreExcludedNotScored) {
  const Manifest m = text_manifest({"سلام", "", "َ ُ", "كتب"});
  auto echo = make_adapter(parse_adapter_spec("echo"));
  const BenchReport r = run_benchmark(m, *echo, {}, unverified()).report;
  EXPECT_EQ(r.cards.size(), 2u);
  ASSERT_EQ(r.excluded.size(), 2u);
  EXPECT_EQ(r.excluded[0].sample_id, "b1");
  EXPECT_EQ(r.excluded[0].reason, "empty_reference");
  EXPECT_EQ(r.cards.size() + r.excluded.size(), r.n_samples);

  const Manifest none = text_manifest({"", " "});
  EXPECT_EQ(code_of([&] { run_benchmark(none, *echo, {}, unverified()); }), Errc::kEmptyRun);
}

TEST(RunBenchmark, OnlyBenchSplitIsScored) {
  Manifest m = text_manifest({"أ", "ب", "ت"});
  m.split_assignments["b1"] = Split::kTrain;
  auto echo = make_adapter(parse_adapter_spec("echo"));
  const BenchReport r = run_benchmark(m, *echo, {}, unverified()).report;
  EXPECT_EQ(r.n_samples, 2u);
  for (auto& [id, s] : m.split_assignments) s = Split::kTrain;
  EXPECT_EQ(code_of([&] { run_benchmark(m, *echo, {}, unverified()); }), Errc::kUsage);
}

TEST(RunBenchmark, RefusesUnverifiedManifest) {
  TempDir tmp;
  const Manifest m = text_manifest({"سلام"}, tmp.path());
  auto echo = make_adapter(parse_adapter_spec("echo"));
  RunOptions o;
  EXPECT_EQ(code_of([&] { run_benchmark(m, *echo, {}, o); }), Errc::kUsage);
}

class SubprocessTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_file(tmp / "model.sh",
               "case \"$1\" in\n"
               "  *slow*) sleep 20 ;;\n"
               "  *fail*) echo 'model crashed' >&2; exit 3 ;;\n"
               "esac\n"
               "cat \"${1%.png}.txt\"\n");
  }
  Manifest manifest(const std::vector<std::string>& names) {
    Manifest m = text_manifest(std::vector<std::string>(names.size(), "سلام عليكم"), tmp.path());
    for (std::size_t i = 0; i < names.size(); ++i) {
      m.records[i].image_path = names[i] + ".png";
      write_file(tmp / (names[i] + ".png"), "png");
      write_file(tmp / (names[i] + ".txt"), "سلام عليكم\n");
    }
    return m;
  }
  TempDir tmp;
};

TEST_F(SubprocessTest, TimeoutExcludesOneSample) {
  std::vector<std::string> names;
  for (int i = 0; i < 10; ++i) names.push_back(i == 4 ? "s4-slow" : "s" + std::to_string(i));
  const Manifest m = manifest(names);
  AdapterSpec spec = parse_adapter_spec("subprocess:/bin/sh " + (tmp / "model.sh").string());
  spec.timeout_ms = 400;
  auto adapter = make_adapter(spec);
  const auto t0 = std::chrono::steady_clock::now();
  const BenchReport r = run_benchmark(m, *adapter, {}, unverified()).report;
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
  EXPECT_EQ(r.cards.size(), 9u);
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0].sample_id, "b4");
  EXPECT_EQ(r.excluded[0].reason, "timeout");
  EXPECT_EQ(r.aggregate.micro_cer, 0.0);
}

TEST_F(SubprocessTest, NonZeroExitIsSampleFailure) {
  const Manifest m = manifest({"a", "b-fail", "c"});
  auto adapter = make_adapter(parse_adapter_spec("subprocess:/bin/sh " + (tmp / "model.sh").string()));
  RunOptions o = unverified();
  o.max_retries = 2;
  const BenchReport r = run_benchmark(m, *adapter, {}, o).report;
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0].reason, "adapter_failure");
  EXPECT_NE(r.excluded[0].message.find("model crashed"), std::string::npos);
}

TEST_F(SubprocessTest, MissingCommandIsUnavailable) {
  const Manifest m = manifest({"a", "b"});
  auto adapter = make_adapter(parse_adapter_spec("subprocess:/nonexistent/ocr-model --fast"));
  EXPECT_EQ(code_of([&] { run_benchmark(m, *adapter, {}, unverified()); }), Errc::kAdapterUnavailable);
}

TEST(HttpAdapter, ProtocolFailuresAndScrubbing) {
  TempDir tmp;
  ::setenv("QALAM_BENCH_KEY", "bench-token-5e1f", 1);
  Manifest m = text_manifest({"سلام", "سلام", "سلام"}, tmp.path());
  for (std::size_t i = 0; i < 3; ++i) write_file(tmp / m.records[i].image_path, "image-" + std::to_string(i));
  const std::string bad = base64_encode({reinterpret_cast<const std::uint8_t*>("image-1"), 7});
  std::string prompt;
  qalam::testing::MockServer s([&](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    prompt = body.value("prompt", "");
    if (body["image"] == bad) {
      res.status = 500;
      res.set_content("denied for " + req.get_header_value("Authorization"), "text/plain");
      return;
    }
    res.set_content(json{{"text", "سلام"}}.dump(), "application/json");
  });
  AdapterSpec spec = parse_adapter_spec("http:" + s.url("/ocr"));
  spec.prompt = "اكتب النص";
  auto adapter = make_adapter(spec);
  const BenchReport r = run_benchmark(m, *adapter, {}, unverified()).report;
  ::unsetenv("QALAM_BENCH_KEY");
  EXPECT_EQ(prompt, "اكتب النص");
  EXPECT_EQ(r.cards.size(), 2u);
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0].reason, "adapter_failure");
  const std::string dumped = json(r).dump();
  EXPECT_NE(dumped.find("denied for Bearer [redacted]"), std::string::npos);
  EXPECT_EQ(dumped.find("bench-token-5e1f"), std::string::npos);
}

TEST(HttpAdapter, UnreachableIsUnavailable) {
  TempDir tmp;
  Manifest m = text_manifest({"سلام"}, tmp.path());
  write_file(tmp / m.records[0].image_path, "x");
  int port = 0;
  {
    qalam::testing::MockServer s([](const auto&, auto&) {});
    port = std::stoi(s.url().substr(s.url().rfind(':') + 1));
  }
  auto adapter = make_adapter(parse_adapter_spec("http:http://127.0.0.1:" + std::to_string(port) + "/ocr"));
  EXPECT_EQ(code_of([&] { run_benchmark(m, *adapter, {}, unverified()); }), Errc::kAdapterUnavailable);
}

BenchReport fake_report(const std::string& model, double cer, const std::string& digest = "d1") {
  BenchReport r;
  r.benchmark_id = "bench";
  r.manifest_digest = digest;
  r.model_id = model;
  r.aggregate = {cer, cer * 2, cer, cer * 2, 10};
  return r;
}

TEST(Compare, SortsAscendingByMicroCer) {
  const Leaderboard lb = compare({fake_report("b", 0.12), fake_report("a", 0.05)});
  ASSERT_EQ(lb.rows.size(), 2u);
  EXPECT_EQ(lb.rows[0].model_id, "a");
  EXPECT_EQ(lb.rows[0].rank, 1u);
  EXPECT_DOUBLE_EQ(lb.rows[0].aggregate.micro_cer, 0.05);
  EXPECT_DOUBLE_EQ(lb.rows[1].aggregate.micro_cer, 0.12);
  EXPECT_EQ(compare({fake_report("solo", 0.3)}).rows.size(), 1u);
}

TEST(Compare, MismatchesAreRejected) {
  EXPECT_EQ(code_of([] { compare({fake_report("a", 0.1), fake_report("b", 0.2, "d2")}); }), Errc::kMismatchedBenchmark);
  BenchReport other = fake_report("b", 0.2);
  other.norm.strip_diacritics = false;
  EXPECT_EQ(code_of([&] { compare({fake_report("a", 0.1), other}); }), Errc::kMismatchedBenchmark);
  EXPECT_EQ(code_of([] { compare({}); }), Errc::kEmptyRun);
}

TEST(Compare, Emitters) {
  const Leaderboard lb = compare({fake_report("model, v2", 0.12), fake_report("a<b>", 0.05)});
  const std::string csv = to_csv(lb);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "rank,model_id,micro_cer,micro_wer,macro_cer,macro_wer,n_samples,n_excluded");
  EXPECT_NE(csv.find("1,a<b>,0.050000,0.100000"), std::string::npos);
  EXPECT_NE(csv.find("2,\"model, v2\",0.120000"), std::string::npos);
  const std::string md = to_markdown(lb);
  EXPECT_NE(md.find("| 1 | a<b> | 0.0500 |"), std::string::npos);
  const json plot = plot_description(lb);
  EXPECT_EQ(plot["labels"], json({"a<b>", "model, v2"}));
  EXPECT_EQ(plot["values"][1], 0.12);
  const std::string svg = render_svg(plot);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("a&lt;b&gt;"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_EQ(to_json(lb)["rows"][0]["rank"], 1);
}

class ImportTest : public ::testing::Test {
 protected:
  void SetUp() override {
    for (int i = 0; i < 5; ++i) {
      const std::string stem = "line_" + std::to_string(i);
      qalam::testing::write_png(tmp / "txt" / (stem + ".png"), 30 * i);
      qalam::testing::write_png(tmp / "jsonl" / (stem + ".png"), 30 * i);
      write_file(tmp / "txt" / (stem + ".txt"), "نص " + std::to_string(i));
      jsonl += json{{"image", stem + ".png"}, {"text", "نص " + std::to_string(i)}}.dump() + "\n";
    }
    write_file(tmp / "jsonl/labels.jsonl", jsonl);
  }
  TempDir tmp;
  std::string jsonl;
};

TEST_F(ImportTest, ImagesAndTextFiles) {
  const Manifest m = import_external(tmp / "txt", ImportFormat::kImagesTxt);
  ASSERT_EQ(m.records.size(), 5u);
  for (const auto& r : m.records) {
    EXPECT_EQ(r.provenance, Provenance::kExternal);
    EXPECT_EQ(m.split_assignments.at(r.sample_id), Split::kBench);
  }
  EXPECT_EQ(m.records[2].ground_truth, "نص 2");
  EXPECT_EQ(m.stats, compute_stats(m));
}

TEST_F(ImportTest, JsonlIsEquivalent) {
  const Manifest a = import_external(tmp / "txt", ImportFormat::kImagesTxt);
  const Manifest b = import_external(tmp / "jsonl", ImportFormat::kImagesJsonl);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(json(a.records[i]), json(b.records[i]));
  EXPECT_EQ(a.stats, b.stats);
}

TEST_F(ImportTest, LayoutErrorsNameTheOffender) {
  fs::remove(tmp / "txt/line_3.txt");
  try {
    import_external(tmp / "txt", ImportFormat::kImagesTxt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kLayout);
    EXPECT_NE(std::string(e.what()).find("line_3"), std::string::npos) << e.what();
  }
  fs::remove(tmp / "jsonl/line_1.png");
  try {
    import_external(tmp / "jsonl", ImportFormat::kImagesJsonl);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kLayout);
    EXPECT_NE(std::string(e.what()).find("line_1.png"), std::string::npos) << e.what();
  }
  write_file(tmp / "jsonl/extra.jsonl", "");
  EXPECT_EQ(code_of([&] { import_external(tmp / "jsonl", ImportFormat::kImagesJsonl); }), Errc::kLayout);
  EXPECT_EQ(code_of([&] { import_external(tmp / "nowhere", ImportFormat::kImagesTxt); }), Errc::kLayout);
  EXPECT_EQ(code_of([] { parse_import_format("tarball"); }), Errc::kUsage);
}

}  // namespace
}  // namespace qalam::bench
