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

#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <opencv2/imgproc.hpp>

#include "qalam/dataset.hpp"
#include "qalam/errors.hpp"
#include "qalam/forge.hpp"
#include "qalam/io.hpp"
#include "qalam/rng.hpp"
#include "qalam/unicode.hpp"
#include "support/fixtures.hpp"
#include "support/forge_fixture.hpp"
#include "support/oracles.hpp"

namespace qalam::forge {
namespace {

namespace fs = std::filesystem;
using qalam::testing::plain_config;
using qalam::testing::TempDir;
using qalam::testing::with_corpus;

bool has_diag(const std::vector<std::string>& diags, const std::string& needle) {
  return std::any_of(diags.begin(), diags.end(), [&](const auto& d) { return d.find(needle) != std::string::npos; });
}

std::string strip_space(const std::string& s) {
  std::u32string out;
  for (char32_t c : unicode::decode(s))
    if (!unicode::is_space(c)) out.push_back(c);
  return unicode::encode(out);
}

ForgeConfig all_distortions(std::uint64_t seed) {
  ForgeConfig c = plain_config(seed);
  auto& d = c.distortions;
  for (Distortion* x : {&d.perspective_warp, &d.rotation, &d.gaussian_blur, &d.gaussian_noise, &d.brightness,
                        &d.contrast, &d.jpeg_artifacts})
    x->p = 0.7;
  c.layout.mode = LayoutMode::kPage;
  c.layout.height = 260;
  c.layout.max_lines = 4;
  c.layout.max_words = 14;
  c.layout.alignment = Alignment::kJustified;
  return c;
}

TEST(ForgeConfigJson, RoundTrip) {
  ForgeConfig c = all_distortions(5);
  c.backgrounds.push_back({Background::Kind::kImage, 0, 0, "/tmp/parchment.png", 2.0});
  nlohmann::json j = c;
  nlohmann::json back = j.get<ForgeConfig>();
  EXPECT_EQ(j, back);
}

TEST(ForgeConfigJson, UnknownKeysRejected) {
  nlohmann::json j = plain_config();
  j["layout"]["colour"] = "red";
  EXPECT_THROW(j.get<ForgeConfig>(), Error);
  nlohmann::json k = plain_config();
  k["distortions"]["swirl"] = {{"p", 0.5}};
  EXPECT_THROW(k.get<ForgeConfig>(), Error);
}

TEST(ForgeConfigJson, RelativePathsResolveAgainstConfigFile) {
  TempDir t;
  write_file(t / "corpus.txt", "كتب\n");
  write_file(t / "cfg.json", R"({"corpus_path": "corpus.txt", "fonts": [{"path": ")" QALAM_DEFAULT_FONT R"("}]})");
  ForgeConfig c = load_config(t / "cfg.json");
  EXPECT_EQ(fs::path(c.corpus_path), t / "corpus.txt");
  EXPECT_EQ(c.fonts.at(0).path, QALAM_DEFAULT_FONT);
}

TEST(ValidateConfig, CleanConfigHasNoDiagnostics) {
  EXPECT_EQ(validate_config(plain_config()), std::vector<std::string>{});
  EXPECT_EQ(validate_config(all_distortions(1)), std::vector<std::string>{});
}

TEST(ValidateConfig, EmptyFonts) {
  ForgeConfig c = plain_config();
  c.fonts.clear();
  EXPECT_EQ(validate_config(c), std::vector<std::string>{"fonts: empty"});
}

TEST(ValidateConfig, ProbabilityOutOfRange) {
  ForgeConfig c = plain_config();
  c.distortions.rotation.p = 1.5;
  EXPECT_EQ(validate_config(c), std::vector<std::string>{"distortions.rotation.p out of [0,1]"});
}

TEST(ValidateConfig, LatinOnlyFont) {
  ForgeConfig c = plain_config();
  c.fonts = {{QALAM_LATIN_FONT, 1.0}};
  auto d = validate_config(c);
  EXPECT_TRUE(has_diag(d, "font lacks Arabic presentation forms")) << ::testing::PrintToString(d);
}

TEST(ValidateConfig, CollectsEveryProblem) {
  ForgeConfig c = plain_config();
  c.font_size_range = {40, 20};
  c.distortions.gaussian_blur.range = {2, 1};
  c.backgrounds.push_back({Background::Kind::kImage, 0, 0, "/nonexistent.png", 1});
  c.corpus_path = "/nonexistent/corpus.txt";
  c.output.format = "jpeg";
  auto d = validate_config(c);
  EXPECT_TRUE(has_diag(d, "font_size_range: min > max"));
  EXPECT_TRUE(has_diag(d, "distortions.gaussian_blur.range: min > max"));
  EXPECT_TRUE(has_diag(d, "backgrounds[1]: cannot read image"));
  EXPECT_TRUE(has_diag(d, "corpus_path"));
  EXPECT_TRUE(has_diag(d, "output.format"));
}

TEST(ValidateConfig, ConstructorRefusesInvalidConfig) {
  ForgeConfig c = plain_config();
  c.fonts.clear();
  try {
    Forge f(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kConfig);
  }
}

TEST(GenerateSample, Deterministic) {
  Forge a(all_distortions(9)), b(all_distortions(9));
  for (std::size_t i : {0u, 1u, 17u}) {
    Sample x = a.generate(i), y = a.generate(i), z = b.generate(i);
    EXPECT_EQ(nlohmann::json(x.record).dump(), nlohmann::json(y.record).dump());
    EXPECT_EQ(x.png, y.png);
    EXPECT_EQ(x.png, z.png);
    EXPECT_EQ(x.record.render_meta->sample_seed, derive_seed(9, i));
    EXPECT_EQ(x.record.content_hash, sha256_hex(x.png));
  }
}

TEST(GenerateSample, CleanBaseline) {
  TempDir t;
  ForgeConfig c = with_corpus(plain_config(), t.path(), "كتب\n");
  c.backgrounds = {{Background::Kind::kSolid, 255, 255, "", 1}};
  Sample s = Forge(c).generate(0);
  EXPECT_EQ(s.record.ground_truth, "كتب");
  ASSERT_EQ(s.record.line_boxes.size(), 1u);
  ASSERT_EQ(s.record.word_boxes.size(), 1u);
  EXPECT_TRUE(s.record.render_meta->distortions.empty());
  EXPECT_EQ(s.record.render_meta->background, "solid:255");

  // Ink exists and sits inside the line box.
  cv::Mat img = cv::imdecode(std::vector<std::uint8_t>(s.png.begin(), s.png.end()), cv::IMREAD_GRAYSCALE);
  ASSERT_FALSE(img.empty());
  cv::Mat ink = img < 200;
  ASSERT_GT(cv::countNonZero(ink), 20);
  const cv::Rect inked = cv::boundingRect(ink);
  const auto& b = s.record.line_boxes[0];
  EXPECT_GE(inked.x, b.x - 1);
  EXPECT_GE(inked.y, b.y - 1);
  EXPECT_LE(inked.x + inked.width, b.right() + 1);
  EXPECT_LE(inked.y + inked.height, b.bottom() + 1);
}

TEST(GenerateSample, HarakatKeptInGroundTruth) {
  TempDir t;
  ForgeConfig c = with_corpus(plain_config(), t.path(), "كَتَبَ الوَلَدُ\n");
  EXPECT_EQ(Forge(c).generate(3).record.ground_truth, "كَتَبَ الوَلَدُ");
}

TEST(GenerateSample, TextTooLong) {
  TempDir t;
  ForgeConfig c = with_corpus(plain_config(), t.path(), "الطوموبيل ديالي خسرات فالطريق ديال الدار البيضاء\n");
  c.layout.width = 120;
  c.layout.max_words = 0;
  try {
    Forge(c).generate(0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kTextTooLong);
  }
}

TEST(GenerateSample, WordBoxesReproduceGroundTruth) {
  Forge f(all_distortions(21));
  for (std::size_t i = 0; i < 40; ++i) {
    Sample s = f.generate(i);
    const auto& r = s.record;
    std::string joined;
    for (const auto& w : r.word_boxes) joined += w.word;
    EXPECT_EQ(joined, strip_space(r.ground_truth)) << i;
    EXPECT_EQ(r.line_boxes.size(), static_cast<std::size_t>(std::count(r.ground_truth.begin(), r.ground_truth.end(), '\n') + 1));
    for (const auto& b : r.line_boxes) {
      EXPECT_GE(b.x, 0);
      EXPECT_GE(b.y, 0);
      EXPECT_LE(b.right(), r.width);
      EXPECT_LE(b.bottom(), r.height);
    }
  }
}

TEST(GenerateSample, RotationBoxesMatchIndependentRotation) {
  ForgeConfig flat = plain_config(33);
  flat.layout.max_words = 5;
  flat.distortions.rotation = {0.0, {-20, 20}};
  ForgeConfig turned = flat;
  turned.distortions.rotation.p = 1.0;
  Forge f0(flat), f1(turned);
  for (std::size_t i = 0; i < 30; ++i) {
    const SampleRecord r0 = f0.generate(i).record, r1 = f1.generate(i).record;
    ASSERT_EQ(r1.render_meta->distortions.size(), 1u);
    const double deg = r1.render_meta->distortions[0].params.at("degrees");
    const double rad = deg * M_PI / 180;
    EXPECT_NEAR(r1.width, r0.width * std::abs(std::cos(rad)) + r0.height * std::abs(std::sin(rad)), 1.0);
    ASSERT_EQ(r0.line_boxes.size(), r1.line_boxes.size());
    for (std::size_t k = 0; k < r0.line_boxes.size(); ++k) {
      const auto& b = r0.line_boxes[k];
      const auto want = qalam::testing::rotated_hull(b.x, b.y, b.right(), b.bottom(), deg, r0.width / 2.0,
                                                     r0.height / 2.0, r1.width / 2.0, r1.height / 2.0);
      const auto& got = r1.line_boxes[k];
      EXPECT_LE(std::abs(got.x - std::max(0.0, want[0])), 1.0) << i;
      EXPECT_LE(std::abs(got.y - std::max(0.0, want[1])), 1.0) << i;
      EXPECT_LE(std::abs(got.right() - std::min<double>(r1.width, want[2])), 1.0) << i;
      EXPECT_LE(std::abs(got.bottom() - std::min<double>(r1.height, want[3])), 1.0) << i;
    }
  }
}

TEST(GenerateDataset, ExactCountIndependentOfJobs) {
  TempDir t;
  ForgeConfig c = all_distortions(4);
  c.output.count = 24;
  Forge f(c);
  Manifest a = generate_dataset(f, t / "a", {1, false, {}});
  Manifest b = generate_dataset(f, t / "b", {6, false, {}});
  EXPECT_EQ(a.records.size(), 24u);
  EXPECT_EQ(read_file(t / "a/manifest.jsonl"), read_file(t / "b/manifest.jsonl"));
  EXPECT_EQ(read_file(t / "a/stats.json"), read_file(t / "b/stats.json"));
  for (const auto& r : a.records) EXPECT_EQ(read_file(t / "a" / r.image_path), read_file(t / "b" / r.image_path));
  EXPECT_TRUE(verify(read_manifest(t / "a")).empty());
  EXPECT_EQ(a.stats.samples, 24u);
}

TEST(GenerateDataset, SkippedSamplesAreReplaced) {
  TempDir t;
  ForgeConfig c = with_corpus(plain_config(2), t.path(),
                              "كتب\nالطوموبيل ديالي خسرات فالطريق ديال الدار البيضاء وبقينا تما سيمانة كاملة\n");
  c.layout.max_words = 0;
  c.layout.width = 360;
  c.output.count = 12;
  Manifest m = generate_dataset(Forge(c), t / "out", {3, false, {}});
  EXPECT_EQ(m.records.size(), 12u);
  for (const auto& r : m.records) EXPECT_EQ(r.ground_truth, "كتب");
  EXPECT_FALSE(m.generator.at("skipped").empty());
}

TEST(GenerateDataset, RefusesExistingOutput) {
  TempDir t;
  ForgeConfig c = plain_config();
  c.output.count = 2;
  Forge f(c);
  generate_dataset(f, t / "o", {});
  try {
    generate_dataset(f, t / "o", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kOutputExists);
  }
  EXPECT_EQ(generate_dataset(f, t / "o", {1, true, {}}).records.size(), 2u);
}

TEST(GenerateDataset, DifferentSeedsGiveDisjointIds) {
  TempDir t;
  ForgeConfig a = plain_config(100), b = plain_config(101);
  a.output.count = b.output.count = 20;
  std::set<std::string> ids;
  for (const auto& r : generate_dataset(Forge(a), t / "a", {}).records) ids.insert(r.sample_id);
  for (const auto& r : generate_dataset(Forge(b), t / "b", {}).records) EXPECT_FALSE(ids.contains(r.sample_id));
}

TEST(GenerateDataset, GeneratorEchoIsKept) {
  TempDir t;
  ForgeConfig c = plain_config();
  c.output.count = 1;
  generate_dataset(Forge(c), t / "o", {1, false, {{"tool", "qalam"}, {"seed", 1}}});
  auto m = read_manifest(t / "o");
  EXPECT_EQ(m.generator.at("tool"), "qalam");
  EXPECT_EQ(m.generator.at("seed"), 1);
}

}  // namespace
}  // namespace qalam::forge
