#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <regex>

#include "prefalign/pipeline.hpp"
#include "test_util.hpp"

using namespace prefalign;
namespace fs = std::filesystem;

namespace {

PipelineConfig fixture_config(const fs::path& workdir) {
  auto c = PipelineConfig::load(PREFALIGN_FIXTURES "/pipeline.json");
  c.workdir = workdir;
  return c;
}

// Splits a markdown table row into trimmed cells.
std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::size_t a = line.find('|') + 1;
  while (true) {
    const auto b = line.find('|', a);
    if (b == std::string::npos) break;
    out.push_back(trim(line.substr(a, b - a)));
    a = b + 1;
  }
  return out;
}

}  // namespace

TEST(PipelineConfig, LoadResolvesRelativePaths) {
  const auto c = PipelineConfig::load(PREFALIGN_FIXTURES "/pipeline.json");
  EXPECT_EQ(c.corpus, fs::path(PREFALIGN_FIXTURES) / "corpus");
  EXPECT_EQ(c.k_samples, 3);
  EXPECT_EQ(c.methods.size(), 2u);
  EXPECT_EQ(PipelineConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(PipelineConfig, HashIgnoresPaths) {
  PipelineConfig a, b;
  a.workdir = "/tmp/one";
  b.workdir = "/elsewhere/two";
  b.corpus = "x";
  EXPECT_EQ(a.hash(), b.hash());
  b.seed = 1;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(PipelineConfig, EnvOverridesAndSecrets) {
  PipelineConfig c;
  ::setenv("PREFALIGN_API_KEY", "sekrit", 1);
  ::setenv("PREFALIGN_JUDGE_ENDPOINT", "http://127.0.0.1:9/v1", 1);
  c.apply_env_overrides();
  ::unsetenv("PREFALIGN_API_KEY");
  ::unsetenv("PREFALIGN_JUDGE_ENDPOINT");
  EXPECT_EQ(c.judge.url, "http://127.0.0.1:9/v1");
  EXPECT_EQ(c.generator.api_key, "sekrit");
  EXPECT_EQ(c.to_json().dump().find("sekrit"), std::string::npos);
}

TEST(PipelineConfig, Validation) {
  PipelineConfig c;
  c.k_values = {0};
  EXPECT_THROW(c.validate(), DomainError);
  EXPECT_THROW(PipelineConfig::load("/no/such/config.json"), IoError);
  EXPECT_THROW(parse_stage("deploy"), DomainError);
}

TEST(Stages, MissingPrerequisites) {
  testutil::TempDir dir;
  auto c = fixture_config(dir.path());
  EXPECT_THROW(run_stage(Stage::Train, c), MissingPrerequisite);
  EXPECT_THROW(run_stage(Stage::Pair, c), MissingPrerequisite);
  EXPECT_THROW(run_stage(Stage::Generate, c), MissingPrerequisite);
  EXPECT_THROW(report(dir.path()), MissingPrerequisite);
  EXPECT_THROW(judge_pairwise(c), MissingPrerequisite);
  try {
    run_stage(Stage::Train, c);
    FAIL();
  } catch (const MissingPrerequisite& e) {
    EXPECT_NE(std::string(e.what()).find("pairs file"), std::string::npos);
    EXPECT_EQ(e.category(), ErrorCategory::Domain);
  }
}

TEST(Stages, FullPipelineOnFixtures) {
  testutil::TempDir dir;
  const auto c = fixture_config(dir.path());
  const auto results = run_pipeline(c);
  ASSERT_EQ(results.size(), all_stages().size());

  for (Stage s : all_stages()) {
    const auto mp = dir.path() / artifacts::kManifests / (to_string(s) + ".json");
    ASSERT_TRUE(fs::exists(mp)) << mp;
    const auto m = json::parse(read_file(mp));
    EXPECT_EQ(m.at("config_hash"), c.hash());
    EXPECT_EQ(m.at("seed"), c.seed);
    EXPECT_FALSE(m.at("outputs").empty()) << to_string(s);
    for (const auto& [rel, digest] : m.at("outputs").items()) {
      EXPECT_TRUE(fs::exists(dir.path() / rel)) << rel;
      EXPECT_EQ(digest.get<std::string>().size(), 64u);
    }
  }
  for (auto m : c.methods) {
    EXPECT_TRUE(fs::exists(dir.path() / artifacts::kModels / ("policy_" + to_string(m) + ".ckpt")));
  }
  EXPECT_FALSE(read_jsonl(dir.path() / artifacts::kPairs).empty());

  // rerunning a stage on unchanged inputs reproduces its outputs
  const auto pair_manifest = read_file(dir.path() / artifacts::kManifests / "pair.json");
  run_stage(Stage::Pair, c);
  EXPECT_EQ(read_file(dir.path() / artifacts::kManifests / "pair.json"), pair_manifest);

  const auto metrics = json::parse(read_file(dir.path() / artifacts::kMetrics));
  ASSERT_EQ(metrics.at("variants").size(), c.templates.size());
  for (const auto& row : metrics.at("variants")) {
    if (row.contains("win_loss_tie")) {
      const auto& w = row.at("win_loss_tie");
      EXPECT_NEAR(w.at("win").get<double>() + w.at("loss").get<double>() + w.at("tie").get<double>(), 1.0, 1e-9);
    }
  }

  const std::string text = report(dir.path());
  EXPECT_TRUE(fs::exists(dir.path() / artifacts::kReport));
  EXPECT_NE(text.find("Pass@1"), std::string::npos);
  EXPECT_NE(text.find("Pass@3"), std::string::npos);
  EXPECT_EQ(text.find("Pass@5"), std::string::npos);

  // G-Eval column is the row mean of the seven metric columns
  std::istringstream in(text);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.rfind("| template ", 0) != 0) continue;
    const auto cs = cells(line);
    const std::size_t first = 2 + c.k_values.size();
    if (cs[first] == "-") continue;
    double sum = 0;
    for (std::size_t i = 0; i < kMetricCount; ++i) sum += std::stod(cs[first + i]);
    EXPECT_NEAR(std::stod(cs[first + kMetricCount]), sum / kMetricCount, 0.005 + 1e-9) << line;
    ++rows;
  }
  EXPECT_GT(rows, 0);

  const auto wlt = judge_pairwise(c);
  EXPECT_FALSE(wlt.empty());
  for (const auto& [t, w] : wlt.items()) {
    EXPECT_NEAR(w.at("win").get<double>() + w.at("loss").get<double>() + w.at("tie").get<double>(), 1.0, 1e-9) << t;
  }
}
