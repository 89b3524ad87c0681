#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prefalign/common.hpp"
#include "prefalign/corpus.hpp"
#include "prefalign/genclient.hpp"
#include "prefalign/judge.hpp"
#include "prefalign/pairs.hpp"
#include "prefalign/sandbox.hpp"
#include "prefalign/train.hpp"

namespace prefalign {

enum class Stage { Augment, Generate, Sandbox, Judge, Pair, Train, Eval };
std::string to_string(Stage s);
Stage parse_stage(std::string_view s);
const std::vector<Stage>& all_stages();

struct PipelineConfig {
  std::filesystem::path corpus;   // input corpus directory (source files + manifest.jsonl)
  std::filesystem::path workdir;  // every artifact lives under here
  std::uint64_t seed = 0;
  Profile profile = Profile::Novice;

  AugmentConfig augment;

  EndpointConfig generator{"mock://generator", "simulated-generator", "", 60.0, 0.0};
  EndpointConfig judge{"mock://judge", "simulated-judge", "", 60.0, 0.0};
  std::vector<TemplateId> templates{TemplateId::A, TemplateId::B, TemplateId::C};
  int k_samples = 5;
  unsigned concurrency = 4;
  int max_tokens = 1024;

  ResourceLimits limits;
  std::filesystem::path cxx;
  std::filesystem::path python;
  unsigned sandbox_workers = 0;

  int judge_replicates = 3;
  bool pairwise = true;

  std::size_t max_pairs_per_group = 8;
  SplitRatios ratios;

  ModelConfig model;
  EncodeOptions encode;
  TrainConfig reward_train;
  TrainConfig policy_train;
  std::vector<Method> methods{Method::DPO, Method::DPOF};

  std::vector<int> k_values{1, 3, 5};

  void validate() const;
  /// The API keys are never serialized.
  json to_json() const;
  static PipelineConfig from_json(const json& j);
  /// Reads a JSON config file; relative paths resolve against its directory.
  static PipelineConfig load(const std::filesystem::path& path);
  /// PREFALIGN_API_KEY, PREFALIGN_GEN_ENDPOINT and PREFALIGN_JUDGE_ENDPOINT.
  void apply_env_overrides();
  /// sha256 of the serialized config.
  std::string hash() const;
};

/// Artifact locations relative to the workdir.
namespace artifacts {
inline constexpr const char* kCorpus = "corpus";
inline constexpr const char* kCandidates = "candidates.jsonl";
inline constexpr const char* kGenerationFailures = "generation_failures.jsonl";
inline constexpr const char* kExecutions = "executions.jsonl";
inline constexpr const char* kExecutionTimings = "executions.timing.jsonl";
inline constexpr const char* kJudged = "judged.jsonl";
inline constexpr const char* kLabeled = "labeled.jsonl";
inline constexpr const char* kPairs = "pairs.jsonl";
inline constexpr const char* kSplit = "split.json";
inline constexpr const char* kModels = "models";
inline constexpr const char* kLogs = "logs";
inline constexpr const char* kVerdicts = "verdicts.jsonl";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kReport = "report.md";
inline constexpr const char* kManifests = "manifests";
}  // namespace artifacts

struct StageResult {
  Stage stage = Stage::Augment;
  std::vector<std::filesystem::path> outputs;
  json manifest;
};

/// Runs one stage. Throws MissingPrerequisite naming the first absent input.
/// Outputs are written atomically and recorded with their digests, the
/// config hash and the seed in manifests/<stage>.json.
StageResult run_stage(Stage stage, const PipelineConfig& cfg);
std::vector<StageResult> run_pipeline(const PipelineConfig& cfg);

/// Trains the requested methods on a pairs file. Reuses workdir/split.json
/// when present, otherwise splits with the config seed and writes it.
void train_models(const PipelineConfig& cfg, const std::filesystem::path& pairs_file,
                  const std::vector<Method>& methods);

/// Pairwise judging of every template against the last configured one;
/// writes verdicts.jsonl and returns win/loss/tie rates per template.
json judge_pairwise(const PipelineConfig& cfg);

/// Renders metrics.json into a markdown summary and writes report.md.
std::string report(const std::filesystem::path& workdir);

}  // namespace prefalign
