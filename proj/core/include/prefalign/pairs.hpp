#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prefalign/common.hpp"
#include "prefalign/genclient.hpp"
#include "prefalign/judge.hpp"
#include "prefalign/sandbox.hpp"

namespace prefalign {

inline constexpr double kAcceptThreshold = 4.0;

enum class Label { Accepted, Rejected };
std::string to_string(Label l);
Label parse_label(std::string_view s);

/// Ran, every test passed, and G-Eval of at least 4.0.
bool accepts(ExecStatus status, bool all_passed, double g_eval);

struct LabeledCandidate {
  FeedbackCandidate candidate;
  std::string root_program_id;  // original program the candidate's program descends from
  ExecutionOutcome execution;
  TestReport tests;
  RubricScore rubric;
  Label label = Label::Rejected;

  const std::string& candidate_id() const { return candidate.id; }

  json to_json() const;
  static LabeledCandidate from_json(const json& j);
};

/// Throws PreconditionViolation when the test report's length disagrees with
/// the outcome (a compile error must fail every case).
LabeledCandidate label_candidate(const FeedbackCandidate& candidate, const ExecutionOutcome& execution,
                                 const TestReport& tests, const RubricScore& rubric,
                                 std::string root_program_id = {});

struct PreferencePair {
  std::string pair_id;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::string program_id;
  std::string root_program_id;
  json metadata = json::object();

  /// Throws DomainError when chosen == rejected or a field is empty.
  void validate() const;
  json to_json() const;
  static PreferencePair from_json(const json& j);
};

struct PairOptions {
  std::size_t max_pairs_per_group = 8;
};

/// Groups by (program, template, profile) and pairs accepted with rejected
/// candidates in order of (i + j, i), skipping identical texts, up to the cap.
std::vector<PreferencePair> build_pairs(const std::vector<LabeledCandidate>& candidates,
                                        const PairOptions& opts = {});

struct SplitRatios {
  double train = 0.85;
  double validation = 0.05;
  double test = 0.10;

  void validate() const;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  json to_json() const;
  static DatasetSplit from_json(const json& j);
};

/// Shuffles root-program groups by seed and slices them contiguously; a group
/// goes to the partition containing its first pair's offset.
DatasetSplit split_dataset(const std::vector<PreferencePair>& pairs, const SplitRatios& ratios,
                           std::uint64_t seed);

/// Selects the pairs named by `ids`, in the order given.
std::vector<PreferencePair> select_pairs(const std::vector<PreferencePair>& pairs,
                                         const std::vector<std::string>& ids);

/// Deterministic Fisher-Yates permutation of 0..n-1 (independent of the
/// standard library's distribution implementations).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace prefalign
