#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prefalign/common.hpp"
#include "prefalign/corpus.hpp"
#include "prefalign/genclient.hpp"

namespace prefalign {

constexpr std::size_t kMetricCount = 7;

enum class Metric {
  Conciseness,
  Quality,
  Explainability,
  Understandability,
  Completeness,
  Actionability,
  ContextualRelevance
};

const std::array<Metric, kMetricCount>& all_metrics();
std::string to_string(Metric m);

struct RubricProfile {
  Profile profile = Profile::Novice;
  std::array<std::string, kMetricCount> descriptors;

  static const RubricProfile& builtin(Profile p);
};

struct RubricScore {
  std::array<double, kMetricCount> metrics{};
  int replicates = 0;
  double g_eval = 0.0;

  /// Builds a score from per-metric values; g_eval is their mean. Throws
  /// DomainError when a value lies outside [1, 5].
  static RubricScore from_metrics(const std::array<double, kMetricCount>& metrics, int replicates = 1);

  json to_json() const;
  static RubricScore from_json(const json& j);
};

/// Mean of the seven metric values.
double g_eval_of(const std::array<double, kMetricCount>& metrics);

// Delimiters shared by the judge prompts and anything that parses them.
inline constexpr const char* kCodeOpen = "<<<CODE>>>";
inline constexpr const char* kCodeClose = "<<<END CODE>>>";
inline constexpr const char* kFeedbackOpen = "<<<FEEDBACK>>>";
inline constexpr const char* kFeedbackClose = "<<<END FEEDBACK>>>";
inline constexpr const char* kResponseAOpen = "<<<RESPONSE A>>>";
inline constexpr const char* kResponseAClose = "<<<END RESPONSE A>>>";
inline constexpr const char* kResponseBOpen = "<<<RESPONSE B>>>";
inline constexpr const char* kResponseBClose = "<<<END RESPONSE B>>>";

std::string rubric_prompt(const RubricProfile& rubric, const std::string& code,
                          const std::string& feedback);
std::string pairwise_prompt(Profile profile, const std::string& code, const std::string& first,
                            const std::string& second);

/// Strict reply grammar: seven integers 1-5 separated by commas (spaces allowed).
std::array<int, kMetricCount> parse_rubric_reply(const std::string& reply);

enum class VerdictChoice { A, B, Tie };
std::string to_string(VerdictChoice v);
VerdictChoice parse_verdict_choice(std::string_view s);

/// Strict reply grammar: "A", "B" or "Tie" (surrounding whitespace ignored).
VerdictChoice parse_pairwise_reply(const std::string& reply);

/// Maps between presentation order and candidate order. Applying it twice
/// is the identity.
VerdictChoice apply_permutation(VerdictChoice v, bool swapped);

struct Verdict {
  std::string item_id;
  VerdictChoice choice = VerdictChoice::Tie;  // A always denotes the first candidate
  bool swapped = false;                       // true when the second candidate was shown first
  VerdictChoice raw = VerdictChoice::Tie;     // judge output in presentation order

  json to_json() const;
  static Verdict from_json(const json& j);
};

struct WinLossTie {
  double win = 0.0;
  double loss = 0.0;
  double tie = 0.0;
  std::size_t count = 0;

  json to_json() const;
};

struct JudgeOptions {
  int replicates = 3;
  RetryPolicy retry;  // transport retries per call
  int malformed_retries = 3;
  int max_tokens = 64;
};

/// Throws JudgeUnavailable when the endpoint keeps failing and MalformedVerdict
/// when replies never match the schema within the retry budget.
RubricScore score_rubric(ChatEndpoint& endpoint, const FeedbackCandidate& feedback,
                         const RubricProfile& rubric, const std::string& code,
                         const JudgeOptions& opts = {});

Verdict pairwise_compare(ChatEndpoint& endpoint, const SourceProgram& code,
                         const FeedbackCandidate& fa, const FeedbackCandidate& fb,
                         std::uint64_t seed, const JudgeOptions& opts = {});

WinLossTie aggregate_verdicts(const std::vector<Verdict>& verdicts);
WinLossTie aggregate_choices(const std::vector<VerdictChoice>& choices);

}  // namespace prefalign
