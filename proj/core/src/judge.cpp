#include "prefalign/judge.hpp"

#include <cctype>
#include <numeric>

namespace prefalign {

const std::array<Metric, kMetricCount>& all_metrics() {
  static const std::array<Metric, kMetricCount> m{
      Metric::Conciseness,   Metric::Quality,       Metric::Explainability,
      Metric::Understandability, Metric::Completeness, Metric::Actionability,
      Metric::ContextualRelevance};
  return m;
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::Conciseness: return "Conciseness";
    case Metric::Quality: return "Quality";
    case Metric::Explainability: return "Explainability";
    case Metric::Understandability: return "Understandability";
    case Metric::Completeness: return "Completeness";
    case Metric::Actionability: return "Actionability";
    case Metric::ContextualRelevance: return "Contextual Relevance";
  }
  return "";
}

const RubricProfile& RubricProfile::builtin(Profile p) {
  static const RubricProfile novice{
      Profile::Novice,
      {"Uses simple words and short sentences; avoids jargon and branches.",
       "Technically correct and prefers safe, beginner-friendly patterns; avoids clever tricks.",
       "Plain-language reason for each change; one-sentence \"why this works\" per step.",
       "Small, linear steps with exact file/line or code highlights.",
       "Fixes the bug plus common beginner pitfalls; includes basic validation and edge cases.",
       "Copy-pasteable code and a quick verification step with expected output.",
       "States language/framework/version and scope where the fix applies."}};
  static const RubricProfile experienced{
      Profile::Experienced,
      {"Maximize signal-to-noise; minimal prose; diff-first; omit obvious context.",
       "Correct, robust, idiomatic, and composable within the existing codebase.",
       "Short design rationale with key trade-offs and reason for selection.",
       "Precise pointers to file/symbol/line; patch-style references.",
       "Pre/post-conditions, edge cases, compatibility notes, and failure modes.",
       "Tooling-integrated apply/verify steps (test/lint/CI) plus rollback plan.",
       "Consistent with architecture, performance/observability constraints, and deployment."}};
  return p == Profile::Novice ? novice : experienced;
}

double g_eval_of(const std::array<double, kMetricCount>& metrics) {
  return std::accumulate(metrics.begin(), metrics.end(), 0.0) / static_cast<double>(kMetricCount);
}

RubricScore RubricScore::from_metrics(const std::array<double, kMetricCount>& metrics, int replicates) {
  for (double v : metrics) {
    if (!(v >= 1.0 && v <= 5.0)) throw DomainError("rubric metric outside [1, 5]");
  }
  RubricScore s;
  s.metrics = metrics;
  s.replicates = replicates;
  s.g_eval = g_eval_of(metrics);
  return s;
}

json RubricScore::to_json() const {
  json m = json::object();
  for (std::size_t i = 0; i < kMetricCount; ++i) m[to_string(all_metrics()[i])] = metrics[i];
  return {{"metrics", m}, {"replicates", replicates}, {"g_eval", g_eval}};
}

RubricScore RubricScore::from_json(const json& j) {
  std::array<double, kMetricCount> m{};
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    m[i] = j.at("metrics").at(to_string(all_metrics()[i])).get<double>();
  }
  return from_metrics(m, j.value("replicates", 1));
}

namespace {

std::string profile_word(Profile p) { return p == Profile::Novice ? "novice" : "experienced"; }

}  // namespace

std::string rubric_prompt(const RubricProfile& rubric, const std::string& code,
                          const std::string& feedback) {
  std::string out = "You are an impartial judge of programming feedback written for a " +
                    profile_word(rubric.profile) +
                    " programmer.\nScore the feedback on each metric from 1 (poor) to 5 (excellent) "
                    "using these descriptors:\n";
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    out += std::to_string(i + 1) + ". " + to_string(all_metrics()[i]) + ": " + rubric.descriptors[i] + "\n";
  }
  out += "\nProgrammer's code:\n" + std::string(kCodeOpen) + "\n" + code + "\n" + kCodeClose + "\n";
  out += "\nFeedback:\n" + std::string(kFeedbackOpen) + "\n" + feedback + "\n" + kFeedbackClose + "\n";
  out += "\nReply with exactly one line containing seven integers between 1 and 5 separated by "
         "commas, in the metric order above, and nothing else.";
  return out;
}

std::string pairwise_prompt(Profile profile, const std::string& code, const std::string& first,
                            const std::string& second) {
  std::string out = "You are an impartial judge comparing two pieces of feedback written for a " +
                    profile_word(profile) +
                    " programmer about the same code. Judge which feedback better helps the "
                    "programmer fix the code.\n";
  out += "\nProgrammer's code:\n" + std::string(kCodeOpen) + "\n" + code + "\n" + kCodeClose + "\n";
  out += "\n" + std::string(kResponseAOpen) + "\n" + first + "\n" + kResponseAClose + "\n";
  out += "\n" + std::string(kResponseBOpen) + "\n" + second + "\n" + kResponseBClose + "\n";
  out += "\nReply with exactly one token: A, B, or Tie.";
  return out;
}

std::array<int, kMetricCount> parse_rubric_reply(const std::string& reply) {
  const std::string s = trim(reply);
  std::array<int, kMetricCount> out{};
  std::size_t idx = 0, pos = 0;
  auto skip_spaces = [&] {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  };
  while (true) {
    skip_spaces();
    if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos]))) {
      throw MalformedVerdict("expected an integer in rubric reply '" + s + "'");
    }
    const int v = s[pos] - '0';
    ++pos;
    if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      throw MalformedVerdict("rubric score out of range in '" + s + "'");
    }
    if (v < 1 || v > 5) throw MalformedVerdict("rubric score out of range in '" + s + "'");
    if (idx >= kMetricCount) throw MalformedVerdict("too many scores in '" + s + "'");
    out[idx++] = v;
    skip_spaces();
    if (pos == s.size()) break;
    if (s[pos] != ',') throw MalformedVerdict("unexpected character in rubric reply '" + s + "'");
    ++pos;
  }
  if (idx != kMetricCount) throw MalformedVerdict("expected seven scores in '" + s + "'");
  return out;
}

std::string to_string(VerdictChoice v) {
  switch (v) {
    case VerdictChoice::A: return "A";
    case VerdictChoice::B: return "B";
    case VerdictChoice::Tie: return "Tie";
  }
  return "Tie";
}

VerdictChoice parse_verdict_choice(std::string_view s) {
  if (s == "A") return VerdictChoice::A;
  if (s == "B") return VerdictChoice::B;
  if (s == "Tie") return VerdictChoice::Tie;
  throw MalformedVerdict("expected A, B or Tie, got '" + std::string(s) + "'");
}

VerdictChoice parse_pairwise_reply(const std::string& reply) { return parse_verdict_choice(trim(reply)); }

VerdictChoice apply_permutation(VerdictChoice v, bool swapped) {
  if (!swapped || v == VerdictChoice::Tie) return v;
  return v == VerdictChoice::A ? VerdictChoice::B : VerdictChoice::A;
}

json Verdict::to_json() const {
  return {{"item_id", item_id},
          {"verdict", prefalign::to_string(choice)},
          {"swapped", swapped},
          {"raw", prefalign::to_string(raw)}};
}

Verdict Verdict::from_json(const json& j) {
  Verdict v;
  v.item_id = j.at("item_id").get<std::string>();
  v.choice = parse_verdict_choice(j.at("verdict").get<std::string>());
  v.swapped = j.value("swapped", false);
  v.raw = parse_verdict_choice(j.value("raw", prefalign::to_string(apply_permutation(v.choice, v.swapped))));
  return v;
}

json WinLossTie::to_json() const {
  return {{"win", win}, {"loss", loss}, {"tie", tie}, {"count", count}};
}

namespace {

// One judge call with transport retries, then schema retries around it.
template <class Parse>
auto judged_call(ChatEndpoint& endpoint, const ChatRequest& req, const JudgeOptions& opts, Parse parse) {
  const int budget = std::max(1, opts.malformed_retries);
  std::string last;
  for (int attempt = 0; attempt < budget; ++attempt) {
    std::string reply;
    try {
      reply = complete_with_retry(endpoint, req, opts.retry);
    } catch (const TransportError& e) {
      throw JudgeUnavailable(e.what());
    } catch (const RateLimited& e) {
      throw JudgeUnavailable(e.what());
    } catch (const MalformedResponse& e) {
      last = e.what();
      continue;
    }
    try {
      return parse(reply);
    } catch (const MalformedVerdict& e) {
      last = e.what();
    }
  }
  throw MalformedVerdict("no well-formed verdict after " + std::to_string(budget) + " attempts: " + last);
}

}  // namespace

RubricScore score_rubric(ChatEndpoint& endpoint, const FeedbackCandidate& feedback,
                         const RubricProfile& rubric, const std::string& code,
                         const JudgeOptions& opts) {
  if (opts.replicates < 1) throw PreconditionViolation("replicates must be >= 1");
  const std::string prompt = rubric_prompt(rubric, code, feedback.feedback_text);
  std::array<double, kMetricCount> sum{};
  for (int r = 0; r < opts.replicates; ++r) {
    ChatRequest req;
    req.messages = {{"user", prompt}};
    req.temperature = 0.0;
    req.max_tokens = opts.max_tokens;
    req.seed = derive_seed(static_cast<std::uint64_t>(r), feedback.id);
    const auto scores = judged_call(endpoint, req, opts, parse_rubric_reply);
    for (std::size_t i = 0; i < kMetricCount; ++i) sum[i] += scores[i];
  }
  for (auto& v : sum) v /= opts.replicates;
  return RubricScore::from_metrics(sum, opts.replicates);
}

Verdict pairwise_compare(ChatEndpoint& endpoint, const SourceProgram& code,
                         const FeedbackCandidate& fa, const FeedbackCandidate& fb,
                         std::uint64_t seed, const JudgeOptions& opts) {
  if (fa.program_id != fb.program_id) {
    throw PreconditionViolation("pairwise comparison across different programs");
  }
  Verdict v;
  v.item_id = fa.id + "|" + fb.id;
  v.swapped = (derive_seed(seed, v.item_id) & 1u) != 0;
  const auto& first = v.swapped ? fb : fa;
  const auto& second = v.swapped ? fa : fb;
  ChatRequest req;
  req.messages = {{"user", pairwise_prompt(fa.profile, code.text, first.feedback_text, second.feedback_text)}};
  req.temperature = 0.0;
  req.max_tokens = opts.max_tokens;
  req.seed = seed;
  v.raw = judged_call(endpoint, req, opts, parse_pairwise_reply);
  v.choice = apply_permutation(v.raw, v.swapped);
  return v;
}

WinLossTie aggregate_choices(const std::vector<VerdictChoice>& choices) {
  if (choices.empty()) throw EmptyInput("no verdicts to aggregate");
  std::size_t a = 0, b = 0, t = 0;
  for (auto c : choices) {
    if (c == VerdictChoice::A) ++a;
    else if (c == VerdictChoice::B) ++b;
    else ++t;
  }
  const double n = static_cast<double>(choices.size());
  return {static_cast<double>(a) / n, static_cast<double>(b) / n, static_cast<double>(t) / n, choices.size()};
}

WinLossTie aggregate_verdicts(const std::vector<Verdict>& verdicts) {
  std::vector<VerdictChoice> c;
  c.reserve(verdicts.size());
  for (const auto& v : verdicts) c.push_back(v.choice);
  return aggregate_choices(c);
}

}  // namespace prefalign
