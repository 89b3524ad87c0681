#include <gtest/gtest.h>

#include "prefalign/judge.hpp"
#include "test_util.hpp"

using namespace prefalign;
using testutil::LambdaEndpoint;

namespace {

FeedbackCandidate fb(std::string id, std::string text) {
  FeedbackCandidate c;
  c.id = std::move(id);
  c.program_id = "p";
  c.feedback_text = std::move(text);
  return c;
}

SourceProgram prog() {
  SourceProgram p;
  p.id = "p";
  p.text = "int main() {}";
  return p;
}

std::string presented(const ChatRequest& r, const char* open, const char* close) {
  const auto& s = r.messages.back().content;
  const auto a = s.find(open) + std::string(open).size();
  return s.substr(a, s.find(close) - a);
}

}  // namespace

TEST(Rubric, ConstantJudge) {
  LambdaEndpoint ep([](const ChatRequest& r, int) {
    EXPECT_EQ(r.temperature, 0.0);
    return std::string("3,3,3,3,3,3,3");
  });
  const auto s = score_rubric(ep, fb("a", "text"), RubricProfile::builtin(Profile::Novice), "code");
  for (double m : s.metrics) EXPECT_EQ(m, 3.0);
  EXPECT_EQ(s.g_eval, 3.0);
  EXPECT_EQ(s.replicates, 3);
  EXPECT_EQ(ep.calls(), 3);
}

TEST(Rubric, ReplicateMean) {
  LambdaEndpoint ep([](const ChatRequest&, int call) {
    return std::to_string(3 + call) + ", 1, 1, 1, 1, 1, 1";
  });
  const auto s = score_rubric(ep, fb("a", "t"), RubricProfile::builtin(Profile::Experienced), "c");
  EXPECT_EQ(s.metrics[0], 4.0);
}

TEST(Rubric, GEvalOfBaselineNoviceRow) {
  const std::array<double, kMetricCount> row{3.09, 3.30, 2.61, 3.61, 2.69, 3.14, 3.16};
  EXPECT_NEAR(g_eval_of(row), 3.09, 0.005);
  const auto s = RubricScore::from_metrics(row);
  EXPECT_DOUBLE_EQ(s.g_eval, g_eval_of(row));
  EXPECT_THROW(RubricScore::from_metrics({0.5, 3, 3, 3, 3, 3, 3}), DomainError);
}

TEST(Rubric, StrictReplyGrammar) {
  EXPECT_EQ(parse_rubric_reply(" 1, 2,3 ,4,5,1,2 \n"), (std::array<int, 7>{1, 2, 3, 4, 5, 1, 2}));
  for (const char* bad : {"1,2,3,4,5,1", "1,2,3,4,5,1,2,3", "0,2,3,4,5,1,2", "6,2,3,4,5,1,2", "a,2,3,4,5,1,2",
                          "Scores: 1,2,3,4,5,1,2", "1;2;3;4;5;1;2", "1.5,2,3,4,5,1,2", ""}) {
    EXPECT_THROW(parse_rubric_reply(bad), MalformedVerdict) << bad;
  }
}

TEST(Rubric, MalformedRepliesRetriedThenFail) {
  LambdaEndpoint flaky([](const ChatRequest&, int call) {
    return call % 2 == 0 ? std::string("nonsense") : std::string("4,4,4,4,4,4,4");
  });
  JudgeOptions opts;
  opts.replicates = 2;
  EXPECT_EQ(score_rubric(flaky, fb("a", "t"), RubricProfile::builtin(Profile::Novice), "c", opts).g_eval, 4.0);
  EXPECT_EQ(flaky.calls(), 4);

  LambdaEndpoint broken([](const ChatRequest&, int) { return std::string("??"); });
  EXPECT_THROW(score_rubric(broken, fb("a", "t"), RubricProfile::builtin(Profile::Novice), "c"), MalformedVerdict);
  EXPECT_EQ(broken.calls(), 3);
}

TEST(Rubric, TransportFailureIsJudgeUnavailable) {
  LambdaEndpoint down([](const ChatRequest&, int) -> std::string { throw TransportError("x"); });
  JudgeOptions opts;
  opts.retry.sleeper = [](double) {};
  try {
    score_rubric(down, fb("a", "t"), RubricProfile::builtin(Profile::Novice), "c", opts);
    FAIL();
  } catch (const JudgeUnavailable& e) {
    EXPECT_EQ(e.category(), ErrorCategory::Environment);
  }
}

TEST(Rubric, PromptCarriesDescriptors) {
  const auto& r = RubricProfile::builtin(Profile::Novice);
  const auto p = rubric_prompt(r, "CODE", "FEEDBACK");
  for (const auto& d : r.descriptors) EXPECT_NE(p.find(d), std::string::npos);
  EXPECT_NE(r.descriptors[0], RubricProfile::builtin(Profile::Experienced).descriptors[0]);
}

TEST(Pairwise, IdenticalFeedbackTiesWithHonestJudge) {
  SimulatedJudge judge;
  const auto a = fb("a", "Check the bounds before you index the array.");
  auto b = a;
  b.id = "b";
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EXPECT_EQ(pairwise_compare(judge, prog(), a, b, seed).choice, VerdictChoice::Tie);
  }
}

TEST(Pairwise, PositionBiasIsMappedBack) {
  // always prefers whatever is shown first
  LambdaEndpoint first([](const ChatRequest&, int) { return std::string("A"); });
  const auto a = fb("a", "one"), b = fb("b", "two");
  bool saw_swap = false, saw_plain = false;
  for (std::uint64_t seed = 0; seed < 32; ++seed) {
    const auto v = pairwise_compare(first, prog(), a, b, seed);
    EXPECT_EQ(v.raw, VerdictChoice::A);
    EXPECT_EQ(v.choice, v.swapped ? VerdictChoice::B : VerdictChoice::A);
    (v.swapped ? saw_swap : saw_plain) = true;
  }
  EXPECT_TRUE(saw_swap && saw_plain);
}

TEST(Pairwise, VerdictTracksContentNotPosition) {
  LambdaEndpoint likes_two([](const ChatRequest& r, int) {
    return presented(r, kResponseAOpen, kResponseAClose).find("two") != std::string::npos ? std::string("A")
                                                                                         : std::string("B");
  });
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    EXPECT_EQ(pairwise_compare(likes_two, prog(), fb("a", "one"), fb("b", "two"), seed).choice, VerdictChoice::B);
  }
}

TEST(Pairwise, ReproducibleAcrossReruns) {
  SimulatedJudge judge;
  std::vector<Verdict> first, second;
  for (int i = 0; i < 100; ++i) {
    const auto a = fb("a" + std::to_string(i), "Guidance number " + std::to_string(i) + " with a hint.");
    const auto b = fb("b" + std::to_string(i), "Try " + std::string(static_cast<std::size_t>(i % 7 + 1), 'x'));
    first.push_back(pairwise_compare(judge, prog(), a, b, 5));
    second.push_back(pairwise_compare(judge, prog(), a, b, 5));
  }
  for (int i = 0; i < 100; ++i) EXPECT_EQ(first[i].to_json(), second[i].to_json());
}

TEST(Pairwise, PreconditionsAndGrammar) {
  SimulatedJudge judge;
  auto other = fb("b", "x");
  other.program_id = "q";
  EXPECT_THROW(pairwise_compare(judge, prog(), fb("a", "x"), other, 0), PreconditionViolation);
  EXPECT_EQ(parse_pairwise_reply(" Tie\n"), VerdictChoice::Tie);
  EXPECT_THROW(parse_pairwise_reply("a"), MalformedVerdict);
  EXPECT_THROW(parse_pairwise_reply("A."), MalformedVerdict);
}

TEST(Verdicts, PermutationIsInvolution) {
  for (auto v : {VerdictChoice::A, VerdictChoice::B, VerdictChoice::Tie}) {
    for (bool s : {false, true}) EXPECT_EQ(apply_permutation(apply_permutation(v, s), s), v);
  }
}

TEST(Verdicts, Aggregation) {
  using V = VerdictChoice;
  const auto w = aggregate_choices({V::A, V::A, V::Tie, V::B});
  EXPECT_DOUBLE_EQ(w.win, 0.50);
  EXPECT_DOUBLE_EQ(w.loss, 0.25);
  EXPECT_DOUBLE_EQ(w.tie, 0.25);
  const auto t = aggregate_choices({V::Tie, V::Tie});
  EXPECT_EQ(t.win, 0.0);
  EXPECT_EQ(t.loss, 0.0);
  EXPECT_EQ(t.tie, 1.0);
  EXPECT_THROW(aggregate_choices({}), EmptyInput);
}

TEST(Verdicts, BaselineRatesAtScale) {
  // 39.62 / 59.93 / 0.46 over 1,000 items
  std::vector<VerdictChoice> v;
  v.insert(v.end(), 396, VerdictChoice::A);
  v.insert(v.end(), 599, VerdictChoice::B);
  v.insert(v.end(), 5, VerdictChoice::Tie);
  const auto w = aggregate_choices(v);
  EXPECT_NEAR(w.win * 100, 39.62, 0.05);
  EXPECT_NEAR(w.loss * 100, 59.93, 0.05);
  EXPECT_NEAR(w.tie * 100, 0.46, 0.05);
  EXPECT_NEAR(w.win + w.loss + w.tie, 1.0, 1e-9);
}
