#include <gtest/gtest.h>

#include <cmath>

#include "prefalign/train.hpp"
#include "test_util.hpp"

using namespace prefalign;
using testutil::toy_config;

namespace {

TrainConfig small_cfg() {
  TrainConfig c;
  c.lr = 1e-3;
  c.micro_batch = 4;
  c.accumulation = 1;
  c.weight_decay = 0.0;
  c.max_epochs = 1;
  c.seed = 3;
  return c;
}

// Scalar AdamW written out independently of the library's vectorized loop.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double p, double g, double lr, double wd, double b1, double b2, double eps) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    p = p - lr * wd * p;
    return p - lr * mh / (std::sqrt(vh) + eps);
  }
};

PairBatch encode_synthetic(std::size_t n, std::uint64_t seed) {
  SyntheticOptions so;
  so.n_pairs = n;
  so.seed = seed;
  EncodeOptions eo;
  eo.max_seq_len = 32;
  eo.max_response = 16;
  return encode_pairs(synthetic_pairs(so), Vocabulary::byte_level(), eo);
}

}  // namespace

TEST(Schedule, WarmupThenCosine) {
  TrainConfig c;
  c.lr = 2e-3;
  const std::size_t total = 100;  // warmup = ceil(3) = 3
  EXPECT_EQ(lr_at(0, total, c), 0.0);
  EXPECT_NEAR(lr_at(1, total, c), c.lr / 3, 1e-18);
  EXPECT_EQ(lr_at(3, total, c), c.lr);
  EXPECT_NEAR(lr_at(total, total, c), 0.0, 1e-12);
  const double mid = 3 + (total - 3) / 2.0;
  EXPECT_NEAR(lr_at(static_cast<std::size_t>(mid), total, c),
              c.lr * 0.5 * (1 + std::cos(M_PI * (std::floor(mid) - 3) / 97.0)), 1e-15);
  for (std::size_t s = 3; s < total; ++s) EXPECT_GE(lr_at(s, total, c), lr_at(s + 1, total, c));
  EXPECT_THROW(lr_at(101, total, c), DomainError);
}

TEST(AdamW, DecayOnlyStep) {
  PolicyModel m(toy_config(1));
  TrainConfig c;
  c.lr = 1e-2;
  c.weight_decay = 0.1;
  for (auto& v : m.params().all_values()) v = 1.0;
  m.zero_grad();
  AdamW opt(c);
  opt.step(m, c.lr);
  for (double v : m.params().all_values()) ASSERT_NEAR(v, 0.999, 1e-15);
}

TEST(AdamW, FirstStepIsSignedLr) {
  PolicyModel m(toy_config(1));
  TrainConfig c;
  c.lr = 1e-3;
  c.weight_decay = 0.0;
  c.grad_clip_norm = 1e9;
  const auto before = m.params().all_values();
  auto& g = m.params().all_grads();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (i % 2 ? 0.3 : -2.0);
  AdamW(c).step(m, c.lr);
  const auto& after = m.params().all_values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    ASSERT_NEAR(after[i] - before[i], i % 2 ? -c.lr : c.lr, 1e-8);
  }
}

TEST(AdamW, MatchesScalarOracleOver100Steps) {
  PolicyModel m(toy_config(2, 0.1));
  TrainConfig c;
  c.lr = 3e-3;
  c.weight_decay = 0.1;
  c.grad_clip_norm = 1e9;
  AdamW opt(c);
  const std::size_t n = m.params().size();
  std::vector<double> p = m.params().all_values();
  std::vector<ScalarAdam> oracle(n);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int step = 0; step < 100; ++step) {
    auto& g = m.params().all_grads();
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = N(rng) + 0.5 * p[i];
      p[i] = oracle[i].step(p[i], g[i], c.lr, c.weight_decay, c.beta1, c.beta2, c.adam_eps);
    }
    opt.step(m, c.lr);
  }
  double worst = 0;
  for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(p[i] - m.params().all_values()[i]));
  EXPECT_LT(worst, 1e-10);
  EXPECT_EQ(opt.steps(), 100u);
}

TEST(AdamW, ClippingBoundsTheGlobalNorm) {
  PolicyModel a(toy_config(3)), b(toy_config(3));
  TrainConfig c;
  c.weight_decay = 0.0;
  c.lr = 1e-3;
  auto& ga = a.params().all_grads();
  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = 10.0 * std::sin(static_cast<double>(i));
  double n2 = 0;
  for (double g : ga) n2 += g * g;
  const double norm = std::sqrt(n2);
  // the same direction pre-scaled to the clip norm must give the same update
  auto& gb = b.params().all_grads();
  for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = ga[i] * c.grad_clip_norm / norm;
  EXPECT_NEAR(AdamW(c).step(a, c.lr), norm, 1e-9);
  AdamW(c).step(b, c.lr);
  for (std::size_t i = 0; i < ga.size(); ++i) ASSERT_NEAR(a.params().all_values()[i], b.params().all_values()[i], 1e-15);
}

TEST(AdamW, NonFiniteGradientLeavesParameters) {
  PolicyModel m(toy_config(4));
  const auto before = m.params().all_values();
  m.params().grads("head.b")[3] = std::nan("");
  TrainConfig c;
  EXPECT_THROW(AdamW(c).step(m, 1e-2), NonFiniteGradient);
  EXPECT_EQ(m.params().all_values(), before);
  m.params().grads("head.b")[3] = INFINITY;
  EXPECT_THROW(AdamW(c).step(m, 1e-2), NonFiniteGradient);
}

TEST(AdamW, FrozenModelRefusesUpdates) {
  RewardModel r(reward_config_for(toy_config(5)));
  r.freeze();
  TrainConfig c;
  EXPECT_THROW(AdamW(c).step(r, 1e-3), ModelFrozen);
}

TEST(Encode, TruncatesResponseHeadAndPromptTail) {
  PreferencePair p;
  p.prompt = "0123456789";
  p.chosen = "abcdefgh";
  p.rejected = "xyz";
  const auto v = Vocabulary::byte_level();
  const auto t = encode_pair(p, v, {12, 5});
  EXPECT_EQ(v.decode(t.chosen), "abcde");
  EXPECT_EQ(v.decode(t.rejected), "xyz");
  EXPECT_EQ(v.decode(t.prompt), "3456789");
  EXPECT_LE(t.prompt.size() + t.chosen.size(), 12u);
  EXPECT_THROW(encode_pair(p, v, {8, 8}), DomainError);
}

TEST(Accuracy, CountsStrictWins) {
  auto cfg = toy_config(1);
  PolicyModel m(cfg);
  for (auto& v : m.params().values("head.W")) v = 0.0;
  for (auto& v : m.params().values("head.b")) v = 0.0;
  // uniform model: shorter response wins, equal lengths tie (and count wrong)
  PairBatch b(4);
  b[0] = {{1}, {2}, {3, 4}};
  b[1] = {{1}, {2}, {3, 4, 5}};
  b[2] = {{1}, {2, 2}, {3}};
  b[3] = {{1}, {7}, {3}};
  EXPECT_DOUBLE_EQ(preference_accuracy(m, b), 0.5);
  b[3] = {{1}, {7}, {3, 3}};
  EXPECT_DOUBLE_EQ(preference_accuracy(m, b), 0.75);
  EXPECT_THROW(preference_accuracy(m, {}), EmptyDataset);
  const auto r = evaluate_policy(m, b);
  EXPECT_EQ(r.n, 4u);
  EXPECT_DOUBLE_EQ(r.preference_accuracy, 0.75);
  EXPECT_DOUBLE_EQ(r.mean_length_diff, (-1 - 2 + 1 - 1) / 4.0);
}

TEST(Synthetic, MarkerPairs) {
  SyntheticOptions o;
  o.n_pairs = 20;
  const auto pairs = synthetic_pairs(o);
  ASSERT_EQ(pairs.size(), 20u);
  for (const auto& p : pairs) {
    EXPECT_NE(p.chosen.find('+'), std::string::npos);
    EXPECT_NE(p.rejected.find('-'), std::string::npos);
    EXPECT_EQ(p.chosen.size(), p.rejected.size());
    EXPECT_NO_THROW(p.validate());
  }
}

TEST(TrainReward, RepeatedPairLossDecreases) {
  PairBatch one(8, encode_synthetic(1, 9)[0]);
  auto c = small_cfg();
  c.max_epochs = 10;
  c.micro_batch = 8;
  c.warmup_fraction = 0.01;
  const auto res = train_reward(one, toy_config(6, 0.1), c);
  ASSERT_GE(res.log.size(), 10u);
  for (std::size_t i = 1; i < 10; ++i) {
    EXPECT_LT(res.log[i]["loss"].get<double>(), res.log[i - 1]["loss"].get<double>()) << i;
  }
  EXPECT_TRUE(res.model.frozen());
  EXPECT_TRUE(res.stats.fitted);
  EXPECT_THROW(train_reward({}, toy_config(1), c), EmptyDataset);
}

TEST(TrainPolicy, DpofWithZeroLambdaMatchesDpo) {
  const auto data = encode_synthetic(32, 2);
  PolicyModel init(toy_config(7, 0.1));
  const ReferenceModel ref(init);
  auto c = small_cfg();
  c.align.lambda = 0.0;
  const auto rr = train_reward(data, toy_config(8, 0.1), c);
  const auto a = train_policy(init, data, {}, c, ref);
  c.method = Method::DPOF;
  const auto b = train_policy(init, data, {}, c, ref, &rr.model, &rr.stats);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_NEAR(a.log[i]["loss"]["total"].get<double>(), b.log[i]["loss"]["total"].get<double>(), 1e-12);
  }
  EXPECT_EQ(a.policy.params().all_values(), b.policy.params().all_values());
}

TEST(TrainPolicy, RewardStaysBitIdentical) {
  const auto data = encode_synthetic(16, 3);
  PolicyModel init(toy_config(9, 0.1));
  const ReferenceModel ref(init);
  auto c = small_cfg();
  c.method = Method::DPOF;
  const auto rr = train_reward(data, toy_config(10, 0.1), c);
  const auto before = rr.model.params().all_values();
  train_policy(init, data, {}, c, ref, &rr.model, &rr.stats);
  EXPECT_EQ(rr.model.params().all_values(), before);

  RewardModel thawed = rr.model;
  thawed.unfreeze();
  EXPECT_THROW(train_policy(init, data, {}, c, ref, &thawed, &rr.stats), RewardNotFrozen);
  EXPECT_THROW(train_policy(init, data, {}, c, ref), PreconditionViolation);
  EXPECT_THROW(train_policy(init, {}, {}, c, ref, &rr.model, &rr.stats), EmptyDataset);
}

TEST(TrainPolicy, DeterministicAndSelectsBest) {
  const auto data = encode_synthetic(48, 4);
  const auto val = encode_synthetic(16, 5);
  PolicyModel init(toy_config(11, 0.1));
  const ReferenceModel ref(init);
  auto c = small_cfg();
  c.max_epochs = 3;
  c.eval_every = 4;
  const auto a = train_policy(init, data, val, c, ref);
  const auto b = train_policy(init, data, val, c, ref);
  EXPECT_EQ(a.policy.params().all_values(), b.policy.params().all_values());
  ASSERT_FALSE(a.evals.empty());
  for (const auto& e : a.evals) EXPECT_GE(a.evals[a.best_eval].accuracy, e.accuracy);
  EXPECT_DOUBLE_EQ(preference_accuracy(a.policy, val), a.evals[a.best_eval].accuracy);
  for (const auto& row : a.log) {
    if (row["kind"] == "policy") EXPECT_LE(row["lr"].get<double>(), c.lr + 1e-15);
  }
}

TEST(TrainPolicy, EarlyStopKeepsFirstCheckpoint) {
  const auto data = encode_synthetic(16, 6);
  // a near-uniform model always prefers the shorter rejected response
  PairBatch val(1);
  val[0] = {{1}, {2, 2, 2}, {3}};
  PolicyModel init(toy_config(12));
  for (auto& v : init.params().values("head.W")) v = 0.0;
  for (auto& v : init.params().values("head.b")) v = 0.0;
  const ReferenceModel ref(init);
  auto c = small_cfg();
  c.lr = 1e-9;
  c.max_epochs = 10;
  c.early_stop_patience = 2;
  const auto r = train_policy(init, data, val, c, ref);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.evals.size(), 3u);
  EXPECT_EQ(r.best_eval, 0u);
}

TEST(TrainPolicy, LearnsSeparableData) {
  const auto data = encode_synthetic(160, 7);
  const auto test = encode_synthetic(40, 8);
  PolicyModel init(toy_config(13));
  const ReferenceModel ref(init);
  auto c = small_cfg();
  c.align.gamma = 0.0;
  c.max_epochs = 3;
  const double before = preference_accuracy(init, test);
  const auto r = train_policy(init, data, {}, c, ref);
  EXPECT_GT(preference_accuracy(r.policy, test), std::max(before, 0.5));
}

TEST(Config, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.method = Method::DPOF;
  c.align.lambda_mode = LambdaMode::Confidence;
  c.adapter_only = true;
  EXPECT_EQ(TrainConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_EQ(c.effective_batch(), 64);
  c.warmup_fraction = 1.0;
  EXPECT_THROW(c.validate(), DomainError);
  EXPECT_THROW(parse_method("ppo"), DomainError);
}
