#include "prefalign/align.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace prefalign {

std::string to_string(LambdaMode m) { return m == LambdaMode::Constant ? "constant" : "confidence"; }

LambdaMode parse_lambda_mode(std::string_view s) {
  if (s == "constant") return LambdaMode::Constant;
  if (s == "confidence") return LambdaMode::Confidence;
  throw DomainError("unknown lambda mode '" + std::string(s) + "'");
}

void AlignConfig::validate() const {
  if (!(beta > 0) || !std::isfinite(beta)) throw DomainError("beta must be positive");
  if (!(gamma >= 0) || !std::isfinite(gamma)) throw DomainError("gamma must be >= 0");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw DomainError("lambda must be >= 0");
}

json AlignConfig::to_json() const {
  return {{"beta", beta}, {"gamma", gamma}, {"lambda", lambda}, {"lambda_mode", to_string(lambda_mode)}};
}

AlignConfig AlignConfig::from_json(const json& j) {
  AlignConfig c;
  c.beta = j.value("beta", c.beta);
  c.gamma = j.value("gamma", c.gamma);
  c.lambda = j.value("lambda", c.lambda);
  c.lambda_mode = parse_lambda_mode(j.value("lambda_mode", std::string("constant")));
  c.validate();
  return c;
}

json LossBreakdown::to_json() const {
  double p = 0, r = 0, w = 0, c = 0;
  for (const auto& m : margins) {
    p += m.policy;
    r += m.reference;
    w += m.reward;
    c += m.combined;
  }
  const double n = margins.empty() ? 1.0 : static_cast<double>(margins.size());
  return {{"total", total},
          {"pairwise", pairwise_term},
          {"kl", kl_term},
          {"margin_policy", p / n},
          {"margin_reference", r / n},
          {"margin_reward", w / n},
          {"margin_combined", c / n}};
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

namespace {

// Mean per-position KL between two traces over the same tokens. When `d_logits`
// is given, adds scale * dKL/dlogits into it.
double trace_kl(const PolicyTrace& pol, const PolicyTrace& ref, std::size_t V, std::vector<double>* d_logits,
                double scale) {
  const std::size_t n = pol.response.size();
  double total = 0.0;
  std::vector<double> p(V);
  for (std::size_t i = 0; i < n; ++i) {
    const double* lp = pol.log_dists.data() + i * V;
    const double* lq = ref.log_dists.data() + i * V;
    double kl = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      p[v] = std::exp(lp[v]);
      kl += p[v] * (lp[v] - lq[v]);
    }
    total += kl;
    if (d_logits) {
      double* g = d_logits->data() + i * V;
      const double s = scale / static_cast<double>(n);
      for (std::size_t v = 0; v < V; ++v) g[v] += s * p[v] * (lp[v] - lq[v] - kl);
    }
  }
  return total / static_cast<double>(n);
}

// d(score)/d(logits) = onehot(y_i) - p_i, scaled.
void add_score_grad(const PolicyTrace& t, std::size_t V, double scale, std::vector<double>& d_logits) {
  for (std::size_t i = 0; i < t.response.size(); ++i) {
    const double* lp = t.log_dists.data() + i * V;
    double* g = d_logits.data() + i * V;
    for (std::size_t v = 0; v < V; ++v) g[v] -= scale * std::exp(lp[v]);
    g[static_cast<std::size_t>(t.response[i])] += scale;
  }
}

double reference_score(const std::optional<double>& cached, const ReferenceModel& ref, const TokenSequence& x,
                       const TokenSequence& y) {
  return cached ? *cached : ref.sequence_log_score(x, y);
}

// reward_margin(i) returns the standardized reward margin of pair i (0 for DPO).
template <typename RewardMargin>
LossBreakdown preference_loss(const PairBatch& batch, PolicyModel& policy, const ReferenceModel& ref,
                              const AlignConfig& cfg, bool with_grad, RewardMargin reward_margin) {
  cfg.validate();
  if (batch.empty()) throw EmptyInput("preference batch is empty");
  const std::size_t V = static_cast<std::size_t>(policy.config().vocab_size);
  const double B = static_cast<double>(batch.size());
  LossBreakdown out;
  out.margins.reserve(batch.size());
  double pairwise = 0.0, kl_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    PolicyTrace tp = policy.trace(t.prompt, t.chosen);
    PolicyTrace tn = policy.trace(t.prompt, t.rejected);
    PairMargins pm;
    pm.policy = tp.score - tn.score;
    pm.reference = reference_score(t.ref_chosen, ref, t.prompt, t.chosen) -
                   reference_score(t.ref_rejected, ref, t.prompt, t.rejected);
    pm.reward = reward_margin(i);
    const double lambda =
        cfg.lambda_mode == LambdaMode::Confidence ? cfg.lambda * logistic(pm.reward) : cfg.lambda;
    pm.combined = pm.policy + lambda * pm.reward;
    const double m = cfg.beta * (pm.combined - pm.reference);
    pm.loss = softplus(-m);
    pairwise += pm.loss;
    out.margins.push_back(pm);

    std::vector<double> gp, gn;
    if (with_grad) {
      gp.assign(tp.response.size() * V, 0.0);
      gn.assign(tn.response.size() * V, 0.0);
      const double ds = -cfg.beta * logistic(-m) / B;
      add_score_grad(tp, V, ds, gp);
      add_score_grad(tn, V, -ds, gn);
    }
    if (cfg.gamma > 0) {
      const PolicyTrace rp = ref.trace(t.prompt, t.chosen);
      const PolicyTrace rn = ref.trace(t.prompt, t.rejected);
      const double scale = cfg.gamma / (2.0 * B);
      const double kp = trace_kl(tp, rp, V, with_grad ? &gp : nullptr, scale);
      const double kn = trace_kl(tn, rn, V, with_grad ? &gn : nullptr, scale);
      kl_sum += 0.5 * (kp + kn);
    }
    if (with_grad) {
      policy.backward(tp, gp);
      policy.backward(tn, gn);
    }
  }
  out.pairwise_term = pairwise / B;
  out.kl_term = kl_sum / B;
  out.total = out.pairwise_term + cfg.gamma * out.kl_term;
  return out;
}

}  // namespace

double forward_kl(const PolicyModel& policy, const ReferenceModel& ref, const TokenSequence& prompt,
                  const TokenSequence& response) {
  const PolicyTrace tp = policy.trace(prompt, response);
  const PolicyTrace tr = ref.trace(prompt, response);
  return trace_kl(tp, tr, static_cast<std::size_t>(policy.config().vocab_size), nullptr, 0.0);
}

LossBreakdown dpo_loss(const PairBatch& batch, PolicyModel& policy, const ReferenceModel& ref,
                       const AlignConfig& cfg, bool with_grad) {
  return preference_loss(batch, policy, ref, cfg, with_grad, [](std::size_t) { return 0.0; });
}

double combined_score(double s_pi, double r_tilde, double lambda) {
  if (!(lambda >= 0)) throw DomainError("lambda must be >= 0");
  return s_pi + lambda * r_tilde;
}

LossBreakdown dpof_loss(const PairBatch& batch, PolicyModel& policy, const ReferenceModel& ref,
                        const RewardModel& reward, const RewardStats& stats, const AlignConfig& cfg,
                        bool with_grad) {
  if (!reward.frozen()) throw RewardNotFrozen("reward model must be frozen before policy training");
  if (!stats.fitted) throw StatsNotFitted("reward statistics have not been fitted");
  auto rtilde = [&](const std::optional<double>& cached, const TokenSequence& x, const TokenSequence& y) {
    return cached ? *cached : standardize(reward.score(x, y), stats);
  };
  return preference_loss(batch, policy, ref, cfg, with_grad, [&](std::size_t i) {
    const auto& t = batch[i];
    return rtilde(t.reward_chosen, t.prompt, t.chosen) - rtilde(t.reward_rejected, t.prompt, t.rejected);
  });
}

double reward_loss(const PairBatch& batch, RewardModel& model, bool with_grad) {
  if (batch.empty()) throw EmptyInput("preference batch is empty");
  const double B = static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& t : batch) {
    RewardTrace rp = model.trace(t.prompt, t.chosen);
    RewardTrace rn = model.trace(t.prompt, t.rejected);
    const double m = rp.reward - rn.reward;
    total += softplus(-m);
    if (with_grad) {
      const double g = -logistic(-m) / B;
      model.backward(rp, g);
      model.backward(rn, -g);
    }
  }
  return total / B;
}

void cache_reference_scores(PairBatch& batch, const ReferenceModel& ref) {
  for (auto& t : batch) {
    t.ref_chosen = ref.sequence_log_score(t.prompt, t.chosen);
    t.ref_rejected = ref.sequence_log_score(t.prompt, t.rejected);
  }
}

void cache_rewards(PairBatch& batch, const RewardModel& reward, const RewardStats& stats) {
  for (auto& t : batch) {
    t.reward_chosen = standardize(reward.score(t.prompt, t.chosen), stats);
    t.reward_rejected = standardize(reward.score(t.prompt, t.rejected), stats);
  }
}

double grad_check(const std::function<double()>& loss, ParameterStore& params, const std::vector<double>& analytic,
                  double eps, std::size_t coords, std::uint64_t seed) {
  auto& values = params.all_values();
  if (analytic.size() != values.size()) throw DomainError("analytic gradient has the wrong size");
  const double f0 = loss();
  if (loss() != f0) throw NonDeterministicLoss("loss differs between two unperturbed evaluations");

  std::vector<const ParameterStore::Block*> blocks;
  // Blocks whose analytic gradient vanishes identically (e.g. a bias that
  // cancels between the two members of a pair) only measure round-off.
  for (const auto& b : params.blocks()) {
    if (!b.trainable || b.size == 0) continue;
    const auto first = analytic.begin() + static_cast<std::ptrdiff_t>(b.offset);
    if (std::any_of(first, first + static_cast<std::ptrdiff_t>(b.size), [](double g) { return g != 0.0; })) {
      blocks.push_back(&b);
    }
  }
  if (blocks.empty()) {
    for (const auto& b : params.blocks()) {
      if (b.trainable && b.size > 0) blocks.push_back(&b);
    }
  }
  if (blocks.empty()) throw DomainError("no trainable parameters to check");

  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t c = 0; c < coords; ++c) {
    const auto& b = *blocks[c % blocks.size()];
    std::size_t idx = b.offset + static_cast<std::size_t>(rng() % b.size);
    for (int tries = 0; tries < 16 && analytic[idx] == 0.0; ++tries) {
      idx = b.offset + static_cast<std::size_t>(rng() % b.size);
    }
    const double orig = values[idx];
    values[idx] = orig + eps;
    const double fp = loss();
    values[idx] = orig - eps;
    const double fm = loss();
    values[idx] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[idx] - numeric) / std::max(std::abs(numeric), 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace prefalign
