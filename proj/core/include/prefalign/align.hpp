#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prefalign/model.hpp"

namespace prefalign {

/// One (x, y+, y-) triple. The optional fields cache quantities that do not
/// depend on the policy parameters: reference scores and standardized rewards.
struct PairTriple {
  TokenSequence prompt;
  TokenSequence chosen;
  TokenSequence rejected;
  std::optional<double> ref_chosen;
  std::optional<double> ref_rejected;
  std::optional<double> reward_chosen;
  std::optional<double> reward_rejected;
};
using PairBatch = std::vector<PairTriple>;

enum class LambdaMode { Constant, Confidence };
std::string to_string(LambdaMode m);
LambdaMode parse_lambda_mode(std::string_view s);

struct AlignConfig {
  double beta = 0.1;
  double gamma = 0.0;
  double lambda = 0.5;
  /// Confidence scales lambda per pair by logistic(r+ - r-).
  LambdaMode lambda_mode = LambdaMode::Constant;

  void validate() const;
  json to_json() const;
  static AlignConfig from_json(const json& j);
};

struct PairMargins {
  double policy = 0.0;
  double reference = 0.0;
  double reward = 0.0;
  double combined = 0.0;  // policy + lambda * reward
  double loss = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  double pairwise_term = 0.0;
  double kl_term = 0.0;
  std::vector<PairMargins> margins;

  /// Summary for the training log (means over the batch, not per-pair rows).
  json to_json() const;
};

double logistic(double z);
/// log(1 + exp(z)) without overflow.
double softplus(double z);

/// Mean over response positions of the exact KL(pi_theta || pi_ref).
double forward_kl(const PolicyModel& policy, const ReferenceModel& ref, const TokenSequence& prompt,
                  const TokenSequence& response);

/// Gradients accumulate into policy.params() grads when `with_grad` is set;
/// the caller zeroes them. Reference scores are taken from the triple cache
/// when present.
LossBreakdown dpo_loss(const PairBatch& batch, PolicyModel& policy, const ReferenceModel& ref,
                       const AlignConfig& cfg, bool with_grad = true);

/// Mean of -log sigma(r(x,y+) - r(x,y-)); gradients accumulate into the model.
double reward_loss(const PairBatch& batch, RewardModel& model, bool with_grad = true);

double combined_score(double s_pi, double r_tilde, double lambda);

/// The reward enters the margin as a constant. Throws RewardNotFrozen unless
/// the reward model is frozen and StatsNotFitted unless stats are fitted.
LossBreakdown dpof_loss(const PairBatch& batch, PolicyModel& policy, const ReferenceModel& ref,
                        const RewardModel& reward, const RewardStats& stats, const AlignConfig& cfg,
                        bool with_grad = true);

/// Fills the cached reference scores of every triple.
void cache_reference_scores(PairBatch& batch, const ReferenceModel& ref);
/// Fills the cached standardized rewards of every triple.
void cache_rewards(PairBatch& batch, const RewardModel& reward, const RewardStats& stats);

/// Central-difference check of `analytic` (same layout as params.all_values()).
/// Coordinates are drawn round-robin over the trainable blocks, preferring
/// ones with a nonzero analytic derivative. Returns max |a - n| / max(|n|, 1e-8).
/// Throws NonDeterministicLoss when two unperturbed evaluations differ.
double grad_check(const std::function<double()>& loss, ParameterStore& params, const std::vector<double>& analytic,
                  double eps = 1e-4, std::size_t coords = 100, std::uint64_t seed = 0);

}  // namespace prefalign
