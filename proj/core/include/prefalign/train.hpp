#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prefalign/align.hpp"
#include "prefalign/model.hpp"
#include "prefalign/pairs.hpp"

namespace prefalign {

enum class Method { DPO, DPOF };
std::string to_string(Method m);
Method parse_method(std::string_view s);

struct TrainConfig {
  double lr = 5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.1;
  double warmup_fraction = 0.03;
  int max_epochs = 3;
  int micro_batch = 8;
  int accumulation = 8;
  double grad_clip_norm = 1.0;
  AlignConfig align;
  Method method = Method::DPO;
  std::uint64_t seed = 0;
  int early_stop_patience = 2;
  /// Extra validation passes every N steps; 0 evaluates only at epoch ends.
  int eval_every = 0;
  /// Train only LoRA factors on the attention projections.
  bool adapter_only = false;
  AdapterSpec adapter;

  int effective_batch() const { return micro_batch * accumulation; }
  void validate() const;
  json to_json() const;
  static TrainConfig from_json(const json& j);
};

/// Linear warmup over ceil(warmup_fraction * total) steps, then cosine decay
/// to zero at `total`. Throws DomainError when step > total.
double lr_at(std::size_t step, std::size_t total, const TrainConfig& cfg);

class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}

  /// Clips the trainable gradients to grad_clip_norm, applies decoupled
  /// weight decay and one bias-corrected Adam update at `lr`. Returns the
  /// gradient norm before clipping. Throws ModelFrozen on a frozen model and
  /// NonFiniteGradient (leaving parameters untouched) on NaN/Inf gradients.
  double step(DecoderModel& model, double lr);
  std::uint64_t steps() const noexcept { return t_; }

 private:
  TrainConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Pair encoding

struct EncodeOptions {
  std::size_t max_seq_len = 64;
  std::size_t max_response = 32;
};

/// Responses keep their first max_response tokens; the prompt keeps its tail
/// so that prompt + longer response fits max_seq_len.
PairTriple encode_pair(const PreferencePair& pair, const Vocabulary& vocab, const EncodeOptions& opts);
PairBatch encode_pairs(const std::vector<PreferencePair>& pairs, const Vocabulary& vocab, const EncodeOptions& opts);

// ---------------------------------------------------------------------------
// Training

struct RewardTrainResult {
  RewardModel model;
  RewardStats stats;
  std::vector<json> log;
};

/// Optimizes the pairwise logistic objective, fits RewardStats on the final
/// raw scores of both responses of every training pair, and freezes the model.
RewardTrainResult train_reward(const PairBatch& train, const ModelConfig& model_cfg, const TrainConfig& cfg);

struct EvalPoint {
  std::size_t step = 0;
  int epoch = 0;
  double accuracy = 0.0;
};

struct PolicyTrainResult {
  PolicyModel policy;  // best validation checkpoint
  std::vector<json> log;
  std::vector<EvalPoint> evals;
  std::size_t best_eval = 0;
  std::size_t steps = 0;
  bool stopped_early = false;
};

/// DPOF requires a frozen reward model with fitted stats (RewardNotFrozen /
/// StatsNotFitted / PreconditionViolation when absent). An empty validation
/// split disables model selection; the final parameters are returned.
PolicyTrainResult train_policy(const PolicyModel& initial, PairBatch train, const PairBatch& validation,
                               const TrainConfig& cfg, const ReferenceModel& ref,
                               const RewardModel* reward = nullptr, const RewardStats* stats = nullptr);

/// Fraction of pairs with s(x,y+) > s(x,y-); ties count as incorrect.
double preference_accuracy(const PolicyModel& policy, const PairBatch& pairs);

struct EvalReport {
  std::size_t n = 0;
  double preference_accuracy = 0.0;
  double mean_margin = 0.0;
  double margin_std = 0.0;
  /// Mean of |y+| - |y-| in tokens; sequence scores favor shorter responses.
  double mean_length_diff = 0.0;

  json to_json() const;
};

EvalReport evaluate_policy(const PolicyModel& policy, const PairBatch& pairs);

// ---------------------------------------------------------------------------
// Synthetic separable corpus

struct SyntheticOptions {
  std::size_t n_pairs = 2000;
  std::size_t prompt_len = 8;
  std::size_t response_len = 12;
  std::uint64_t seed = 0;
};

/// Random lowercase prompts and responses; the chosen response carries '+'
/// and the rejected one '-' at the same position, otherwise identical.
std::vector<PreferencePair> synthetic_pairs(const SyntheticOptions& opts);

}  // namespace prefalign
