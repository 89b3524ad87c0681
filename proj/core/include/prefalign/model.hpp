#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prefalign/common.hpp"

namespace prefalign {

using TokenSequence = std::vector<int>;

// ---------------------------------------------------------------------------
// Vocabulary

/// Single-byte symbols followed by the special tokens BOS, EOS, PAD, SEP, UNK.
class Vocabulary {
 public:
  /// All 256 byte values: every text round-trips.
  static Vocabulary byte_level();
  /// A restricted alphabet; bytes outside it encode to UNK.
  static Vocabulary from_alphabet(std::string_view alphabet);

  std::size_t size() const noexcept { return symbols_.size() + 5; }
  int bos() const noexcept { return base(); }
  int eos() const noexcept { return base() + 1; }
  int pad() const noexcept { return base() + 2; }
  int sep() const noexcept { return base() + 3; }
  int unk() const noexcept { return base() + 4; }

  TokenSequence encode(std::string_view text) const;
  /// Throws DomainError on ids >= size(). Special tokens decode to nothing.
  std::string decode(const TokenSequence& ids) const;

  const std::string& symbols() const noexcept { return symbols_; }
  json to_json() const;
  static Vocabulary from_json(const json& j);

 private:
  explicit Vocabulary(std::string symbols);
  int base() const noexcept { return static_cast<int>(symbols_.size()); }

  std::string symbols_;
  std::array<int, 256> index_{};
};

// ---------------------------------------------------------------------------
// Parameters

class ParameterStore {
 public:
  struct Block {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    bool trainable = true;
  };

  std::size_t add(const std::string& name, std::vector<std::size_t> shape, bool trainable = true);
  const Block& block(const std::string& name) const;
  Block& block(const std::string& name);
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::span<double> values(const std::string& name);
  std::span<const double> values(const std::string& name) const;
  std::span<double> grads(const std::string& name);
  std::span<const double> grads(const std::string& name) const;

  std::vector<double>& all_values() noexcept { return values_; }
  const std::vector<double>& all_values() const noexcept { return values_; }
  std::vector<double>& all_grads() noexcept { return grads_; }
  const std::vector<double>& all_grads() const noexcept { return grads_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::vector<Block>& blocks() noexcept { return blocks_; }

  void zero_grad();
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t trainable_size() const;

 private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<Block> blocks_;
};

// ---------------------------------------------------------------------------
// Decoder skeleton shared by the policy and the reward model

struct ModelConfig {
  int vocab_size = 261;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 256;
  int max_seq_len = 64;
  double init_std = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
  json to_json() const;
  static ModelConfig from_json(const json& j);
};

struct AdapterSpec {
  int rank = 16;
  double alpha = 32.0;
  double dropout = 0.05;

  double scale() const { return alpha / rank; }
  json to_json() const;
  static AdapterSpec from_json(const json& j);
};

enum class HeadKind { LanguageModel, Scalar };

/// Forward activations kept for the backward pass.
struct Trace;

struct TraceDeleter {
  void operator()(Trace* t) const noexcept;
};
using TracePtr = std::unique_ptr<Trace, TraceDeleter>;

class DecoderModel {
 public:
  DecoderModel(const ModelConfig& cfg, HeadKind head);
  DecoderModel(const DecoderModel& other);
  DecoderModel& operator=(const DecoderModel& other);
  virtual ~DecoderModel() = default;

  const ModelConfig& config() const noexcept { return cfg_; }
  HeadKind head_kind() const noexcept { return head_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }
  void zero_grad() { params_.zero_grad(); }

  /// Adds LoRA factors to the query/key/value/output projections of every
  /// layer and marks every other block frozen. B starts at zero. Throws
  /// DomainError unless 1 <= rank <= d_model.
  void apply_adapter(const AdapterSpec& spec);
  bool has_adapter() const noexcept { return adapter_.has_value(); }
  const std::optional<AdapterSpec>& adapter() const noexcept { return adapter_; }
  void set_adapter_enabled(bool on) noexcept { adapter_enabled_ = on; }
  bool adapter_enabled() const noexcept { return adapter_enabled_; }
  /// Folds (alpha/r)·B·A into the base weights and disables the adapter.
  void merge_adapter();

  /// Training mode enables adapter dropout; the loss is then stochastic.
  void set_training(bool on) noexcept { training_ = on; }
  bool training() const noexcept { return training_; }

  /// A frozen model refuses optimizer updates (ModelFrozen).
  void freeze() noexcept { frozen_ = true; }
  void unfreeze() noexcept { frozen_ = false; }
  bool frozen() const noexcept { return frozen_; }

  /// Re-seeds the dropout stream (part of the model's reproducible state).
  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

 protected:
  TracePtr forward(const TokenSequence& input) const;
  /// Accumulates parameter gradients given dL/d(final hidden) for each position (T×d).
  void backward(const Trace& trace, const std::vector<double>& d_hidden);
  const std::vector<double>& hidden(const Trace& trace) const;

 private:
  void init_parameters();

  ModelConfig cfg_;
  HeadKind head_;
  ParameterStore params_;
  std::optional<AdapterSpec> adapter_;
  bool adapter_enabled_ = false;
  bool training_ = false;
  bool frozen_ = false;
  mutable std::mt19937_64 dropout_rng_;
};

/// Result of a policy forward pass over [BOS] + prompt + response.
struct PolicyTrace {
  TracePtr trace;
  std::size_t prompt_len = 0;
  TokenSequence response;
  /// log-softmax rows at the positions predicting each response token (|y|×V).
  std::vector<double> log_dists;
  /// log P(y_i | x, y_<i).
  std::vector<double> token_log_probs;
  double score = 0.0;
};

class PolicyModel : public DecoderModel {
 public:
  explicit PolicyModel(const ModelConfig& cfg) : DecoderModel(cfg, HeadKind::LanguageModel) {}

  /// Throws SequenceTooLong when |x| + |y| exceeds max_seq_len and
  /// DomainError on an empty response or an out-of-range id.
  PolicyTrace trace(const TokenSequence& prompt, const TokenSequence& response) const;
  std::vector<double> token_log_probs(const TokenSequence& prompt, const TokenSequence& response) const;
  double sequence_log_score(const TokenSequence& prompt, const TokenSequence& response) const;

  /// Accumulates gradients for dL/d(logits) at the response positions (|y|×V).
  void backward(const PolicyTrace& t, const std::vector<double>& d_logits);
};

/// Immutable deep copy of a policy.
class ReferenceModel {
 public:
  explicit ReferenceModel(const PolicyModel& policy);

  PolicyTrace trace(const TokenSequence& prompt, const TokenSequence& response) const {
    return model_->trace(prompt, response);
  }
  std::vector<double> token_log_probs(const TokenSequence& x, const TokenSequence& y) const {
    return model_->token_log_probs(x, y);
  }
  double sequence_log_score(const TokenSequence& x, const TokenSequence& y) const {
    return model_->sequence_log_score(x, y);
  }
  const PolicyModel& model() const noexcept { return *model_; }

 private:
  std::shared_ptr<const PolicyModel> model_;
};

ReferenceModel snapshot_reference(const PolicyModel& policy);

struct RewardTrace {
  TracePtr trace;
  double reward = 0.0;
};

class RewardModel : public DecoderModel {
 public:
  explicit RewardModel(const ModelConfig& cfg) : DecoderModel(cfg, HeadKind::Scalar) {}

  /// Scalar head over prompt + response, read at the final response token.
  RewardTrace trace(const TokenSequence& prompt, const TokenSequence& response) const;
  double score(const TokenSequence& prompt, const TokenSequence& response) const;
  void backward(const RewardTrace& t, double d_reward);
};

double reward_score(const RewardModel& model, const TokenSequence& prompt, const TokenSequence& response);

struct RewardStats {
  double mean = 0.0;
  double std = 1.0;
  bool fitted = false;

  /// Population mean and standard deviation. Identical scores give std = 1.
  static RewardStats fit(const std::vector<double>& raw_scores);
  json to_json() const;
  static RewardStats from_json(const json& j);
};

/// (raw - mean) / std; throws StatsNotFitted before fit().
double standardize(double raw, const RewardStats& stats);

/// Default reward-model dimensions: half the policy width, one layer.
ModelConfig reward_config_for(const ModelConfig& policy);

// ---------------------------------------------------------------------------
// Checkpoints: "PFALIGN\0", u32 format version, u64 header length, JSON
// header, then little-endian doubles.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const DecoderModel& model,
                     const json& extra = json::object());
std::string checkpoint_bytes(const DecoderModel& model, const json& extra = json::object());

struct LoadedCheckpoint {
  std::unique_ptr<PolicyModel> policy;
  std::unique_ptr<RewardModel> reward;
  json header;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint parse_checkpoint(std::string_view bytes);

}  // namespace prefalign
