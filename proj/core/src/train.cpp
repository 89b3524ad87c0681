#include "prefalign/train.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

namespace prefalign {

std::string to_string(Method m) { return m == Method::DPO ? "dpo" : "dpof"; }

Method parse_method(std::string_view s) {
  if (s == "dpo" || s == "DPO") return Method::DPO;
  if (s == "dpof" || s == "DPOF" || s == "dpo-f+") return Method::DPOF;
  throw DomainError("unknown training method '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw DomainError("lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw DomainError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw DomainError("adam_eps must be positive");
  if (!(weight_decay >= 0)) throw DomainError("weight_decay must be >= 0");
  if (!(warmup_fraction > 0 && warmup_fraction < 1)) throw DomainError("warmup_fraction must lie in (0, 1)");
  if (max_epochs < 1 || micro_batch < 1 || accumulation < 1) {
    throw DomainError("epochs, micro_batch and accumulation must be >= 1");
  }
  if (!(grad_clip_norm > 0)) throw DomainError("grad_clip_norm must be positive");
  if (early_stop_patience < 1) throw DomainError("early_stop_patience must be >= 1");
  if (eval_every < 0) throw DomainError("eval_every must be >= 0");
  align.validate();
}

json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"betas", {beta1, beta2}},
          {"adam_eps", adam_eps},
          {"weight_decay", weight_decay},
          {"warmup_fraction", warmup_fraction},
          {"max_epochs", max_epochs},
          {"micro_batch", micro_batch},
          {"accumulation", accumulation},
          {"grad_clip_norm", grad_clip_norm},
          {"align", align.to_json()},
          {"method", to_string(method)},
          {"seed", seed},
          {"early_stop_patience", early_stop_patience},
          {"eval_every", eval_every},
          {"adapter_only", adapter_only},
          {"adapter", adapter.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  if (j.contains("betas")) {
    c.beta1 = j.at("betas").at(0).get<double>();
    c.beta2 = j.at("betas").at(1).get<double>();
  }
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.micro_batch = j.value("micro_batch", c.micro_batch);
  c.accumulation = j.value("accumulation", c.accumulation);
  c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
  if (j.contains("align")) c.align = AlignConfig::from_json(j.at("align"));
  c.method = parse_method(j.value("method", std::string("dpo")));
  c.seed = j.value("seed", c.seed);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.adapter_only = j.value("adapter_only", c.adapter_only);
  if (j.contains("adapter")) c.adapter = AdapterSpec::from_json(j.at("adapter"));
  c.validate();
  return c;
}

double lr_at(std::size_t step, std::size_t total, const TrainConfig& cfg) {
  if (step > total) throw DomainError("step " + std::to_string(step) + " beyond total " + std::to_string(total));
  const auto warm = static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total)));
  if (step < warm) return cfg.lr * static_cast<double>(step) / static_cast<double>(warm);
  if (total == warm) return cfg.lr;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(total - warm);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double AdamW::step(DecoderModel& model, double lr) {
  if (model.frozen()) throw ModelFrozen("refusing to update a frozen model");
  auto& P = model.params();
  auto& values = P.all_values();
  auto& grads = P.all_grads();
  if (m_.size() != values.size()) {
    m_.assign(values.size(), 0.0);
    v_.assign(values.size(), 0.0);
  }
  double sq = 0.0;
  for (const auto& b : P.blocks()) {
    if (!b.trainable) continue;
    for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
      if (!std::isfinite(grads[i])) {
        spdlog::error("non-finite gradient in parameter block {}", b.name);
        throw NonFiniteGradient("parameter block " + b.name);
      }
      sq += grads[i] * grads[i];
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = norm > cfg_.grad_clip_norm ? cfg_.grad_clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& b : P.blocks()) {
    if (!b.trainable) continue;
    for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
      const double g = grads[i] * clip;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      values[i] -= lr * cfg_.weight_decay * values[i];
      values[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.adam_eps);
    }
  }
  return norm;
}

PairTriple encode_pair(const PreferencePair& pair, const Vocabulary& vocab, const EncodeOptions& opts) {
  if (opts.max_response < 1 || opts.max_response >= opts.max_seq_len) {
    throw DomainError("max_response must lie in [1, max_seq_len)");
  }
  PairTriple t;
  t.chosen = vocab.encode(pair.chosen);
  t.rejected = vocab.encode(pair.rejected);
  if (t.chosen.size() > opts.max_response) t.chosen.resize(opts.max_response);
  if (t.rejected.size() > opts.max_response) t.rejected.resize(opts.max_response);
  const std::size_t budget = opts.max_seq_len - std::max(t.chosen.size(), t.rejected.size());
  const TokenSequence prompt = vocab.encode(pair.prompt);
  const std::size_t keep = std::min(budget, prompt.size());
  t.prompt.assign(prompt.end() - static_cast<std::ptrdiff_t>(keep), prompt.end());
  return t;
}

PairBatch encode_pairs(const std::vector<PreferencePair>& pairs, const Vocabulary& vocab, const EncodeOptions& opts) {
  PairBatch out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(encode_pair(p, vocab, opts));
  return out;
}

namespace {

std::size_t steps_per_epoch(std::size_t n, const TrainConfig& cfg) {
  const auto eb = static_cast<std::size_t>(cfg.effective_batch());
  return (n + eb - 1) / eb;
}

PairBatch slice(const PairBatch& data, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
  PairBatch b;
  b.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) b.push_back(data[order[i]]);
  return b;
}

}  // namespace

RewardTrainResult train_reward(const PairBatch& train, const ModelConfig& model_cfg, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw EmptyDataset("reward training split is empty");
  RewardTrainResult res{RewardModel(model_cfg), RewardStats{}, {}};
  RewardModel& model = res.model;
  AdamW opt(cfg);
  const std::size_t n = train.size();
  const auto eb = static_cast<std::size_t>(cfg.effective_batch());
  const std::size_t total = steps_per_epoch(n, cfg) * static_cast<std::size_t>(cfg.max_epochs);
  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto order = seeded_permutation(n, derive_seed(cfg.seed, "reward-epoch-" + std::to_string(epoch)));
    for (std::size_t begin = 0; begin < n; begin += eb) {
      const PairBatch batch = slice(train, order, begin, std::min(n, begin + eb));
      model.zero_grad();
      const double loss = reward_loss(batch, model, true);
      const double lr = lr_at(step + 1, total, cfg);
      const double norm = opt.step(model, lr);
      ++step;
      res.log.push_back(
          {{"kind", "reward"}, {"step", step}, {"epoch", epoch}, {"lr", lr}, {"loss", loss}, {"grad_norm", norm}});
    }
  }
  model.zero_grad();
  std::vector<double> raw;
  raw.reserve(2 * n);
  for (const auto& t : train) {
    raw.push_back(model.score(t.prompt, t.chosen));
    raw.push_back(model.score(t.prompt, t.rejected));
  }
  res.stats = RewardStats::fit(raw);
  model.freeze();
  return res;
}

double preference_accuracy(const PolicyModel& policy, const PairBatch& pairs) {
  if (pairs.empty()) throw EmptyDataset("no pairs to evaluate");
  std::size_t correct = 0;
  for (const auto& t : pairs) {
    if (policy.sequence_log_score(t.prompt, t.chosen) > policy.sequence_log_score(t.prompt, t.rejected)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

json EvalReport::to_json() const {
  return {{"n", n},
          {"preference_accuracy", preference_accuracy},
          {"mean_margin", mean_margin},
          {"margin_std", margin_std},
          {"mean_length_diff", mean_length_diff}};
}

EvalReport evaluate_policy(const PolicyModel& policy, const PairBatch& pairs) {
  if (pairs.empty()) throw EmptyDataset("no pairs to evaluate");
  EvalReport r;
  r.n = pairs.size();
  std::vector<double> margins;
  margins.reserve(pairs.size());
  std::size_t correct = 0;
  double len = 0.0;
  for (const auto& t : pairs) {
    const double m = policy.sequence_log_score(t.prompt, t.chosen) - policy.sequence_log_score(t.prompt, t.rejected);
    margins.push_back(m);
    if (m > 0) ++correct;
    len += static_cast<double>(t.chosen.size()) - static_cast<double>(t.rejected.size());
  }
  const double n = static_cast<double>(pairs.size());
  r.preference_accuracy = static_cast<double>(correct) / n;
  double mean = 0.0;
  for (double m : margins) mean += m;
  mean /= n;
  double var = 0.0;
  for (double m : margins) var += (m - mean) * (m - mean);
  r.mean_margin = mean;
  r.margin_std = std::sqrt(var / n);
  r.mean_length_diff = len / n;
  return r;
}

PolicyTrainResult train_policy(const PolicyModel& initial, PairBatch train, const PairBatch& validation,
                               const TrainConfig& cfg, const ReferenceModel& ref, const RewardModel* reward,
                               const RewardStats* stats) {
  cfg.validate();
  if (train.empty()) throw EmptyDataset("policy training split is empty");
  if (cfg.method == Method::DPOF) {
    if (!reward || !stats) throw PreconditionViolation("DPO-f+ training needs a reward model and its statistics");
    if (!reward->frozen()) throw RewardNotFrozen("reward model must be frozen before policy training");
    if (!stats->fitted) throw StatsNotFitted("reward statistics have not been fitted");
  }

  PolicyTrainResult res{initial, {}, {}, 0, 0, false};
  PolicyModel policy = initial;
  policy.unfreeze();
  if (cfg.adapter_only && !policy.has_adapter()) policy.apply_adapter(cfg.adapter);
  policy.reseed_dropout(derive_seed(cfg.seed, "dropout"));

  cache_reference_scores(train, ref);
  if (cfg.method == Method::DPOF) cache_rewards(train, *reward, *stats);

  AdamW opt(cfg);
  const std::size_t n = train.size();
  const auto eb = static_cast<std::size_t>(cfg.effective_batch());
  const std::size_t total = steps_per_epoch(n, cfg) * static_cast<std::size_t>(cfg.max_epochs);
  std::optional<double> best;
  int bad = 0;
  std::size_t step = 0;

  // Returns true when training should stop.
  auto evaluate = [&](int epoch) {
    if (validation.empty()) return false;
    policy.set_training(false);
    const double acc = preference_accuracy(policy, validation);
    res.evals.push_back({step, epoch, acc});
    const bool improved = !best || acc > *best;
    res.log.push_back({{"kind", "eval"},
                       {"step", step},
                       {"epoch", epoch},
                       {"val_accuracy", acc},
                       {"improved", improved}});
    if (improved) {
      best = acc;
      bad = 0;
      res.best_eval = res.evals.size() - 1;
      res.policy = policy;
      return false;
    }
    return ++bad >= cfg.early_stop_patience;
  };

  bool stop = false;
  for (int epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    const auto order = seeded_permutation(n, derive_seed(cfg.seed, "policy-epoch-" + std::to_string(epoch)));
    for (std::size_t begin = 0; begin < n && !stop; begin += eb) {
      const PairBatch batch = slice(train, order, begin, std::min(n, begin + eb));
      policy.set_training(true);
      policy.zero_grad();
      const LossBreakdown lb = cfg.method == Method::DPO
                                   ? dpo_loss(batch, policy, ref, cfg.align, true)
                                   : dpof_loss(batch, policy, ref, *reward, *stats, cfg.align, true);
      const double lr = lr_at(step + 1, total, cfg);
      const double norm = opt.step(policy, lr);
      ++step;
      res.log.push_back({{"kind", "policy"},
                         {"method", to_string(cfg.method)},
                         {"step", step},
                         {"epoch", epoch},
                         {"lr", lr},
                         {"loss", lb.to_json()},
                         {"grad_norm", norm}});
      if (cfg.eval_every > 0 && step % static_cast<std::size_t>(cfg.eval_every) == 0 && begin + eb < n) {
        stop = evaluate(epoch);
      }
    }
    if (!stop) stop = evaluate(epoch);
  }
  res.steps = step;
  res.stopped_early = stop;
  if (validation.empty()) res.policy = policy;
  res.policy.set_training(false);
  res.policy.zero_grad();
  return res;
}

std::vector<PreferencePair> synthetic_pairs(const SyntheticOptions& opts) {
  if (opts.n_pairs == 0 || opts.prompt_len == 0 || opts.response_len == 0) {
    throw DomainError("synthetic corpus dimensions must be positive");
  }
  std::mt19937_64 rng(opts.seed);
  auto letters = [&](std::size_t len) {
    std::string s(len, 'a');
    for (auto& c : s) c = static_cast<char>('a' + rng() % 26);
    return s;
  };
  std::vector<PreferencePair> out;
  out.reserve(opts.n_pairs);
  for (std::size_t i = 0; i < opts.n_pairs; ++i) {
    PreferencePair p;
    p.prompt = letters(opts.prompt_len);
    std::string body = letters(opts.response_len);
    const std::size_t pos = static_cast<std::size_t>(rng() % opts.response_len);
    p.chosen = body;
    p.rejected = body;
    p.chosen[pos] = '+';
    p.rejected[pos] = '-';
    p.program_id = "syn-" + std::to_string(i);
    p.root_program_id = p.program_id;
    p.pair_id = p.program_id + "+|" + p.program_id + "-";
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace prefalign
