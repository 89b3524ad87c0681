#include "prefalign/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace prefalign {

// ---------------------------------------------------------------------------
// ParameterStore

std::size_t ParameterStore::add(const std::string& name, std::vector<std::size_t> shape, bool trainable) {
  if (contains(name)) throw DomainError("duplicate parameter block " + name);
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  Block b{name, std::move(shape), values_.size(), n, trainable};
  values_.resize(values_.size() + n, 0.0);
  grads_.resize(grads_.size() + n, 0.0);
  blocks_.push_back(std::move(b));
  return blocks_.size() - 1;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return i;
  }
  throw DomainError("no parameter block named " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const Block& b) { return b.name == name; });
}

const ParameterStore::Block& ParameterStore::block(const std::string& name) const { return blocks_[index_of(name)]; }
ParameterStore::Block& ParameterStore::block(const std::string& name) { return blocks_[index_of(name)]; }

std::span<double> ParameterStore::values(const std::string& name) {
  const auto& b = block(name);
  return {values_.data() + b.offset, b.size};
}
std::span<const double> ParameterStore::values(const std::string& name) const {
  const auto& b = block(name);
  return {values_.data() + b.offset, b.size};
}
std::span<double> ParameterStore::grads(const std::string& name) {
  const auto& b = block(name);
  return {grads_.data() + b.offset, b.size};
}
std::span<const double> ParameterStore::grads(const std::string& name) const {
  const auto& b = block(name);
  return {grads_.data() + b.offset, b.size};
}

void ParameterStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

std::size_t ParameterStore::trainable_size() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) {
    if (b.trainable) n += b.size;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Config records

void ModelConfig::validate() const {
  if (vocab_size < 2) throw DomainError("vocab_size must be >= 2");
  if (d_model < 1 || n_layers < 0 || n_heads < 1 || d_ff < 1 || max_seq_len < 1) {
    throw DomainError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw DomainError("d_model must be divisible by n_heads");
  if (!(init_std > 0)) throw DomainError("init_std must be positive");
}

json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"d_model", d_model}, {"n_layers", n_layers},
          {"n_heads", n_heads},       {"d_ff", d_ff},       {"max_seq_len", max_seq_len},
          {"init_std", init_std},     {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.init_std = j.value("init_std", c.init_std);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

json AdapterSpec::to_json() const { return {{"rank", rank}, {"alpha", alpha}, {"dropout", dropout}}; }

AdapterSpec AdapterSpec::from_json(const json& j) {
  AdapterSpec s;
  s.rank = j.value("rank", s.rank);
  s.alpha = j.value("alpha", s.alpha);
  s.dropout = j.value("dropout", s.dropout);
  return s;
}

ModelConfig reward_config_for(const ModelConfig& policy) {
  ModelConfig c = policy;
  c.d_model = std::max(16, policy.d_model / 2);
  c.n_heads = c.d_model % 2 == 0 ? 2 : 1;
  c.d_ff = 2 * c.d_model;
  c.n_layers = 1;
  c.seed = derive_seed(policy.seed, "reward");
  return c;
}

// ---------------------------------------------------------------------------
// Forward/backward

namespace {

constexpr double kLnEps = 1e-5;
constexpr int kProj = 4;  // q, k, v, o
const char* const kProjName[kProj] = {"q", "k", "v", "o"};

std::string layer_prefix(int l) { return "l" + std::to_string(l) + "."; }

double gauss(std::mt19937_64& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// y[T×out] = x[T×in] · W^T with W stored [out][in].
void matmul_t(const double* x, const double* w, double* y, int T, int in, int out) {
  for (int t = 0; t < T; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * in;
    double* yr = y + static_cast<std::size_t>(t) * out;
    for (int o = 0; o < out; ++o) {
      const double* wr = w + static_cast<std::size_t>(o) * in;
      double s = 0.0;
      for (int i = 0; i < in; ++i) s += xr[i] * wr[i];
      yr[o] += s;
    }
  }
}

// dx += dy · W ; dW += dy^T · x
void matmul_t_backward(const double* x, const double* w, const double* dy, double* dx, double* dw,
                       int T, int in, int out) {
  for (int t = 0; t < T; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * in;
    const double* dyr = dy + static_cast<std::size_t>(t) * out;
    double* dxr = dx ? dx + static_cast<std::size_t>(t) * in : nullptr;
    for (int o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wr = w + static_cast<std::size_t>(o) * in;
      double* dwr = dw + static_cast<std::size_t>(o) * in;
      if (dxr) {
        for (int i = 0; i < in; ++i) dxr[i] += g * wr[i];
      }
      for (int i = 0; i < in; ++i) dwr[i] += g * xr[i];
    }
  }
}

void layer_norm(const double* x, const double* g, const double* b, double* y, double* mean, double* rstd,
                int T, int d) {
  for (int t = 0; t < T; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * d;
    double* yr = y + static_cast<std::size_t>(t) * d;
    double m = 0.0;
    for (int i = 0; i < d; ++i) m += xr[i];
    m /= d;
    double v = 0.0;
    for (int i = 0; i < d; ++i) v += (xr[i] - m) * (xr[i] - m);
    v /= d;
    const double r = 1.0 / std::sqrt(v + kLnEps);
    mean[t] = m;
    rstd[t] = r;
    for (int i = 0; i < d; ++i) yr[i] = (xr[i] - m) * r * g[i] + b[i];
  }
}

// dx += LN'(dy); dg, db accumulate.
void layer_norm_backward(const double* x, const double* g, const double* mean, const double* rstd,
                         const double* dy, double* dx, double* dg, double* db, int T, int d) {
  std::vector<double> xhat(static_cast<std::size_t>(d)), dxhat(static_cast<std::size_t>(d));
  for (int t = 0; t < T; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * d;
    const double* dyr = dy + static_cast<std::size_t>(t) * d;
    double* dxr = dx + static_cast<std::size_t>(t) * d;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < d; ++i) {
      xhat[i] = (xr[i] - mean[t]) * rstd[t];
      dxhat[i] = dyr[i] * g[i];
      dg[i] += dyr[i] * xhat[i];
      db[i] += dyr[i];
      s1 += dxhat[i];
      s2 += dxhat[i] * xhat[i];
    }
    s1 /= d;
    s2 /= d;
    for (int i = 0; i < d; ++i) dxr[i] += rstd[t] * (dxhat[i] - s1 - xhat[i] * s2);
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }

inline double gelu_grad(double u) {
  const double th = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

}  // namespace

struct LayerCache {
  std::vector<double> x_in, a, ln1_mean, ln1_rstd;
  std::array<std::vector<double>, kProj> proj;  // q, k, v, attention output
  std::vector<double> att, ctx;
  std::array<std::vector<double>, kProj> lora_in, lora_h, lora_mask;
  std::vector<double> x_mid, b, ln2_mean, ln2_rstd, u, g;
};

struct Trace {
  TokenSequence input;
  int T = 0;
  bool adapter_active = false;
  std::vector<LayerCache> layers;
  std::vector<double> x_final, lnf_mean, lnf_rstd, hidden;
};

void TraceDeleter::operator()(Trace* t) const noexcept { delete t; }

DecoderModel::DecoderModel(const ModelConfig& cfg, HeadKind head)
    : cfg_(cfg), head_(head), dropout_rng_(derive_seed(cfg.seed, "dropout")) {
  cfg_.validate();
  init_parameters();
}

DecoderModel::DecoderModel(const DecoderModel& other) = default;
DecoderModel& DecoderModel::operator=(const DecoderModel& other) = default;

void DecoderModel::init_parameters() {
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto ff = static_cast<std::size_t>(cfg_.d_ff);
  const auto V = static_cast<std::size_t>(cfg_.vocab_size);
  params_.add("tok_emb", {V, d});
  params_.add("pos_emb", {static_cast<std::size_t>(cfg_.max_seq_len), d});
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    params_.add(p + "ln1.g", {d});
    params_.add(p + "ln1.b", {d});
    for (auto* n : kProjName) params_.add(p + "attn." + n + ".W", {d, d});
    params_.add(p + "ln2.g", {d});
    params_.add(p + "ln2.b", {d});
    params_.add(p + "ff.W1", {ff, d});
    params_.add(p + "ff.b1", {ff});
    params_.add(p + "ff.W2", {d, ff});
    params_.add(p + "ff.b2", {d});
  }
  params_.add("lnf.g", {d});
  params_.add("lnf.b", {d});
  if (head_ == HeadKind::LanguageModel) {
    params_.add("head.W", {V, d});
    params_.add("head.b", {V});
  } else {
    params_.add("head.W", {1, d});
    params_.add("head.b", {1});
  }

  std::mt19937_64 rng(derive_seed(cfg_.seed, "init"));
  for (const auto& b : params_.blocks()) {
    auto vals = params_.values(b.name);
    const bool is_gain = b.name.ends_with(".g");
    const bool is_bias = b.shape.size() == 1 && !is_gain;
    for (auto& v : vals) v = is_gain ? 1.0 : (is_bias ? 0.0 : cfg_.init_std * gauss(rng));
  }
}

void DecoderModel::apply_adapter(const AdapterSpec& spec) {
  if (adapter_) throw DomainError("model already has an adapter");
  if (spec.rank < 1 || spec.rank > cfg_.d_model) {
    throw DomainError("adapter rank must satisfy 1 <= r <= " + std::to_string(cfg_.d_model));
  }
  if (!(spec.alpha > 0) || spec.dropout < 0 || spec.dropout >= 1) {
    throw DomainError("adapter alpha must be positive and dropout in [0, 1)");
  }
  for (auto& b : params_.blocks()) b.trainable = false;
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto r = static_cast<std::size_t>(spec.rank);
  std::mt19937_64 rng(derive_seed(cfg_.seed, "adapter"));
  const double a_std = 1.0 / std::sqrt(static_cast<double>(d));
  for (int l = 0; l < cfg_.n_layers; ++l) {
    for (auto* n : kProjName) {
      const std::string base = layer_prefix(l) + "attn." + n + ".lora.";
      params_.add(base + "A", {r, d});
      params_.add(base + "B", {d, r});
      for (auto& v : params_.values(base + "A")) v = a_std * gauss(rng);
    }
  }
  adapter_ = spec;
  adapter_enabled_ = true;
}

void DecoderModel::merge_adapter() {
  if (!adapter_) throw DomainError("model has no adapter to merge");
  const int d = cfg_.d_model, r = adapter_->rank;
  const double s = adapter_->scale();
  for (int l = 0; l < cfg_.n_layers; ++l) {
    for (auto* n : kProjName) {
      const std::string base = layer_prefix(l) + "attn." + n;
      auto W = params_.values(base + ".W");
      const auto A = params_.values(base + ".lora.A");
      const auto B = params_.values(base + ".lora.B");
      for (int o = 0; o < d; ++o) {
        for (int i = 0; i < d; ++i) {
          double acc = 0.0;
          for (int k = 0; k < r; ++k) acc += B[static_cast<std::size_t>(o * r + k)] * A[static_cast<std::size_t>(k * d + i)];
          W[static_cast<std::size_t>(o * d + i)] += s * acc;
        }
      }
    }
  }
  adapter_enabled_ = false;
}

TracePtr DecoderModel::forward(const TokenSequence& input) const {
  const int T = static_cast<int>(input.size());
  const int d = cfg_.d_model, ff = cfg_.d_ff, H = cfg_.n_heads, dh = d / H;
  if (T > cfg_.max_seq_len) throw SequenceTooLong("input of length " + std::to_string(T));
  TracePtr tr(new Trace);
  tr->input = input;
  tr->T = T;
  tr->adapter_active = adapter_ && adapter_enabled_;
  const std::size_t Td = static_cast<std::size_t>(T) * d;
  const auto& P = params_;
  const double* tok = P.values("tok_emb").data();
  const double* pos = P.values("pos_emb").data();

  std::vector<double> x(Td);
  for (int t = 0; t < T; ++t) {
    const int id = input[static_cast<std::size_t>(t)];
    if (id < 0 || id >= cfg_.vocab_size) throw DomainError("token id " + std::to_string(id) + " out of range");
    for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(t * d + i)] = tok[id * d + i] + pos[t * d + i];
  }

  const int r = tr->adapter_active ? adapter_->rank : 0;
  const double lora_scale = tr->adapter_active ? adapter_->scale() : 0.0;
  const double drop = (tr->adapter_active && training_) ? adapter_->dropout : 0.0;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  auto lora = [&](LayerCache& c, int pi, const std::string& base, const std::vector<double>& in,
                  std::vector<double>& y) {
    auto& lin = c.lora_in[pi];
    lin = in;
    if (drop > 0) {
      auto& mask = c.lora_mask[pi];
      mask.resize(Td);
      for (std::size_t i = 0; i < Td; ++i) {
        const double u = static_cast<double>(dropout_rng_() >> 11) * 0x1.0p-53;
        mask[i] = u < drop ? 0.0 : 1.0 / (1.0 - drop);
        lin[i] *= mask[i];
      }
    }
    auto& h = c.lora_h[pi];
    h.assign(static_cast<std::size_t>(T) * r, 0.0);
    matmul_t(lin.data(), P.values(base + ".lora.A").data(), h.data(), T, d, r);
    std::vector<double> hs(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) hs[i] = lora_scale * h[i];
    matmul_t(hs.data(), P.values(base + ".lora.B").data(), y.data(), T, r, d);
  };

  tr->layers.resize(static_cast<std::size_t>(cfg_.n_layers));
  for (int l = 0; l < cfg_.n_layers; ++l) {
    auto& c = tr->layers[static_cast<std::size_t>(l)];
    const std::string p = layer_prefix(l);
    c.x_in = x;
    c.a.resize(Td);
    c.ln1_mean.resize(T);
    c.ln1_rstd.resize(T);
    layer_norm(x.data(), P.values(p + "ln1.g").data(), P.values(p + "ln1.b").data(), c.a.data(),
               c.ln1_mean.data(), c.ln1_rstd.data(), T, d);
    for (int pi = 0; pi < 3; ++pi) {
      const std::string base = p + "attn." + kProjName[pi];
      c.proj[pi].assign(Td, 0.0);
      matmul_t(c.a.data(), P.values(base + ".W").data(), c.proj[pi].data(), T, d, d);
      if (r > 0) lora(c, pi, base, c.a, c.proj[pi]);
    }
    const auto& q = c.proj[0];
    const auto& k = c.proj[1];
    const auto& v = c.proj[2];
    c.att.assign(static_cast<std::size_t>(H) * T * T, 0.0);
    c.ctx.assign(Td, 0.0);
    for (int hh = 0; hh < H; ++hh) {
      const int off = hh * dh;
      for (int t = 0; t < T; ++t) {
        double* row = c.att.data() + (static_cast<std::size_t>(hh) * T + t) * T;
        double mx = -1e300;
        for (int u = 0; u <= t; ++u) {
          double s = 0.0;
          for (int j = 0; j < dh; ++j) s += q[static_cast<std::size_t>(t * d + off + j)] * k[static_cast<std::size_t>(u * d + off + j)];
          row[u] = s * att_scale;
          mx = std::max(mx, row[u]);
        }
        double z = 0.0;
        for (int u = 0; u <= t; ++u) {
          row[u] = std::exp(row[u] - mx);
          z += row[u];
        }
        for (int u = 0; u <= t; ++u) row[u] /= z;
        double* cr = c.ctx.data() + static_cast<std::size_t>(t) * d + off;
        for (int u = 0; u <= t; ++u) {
          const double w = row[u];
          const double* vr = v.data() + static_cast<std::size_t>(u) * d + off;
          for (int j = 0; j < dh; ++j) cr[j] += w * vr[j];
        }
      }
    }
    {
      const std::string base = p + "attn.o";
      c.proj[3].assign(Td, 0.0);
      matmul_t(c.ctx.data(), P.values(base + ".W").data(), c.proj[3].data(), T, d, d);
      if (r > 0) lora(c, 3, base, c.ctx, c.proj[3]);
    }
    c.x_mid.resize(Td);
    for (std::size_t i = 0; i < Td; ++i) c.x_mid[i] = x[i] + c.proj[3][i];
    c.b.resize(Td);
    c.ln2_mean.resize(T);
    c.ln2_rstd.resize(T);
    layer_norm(c.x_mid.data(), P.values(p + "ln2.g").data(), P.values(p + "ln2.b").data(), c.b.data(),
               c.ln2_mean.data(), c.ln2_rstd.data(), T, d);
    const std::size_t Tf = static_cast<std::size_t>(T) * ff;
    c.u.assign(Tf, 0.0);
    const double* b1 = P.values(p + "ff.b1").data();
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < ff; ++i) c.u[static_cast<std::size_t>(t * ff + i)] = b1[i];
    }
    matmul_t(c.b.data(), P.values(p + "ff.W1").data(), c.u.data(), T, d, ff);
    c.g.resize(Tf);
    for (std::size_t i = 0; i < Tf; ++i) c.g[i] = gelu(c.u[i]);
    const double* b2 = P.values(p + "ff.b2").data();
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(t * d + i)] = c.x_mid[static_cast<std::size_t>(t * d + i)] + b2[i];
    }
    matmul_t(c.g.data(), P.values(p + "ff.W2").data(), x.data(), T, ff, d);
  }
  tr->x_final = x;
  tr->hidden.resize(Td);
  tr->lnf_mean.resize(T);
  tr->lnf_rstd.resize(T);
  layer_norm(x.data(), P.values("lnf.g").data(), P.values("lnf.b").data(), tr->hidden.data(),
             tr->lnf_mean.data(), tr->lnf_rstd.data(), T, d);
  return tr;
}

const std::vector<double>& DecoderModel::hidden(const Trace& trace) const { return trace.hidden; }

void DecoderModel::backward(const Trace& tr, const std::vector<double>& d_hidden) {
  const int T = tr.T;
  const int d = cfg_.d_model, ff = cfg_.d_ff, H = cfg_.n_heads, dh = d / H;
  const std::size_t Td = static_cast<std::size_t>(T) * d;
  auto& P = params_;
  const int r = tr.adapter_active ? adapter_->rank : 0;
  const double lora_scale = tr.adapter_active ? adapter_->scale() : 0.0;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> dx(Td, 0.0);
  layer_norm_backward(tr.x_final.data(), P.values("lnf.g").data(), tr.lnf_mean.data(), tr.lnf_rstd.data(),
                      d_hidden.data(), dx.data(), P.grads("lnf.g").data(), P.grads("lnf.b").data(), T, d);

  // Returns d(input) contribution of a LoRA branch given d(output).
  auto lora_backward = [&](const LayerCache& c, int pi, const std::string& base, const std::vector<double>& dy,
                           std::vector<double>& d_in) {
    std::vector<double> dys(Td);
    for (std::size_t i = 0; i < Td; ++i) dys[i] = lora_scale * dy[i];
    std::vector<double> dh_(static_cast<std::size_t>(T) * r, 0.0);
    matmul_t_backward(c.lora_h[pi].data(), P.values(base + ".lora.B").data(), dys.data(), dh_.data(),
                      P.grads(base + ".lora.B").data(), T, r, d);
    std::vector<double> dlin(Td, 0.0);
    matmul_t_backward(c.lora_in[pi].data(), P.values(base + ".lora.A").data(), dh_.data(), dlin.data(),
                      P.grads(base + ".lora.A").data(), T, d, r);
    const auto& mask = c.lora_mask[pi];
    for (std::size_t i = 0; i < Td; ++i) d_in[i] += mask.empty() ? dlin[i] : dlin[i] * mask[i];
  };

  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    const auto& c = tr.layers[static_cast<std::size_t>(l)];
    const std::string p = layer_prefix(l);
    const std::size_t Tf = static_cast<std::size_t>(T) * ff;

    // Feed-forward residual.
    std::vector<double> dx_mid = dx;
    auto db2 = P.grads(p + "ff.b2");
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < d; ++i) db2[static_cast<std::size_t>(i)] += dx[static_cast<std::size_t>(t * d + i)];
    }
    std::vector<double> dg(Tf, 0.0);
    matmul_t_backward(c.g.data(), P.values(p + "ff.W2").data(), dx.data(), dg.data(), P.grads(p + "ff.W2").data(),
                      T, ff, d);
    for (std::size_t i = 0; i < Tf; ++i) dg[i] *= gelu_grad(c.u[i]);
    auto db1 = P.grads(p + "ff.b1");
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < ff; ++i) db1[static_cast<std::size_t>(i)] += dg[static_cast<std::size_t>(t * ff + i)];
    }
    std::vector<double> db(Td, 0.0);
    matmul_t_backward(c.b.data(), P.values(p + "ff.W1").data(), dg.data(), db.data(), P.grads(p + "ff.W1").data(),
                      T, d, ff);
    layer_norm_backward(c.x_mid.data(), P.values(p + "ln2.g").data(), c.ln2_mean.data(), c.ln2_rstd.data(),
                        db.data(), dx_mid.data(), P.grads(p + "ln2.g").data(), P.grads(p + "ln2.b").data(), T, d);

    // Attention residual.
    std::vector<double> dx_in = dx_mid;
    const auto& d_o = dx_mid;
    std::vector<double> dctx(Td, 0.0);
    {
      const std::string base = p + "attn.o";
      matmul_t_backward(c.ctx.data(), P.values(base + ".W").data(), d_o.data(), dctx.data(),
                        P.grads(base + ".W").data(), T, d, d);
      if (r > 0) lora_backward(c, 3, base, d_o, dctx);
    }
    const auto& q = c.proj[0];
    const auto& k = c.proj[1];
    const auto& v = c.proj[2];
    std::array<std::vector<double>, 3> dqkv;
    for (auto& m : dqkv) m.assign(Td, 0.0);
    std::vector<double> dP(static_cast<std::size_t>(T));
    for (int hh = 0; hh < H; ++hh) {
      const int off = hh * dh;
      for (int t = 0; t < T; ++t) {
        const double* row = c.att.data() + (static_cast<std::size_t>(hh) * T + t) * T;
        const double* dcr = dctx.data() + static_cast<std::size_t>(t) * d + off;
        double dot = 0.0;
        for (int u = 0; u <= t; ++u) {
          const double* vr = v.data() + static_cast<std::size_t>(u) * d + off;
          double* dvr = dqkv[2].data() + static_cast<std::size_t>(u) * d + off;
          double s = 0.0;
          for (int j = 0; j < dh; ++j) {
            s += dcr[j] * vr[j];
            dvr[j] += row[u] * dcr[j];
          }
          dP[static_cast<std::size_t>(u)] = s;
          dot += s * row[u];
        }
        double* dqr = dqkv[0].data() + static_cast<std::size_t>(t) * d + off;
        const double* qr = q.data() + static_cast<std::size_t>(t) * d + off;
        for (int u = 0; u <= t; ++u) {
          const double ds = row[u] * (dP[static_cast<std::size_t>(u)] - dot) * att_scale;
          if (ds == 0.0) continue;
          const double* kr = k.data() + static_cast<std::size_t>(u) * d + off;
          double* dkr = dqkv[1].data() + static_cast<std::size_t>(u) * d + off;
          for (int j = 0; j < dh; ++j) {
            dqr[j] += ds * kr[j];
            dkr[j] += ds * qr[j];
          }
        }
      }
    }
    std::vector<double> da(Td, 0.0);
    for (int pi = 0; pi < 3; ++pi) {
      const std::string base = p + "attn." + kProjName[pi];
      matmul_t_backward(c.a.data(), P.values(base + ".W").data(), dqkv[pi].data(), da.data(),
                        P.grads(base + ".W").data(), T, d, d);
      if (r > 0) lora_backward(c, pi, base, dqkv[pi], da);
    }
    layer_norm_backward(c.x_in.data(), P.values(p + "ln1.g").data(), c.ln1_mean.data(), c.ln1_rstd.data(),
                        da.data(), dx_in.data(), P.grads(p + "ln1.g").data(), P.grads(p + "ln1.b").data(), T, d);
    dx = std::move(dx_in);
  }

  auto dtok = P.grads("tok_emb");
  auto dpos = P.grads("pos_emb");
  for (int t = 0; t < T; ++t) {
    const int id = tr.input[static_cast<std::size_t>(t)];
    for (int i = 0; i < d; ++i) {
      const double g = dx[static_cast<std::size_t>(t * d + i)];
      dtok[static_cast<std::size_t>(id * d + i)] += g;
      dpos[static_cast<std::size_t>(t * d + i)] += g;
    }
  }
}

// ---------------------------------------------------------------------------
// Policy

PolicyTrace PolicyModel::trace(const TokenSequence& prompt, const TokenSequence& response) const {
  if (response.empty()) throw DomainError("response must be non-empty");
  const ModelConfig& cfg = config();
  if (prompt.size() + response.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw SequenceTooLong("prompt (" + std::to_string(prompt.size()) + ") + response (" +
                          std::to_string(response.size()) + ") exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
  }
  for (int id : response) {
    if (id < 0 || id >= cfg.vocab_size) throw DomainError("token id " + std::to_string(id) + " out of range");
  }
  // [BOS] + prompt + response, shifted: position prompt_len + i predicts response[i].
  // Specials occupy the last five ids, BOS first.
  TokenSequence input;
  input.reserve(prompt.size() + response.size());
  input.push_back(cfg.vocab_size > 5 ? cfg.vocab_size - 5 : 0);
  input.insert(input.end(), prompt.begin(), prompt.end());
  input.insert(input.end(), response.begin(), response.end() - 1);

  PolicyTrace out;
  out.trace = forward(input);
  out.prompt_len = prompt.size();
  out.response = response;
  const int d = cfg.d_model, V = cfg.vocab_size;
  const std::size_t n = response.size();
  const double* W = params().values("head.W").data();
  const double* b = params().values("head.b").data();
  const auto& h = hidden(*out.trace);
  out.log_dists.assign(n * static_cast<std::size_t>(V), 0.0);
  out.token_log_probs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* hr = h.data() + (out.prompt_len + i) * static_cast<std::size_t>(d);
    double* row = out.log_dists.data() + i * static_cast<std::size_t>(V);
    double mx = -1e300;
    for (int v = 0; v < V; ++v) {
      const double* wr = W + static_cast<std::size_t>(v) * d;
      double s = b[v];
      for (int j = 0; j < d; ++j) s += hr[j] * wr[j];
      row[v] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (int v = 0; v < V; ++v) z += std::exp(row[v] - mx);
    const double lse = mx + std::log(z);
    for (int v = 0; v < V; ++v) row[v] -= lse;
    out.token_log_probs[i] = row[response[i]];
  }
  double s = 0.0;
  for (double lp : out.token_log_probs) s += lp;
  out.score = s;
  return out;
}

std::vector<double> PolicyModel::token_log_probs(const TokenSequence& prompt, const TokenSequence& response) const {
  return trace(prompt, response).token_log_probs;
}

double PolicyModel::sequence_log_score(const TokenSequence& prompt, const TokenSequence& response) const {
  return trace(prompt, response).score;
}

void PolicyModel::backward(const PolicyTrace& t, const std::vector<double>& d_logits) {
  const ModelConfig& cfg = config();
  const int d = cfg.d_model, V = cfg.vocab_size;
  const std::size_t n = t.response.size();
  if (d_logits.size() != n * static_cast<std::size_t>(V)) throw DomainError("d_logits has the wrong shape");
  const int T = t.trace->T;
  std::vector<double> dh(static_cast<std::size_t>(T) * d, 0.0);
  const double* W = params().values("head.W").data();
  double* dW = params().grads("head.W").data();
  double* db = params().grads("head.b").data();
  const auto& h = hidden(*t.trace);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = t.prompt_len + i;
    const double* hr = h.data() + pos * static_cast<std::size_t>(d);
    double* dhr = dh.data() + pos * static_cast<std::size_t>(d);
    const double* gr = d_logits.data() + i * static_cast<std::size_t>(V);
    for (int v = 0; v < V; ++v) {
      const double g = gr[v];
      if (g == 0.0) continue;
      db[v] += g;
      const double* wr = W + static_cast<std::size_t>(v) * d;
      double* dwr = dW + static_cast<std::size_t>(v) * d;
      for (int j = 0; j < d; ++j) {
        dhr[j] += g * wr[j];
        dwr[j] += g * hr[j];
      }
    }
  }
  DecoderModel::backward(*t.trace, dh);
}

ReferenceModel::ReferenceModel(const PolicyModel& policy) : model_(std::make_shared<const PolicyModel>([&] {
      PolicyModel copy = policy;
      copy.set_training(false);
      copy.freeze();
      copy.zero_grad();
      return copy;
    }())) {}

ReferenceModel snapshot_reference(const PolicyModel& policy) { return ReferenceModel(policy); }

// ---------------------------------------------------------------------------
// Reward

RewardTrace RewardModel::trace(const TokenSequence& prompt, const TokenSequence& response) const {
  if (response.empty()) throw DomainError("response must be non-empty");
  const ModelConfig& cfg = config();
  if (prompt.size() + response.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw SequenceTooLong("prompt (" + std::to_string(prompt.size()) + ") + response (" +
                          std::to_string(response.size()) + ") exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
  }
  TokenSequence input(prompt);
  input.insert(input.end(), response.begin(), response.end());
  RewardTrace out;
  out.trace = forward(input);
  const int d = cfg.d_model;
  const auto& h = hidden(*out.trace);
  const double* hr = h.data() + (input.size() - 1) * static_cast<std::size_t>(d);
  const double* w = params().values("head.W").data();
  double s = params().values("head.b")[0];
  for (int j = 0; j < d; ++j) s += w[j] * hr[j];
  out.reward = s;
  return out;
}

double RewardModel::score(const TokenSequence& prompt, const TokenSequence& response) const {
  return trace(prompt, response).reward;
}

void RewardModel::backward(const RewardTrace& t, double d_reward) {
  const int d = config().d_model;
  const int T = t.trace->T;
  std::vector<double> dh(static_cast<std::size_t>(T) * d, 0.0);
  const std::size_t last = static_cast<std::size_t>(T - 1);
  const double* w = params().values("head.W").data();
  double* dw = params().grads("head.W").data();
  const auto& h = hidden(*t.trace);
  params().grads("head.b")[0] += d_reward;
  for (int j = 0; j < d; ++j) {
    dw[j] += d_reward * h[last * d + static_cast<std::size_t>(j)];
    dh[last * d + static_cast<std::size_t>(j)] = d_reward * w[j];
  }
  DecoderModel::backward(*t.trace, dh);
}

double reward_score(const RewardModel& model, const TokenSequence& prompt, const TokenSequence& response) {
  return model.score(prompt, response);
}

RewardStats RewardStats::fit(const std::vector<double>& raw) {
  if (raw.empty()) throw EmptyDataset("cannot fit reward statistics on no scores");
  RewardStats s;
  double m = 0.0;
  for (double v : raw) m += v;
  m /= static_cast<double>(raw.size());
  double var = 0.0;
  for (double v : raw) var += (v - m) * (v - m);
  var /= static_cast<double>(raw.size());
  s.mean = m;
  s.std = var > 0 ? std::sqrt(var) : 1.0;
  s.fitted = true;
  return s;
}

json RewardStats::to_json() const { return {{"mean", mean}, {"std", std}, {"fitted", fitted}}; }

RewardStats RewardStats::from_json(const json& j) {
  RewardStats s;
  s.mean = j.value("mean", 0.0);
  s.std = j.value("std", 1.0);
  s.fitted = j.value("fitted", false);
  return s;
}

double standardize(double raw, const RewardStats& stats) {
  if (!stats.fitted) throw StatsNotFitted("reward statistics have not been fitted");
  return (raw - stats.mean) / stats.std;
}

}  // namespace prefalign
