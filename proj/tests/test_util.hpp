#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>

#include "prefalign/align.hpp"
#include "prefalign/genclient.hpp"

namespace testutil {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("prefalign-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline prefalign::ModelConfig toy_config(std::uint64_t seed, double init_std = 0.02) {
  prefalign::ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_seq_len = 32;
  c.init_std = init_std;
  c.seed = seed;
  return c;
}

inline prefalign::TokenSequence random_tokens(std::mt19937_64& rng, std::size_t len, int vocab = 256) {
  prefalign::TokenSequence s(len);
  for (auto& t : s) t = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab));
  return s;
}

/// Random triples with distinct chosen/rejected responses.
inline prefalign::PairBatch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t max_prompt = 6,
                                         std::size_t max_response = 6) {
  prefalign::PairBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    prefalign::PairTriple t;
    t.prompt = random_tokens(rng, 1 + rng() % max_prompt);
    t.chosen = random_tokens(rng, 1 + rng() % max_response);
    do {
      t.rejected = random_tokens(rng, 1 + rng() % max_response);
    } while (t.rejected == t.chosen);
    b.push_back(std::move(t));
  }
  return b;
}

/// Multiplies every trainable value by (1 + noise) so a policy drifts away
/// from its reference snapshot.
inline void perturb(prefalign::DecoderModel& m, std::uint64_t seed, double scale = 0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  auto& ps = m.params();
  for (const auto& b : ps.blocks()) {
    if (!b.trainable) continue;
    for (std::size_t i = 0; i < b.size; ++i) {
      double& v = ps.all_values()[b.offset + i];
      v = v * (1.0 + n(rng)) + 0.1 * n(rng);
    }
  }
}

/// Endpoint answering through a callback; counts calls.
class LambdaEndpoint : public prefalign::ChatEndpoint {
 public:
  using Fn = std::function<std::string(const prefalign::ChatRequest&, int call)>;
  explicit LambdaEndpoint(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const prefalign::ChatRequest& r) override { return fn_(r, calls_++); }
  std::string model_name() const override { return "lambda"; }
  int calls() const { return calls_; }

 private:
  Fn fn_;
  std::atomic<int> calls_{0};
};

}  // namespace testutil
