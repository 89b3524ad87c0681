// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "prefalign/pipeline.hpp"
#include "test_util.hpp"

using namespace prefalign;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

struct Models {
  PolicyModel policy;
  ReferenceModel ref;
  RewardModel reward;
  RewardStats stats;
};

// A drifted policy, its snapshot taken before the drift, and a frozen reward.
Models make_models(const ModelConfig& cfg, std::uint64_t seed, const PairBatch& batch) {
  ModelConfig c = cfg;
  c.seed = seed;
  PolicyModel p(c);
  ReferenceModel r(p);
  testutil::perturb(p, seed + 1);
  ModelConfig rc = reward_config_for(c);
  rc.seed = seed + 2;
  RewardModel rm(rc);
  std::vector<double> raw;
  for (const auto& t : batch) {
    raw.push_back(rm.score(t.prompt, t.chosen));
    raw.push_back(rm.score(t.prompt, t.rejected));
  }
  rm.freeze();
  return {std::move(p), std::move(r), std::move(rm), RewardStats::fit(raw)};
}

// 1
Outcome reduction_identity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto batch = testutil::random_batch(rng, 1 + i % 4, 5, 5);
    auto m = make_models(testutil::toy_config(i, 0.1), i, batch);
    AlignConfig cfg;
    cfg.beta = 0.05 + static_cast<double>(rng() % 100) / 50.0;
    cfg.gamma = (i % 3 == 0) ? 0.0 : 0.01 * static_cast<double>(i % 5);
    cfg.lambda = 0.0;
    const double a = dpo_loss(batch, m.policy, m.ref, cfg, false).total;
    const double b = dpof_loss(batch, m.policy, m.ref, m.reward, m.stats, cfg, false).total;
    worst = std::max(worst, std::abs(a - b));
  }
  const double t = since(t0);
  return {worst <= 1e-12 && t < 10.0, fmt("max |diff| = %.3g over 1000 instances in %.2f s", worst, t)};
}

// 2
Outcome zero_margin_identity() {
  std::mt19937_64 rng(202);
  double worst = 0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto batch = testutil::random_batch(rng, 1 + i % 6, 8, 8);
    PolicyModel p(testutil::toy_config(i, 0.2));
    const ReferenceModel ref(p);
    RewardModel rm(reward_config_for(testutil::toy_config(i + 7, 0.2)));
    rm.freeze();
    AlignConfig cfg;
    cfg.gamma = 0.0;
    // constant standardized rewards keep the reward margin at zero
    PairBatch b = batch;
    for (auto& t : b) t.reward_chosen = t.reward_rejected = 0.3;
    RewardStats st;
    st.fitted = true;
    worst = std::max(worst, std::abs(dpo_loss(batch, p, ref, cfg, false).total - std::log(2.0)));
    worst = std::max(worst, std::abs(dpof_loss(b, p, ref, rm, st, cfg, false).total - std::log(2.0)));
  }
  return {worst <= 1e-9, fmt("max |loss - ln 2| = %.3g over 50 batches", worst)};
}

// 3
Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  ModelConfig cfg;
  cfg.d_model = 64;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.d_ff = 128;
  cfg.max_seq_len = 32;
  cfg.init_std = 0.05;
  std::mt19937_64 rng(303);
  const auto batch = testutil::random_batch(rng, 2, 5, 5);
  auto m = make_models(cfg, 3, batch);
  AlignConfig ac;
  ac.beta = 1.0;
  ac.gamma = 0.05;

  m.policy.zero_grad();
  dpo_loss(batch, m.policy, m.ref, ac, true);
  const double e_dpo = grad_check([&] { return dpo_loss(batch, m.policy, m.ref, ac, false).total; },
                                  m.policy.params(), m.policy.params().all_grads(), 1e-4, 120, 1);

  m.policy.zero_grad();
  dpof_loss(batch, m.policy, m.ref, m.reward, m.stats, ac, true);
  const double e_dpof =
      grad_check([&] { return dpof_loss(batch, m.policy, m.ref, m.reward, m.stats, ac, false).total; },
                 m.policy.params(), m.policy.params().all_grads(), 1e-4, 120, 2);

  ModelConfig rc = reward_config_for(cfg);
  rc.n_layers = 2;
  rc.init_std = 0.05;
  RewardModel r(rc);
  r.zero_grad();
  reward_loss(batch, r, true);
  const double e_rw = grad_check([&] { return reward_loss(batch, r, false); }, r.params(), r.params().all_grads(),
                                 1e-4, 120, 3);
  const double t = since(t0);
  const double worst = std::max({e_dpo, e_dpof, e_rw});
  return {worst < 1e-4 && t < 60.0,
          fmt("max rel err dpo %.2g, dpof %.2g, reward %.2g (120 coords each) in %.1f s", e_dpo, e_dpof, e_rw, t)};
}

// 4
Outcome passk_oracle() {
  double worst = 0;
  for (int n = 1; n <= 8; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        // enumerate every k-subset of n items where the first c pass
        int hit = 0, total = 0;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
          if (__builtin_popcount(mask) != k) continue;
          ++total;
          if (mask & ((1u << c) - 1u)) ++hit;
        }
        worst = std::max(worst, std::abs(pass_at_k(n, c, k) - static_cast<double>(hit) / total));
      }
    }
  }
  const double spot = pass_at_k(5, 2, 3);
  return {worst < 1e-12 && std::abs(spot - 0.9) < 1e-12,
          fmt("max |err| vs enumeration = %.3g; pass@3(n=5,c=2) = %.12f", worst, spot)};
}

// 5
Outcome alignment_ordering() {
  const auto t0 = Clock::now();
  SyntheticOptions so;
  so.n_pairs = 2000;
  so.seed = 42;
  const auto pairs = synthetic_pairs(so);
  const auto split = split_dataset(pairs, SplitRatios{}, 7);
  const auto vocab = Vocabulary::byte_level();
  const EncodeOptions eo;
  const auto train = encode_pairs(select_pairs(pairs, split.train), vocab, eo);
  const auto val = encode_pairs(select_pairs(pairs, split.validation), vocab, eo);
  const auto test = encode_pairs(select_pairs(pairs, split.test), vocab, eo);

  ModelConfig mc;
  mc.seed = 1;
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.micro_batch = 4;
  tc.accumulation = 4;
  tc.seed = 3;
  tc.weight_decay = 0.0;
  tc.align.gamma = 0.0;
  tc.max_epochs = 3;

  const PolicyModel init(mc);
  const ReferenceModel ref(init);
  const double base = preference_accuracy(init, test);

  TrainConfig rc = tc;
  rc.max_epochs = 1;
  const auto rr = train_reward(train, reward_config_for(mc), rc);
  const auto dpo = train_policy(init, train, val, tc, ref);
  const double a_dpo = preference_accuracy(dpo.policy, test);
  tc.method = Method::DPOF;
  const auto dpof = train_policy(init, train, val, tc, ref, &rr.model, &rr.stats);
  const double a_dpof = preference_accuracy(dpof.policy, test);
  const double t = since(t0);
  std::ostringstream os;
  os << "test accuracy baseline " << base << ", DPO " << a_dpo << ", DPO-f+ " << a_dpof << " on " << test.size()
     << " pairs in " << static_cast<int>(t) << " s";
  return {a_dpof >= a_dpo && a_dpo >= base && a_dpof >= 0.80 && t < 600.0, os.str()};
}

// 6
Outcome labeling_lattice() {
  int agree = 0;
  for (bool ran : {false, true}) {
    for (bool passed : {false, true}) {
      for (double g : {3.99, 4.0}) {
        const bool want = ran && passed && g >= 4.0;
        if (accepts(ran ? ExecStatus::Ran : ExecStatus::CompileError, passed, g) == want) ++agree;
      }
    }
  }
  const bool boundary = accepts(ExecStatus::Ran, true, 4.0) && !accepts(ExecStatus::Ran, true, 3.99);
  return {agree == 8 && boundary, fmt("%.0f/8 lattice cases match; 4.0 accepted, 3.99 rejected", agree)};
}

ResourceLimits limits(double wall = 5.0) {
  ResourceLimits l;
  l.wall_time = wall;
  return l;
}

const std::vector<ProblemId> kProblems{ProblemId::TwoSum, ProblemId::MinStack, ProblemId::TicTacToe};

// 7
Outcome sandbox_fixtures(Sandbox& box) {
  std::size_t passed = 0, total = 0;
  for (auto problem : kProblems) {
    for (auto lang : {Language::Cpp, Language::Python}) {
      const auto rep = box.run_suite(reference_solution(problem, lang), lang, builtin_suite(problem), limits());
      for (const auto& c : rep.cases) passed += c.result == CaseResult::Pass;
      total += rep.cases.size();
    }
  }
  std::set<std::string> failed_categories;
  const auto buggy = box.run_suite(buggy_minstack_solution(), Language::Cpp, builtin_suite(ProblemId::MinStack),
                                   limits());
  for (const auto& c : buggy.cases) {
    if (c.result != CaseResult::Pass) failed_categories.insert(c.category);
  }
  const bool buggy_ok = failed_categories.count("empty_stack") && failed_categories.count("min_tracking");

  const double wall = 1.0;
  const auto loop = box.execute("int main(){volatile unsigned x=0; for(;;) ++x;}", Language::Cpp, limits(wall));
  const bool timeout_ok = loop.status == ExecStatus::Timeout && loop.wall_time_used <= wall + 1.0;

  std::ostringstream os;
  os << "references " << passed << "/" << total << " cases; buggy MinStack fails {";
  for (const auto& c : failed_categories) os << ' ' << c;
  os << " }; infinite loop " << to_string(loop.status) << " after " << loop.wall_time_used << " s";
  return {passed == total && total > 0 && buggy_ok && timeout_ok, os.str()};
}

// 8
Outcome augmentation_preservation(Sandbox& box) {
  std::vector<SourceProgram> originals;
  for (auto problem : kProblems) {
    for (auto lang : {Language::Cpp, Language::Python}) {
      SourceProgram p;
      p.id = to_string(problem) + "_" + to_string(lang);
      p.problem = problem;
      p.language = lang;
      p.text = reference_solution(problem, lang);
      originals.push_back(p);
    }
  }
  std::map<std::string, std::vector<CaseResult>> parent_results;
  for (const auto& p : originals) {
    parent_results[p.id] = box.run_suite(p.text, p.language, builtin_suite(p.problem), limits()).results();
  }
  std::map<std::string, std::vector<CaseResult>> seen;  // by variant text
  std::size_t variants = 0, regressions = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AugmentConfig ac;
    ac.variants_per_program = 3;
    ac.seed = seed;
    for (const auto& v : augment_corpus(originals, ac)) {
      if (v.origin != Origin::Augmented) continue;
      ++variants;
      const std::string key = to_string(v.language) + '\n' + v.text;
      auto it = seen.find(key);
      if (it == seen.end()) {
        it = seen.emplace(key, box.run_suite(v.text, v.language, builtin_suite(v.problem), limits()).results()).first;
      }
      if (it->second != parent_results.at(v.root_id())) ++regressions;
    }
  }
  std::ostringstream os;
  os << variants << " variants (" << seen.size() << " distinct) across 20 seeds, " << regressions
     << " behavioral regressions";
  return {variants > 0 && regressions == 0, os.str()};
}

// 9
Outcome geval_aggregation() {
  const double g = g_eval_of({3.09, 3.30, 2.61, 3.61, 2.69, 3.14, 3.16});
  std::mt19937_64 rng(909);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<VerdictChoice> v(1 + rng() % 500);
    for (auto& c : v) c = static_cast<VerdictChoice>(rng() % 3);
    const auto w = aggregate_choices(v);
    worst = std::max(worst, std::abs(w.win + w.loss + w.tie - 1.0));
  }
  return {std::abs(g - 3.09) <= 0.005 && worst <= 1e-9,
          fmt("G-Eval of the baseline novice row = %.4f; max |W+L+T - 1| = %.3g", g, worst)};
}

// 10
Outcome kl_and_invariance() {
  std::mt19937_64 rng(1010);
  double min_kl = 1e300, self_kl = 0, shift = 0, phi_grad = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto batch = testutil::random_batch(rng, 3, 5, 5);
    PolicyModel p(testutil::toy_config(i, 0.2));
    const ReferenceModel ref(p);
    for (const auto& t : batch) self_kl = std::max(self_kl, std::abs(forward_kl(p, ref, t.prompt, t.chosen)));
    testutil::perturb(p, i + 50, 0.3);
    for (const auto& t : batch) min_kl = std::min(min_kl, forward_kl(p, ref, t.prompt, t.rejected));

    RewardModel r(reward_config_for(testutil::toy_config(i + 3, 0.2)));
    const double before = reward_loss(batch, r, false);
    const double c = static_cast<double>(static_cast<int>(rng() % 2001) - 1000) / 100.0;
    for (auto& b : r.params().values("head.b")) b += c;
    shift = std::max(shift, std::abs(reward_loss(batch, r, false) - before));

    auto m = make_models(testutil::toy_config(i, 0.1), i, batch);
    AlignConfig ac;
    ac.gamma = 0.02;
    m.reward.zero_grad();
    m.policy.zero_grad();
    dpof_loss(batch, m.policy, m.ref, m.reward, m.stats, ac, true);
    for (double g : m.reward.params().all_grads()) phi_grad = std::max(phi_grad, std::abs(g));
  }
  return {min_kl >= 0 && self_kl <= 1e-12 && shift <= 1e-12 && phi_grad == 0.0,
          fmt("min KL %.3g, max self-KL %.3g, max shift change %.3g, max |phi grad| %.3g", min_kl, self_kl, shift,
              phi_grad)};
}

// 11
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel == artifacts::kExecutionTimings) continue;  // wall-clock sidecar
    out[rel] = sha256_hex(read_file(e.path()));
  }
  return out;
}

Outcome pipeline_determinism() {
  testutil::TempDir a, b;
  auto cfg = PipelineConfig::load(PREFALIGN_FIXTURES "/pipeline.json");
  cfg.workdir = a.path();
  run_pipeline(cfg);
  cfg.workdir = b.path();
  run_pipeline(cfg);
  const auto sa = snapshot(a.path()), sb = snapshot(b.path());
  std::vector<std::string> diff;
  for (const auto& [k, v] : sa) {
    const auto it = sb.find(k);
    if (it == sb.end() || it->second != v) diff.push_back(k);
  }
  for (const auto& [k, v] : sb) {
    if (!sa.count(k)) diff.push_back(k);
  }
  const bool complete = sa.count(artifacts::kPairs) && sa.count(artifacts::kSplit) &&
                        sa.count("models/policy_dpo.ckpt") && sa.count("models/policy_dpof.ckpt") &&
                        sa.count("logs/train_dpo.jsonl");
  std::ostringstream os;
  os << sa.size() << " artifacts compared, " << diff.size() << " differ";
  for (const auto& d : diff) os << ' ' << d;
  return {diff.empty() && complete, os.str()};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  Sandbox box;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"reduction identity", reduction_identity},
      {"zero-margin identity", zero_margin_identity},
      {"gradient fidelity", gradient_fidelity},
      {"pass@k oracle", passk_oracle},
      {"synthetic alignment ordering", alignment_ordering},
      {"labeling rule", labeling_lattice},
      {"sandbox fixtures", [&] { return sandbox_fixtures(box); }},
      {"augmentation preservation", [&] { return augmentation_preservation(box); }},
      {"G-Eval aggregation", geval_aggregation},
      {"KL and invariance", kl_and_invariance},
      {"pipeline determinism", pipeline_determinism},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, fn] : criteria) {
    ++index;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.ok;
    std::printf("%s %2d %s: %s\n", o.ok ? "PASS" : "FAIL", index, name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
