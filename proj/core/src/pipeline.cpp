#include "prefalign/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

namespace prefalign {

namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<Stage, const char*>>& stage_names() {
  static const std::vector<std::pair<Stage, const char*>> names{
      {Stage::Augment, "augment"}, {Stage::Generate, "generate"}, {Stage::Sandbox, "sandbox"},
      {Stage::Judge, "judge"},     {Stage::Pair, "pair"},         {Stage::Train, "train"},
      {Stage::Eval, "eval"}};
  return names;
}

}  // namespace

std::string to_string(Stage s) {
  for (const auto& [st, name] : stage_names()) {
    if (st == s) return name;
  }
  return "unknown";
}

Stage parse_stage(std::string_view s) {
  for (const auto& [st, name] : stage_names()) {
    if (s == name) return st;
  }
  throw DomainError("unknown stage '" + std::string(s) + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> v{Stage::Augment, Stage::Generate, Stage::Sandbox, Stage::Judge,
                                    Stage::Pair,    Stage::Train,    Stage::Eval};
  return v;
}

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  if (workdir.empty()) throw DomainError("config: workdir is required");
  augment.validate();
  if (templates.empty()) throw DomainError("config: at least one template is required");
  if (k_samples < 1) throw DomainError("config: k_samples must be >= 1");
  limits.validate();
  if (judge_replicates < 1) throw DomainError("config: judge_replicates must be >= 1");
  if (max_pairs_per_group < 1) throw DomainError("config: max_pairs_per_group must be >= 1");
  ratios.validate();
  model.validate();
  reward_train.validate();
  policy_train.validate();
  if (methods.empty()) throw DomainError("config: at least one training method is required");
  for (int k : k_values) {
    if (k < 1) throw DomainError("config: k values must be >= 1");
  }
}

json PipelineConfig::to_json() const {
  json tmpl = json::array();
  for (auto t : templates) tmpl.push_back(to_string(t));
  json meth = json::array();
  for (auto m : methods) meth.push_back(to_string(m));
  return {{"corpus", corpus.string()},
          {"workdir", workdir.string()},
          {"seed", seed},
          {"profile", to_string(profile)},
          {"augment", augment.to_json()},
          {"generator", generator.to_json()},
          {"judge", judge.to_json()},
          {"templates", tmpl},
          {"k_samples", k_samples},
          {"concurrency", concurrency},
          {"max_tokens", max_tokens},
          {"limits", limits.to_json()},
          {"cxx", cxx.string()},
          {"python", python.string()},
          {"sandbox_workers", sandbox_workers},
          {"judge_replicates", judge_replicates},
          {"pairwise", pairwise},
          {"max_pairs_per_group", max_pairs_per_group},
          {"ratios", {{"train", ratios.train}, {"validation", ratios.validation}, {"test", ratios.test}}},
          {"model", model.to_json()},
          {"encode", {{"max_seq_len", encode.max_seq_len}, {"max_response", encode.max_response}}},
          {"reward_train", reward_train.to_json()},
          {"policy_train", policy_train.to_json()},
          {"methods", meth},
          {"k_values", k_values}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  c.corpus = j.value("corpus", std::string{});
  c.workdir = j.value("workdir", std::string{});
  c.seed = j.value("seed", c.seed);
  c.profile = parse_profile(j.value("profile", std::string("novice")));
  if (j.contains("augment")) c.augment = AugmentConfig::from_json(j.at("augment"));
  if (j.contains("generator")) c.generator = EndpointConfig::from_json(j.at("generator"));
  if (j.contains("judge")) c.judge = EndpointConfig::from_json(j.at("judge"));
  if (j.contains("templates")) {
    c.templates.clear();
    for (const auto& t : j.at("templates")) c.templates.push_back(parse_template_id(t.get<std::string>()));
  }
  c.k_samples = j.value("k_samples", c.k_samples);
  c.concurrency = j.value("concurrency", c.concurrency);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  if (j.contains("limits")) c.limits = ResourceLimits::from_json(j.at("limits"));
  c.cxx = j.value("cxx", std::string{});
  c.python = j.value("python", std::string{});
  c.sandbox_workers = j.value("sandbox_workers", c.sandbox_workers);
  c.judge_replicates = j.value("judge_replicates", c.judge_replicates);
  c.pairwise = j.value("pairwise", c.pairwise);
  c.max_pairs_per_group = j.value("max_pairs_per_group", c.max_pairs_per_group);
  if (j.contains("ratios")) {
    const auto& r = j.at("ratios");
    c.ratios.train = r.value("train", c.ratios.train);
    c.ratios.validation = r.value("validation", c.ratios.validation);
    c.ratios.test = r.value("test", c.ratios.test);
  }
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
  if (j.contains("encode")) {
    c.encode.max_seq_len = j.at("encode").value("max_seq_len", c.encode.max_seq_len);
    c.encode.max_response = j.at("encode").value("max_response", c.encode.max_response);
  }
  if (j.contains("reward_train")) c.reward_train = TrainConfig::from_json(j.at("reward_train"));
  if (j.contains("policy_train")) c.policy_train = TrainConfig::from_json(j.at("policy_train"));
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
  }
  if (j.contains("k_values")) c.k_values = j.at("k_values").get<std::vector<int>>();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  PipelineConfig c = from_json(j);
  const fs::path base = path.parent_path();
  auto resolve = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(c.corpus);
  resolve(c.workdir);
  return c;
}

void PipelineConfig::apply_env_overrides() {
  if (const char* key = std::getenv("PREFALIGN_API_KEY")) {
    generator.api_key = key;
    judge.api_key = key;
  }
  if (const char* url = std::getenv("PREFALIGN_GEN_ENDPOINT")) generator.url = url;
  if (const char* url = std::getenv("PREFALIGN_JUDGE_ENDPOINT")) judge.url = url;
}

std::string PipelineConfig::hash() const {
  // Paths are left out so that the same settings hash identically in any workdir.
  json j = to_json();
  j.erase("corpus");
  j.erase("workdir");
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Stage plumbing

namespace {

std::string digest_path(const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) {
      acc += fs::relative(f, p).generic_string();
      acc += '\0';
      acc += sha256_hex(read_file(f));
      acc += '\n';
    }
    return sha256_hex(acc);
  }
  return sha256_hex(read_file(p));
}

fs::path require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingPrerequisite(what + " (" + p.string() + ")");
  return p;
}

class StageContext {
 public:
  StageContext(Stage stage, const PipelineConfig& cfg) : stage_(stage), cfg_(cfg) {
    fs::create_directories(cfg.workdir);
  }

  fs::path path(const std::string& rel) const { return cfg_.workdir / rel; }

  fs::path input(const std::string& role, const fs::path& p) {
    require(p, role);
    inputs_[role] = digest_path(p);
    return p;
  }
  fs::path work_input(const std::string& rel, const std::string& role) { return input(role, path(rel)); }

  void output(const std::string& rel) { outputs_.push_back(rel); }

  void write_jsonl(const std::string& rel, const std::vector<json>& records) {
    fs::create_directories(path(rel).parent_path());
    write_jsonl_atomic(path(rel), records);
    output(rel);
  }
  void write_text(const std::string& rel, const std::string& text) {
    fs::create_directories(path(rel).parent_path());
    write_file_atomic(path(rel), text);
    output(rel);
  }

  StageResult finish() {
    StageResult r;
    r.stage = stage_;
    json outs = json::object();
    for (const auto& rel : outputs_) {
      outs[rel] = digest_path(path(rel));
      r.outputs.push_back(path(rel));
    }
    r.manifest = {{"stage", to_string(stage_)},
                  {"config_hash", cfg_.hash()},
                  {"seed", cfg_.seed},
                  {"inputs", inputs_},
                  {"outputs", outs}};
    const fs::path mdir = path(artifacts::kManifests);
    fs::create_directories(mdir);
    write_file_atomic(mdir / (to_string(stage_) + ".json"), r.manifest.dump(2) + "\n");
    return r;
  }

 private:
  Stage stage_;
  const PipelineConfig& cfg_;
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
};

std::vector<FeedbackCandidate> load_candidates(const fs::path& p) {
  std::vector<FeedbackCandidate> out;
  for (const auto& j : read_jsonl(p)) out.push_back(FeedbackCandidate::from_json(j));
  return out;
}

std::map<std::string, SourceProgram> index_programs(const std::vector<SourceProgram>& programs) {
  std::map<std::string, SourceProgram> m;
  for (const auto& p : programs) m.emplace(p.id, p);
  return m;
}

std::vector<PreferencePair> load_pairs(const fs::path& p) {
  std::vector<PreferencePair> out;
  for (const auto& j : read_jsonl(p)) out.push_back(PreferencePair::from_json(j));
  return out;
}

std::string method_ckpt(Method m) { return std::string(artifacts::kModels) + "/policy_" + to_string(m) + ".ckpt"; }
std::string method_log(Method m) { return std::string(artifacts::kLogs) + "/train_" + to_string(m) + ".jsonl"; }

ModelConfig seeded_model(const PipelineConfig& cfg) {
  ModelConfig m = cfg.model;
  m.seed = derive_seed(cfg.seed, "model");
  m.vocab_size = static_cast<int>(Vocabulary::byte_level().size());
  if (static_cast<std::size_t>(m.max_seq_len) != cfg.encode.max_seq_len) {
    throw DomainError("config: encode.max_seq_len must equal model.max_seq_len");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Stages

void stage_augment(StageContext& ctx, const PipelineConfig& cfg) {
  if (cfg.corpus.empty()) throw MissingPrerequisite("input corpus directory (config key 'corpus')");
  const fs::path in = ctx.input("corpus", cfg.corpus);
  require(in / "manifest.jsonl", "corpus manifest");
  AugmentConfig ac = cfg.augment;
  ac.seed = derive_seed(cfg.seed, "augment");
  const auto programs = augment_corpus(load_corpus(in), ac);
  const fs::path out = ctx.path(artifacts::kCorpus);
  fs::remove_all(out);
  save_corpus(out, programs);
  ctx.output(artifacts::kCorpus);
  spdlog::info("augment: {} programs", programs.size());
}

void stage_generate(StageContext& ctx, const PipelineConfig& cfg) {
  ctx.input("augmented corpus", ctx.path(std::string(artifacts::kCorpus) + "/manifest.jsonl"));
  const auto programs = load_corpus(ctx.path(artifacts::kCorpus));
  auto endpoint = make_endpoint(cfg.generator);
  GenerateOptions opts;
  opts.templates = cfg.templates;
  opts.k_samples = cfg.k_samples;
  opts.profile = cfg.profile;
  opts.max_tokens = cfg.max_tokens;
  opts.concurrency = cfg.concurrency;
  opts.seed = derive_seed(cfg.seed, "generate");
  std::vector<json> cands, fails;
  for (const auto& p : programs) {
    const auto res = generate_candidates(*endpoint, p, opts);
    for (const auto& c : res.candidates) cands.push_back(c.to_json());
    for (const auto& f : res.failures) fails.push_back(f.to_json());
  }
  ctx.write_jsonl(artifacts::kCandidates, cands);
  ctx.write_jsonl(artifacts::kGenerationFailures, fails);
  spdlog::info("generate: {} candidates, {} failures", cands.size(), fails.size());
}

void stage_sandbox(StageContext& ctx, const PipelineConfig& cfg) {
  ctx.input("augmented corpus", ctx.path(std::string(artifacts::kCorpus) + "/manifest.jsonl"));
  const auto candidates = load_candidates(ctx.work_input(artifacts::kCandidates, "candidates"));
  const auto programs = index_programs(load_corpus(ctx.path(artifacts::kCorpus)));
  SandboxConfig sc;
  sc.cxx = cfg.cxx;
  sc.python = cfg.python;
  sc.workers = cfg.sandbox_workers;
  Sandbox sandbox(sc);
  std::vector<json> records, timings;
  for (const auto& c : candidates) {
    const auto it = programs.find(c.program_id);
    if (it == programs.end()) throw FormatError("candidate " + c.id + " names unknown program " + c.program_id);
    const SourceProgram& prog = it->second;
    if (prog.problem == ProblemId::Other) {
      spdlog::warn("sandbox: no suite for program {}, skipping candidate {}", prog.id, c.id);
      continue;
    }
    const auto ev = sandbox.evaluate(c.corrected_code.value_or(""), prog.language, builtin_suite(prog.problem),
                                     cfg.limits);
    records.push_back({{"candidate_id", c.id},
                       {"program_id", prog.id},
                       {"problem", to_string(prog.problem)},
                       {"language", to_string(prog.language)},
                       {"execution", ev.execution.to_json()},
                       {"tests", ev.tests.to_json()}});
    timings.push_back({{"candidate_id", c.id}, {"wall_time_used", ev.execution.wall_time_used}});
  }
  ctx.write_jsonl(artifacts::kExecutions, records);
  // Wall-clock times vary between runs; they live beside the digested artifacts.
  fs::create_directories(cfg.workdir);
  write_jsonl_atomic(ctx.path(artifacts::kExecutionTimings), timings);
  spdlog::info("sandbox: evaluated {} candidates", records.size());
}

void stage_judge(StageContext& ctx, const PipelineConfig& cfg) {
  ctx.input("augmented corpus", ctx.path(std::string(artifacts::kCorpus) + "/manifest.jsonl"));
  const auto candidates = load_candidates(ctx.work_input(artifacts::kCandidates, "candidates"));
  const auto programs = index_programs(load_corpus(ctx.path(artifacts::kCorpus)));
  auto endpoint = make_endpoint(cfg.judge);
  JudgeOptions jo;
  jo.replicates = cfg.judge_replicates;
  const RubricProfile& rubric = RubricProfile::builtin(cfg.profile);
  std::vector<json> records;
  for (const auto& c : candidates) {
    const auto it = programs.find(c.program_id);
    if (it == programs.end()) throw FormatError("candidate " + c.id + " names unknown program " + c.program_id);
    const RubricScore s = score_rubric(*endpoint, c, rubric, it->second.text, jo);
    records.push_back({{"candidate_id", c.id}, {"rubric", s.to_json()}});
  }
  ctx.write_jsonl(artifacts::kJudged, records);
  spdlog::info("judge: scored {} candidates", records.size());
}

void stage_pair(StageContext& ctx, const PipelineConfig& cfg) {
  ctx.input("augmented corpus", ctx.path(std::string(artifacts::kCorpus) + "/manifest.jsonl"));
  const auto candidates = load_candidates(ctx.work_input(artifacts::kCandidates, "candidates"));
  const auto execs = read_jsonl(ctx.work_input(artifacts::kExecutions, "executions"));
  const auto judged = read_jsonl(ctx.work_input(artifacts::kJudged, "judged candidates"));
  const auto programs = index_programs(load_corpus(ctx.path(artifacts::kCorpus)));
  std::map<std::string, const json*> exec_by, judge_by;
  for (const auto& e : execs) exec_by[e.at("candidate_id").get<std::string>()] = &e;
  for (const auto& j : judged) judge_by[j.at("candidate_id").get<std::string>()] = &j;

  std::vector<LabeledCandidate> labeled;
  std::vector<json> labeled_json;
  for (const auto& c : candidates) {
    const auto e = exec_by.find(c.id);
    const auto j = judge_by.find(c.id);
    if (e == exec_by.end() || j == judge_by.end()) {
      spdlog::warn("pair: candidate {} lacks an execution or a rubric score, skipping", c.id);
      continue;
    }
    const auto prog = programs.find(c.program_id);
    const std::string root = prog == programs.end() ? c.program_id : prog->second.root_id();
    labeled.push_back(label_candidate(c, ExecutionOutcome::from_json(e->second->at("execution")),
                                      TestReport::from_json(e->second->at("tests")),
                                      RubricScore::from_json(j->second->at("rubric")), root));
    labeled_json.push_back(labeled.back().to_json());
  }
  PairOptions po;
  po.max_pairs_per_group = cfg.max_pairs_per_group;
  const auto pairs = build_pairs(labeled, po);
  std::vector<json> pairs_json;
  for (const auto& p : pairs) pairs_json.push_back(p.to_json());
  const DatasetSplit split = split_dataset(pairs, cfg.ratios, derive_seed(cfg.seed, "split"));
  ctx.write_jsonl(artifacts::kLabeled, labeled_json);
  ctx.write_jsonl(artifacts::kPairs, pairs_json);
  ctx.write_text(artifacts::kSplit, split.to_json().dump(2) + "\n");
  const auto accepted = std::count_if(labeled.begin(), labeled.end(),
                                      [](const LabeledCandidate& l) { return l.label == Label::Accepted; });
  spdlog::info("pair: {} accepted of {}, {} pairs ({} / {} / {})", accepted, labeled.size(), pairs.size(),
               split.train.size(), split.validation.size(), split.test.size());
}

void train_into(StageContext& ctx, const PipelineConfig& cfg, const fs::path& pairs_file,
                const std::vector<Method>& methods) {
  const auto pairs = load_pairs(ctx.input("pairs", pairs_file));
  DatasetSplit split;
  if (fs::exists(ctx.path(artifacts::kSplit))) {
    split = DatasetSplit::from_json(json::parse(read_file(ctx.work_input(artifacts::kSplit, "split"))));
  } else {
    split = split_dataset(pairs, cfg.ratios, derive_seed(cfg.seed, "split"));
    ctx.write_text(artifacts::kSplit, split.to_json().dump(2) + "\n");
  }
  const Vocabulary vocab = Vocabulary::byte_level();
  const ModelConfig mcfg = seeded_model(cfg);
  PairBatch train = encode_pairs(select_pairs(pairs, split.train), vocab, cfg.encode);
  const PairBatch val = encode_pairs(select_pairs(pairs, split.validation), vocab, cfg.encode);
  if (train.empty()) throw EmptyDataset("the train split has no pairs");

  const PolicyModel init(mcfg);
  const std::string init_rel = std::string(artifacts::kModels) + "/policy_init.ckpt";
  ctx.write_text(init_rel, checkpoint_bytes(init, {{"role", "initial"}}));
  const ReferenceModel ref = snapshot_reference(init);

  std::optional<RewardTrainResult> reward;
  if (std::find(methods.begin(), methods.end(), Method::DPOF) != methods.end()) {
    TrainConfig rc = cfg.reward_train;
    rc.seed = derive_seed(cfg.seed, "reward");
    reward.emplace(train_reward(train, reward_config_for(mcfg), rc));
    ctx.write_text(std::string(artifacts::kModels) + "/reward.ckpt",
                   checkpoint_bytes(reward->model, {{"role", "reward"}, {"stats", reward->stats.to_json()}}));
    ctx.write_jsonl(std::string(artifacts::kLogs) + "/train_reward.jsonl", reward->log);
  }
  for (Method m : methods) {
    TrainConfig tc = cfg.policy_train;
    tc.method = m;
    tc.seed = derive_seed(cfg.seed, "policy");
    auto res = m == Method::DPO ? train_policy(init, train, val, tc, ref)
                                : train_policy(init, train, val, tc, ref, &reward->model, &reward->stats);
    ctx.write_text(method_ckpt(m), checkpoint_bytes(res.policy, {{"role", "policy"},
                                                                 {"method", to_string(m)},
                                                                 {"steps", res.steps},
                                                                 {"best_eval", res.best_eval},
                                                                 {"stopped_early", res.stopped_early}}));
    ctx.write_jsonl(method_log(m), res.log);
    spdlog::info("train: {} finished after {} steps", to_string(m), res.steps);
  }
}

void stage_train(StageContext& ctx, const PipelineConfig& cfg) {
  require(ctx.path(artifacts::kPairs), "pairs file");
  train_into(ctx, cfg, ctx.path(artifacts::kPairs), cfg.methods);
}

json mean_metrics(const std::vector<const RubricScore*>& scores) {
  if (scores.empty()) return nullptr;
  std::array<double, kMetricCount> acc{};
  for (const auto* s : scores) {
    for (std::size_t i = 0; i < kMetricCount; ++i) acc[i] += s->metrics[i];
  }
  json m = json::object();
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    acc[i] /= static_cast<double>(scores.size());
    m[to_string(all_metrics()[i])] = acc[i];
  }
  return {{"metrics", m}, {"g_eval", g_eval_of(acc)}, {"n", scores.size()}};
}

using SlotMap = std::map<std::tuple<std::string, TemplateId, int>, const FeedbackCandidate*>;

SlotMap slot_candidates(const std::vector<FeedbackCandidate>& candidates) {
  SlotMap slot;
  for (const auto& c : candidates) slot[{c.program_id, c.template_id, c.sample_index}] = &c;
  return slot;
}

// Compares every template's sample s with the last template's sample s of the
// same program.
std::map<TemplateId, std::vector<Verdict>> pairwise_verdicts(const PipelineConfig& cfg,
                                                             const std::map<std::string, SourceProgram>& programs,
                                                             const SlotMap& slot, std::vector<json>& records) {
  const TemplateId anchor = cfg.templates.back();
  auto endpoint = make_endpoint(cfg.judge);
  JudgeOptions jo;
  jo.replicates = 1;
  std::map<TemplateId, std::vector<Verdict>> out;
  for (TemplateId t : cfg.templates) {
    if (t == anchor) continue;
    auto& vs = out[t];
    for (const auto& [pid, prog] : programs) {
      for (int s = 0; s < cfg.k_samples; ++s) {
        const auto a = slot.find({pid, t, s});
        const auto b = slot.find({pid, anchor, s});
        if (a == slot.end() || b == slot.end()) continue;
        vs.push_back(pairwise_compare(*endpoint, prog, *a->second, *b->second, derive_seed(cfg.seed, "pairwise"), jo));
        json vr = vs.back().to_json();
        vr["variant"] = to_string(t);
        vr["against"] = to_string(anchor);
        records.push_back(std::move(vr));
      }
    }
  }
  return out;
}

void stage_eval(StageContext& ctx, const PipelineConfig& cfg) {
  ctx.input("augmented corpus", ctx.path(std::string(artifacts::kCorpus) + "/manifest.jsonl"));
  const auto candidates = load_candidates(ctx.work_input(artifacts::kCandidates, "candidates"));
  const auto execs = read_jsonl(ctx.work_input(artifacts::kExecutions, "executions"));
  const auto judged = read_jsonl(ctx.work_input(artifacts::kJudged, "judged candidates"));
  const auto pairs = load_pairs(ctx.work_input(artifacts::kPairs, "pairs"));
  const auto split = DatasetSplit::from_json(json::parse(read_file(ctx.work_input(artifacts::kSplit, "split"))));
  const std::string init_rel = std::string(artifacts::kModels) + "/policy_init.ckpt";
  const auto init = load_checkpoint(ctx.work_input(init_rel, "initial policy"));
  std::map<Method, LoadedCheckpoint> policies;
  for (Method m : cfg.methods) policies.emplace(m, load_checkpoint(ctx.work_input(method_ckpt(m), method_ckpt(m))));
  const auto programs = index_programs(load_corpus(ctx.path(artifacts::kCorpus)));

  json metrics = json::object();

  // Preference accuracy on the held-out split.
  const PairBatch test = encode_pairs(select_pairs(pairs, split.test), Vocabulary::byte_level(), cfg.encode);
  json pa = json::object();
  pa["test_pairs"] = test.size();
  if (test.empty()) {
    spdlog::warn("eval: the test split is empty; preference accuracy is not reported");
  } else {
    pa["baseline"] = evaluate_policy(*init.policy, test).to_json();
    for (const auto& [m, ck] : policies) pa[to_string(m)] = evaluate_policy(*ck.policy, test).to_json();
  }
  metrics["preference_accuracy"] = pa;

  // Feedback accuracy and quality per generation template.
  std::map<std::string, CandidateResult> result_by;
  for (const auto& e : execs) {
    const auto tests = TestReport::from_json(e.at("tests"));
    result_by[e.at("candidate_id").get<std::string>()] = {
        ExecutionOutcome::from_json(e.at("execution")).status, tests.all_passed};
  }
  std::map<std::string, RubricScore> score_by;
  for (const auto& j : judged) score_by[j.at("candidate_id").get<std::string>()] = RubricScore::from_json(j.at("rubric"));
  const SlotMap slot = slot_candidates(candidates);

  std::vector<int> ks;
  for (int k : cfg.k_values) {
    if (k <= cfg.k_samples) ks.push_back(k);
  }
  const TemplateId anchor = cfg.templates.back();
  std::vector<json> verdict_records;
  const auto verdicts = cfg.pairwise ? pairwise_verdicts(cfg, programs, slot, verdict_records)
                                     : std::map<TemplateId, std::vector<Verdict>>{};
  json variants = json::array();
  for (TemplateId t : cfg.templates) {
    json row = {{"variant", "template " + to_string(t)}, {"template", to_string(t)}};
    std::vector<std::vector<CandidateResult>> groups;
    std::vector<const RubricScore*> scores;
    for (const auto& [pid, prog] : programs) {
      if (prog.problem == ProblemId::Other) continue;
      std::vector<CandidateResult> g;
      for (int s = 0; s < cfg.k_samples; ++s) {
        const auto it = slot.find({pid, t, s});
        CandidateResult r{ExecStatus::CompileError, false};  // missing samples count as failures
        if (it != slot.end()) {
          const auto rr = result_by.find(it->second->id);
          if (rr != result_by.end()) r = rr->second;
          const auto sc = score_by.find(it->second->id);
          if (sc != score_by.end()) scores.push_back(&sc->second);
        }
        g.push_back(r);
      }
      groups.push_back(std::move(g));
    }
    if (!groups.empty()) {
      const auto ar = accuracy_report(groups, ks);
      row["executability"] = ar.executability_rate;
      json pk = json::object();
      for (const auto& [k, v] : ar.pass_at_k) pk[std::to_string(k)] = v;
      row["pass_at_k"] = pk;
    }
    row["rubric"] = mean_metrics(scores);

    if (const auto v = verdicts.find(t); v != verdicts.end() && !v->second.empty()) {
      row["against"] = "template " + to_string(anchor);
      row["win_loss_tie"] = aggregate_verdicts(v->second).to_json();
    }
    variants.push_back(std::move(row));
  }
  metrics["variants"] = variants;
  metrics["k_values"] = ks;
  metrics["profile"] = to_string(cfg.profile);
  ctx.write_jsonl(artifacts::kVerdicts, verdict_records);
  ctx.write_text(artifacts::kMetrics, metrics.dump(2) + "\n");
}

}  // namespace

StageResult run_stage(Stage stage, const PipelineConfig& cfg) {
  cfg.validate();
  StageContext ctx(stage, cfg);
  spdlog::info("stage {}", to_string(stage));
  switch (stage) {
    case Stage::Augment: stage_augment(ctx, cfg); break;
    case Stage::Generate: stage_generate(ctx, cfg); break;
    case Stage::Sandbox: stage_sandbox(ctx, cfg); break;
    case Stage::Judge: stage_judge(ctx, cfg); break;
    case Stage::Pair: stage_pair(ctx, cfg); break;
    case Stage::Train: stage_train(ctx, cfg); break;
    case Stage::Eval: stage_eval(ctx, cfg); break;
  }
  return ctx.finish();
}

std::vector<StageResult> run_pipeline(const PipelineConfig& cfg) {
  std::vector<StageResult> out;
  for (Stage s : all_stages()) out.push_back(run_stage(s, cfg));
  return out;
}

json judge_pairwise(const PipelineConfig& cfg) {
  cfg.validate();
  StageContext ctx(Stage::Judge, cfg);
  ctx.input("augmented corpus", ctx.path(std::string(artifacts::kCorpus) + "/manifest.jsonl"));
  const auto candidates = load_candidates(ctx.work_input(artifacts::kCandidates, "candidates"));
  const auto programs = index_programs(load_corpus(ctx.path(artifacts::kCorpus)));
  std::vector<json> records;
  const auto verdicts = pairwise_verdicts(cfg, programs, slot_candidates(candidates), records);
  ctx.write_jsonl(artifacts::kVerdicts, records);
  json out = json::object();
  for (const auto& [t, vs] : verdicts) {
    if (!vs.empty()) out[to_string(t)] = aggregate_verdicts(vs).to_json();
  }
  return out;
}

void train_models(const PipelineConfig& cfg, const fs::path& pairs_file, const std::vector<Method>& methods) {
  cfg.validate();
  StageContext ctx(Stage::Train, cfg);
  train_into(ctx, cfg, pairs_file, methods);
  ctx.finish();
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::string fmt_num(const json& v, int digits = 4) {
  if (v.is_null()) return "-";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v.get<double>();
  return os.str();
}

std::string fmt_pct(const json& v) {
  if (v.is_null()) return "-";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << 100.0 * v.get<double>();
  return os.str();
}

}  // namespace

std::string report(const fs::path& workdir) {
  const fs::path mp = workdir / artifacts::kMetrics;
  if (!fs::exists(mp)) throw MissingPrerequisite("evaluation metrics (" + mp.string() + ")");
  const json m = json::parse(read_file(mp));
  std::ostringstream out;
  out << "# Evaluation report\n\n";

  out << "## Preference accuracy (held-out pairs)\n\n";
  const json& pa = m.at("preference_accuracy");
  out << "Test pairs: " << pa.value("test_pairs", 0) << "\n\n";
  out << "| Model | Preference accuracy | Mean margin | Mean length diff |\n";
  out << "|---|---|---|---|\n";
  for (const auto& [name, v] : pa.items()) {
    if (!v.is_object()) continue;
    out << "| " << name << " | " << fmt_num(v.at("preference_accuracy")) << " | " << fmt_num(v.at("mean_margin"))
        << " | " << fmt_num(v.at("mean_length_diff"), 2) << " |\n";
  }

  const auto ks = m.value("k_values", std::vector<int>{});
  out << "\n## Feedback accuracy and quality (" << m.value("profile", std::string("novice")) << ")\n\n";
  out << "| Variant | Executability";
  for (int k : ks) out << " | Pass@" << k;
  for (auto metric : all_metrics()) out << " | " << to_string(metric);
  out << " | G-Eval | Win (%) | Loss (%) | Tie (%) |\n|---|---";
  for (std::size_t i = 0; i < ks.size() + kMetricCount + 4; ++i) out << "|---";
  out << "|\n";
  for (const auto& row : m.at("variants")) {
    out << "| " << row.at("variant").get<std::string>() << " | " << fmt_num(row.value("executability", json()));
    for (int k : ks) {
      const json pk = row.value("pass_at_k", json::object());
      out << " | " << fmt_num(pk.value(std::to_string(k), json()));
    }
    const json& rub = row.at("rubric");
    std::array<double, kMetricCount> vals{};
    for (std::size_t i = 0; i < kMetricCount; ++i) {
      if (rub.is_null()) {
        out << " | -";
        continue;
      }
      vals[i] = rub.at("metrics").at(to_string(all_metrics()[i])).get<double>();
      out << " | " << fmt_num(vals[i], 2);
    }
    // Recomputed from the metric columns rather than copied.
    out << " | " << (rub.is_null() ? std::string("-") : fmt_num(g_eval_of(vals), 2));
    if (row.contains("win_loss_tie")) {
      const json& w = row.at("win_loss_tie");
      out << " | " << fmt_pct(w.at("win")) << " | " << fmt_pct(w.at("loss")) << " | " << fmt_pct(w.at("tie"));
    } else {
      out << " | - | - | -";
    }
    out << " |\n";
  }
  out << "\nWin/Loss/Tie compare each variant with the last template; rates are exact fractions "
         "and may not sum to 100 after rounding.\n";
  const std::string text = out.str();
  write_file_atomic(workdir / artifacts::kReport, text);
  return text;
}

}  // namespace prefalign
