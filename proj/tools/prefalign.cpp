// prefalign: command-line front end for the preference-alignment pipeline.

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "prefalign/pipeline.hpp"

namespace fs = std::filesystem;
using namespace prefalign;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string workdir;
  std::string log_level = "info";
};

PipelineConfig make_config(const Globals& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : PipelineConfig::load(g.config);
  if (!g.workdir.empty()) cfg.workdir = g.workdir;
  if (cfg.workdir.empty()) cfg.workdir = "prefalign-work";
  if (g.seed) cfg.seed = *g.seed;
  cfg.apply_env_overrides();
  return cfg;
}

Language language_of(const fs::path& p) { return p.extension() == ".py" ? Language::Python : Language::Cpp; }

std::vector<TemplateId> parse_templates(const std::string& s) {
  std::vector<TemplateId> out;
  for (char c : s) {
    if (c == ',' || c == ' ') continue;
    out.push_back(parse_template_id(std::string(1, c)));
  }
  return out;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-alignment toolkit for code feedback"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline configuration file (JSON)");
  app.add_option("--seed", g.seed, "Global seed; overrides the config");
  app.add_option("--workdir", g.workdir, "Artifact directory; overrides the config");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");

  // augment
  auto* augment = app.add_subcommand("augment", "Expand a corpus with behavior-preserving variants");
  std::string aug_in, aug_out;
  int variants = 9;
  std::uint64_t aug_seed = 0;
  augment->add_option("--in", aug_in, "Input corpus directory");
  augment->add_option("--out", aug_out, "Output corpus directory");
  augment->add_option("--variants", variants, "Variants per program");
  augment->add_option("--seed", aug_seed, "Augmentation seed");

  // generate
  auto* generate = app.add_subcommand("generate", "Request feedback candidates from a generator endpoint");
  std::string gen_corpus, gen_endpoint, gen_out, gen_profile = "novice", gen_templates = "A,B,C", gen_model;
  int gen_k = 5;
  generate->add_option("--corpus", gen_corpus, "Corpus directory");
  generate->add_option("--endpoint", gen_endpoint, "Chat endpoint URL or mock://generator");
  generate->add_option("--model", gen_model, "Model name sent to the endpoint");
  generate->add_option("--k", gen_k, "Samples per template");
  generate->add_option("--profile", gen_profile, "novice|experienced");
  generate->add_option("--templates", gen_templates, "Comma-separated subset of A,B,C");
  generate->add_option("--out", gen_out, "Candidates JSONL");

  // sandbox
  auto* sandbox = app.add_subcommand("sandbox", "Run a program against a built-in test suite");
  std::string sb_suite, sb_code, sb_lang;
  double sb_wall = 10.0;
  sandbox->add_option("--suite", sb_suite, "twosum|minstack|tictactoe");
  sandbox->add_option("--code", sb_code, "Source file (.cpp or .py)");
  sandbox->add_option("--language", sb_lang, "cpp|python (default: from the file extension)");
  sandbox->add_option("--wall-time", sb_wall, "Per-case wall-clock limit in seconds");

  // judge
  auto* judge = app.add_subcommand("judge", "Score candidates with the rubric or compare them pairwise");
  std::string judge_mode = "rubric";
  judge->add_option("--mode", judge_mode, "rubric|pairwise")->check(CLI::IsMember({"rubric", "pairwise"}));

  // pair
  auto* pair = app.add_subcommand("pair", "Label candidates and build preference pairs");
  std::string pair_in, pair_out;
  std::optional<std::uint64_t> pair_seed;
  pair->add_option("--candidates", pair_in, "Labeled candidates JSONL (default: run the pipeline stage)");
  pair->add_option("--out", pair_out, "Pairs JSONL");
  pair->add_option("--seed", pair_seed, "Split seed");

  // train
  auto* train = app.add_subcommand("train", "Train reward and policy models on preference pairs");
  std::string train_method, train_pairs;
  train->add_option("--method", train_method, "dpo|dpof (default: every configured method)");
  train->add_option("--pairs", train_pairs, "Pairs JSONL (default: <workdir>/pairs.jsonl)");

  auto* eval = app.add_subcommand("eval", "Evaluate trained models and candidate feedback");
  auto* rep = app.add_subcommand("report", "Summarize evaluation metrics as markdown");

  // passk
  auto* passk = app.add_subcommand("passk", "Unbiased Pass@k estimate");
  int pk_n = 0, pk_c = 0, pk_k = 0;
  passk->add_option("--n", pk_n, "Samples per task")->required();
  passk->add_option("--c", pk_c, "Correct samples")->required();
  passk->add_option("--k", pk_k, "Budget")->required();

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage in order");
  std::string from_stage, to_stage;
  pipeline->add_option("--from", from_stage, "First stage");
  pipeline->add_option("--to", to_stage, "Last stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  auto logger = spdlog::stderr_color_mt("prefalign");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (*passk) {
      std::cout << pass_at_k(pk_n, pk_c, pk_k) << "\n";
      return 0;
    }

    if (*augment && !aug_in.empty()) {
      if (aug_out.empty()) throw DomainError("augment: --out is required with --in");
      AugmentConfig ac;
      ac.variants_per_program = variants;
      ac.seed = aug_seed;
      ac.validate();
      const auto programs = augment_corpus(load_corpus(aug_in), ac);
      save_corpus(aug_out, programs);
      spdlog::info("wrote {} programs to {}", programs.size(), aug_out);
      return 0;
    }

    if (*generate && !gen_corpus.empty()) {
      EndpointConfig ec;
      ec.url = gen_endpoint.empty() ? "mock://generator" : gen_endpoint;
      if (!gen_model.empty()) ec.model = gen_model;
      if (const char* key = std::getenv("PREFALIGN_API_KEY")) ec.api_key = key;
      if (gen_endpoint.empty()) {
        if (const char* url = std::getenv("PREFALIGN_GEN_ENDPOINT")) ec.url = url;
      }
      auto endpoint = make_endpoint(ec);
      GenerateOptions opts;
      opts.k_samples = gen_k;
      opts.profile = parse_profile(gen_profile);
      opts.templates = parse_templates(gen_templates);
      opts.seed = g.seed.value_or(0);
      std::vector<json> out;
      std::size_t failures = 0;
      for (const auto& p : load_corpus(gen_corpus)) {
        const auto res = generate_candidates(*endpoint, p, opts);
        for (const auto& c : res.candidates) out.push_back(c.to_json());
        failures += res.failures.size();
      }
      const fs::path dst = gen_out.empty() ? fs::path("candidates.jsonl") : fs::path(gen_out);
      write_jsonl_atomic(dst, out);
      spdlog::info("wrote {} candidates to {} ({} failures)", out.size(), dst.string(), failures);
      return 0;
    }

    if (*sandbox) {
      if (sb_suite.empty() || sb_code.empty()) throw DomainError("sandbox: --suite and --code are required");
      const Language lang = sb_lang.empty() ? language_of(sb_code) : parse_language(sb_lang);
      ResourceLimits limits;
      limits.wall_time = sb_wall;
      limits.validate();
      Sandbox box;
      const auto ev = box.evaluate(read_file(sb_code), lang, builtin_suite(sb_suite), limits);
      print_json({{"execution", ev.execution.to_json()}, {"tests", ev.tests.to_json()}});
      return 0;
    }

    if (*pair && !pair_in.empty()) {
      std::vector<LabeledCandidate> labeled;
      for (const auto& j : read_jsonl(pair_in)) labeled.push_back(LabeledCandidate::from_json(j));
      const auto pairs = build_pairs(labeled);
      std::vector<json> out;
      for (const auto& p : pairs) out.push_back(p.to_json());
      const fs::path dst = pair_out.empty() ? fs::path("pairs.jsonl") : fs::path(pair_out);
      write_jsonl_atomic(dst, out);
      const auto split = split_dataset(pairs, SplitRatios{}, pair_seed.value_or(g.seed.value_or(0)));
      write_file_atomic(dst.parent_path() / "split.json", split.to_json().dump(2) + "\n");
      spdlog::info("wrote {} pairs to {}", pairs.size(), dst.string());
      return 0;
    }

    if (*rep) {
      std::cout << report(make_config(g).workdir);
      return 0;
    }

    PipelineConfig cfg = make_config(g);
    if (*train) {
      std::vector<Method> methods = cfg.methods;
      if (!train_method.empty()) methods = {parse_method(train_method)};
      const fs::path pairs_file = train_pairs.empty() ? cfg.workdir / artifacts::kPairs : fs::path(train_pairs);
      train_models(cfg, pairs_file, methods);
      return 0;
    }
    if (*pipeline) {
      const auto& stages = all_stages();
      const auto first = from_stage.empty() ? stages.begin() : std::find(stages.begin(), stages.end(), parse_stage(from_stage));
      const auto last = to_stage.empty() ? stages.end() - 1 : std::find(stages.begin(), stages.end(), parse_stage(to_stage));
      if (first > last) throw DomainError("pipeline: --from comes after --to");
      for (auto it = first; it <= last; ++it) run_stage(*it, cfg);
      std::cout << report(cfg.workdir);
      return 0;
    }
    if (*judge && judge_mode == "pairwise") {
      print_json(judge_pairwise(cfg));
      return 0;
    }
    const std::pair<CLI::App*, Stage> stage_cmds[] = {{augment, Stage::Augment}, {generate, Stage::Generate},
                                                      {judge, Stage::Judge},     {pair, Stage::Pair},
                                                      {eval, Stage::Eval}};
    for (const auto& [cmd, stage] : stage_cmds) {
      if (*cmd) {
        const auto res = run_stage(stage, cfg);
        print_json(res.manifest);
        return 0;
      }
    }
    throw DomainError("no command given");
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.category() == ErrorCategory::Environment ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("IoError: {}", e.what());
    return 2;
  } catch (const json::exception& e) {
    spdlog::error("FormatError: {}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
