#include <random>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "prefalign/corpus.hpp"

namespace prefalign {

std::string to_string(ProblemId p) {
  switch (p) {
    case ProblemId::TwoSum: return "TwoSum";
    case ProblemId::MinStack: return "MinStack";
    case ProblemId::TicTacToe: return "TicTacToe";
    case ProblemId::Other: return "Other";
  }
  return "Other";
}

std::string to_string(Language l) { return l == Language::Cpp ? "Cpp" : "Python"; }
std::string to_string(Origin o) { return o == Origin::Original ? "Original" : "Augmented"; }

ProblemId parse_problem_id(std::string_view s) {
  if (s == "TwoSum" || s == "twosum") return ProblemId::TwoSum;
  if (s == "MinStack" || s == "minstack") return ProblemId::MinStack;
  if (s == "TicTacToe" || s == "tictactoe") return ProblemId::TicTacToe;
  if (s == "Other" || s == "other") return ProblemId::Other;
  throw DomainError("unknown problem id '" + std::string(s) + "'");
}

Language parse_language(std::string_view s) {
  if (s == "Cpp" || s == "cpp" || s == "c++") return Language::Cpp;
  if (s == "Python" || s == "python" || s == "py") return Language::Python;
  throw DomainError("unknown language '" + std::string(s) + "'");
}

Origin parse_origin(std::string_view s) {
  if (s == "Original") return Origin::Original;
  if (s == "Augmented") return Origin::Augmented;
  throw DomainError("unknown origin '" + std::string(s) + "'");
}

std::string to_string(Transform t) {
  switch (t) {
    case Transform::Rename: return "Rename";
    case Transform::DeadCodeElim: return "DeadCodeElim";
    case Transform::Reformat: return "Reformat";
    case Transform::TypeUpconvert: return "TypeUpconvert";
  }
  return "Rename";
}

Transform parse_transform(std::string_view s) {
  if (s == "Rename") return Transform::Rename;
  if (s == "DeadCodeElim") return Transform::DeadCodeElim;
  if (s == "Reformat") return Transform::Reformat;
  if (s == "TypeUpconvert") return Transform::TypeUpconvert;
  throw DomainError("unknown transform '" + std::string(s) + "'");
}

void SourceProgram::validate() const {
  if (id.empty()) throw DomainError("program id is empty");
  if (text.empty()) throw DomainError("program " + id + " has empty text");
  if (origin == Origin::Augmented && !parent_id) {
    throw DomainError("augmented program " + id + " lacks parent_id");
  }
  if (origin == Origin::Original && parent_id) {
    throw DomainError("original program " + id + " must not have parent_id");
  }
}

json SourceProgram::to_json() const {
  json j{{"id", id},
         {"problem_id", prefalign::to_string(problem)},
         {"language", prefalign::to_string(language)},
         {"text", text},
         {"origin", prefalign::to_string(origin)},
         {"parent_id", parent_id ? json(*parent_id) : json(nullptr)},
         {"seed", seed ? json(*seed) : json(nullptr)}};
  return j;
}

SourceProgram SourceProgram::from_json(const json& j) {
  SourceProgram p;
  p.id = j.at("id").get<std::string>();
  p.problem = parse_problem_id(j.at("problem_id").get<std::string>());
  p.language = parse_language(j.at("language").get<std::string>());
  p.text = j.value("text", std::string{});
  p.origin = parse_origin(j.value("origin", std::string("Original")));
  if (j.contains("parent_id") && !j["parent_id"].is_null()) p.parent_id = j["parent_id"].get<std::string>();
  if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::uint64_t>();
  return p;
}

void AugmentConfig::validate() const {
  if (transforms.empty()) throw DomainError("augment transform list is empty");
  if (variants_per_program < 1) throw DomainError("variants_per_program must be >= 1");
}

json AugmentConfig::to_json() const {
  json names = json::array();
  for (auto t : transforms) names.push_back(prefalign::to_string(t));
  return {{"transforms", names}, {"variants_per_program", variants_per_program}, {"seed", seed}};
}

AugmentConfig AugmentConfig::from_json(const json& j) {
  AugmentConfig c;
  if (j.contains("transforms")) {
    c.transforms.clear();
    for (const auto& t : j["transforms"]) c.transforms.push_back(parse_transform(t.get<std::string>()));
  }
  c.variants_per_program = j.value("variants_per_program", c.variants_per_program);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<SourceProgram> augment_corpus(const std::vector<SourceProgram>& programs,
                                          const AugmentConfig& cfg) {
  cfg.validate();
  if (programs.empty()) throw AugmentError("no input programs");

  const std::size_t m = cfg.transforms.size();
  const std::uint64_t subsets = (std::uint64_t{1} << m) - 1;

  std::vector<SourceProgram> out;
  std::unordered_set<std::string> seen_text;
  std::vector<SourceProgram> variants;
  std::size_t produced = 0;

  for (const auto& program : programs) {
    program.validate();
    if (seen_text.insert(program.text).second) out.push_back(program);
    try {
      tokenize_source(program);
    } catch (const LexError& e) {
      spdlog::warn("augment: skipping {}: {}", program.id, e.what());
      continue;
    }
    for (int v = 0; v < cfg.variants_per_program; ++v) {
      const std::uint64_t vseed = derive_seed(cfg.seed, program.id + "#" + std::to_string(v));
      std::mt19937_64 rng(vseed);
      const std::uint64_t mask = 1 + rng() % subsets;
      SourceProgram cur = program;
      for (std::size_t k = 0; k < m; ++k) {
        if (mask & (std::uint64_t{1} << k)) cur = apply_transform(cur, cfg.transforms[k], vseed);
      }
      cur.id = program.id + "~" + std::to_string(v);
      cur.origin = Origin::Augmented;
      cur.parent_id = program.root_id();
      cur.seed = vseed;
      ++produced;
      variants.push_back(std::move(cur));
    }
  }
  if (produced == 0) throw AugmentError("no variants produced (every program failed to lex)");
  for (auto& v : variants) {
    if (seen_text.insert(v.text).second) out.push_back(std::move(v));
  }
  return out;
}

namespace {

std::string extension(Language l) { return l == Language::Cpp ? ".cpp" : ".py"; }

}  // namespace

std::vector<SourceProgram> load_corpus(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.jsonl";
  if (!std::filesystem::exists(manifest)) {
    throw MissingPrerequisite("corpus manifest " + manifest.string());
  }
  std::vector<SourceProgram> out;
  for (const auto& rec : read_jsonl(manifest)) {
    SourceProgram p = SourceProgram::from_json(rec);
    if (p.text.empty()) {
      const std::string file = rec.value("file", p.id + extension(p.language));
      p.text = read_file(dir / file);
    }
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

void save_corpus(const std::filesystem::path& dir, const std::vector<SourceProgram>& programs) {
  std::filesystem::create_directories(dir);
  std::vector<json> records;
  for (const auto& p : programs) {
    const std::string file = p.id + extension(p.language);
    write_file_atomic(dir / file, p.text);
    json rec = p.to_json();
    rec.erase("text");
    rec["file"] = file;
    records.push_back(std::move(rec));
  }
  write_jsonl_atomic(dir / "manifest.jsonl", records);
}

}  // namespace prefalign
