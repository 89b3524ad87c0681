#include "prefalign/pairs.hpp"

#include <cmath>
#include <map>
#include <random>
#include <tuple>
#include <unordered_set>

#include <spdlog/spdlog.h>

namespace prefalign {

std::string to_string(Label l) { return l == Label::Accepted ? "Accepted" : "Rejected"; }

Label parse_label(std::string_view s) {
  if (s == "Accepted") return Label::Accepted;
  if (s == "Rejected") return Label::Rejected;
  throw FormatError("unknown label '" + std::string(s) + "'");
}

bool accepts(ExecStatus status, bool all_passed, double g_eval) {
  return status == ExecStatus::Ran && all_passed && g_eval >= kAcceptThreshold;
}

json LabeledCandidate::to_json() const {
  return {{"candidate", candidate.to_json()},
          {"root_program_id", root_program_id},
          {"execution", execution.to_json()},
          {"tests", tests.to_json()},
          {"rubric", rubric.to_json()},
          {"label", prefalign::to_string(label)}};
}

LabeledCandidate LabeledCandidate::from_json(const json& j) {
  LabeledCandidate c;
  c.candidate = FeedbackCandidate::from_json(j.at("candidate"));
  c.root_program_id = j.value("root_program_id", c.candidate.program_id);
  c.execution = ExecutionOutcome::from_json(j.at("execution"));
  c.tests = TestReport::from_json(j.at("tests"));
  c.rubric = RubricScore::from_json(j.at("rubric"));
  c.label = parse_label(j.at("label").get<std::string>());
  return c;
}

LabeledCandidate label_candidate(const FeedbackCandidate& candidate, const ExecutionOutcome& execution,
                                 const TestReport& tests, const RubricScore& rubric,
                                 std::string root_program_id) {
  const bool every_case_passes = !tests.cases.empty() &&
      std::all_of(tests.cases.begin(), tests.cases.end(),
                  [](const CaseReport& c) { return c.result == CaseResult::Pass; });
  if (tests.all_passed != every_case_passes && !tests.cases.empty()) {
    throw PreconditionViolation("test report all_passed disagrees with its cases");
  }
  LabeledCandidate out;
  out.candidate = candidate;
  out.root_program_id = root_program_id.empty() ? candidate.program_id : std::move(root_program_id);
  out.execution = execution;
  out.tests = tests;
  out.rubric = rubric;
  out.label = accepts(execution.status, tests.all_passed, rubric.g_eval) ? Label::Accepted : Label::Rejected;
  return out;
}

void PreferencePair::validate() const {
  if (pair_id.empty()) throw DomainError("pair id is empty");
  if (chosen.empty() || rejected.empty()) throw DomainError("pair " + pair_id + " has an empty response");
  if (chosen == rejected) throw DomainError("pair " + pair_id + " has identical chosen and rejected");
}

json PreferencePair::to_json() const {
  return {{"pair_id", pair_id},
          {"prompt", prompt},
          {"chosen", chosen},
          {"rejected", rejected},
          {"program_id", program_id},
          {"root_program_id", root_program_id},
          {"metadata", metadata}};
}

PreferencePair PreferencePair::from_json(const json& j) {
  PreferencePair p;
  p.pair_id = j.at("pair_id").get<std::string>();
  p.prompt = j.at("prompt").get<std::string>();
  p.chosen = j.at("chosen").get<std::string>();
  p.rejected = j.at("rejected").get<std::string>();
  p.program_id = j.value("program_id", std::string{});
  p.root_program_id = j.value("root_program_id", p.program_id);
  p.metadata = j.value("metadata", json::object());
  p.validate();
  return p;
}

std::vector<PreferencePair> build_pairs(const std::vector<LabeledCandidate>& candidates,
                                        const PairOptions& opts) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::pair<std::vector<const LabeledCandidate*>, std::vector<const LabeledCandidate*>>> groups;
  for (const auto& c : candidates) {
    const Key key{c.candidate.program_id, to_string(c.candidate.template_id), to_string(c.candidate.profile)};
    auto& g = groups[key];
    (c.label == Label::Accepted ? g.first : g.second).push_back(&c);
  }

  std::vector<PreferencePair> out;
  for (const auto& [key, g] : groups) {
    const auto& [acc, rej] = g;
    if (acc.empty() || rej.empty()) {
      spdlog::warn("pairs: group {}/{}/{} has {} accepted and {} rejected candidates, no pairs",
                   std::get<0>(key), std::get<1>(key), std::get<2>(key), acc.size(), rej.size());
      continue;
    }
    std::vector<std::pair<std::size_t, std::size_t>> order;
    for (std::size_t i = 0; i < acc.size(); ++i) {
      for (std::size_t j = 0; j < rej.size(); ++j) order.emplace_back(i, j);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      return std::make_pair(a.first + a.second, a.first) < std::make_pair(b.first + b.second, b.first);
    });
    std::size_t made = 0;
    for (const auto& [i, j] : order) {
      if (made >= opts.max_pairs_per_group) break;
      const auto& a = *acc[i];
      const auto& r = *rej[j];
      if (a.candidate.feedback_text == r.candidate.feedback_text) continue;
      PreferencePair p;
      p.pair_id = a.candidate.id + "|" + r.candidate.id;
      p.prompt = a.candidate.prompt;
      p.chosen = a.candidate.feedback_text;
      p.rejected = r.candidate.feedback_text;
      p.program_id = a.candidate.program_id;
      p.root_program_id = a.root_program_id;
      p.metadata = {{"template_id", to_string(a.candidate.template_id)},
                    {"profile", to_string(a.candidate.profile)},
                    {"chosen_id", a.candidate.id},
                    {"rejected_id", r.candidate.id},
                    {"chosen_g_eval", a.rubric.g_eval},
                    {"rejected_g_eval", r.rubric.g_eval}};
      out.push_back(std::move(p));
      ++made;
    }
  }
  return out;
}

void SplitRatios::validate() const {
  if (!(train > 0 && validation > 0 && test > 0)) throw DomainError("split ratios must be positive");
  if (std::abs(train + validation + test - 1.0) > 1e-9) throw DomainError("split ratios must sum to 1");
}

json DatasetSplit::to_json() const {
  return {{"train", train}, {"validation", validation}, {"test", test}, {"seed", seed}};
}

DatasetSplit DatasetSplit::from_json(const json& j) {
  DatasetSplit s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.validation = j.at("validation").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

DatasetSplit split_dataset(const std::vector<PreferencePair>& pairs, const SplitRatios& ratios,
                           std::uint64_t seed) {
  ratios.validate();
  std::map<std::string, std::vector<const PreferencePair*>> groups;
  std::unordered_set<std::string> ids;
  for (const auto& p : pairs) {
    if (!ids.insert(p.pair_id).second) throw DomainError("duplicate pair id " + p.pair_id);
    groups[p.root_program_id.empty() ? p.program_id : p.root_program_id].push_back(&p);
  }
  std::vector<const std::vector<const PreferencePair*>*> ordered;
  for (const auto& [k, v] : groups) ordered.push_back(&v);
  const auto perm = seeded_permutation(ordered.size(), seed);

  const std::size_t n = pairs.size();
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.validation * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(n)));
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplit split;
  split.seed = seed;
  std::size_t offset = 0;
  for (std::size_t gi : perm) {
    const auto& g = *ordered[gi];
    auto& dst = offset < n_train ? split.train : (offset < n_train + n_val ? split.validation : split.test);
    for (const auto* p : g) dst.push_back(p->pair_id);
    offset += g.size();
  }
  return split;
}

std::vector<PreferencePair> select_pairs(const std::vector<PreferencePair>& pairs,
                                         const std::vector<std::string>& ids) {
  std::map<std::string, const PreferencePair*> by_id;
  for (const auto& p : pairs) by_id[p.pair_id] = &p;
  std::vector<PreferencePair> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw DomainError("unknown pair id " + id);
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace prefalign
