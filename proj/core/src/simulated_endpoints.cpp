#include <algorithm>
#include <cctype>
#include <random>

#include "prefalign/genclient.hpp"
#include "prefalign/judge.hpp"
#include "prefalign/sandbox.hpp"

namespace prefalign {

namespace {

std::string last_user_message(const ChatRequest& r) {
  for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  throw MalformedResponse("request has no user message");
}

std::string between(const std::string& s, const std::string& open, const std::string& close) {
  const auto a = s.find(open);
  if (a == std::string::npos) return {};
  const auto start = a + open.size();
  const auto b = s.find(close, start);
  if (b == std::string::npos) return {};
  return trim(s.substr(start, b - start));
}

ProblemId detect_problem(const std::string& prompt) {
  if (prompt.find("MinStack") != std::string::npos) return ProblemId::MinStack;
  if (prompt.find("TicTacToe") != std::string::npos) return ProblemId::TicTacToe;
  if (prompt.find("twoSum") != std::string::npos || prompt.find("two_sum") != std::string::npos) {
    return ProblemId::TwoSum;
  }
  return ProblemId::Other;
}

struct Advice {
  std::vector<std::string> steps;
  std::string why;
};

Advice advice_for(ProblemId p, Language lang) {
  const bool cpp = lang == Language::Cpp;
  switch (p) {
    case ProblemId::TwoSum:
      return {{"Use a hash map from value to index so each element is visited once.",
               "Look up target minus the current value before inserting the current value, "
               "so an element is never paired with itself.",
               cpp ? "Throw std::invalid_argument when no pair exists instead of returning an empty vector."
                   : "Raise ValueError when no pair exists instead of returning an empty list.",
               "Do not sort or modify the input, because the indices must refer to the original order."},
              "because a single pass with a map finds the complement in constant time"};
    case ProblemId::MinStack:
      return {{"Store the elements in a growing container instead of writing past its end.",
               "Keep a second stack of minimums and push onto it when the new value is less than or equal to the current minimum.",
               "When popping, also pop the minimum stack if the removed value equals its top.",
               cpp ? "Check for an empty stack in pop, top and getMin and throw std::out_of_range."
                   : "Check for an empty stack in pop, top and get_min and raise IndexError."},
              "because the minimum must be restored after every pop, including duplicate minimums"};
    case ProblemId::TicTacToe:
      return {{"Validate the row and column before touching the board.",
               "Reject moves on occupied cells without changing the board.",
               "Track counts per row, column and both diagonals so each move is checked in constant time.",
               "Return the player number on a win and 0 otherwise, including for draws."},
              "because invalid moves must leave the game state exactly as it was"};
    case ProblemId::Other:
      break;
  }
  return {{"Read the compiler or interpreter error carefully and fix the first reported problem.",
           "Add a small test for the failing input."},
          "because later errors often follow from the first one"};
}

}  // namespace

std::string SimulatedGenerator::complete(const ChatRequest& request) {
  const std::string prompt = last_user_message(request);
  const std::string script = [&] {
    const auto m = prompt.find("following script:");
    return m == std::string::npos ? prompt : prompt.substr(m);
  }();
  const Language lang = script.find("```python") != std::string::npos ? Language::Python : Language::Cpp;
  const ProblemId problem = detect_problem(script);
  const bool novice = prompt.find("novice") != std::string::npos || prompt.find("Novice") != std::string::npos;

  std::mt19937_64 rng(request.seed.value_or(0));
  const int tier = static_cast<int>(rng() % 4);
  const Advice adv = advice_for(problem, lang);

  std::string code;
  if (problem != ProblemId::Other) {
    if (tier == 2) {
      code = buggy_solution(problem, lang);
    } else if (tier != 3) {
      SourceProgram ref{"ref", problem, lang, reference_solution(problem, lang), Origin::Original, {}, {}};
      code = rename_identifiers(ref, rng() % 7).text;
    }
  }

  std::string out;
  const std::string fence = lang == Language::Cpp ? "cpp" : "python";
  const std::string lang_name = lang == Language::Cpp ? "C++" : "Python";
  if (tier == 1) {
    out = "The code has problems. " + adv.steps.front() + "\n";
  } else {
    out = novice ? "Good start! Let's fix this together in " + lang_name + ", step by step.\n\n"
                 : "Review (" + lang_name + "):\n\n";
    const std::size_t n = tier == 3 ? 2 : adv.steps.size();
    for (std::size_t i = 0; i < n; ++i) out += std::to_string(i + 1) + ". " + adv.steps[i] + "\n";
    out += "\nThis works " + adv.why + ".\n";
    if (tier == 0) out += "Remember the edge cases, and verify the fix by running the tests.\n";
  }
  if (!code.empty()) {
    out += "\nCorrected Code:\n```" + fence + "\n" + code;
    if (code.back() != '\n') out += '\n';
    out += "```\n";
  }
  return out;
}

std::vector<int> SimulatedJudge::rubric_for(const std::string& feedback) {
  auto has = [&](std::string_view w) { return feedback.find(w) != std::string::npos; };
  int steps = 0;
  std::size_t pos = 0;
  while (pos < feedback.size()) {
    const auto eol = feedback.find('\n', pos);
    const std::string line = feedback.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    if (line.size() > 2 && std::isdigit(static_cast<unsigned char>(line[0])) && line[1] == '.') ++steps;
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  const bool code = has("```");
  const std::size_t len = feedback.size();
  std::vector<int> s{
      len < 900 ? 5 : (len < 1800 ? 4 : 3),
      code ? (has("throw") || has("raise") ? 5 : 4) : 2,
      has("because") ? (steps >= 3 ? 5 : 4) : 2,
      steps >= 3 ? 5 : (steps >= 1 ? 3 : 2),
      has("edge case") ? 5 : (steps >= 3 ? 4 : 2),
      code ? (has("verify") ? 5 : 4) : 1,
      has("C++") || has("Python") ? 4 : 3};
  const std::uint64_t h = derive_seed(0, feedback);
  int& jitter = s[h % s.size()];
  jitter = std::clamp(jitter + ((h >> 8) % 2 == 0 ? -1 : 0), 1, 5);
  return s;
}

std::string SimulatedJudge::complete(const ChatRequest& request) {
  const std::string prompt = last_user_message(request);
  auto render = [](const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
  };
  if (prompt.find(kFeedbackOpen) != std::string::npos) {
    return render(rubric_for(between(prompt, kFeedbackOpen, kFeedbackClose)));
  }
  if (prompt.find(kResponseAOpen) != std::string::npos) {
    const std::string a = between(prompt, kResponseAOpen, kResponseAClose);
    const std::string b = between(prompt, kResponseBOpen, kResponseBClose);
    if (a == b) return "Tie";
    auto total = [](const std::vector<int>& v) {
      int t = 0;
      for (int x : v) t += x;
      return t;
    };
    const int ta = total(rubric_for(a));
    const int tb = total(rubric_for(b));
    return ta > tb ? "A" : (tb > ta ? "B" : "Tie");
  }
  throw MalformedResponse("simulated judge received an unrecognized prompt");
}

}  // namespace prefalign
