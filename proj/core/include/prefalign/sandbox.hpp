#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "prefalign/common.hpp"
#include "prefalign/corpus.hpp"

namespace prefalign {

struct ResourceLimits {
  double wall_time = 10.0;                  // seconds
  std::size_t memory = 512u * 1024 * 1024;  // bytes of address space
  std::size_t max_output = 64u * 1024;      // bytes kept per stream

  void validate() const;
  json to_json() const;
  static ResourceLimits from_json(const json& j);
};

enum class ExecStatus { CompileError, Ran, NonZeroExit, Timeout, MemoryExceeded, Crashed };

std::string to_string(ExecStatus s);
ExecStatus parse_exec_status(std::string_view s);

struct ExecutionOutcome {
  ExecStatus status = ExecStatus::Ran;
  std::string stdout_text;
  std::string stderr_text;
  double wall_time_used = 0.0;
  int exit_code = 0;
  int signal = 0;

  /// Wall time is left out: it varies run to run and is kept in a sidecar.
  json to_json() const;
  static ExecutionOutcome from_json(const json& j);
};

enum class CaseResult { Pass, Fail, Error };

std::string to_string(CaseResult r);
CaseResult parse_case_result(std::string_view s);

struct TestCase {
  std::string name;
  std::string category;
  /// Empty for normal cases; otherwise the error the candidate must raise
  /// ("invalid_argument" / "out_of_range" in C++, ValueError / IndexError in Python).
  std::string expected_error;
};

struct TestSuite {
  ProblemId problem = ProblemId::Other;
  std::string name;
  std::string function_name;
  std::vector<TestCase> cases;
  /// Harness sources, built together with the candidate. Without arguments
  /// they run a smoke check; `<case-index> <token>` runs one case.
  std::string cpp_driver;
  std::string python_driver;

  const std::string& driver(Language l) const {
    return l == Language::Cpp ? cpp_driver : python_driver;
  }
};

struct CaseReport {
  std::string name;
  std::string category;
  CaseResult result = CaseResult::Error;
  ExecStatus status = ExecStatus::Ran;
  std::string detail;
};

struct TestReport {
  ProblemId problem = ProblemId::Other;
  std::vector<CaseReport> cases;
  bool all_passed = false;

  std::vector<CaseResult> results() const;
  json to_json() const;
  static TestReport from_json(const json& j);
};

/// Built-in suites for the three instructional problems.
const TestSuite& builtin_suite(ProblemId problem);
const TestSuite& builtin_suite(std::string_view name);

/// Reference solutions shipped with the suites (known to pass every case).
const std::string& reference_solution(ProblemId problem, Language language);
/// Buggy MinStack in the style of the motivating novice submission.
const std::string& buggy_minstack_solution();
/// Buggy TwoSum and TicTacToe fixtures used by tests and the simulated generator.
const std::string& buggy_solution(ProblemId problem, Language language);

struct SandboxConfig {
  std::filesystem::path cxx;      // empty: $PREFALIGN_CXX, then c++/g++/clang++ on PATH
  std::filesystem::path python;   // empty: $PREFALIGN_PYTHON, then python3 on PATH
  std::filesystem::path scratch;  // empty: a fresh directory under the system temp dir
  std::vector<std::string> cxx_flags{"-std=c++17", "-O0", "-w"};
  double compile_timeout = 60.0;
  unsigned workers = 0;  // 0: hardware concurrency
  /// Fail with SandboxSetupError instead of running unconfined when the kernel
  /// cannot restrict filesystem writes.
  bool require_confinement = false;
};

/// A built candidate: either a compiled binary or a Python program directory.
struct BuildArtifact {
  Language language = Language::Cpp;
  std::filesystem::path dir;
  std::filesystem::path entry;  // binary or driver script
  bool ok = false;
  std::string diagnostics;
};

class Sandbox {
 public:
  explicit Sandbox(SandboxConfig cfg = {});
  ~Sandbox();
  Sandbox(const Sandbox&) = delete;
  Sandbox& operator=(const Sandbox&) = delete;

  /// Compiles (C++) or syntax-checks (Python) `code` together with `driver`
  /// and runs it once without arguments.
  ExecutionOutcome execute(const std::string& code, Language language,
                           const ResourceLimits& limits, const std::string& driver = {});

  /// Runs every case of `suite` in its own process.
  TestReport run_suite(const std::string& code, Language language, const TestSuite& suite,
                       const ResourceLimits& limits);

  struct Evaluation {
    ExecutionOutcome execution;
    TestReport tests;
  };
  /// Candidate-level evaluation: the smoke run decides executability and the
  /// suite run decides correctness. One build serves both.
  Evaluation evaluate(const std::string& code, Language language, const TestSuite& suite,
                      const ResourceLimits& limits);

  /// True when candidate processes run with writes confined to their directory.
  bool confined() const noexcept { return confinement_abi_ > 0; }

  const std::filesystem::path& scratch_dir() const noexcept { return scratch_; }

 private:
  std::shared_ptr<const BuildArtifact> build(const std::string& code, Language language,
                                             const std::string& driver);
  ExecutionOutcome run(const BuildArtifact& artifact, const std::vector<std::string>& args,
                       const ResourceLimits& limits, const std::filesystem::path& workdir,
                       std::string* stdout_tail = nullptr);
  std::filesystem::path fresh_dir(const std::string& stem);

  SandboxConfig cfg_;
  std::filesystem::path scratch_;
  bool owns_scratch_ = false;
  int confinement_abi_ = 0;
  std::mutex mu_;
  std::uint64_t counter_ = 0;
  std::map<std::string, std::shared_ptr<const BuildArtifact>> builds_;
};

// ---------------------------------------------------------------------------
// Feedback-accuracy metrics

/// Unbiased estimator 1 - C(n-c, k) / C(n, k). Throws DomainError unless
/// 0 <= c <= n and 1 <= k <= n.
double pass_at_k(int n, int c, int k);

struct CandidateResult {
  ExecStatus status = ExecStatus::Ran;
  bool all_passed = false;
};

struct AccuracyReport {
  double executability_rate = 0.0;
  std::map<int, double> pass_at_k;
  std::size_t tasks = 0;
  std::size_t candidates = 0;

  json to_json() const;
};

/// `groups` holds one entry per task; every task must have the same number
/// of samples n. Throws EmptyInput on empty or ragged input.
AccuracyReport accuracy_report(const std::vector<std::vector<CandidateResult>>& groups,
                               const std::vector<int>& k_values);

}  // namespace prefalign
