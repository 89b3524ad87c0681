#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>

#include "prefalign/sandbox.hpp"
#include "test_util.hpp"

using namespace prefalign;

namespace {

double binom(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

ResourceLimits quick(double wall = 5.0) {
  ResourceLimits l;
  l.wall_time = wall;
  return l;
}

Sandbox& shared_box() {
  static Sandbox box;
  return box;
}

}  // namespace

TEST(PassAtK, SpecValues) {
  EXPECT_EQ(pass_at_k(5, 0, 1), 0.0);
  EXPECT_EQ(pass_at_k(5, 5, 3), 1.0);
  EXPECT_NEAR(pass_at_k(5, 2, 3), 0.9, 1e-12);
  EXPECT_THROW(pass_at_k(3, 4, 1), DomainError);
  EXPECT_THROW(pass_at_k(3, 1, 0), DomainError);
  EXPECT_THROW(pass_at_k(3, 1, 4), DomainError);
  EXPECT_THROW(pass_at_k(3, -1, 1), DomainError);
}

TEST(PassAtK, MonotoneAndMatchesClosedForm) {
  for (int n = 1; n <= 12; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        const double v = pass_at_k(n, c, k);
        EXPECT_NEAR(v, 1.0 - binom(n - c, k) / binom(n, k), 1e-12);
        if (k > 1) EXPECT_GE(v + 1e-15, pass_at_k(n, c, k - 1));
        if (c > 0) EXPECT_GE(v + 1e-15, pass_at_k(n, c - 1, k));
      }
    }
  }
}

TEST(AccuracyReport, OracleValues) {
  const CandidateResult ok{ExecStatus::Ran, true}, bad{ExecStatus::Ran, false};
  const auto r = accuracy_report({{ok, ok, bad, bad, bad}}, {1, 3, 5});
  EXPECT_NEAR(r.pass_at_k.at(1), 0.4, 1e-12);
  EXPECT_NEAR(r.pass_at_k.at(3), 0.9, 1e-12);
  EXPECT_NEAR(r.pass_at_k.at(5), 1.0, 1e-12);
  EXPECT_EQ(r.executability_rate, 1.0);

  const CandidateResult ce{ExecStatus::CompileError, false};
  const auto z = accuracy_report({{ce, ce}, {ce, ce}}, {1, 2});
  EXPECT_EQ(z.executability_rate, 0.0);
  EXPECT_EQ(z.pass_at_k.at(1), 0.0);
  EXPECT_EQ(z.pass_at_k.at(2), 0.0);

  EXPECT_THROW(accuracy_report({}, {1}), EmptyInput);
  EXPECT_THROW(accuracy_report({{ok, ok}, {ok}}, {1}), EmptyInput);
}

TEST(Limits, Validation) {
  ResourceLimits l;
  l.wall_time = 0;
  EXPECT_THROW(l.validate(), DomainError);
  EXPECT_EQ(ResourceLimits::from_json(ResourceLimits{}.to_json()).memory, ResourceLimits{}.memory);
}

TEST(Execute, TrivialProgramRuns) {
  const auto out = shared_box().execute("int main(){return 0;}", Language::Cpp, quick());
  EXPECT_EQ(out.status, ExecStatus::Ran) << out.stderr_text;
}

TEST(Execute, SyntaxErrorIsCompileError) {
  const auto out = shared_box().execute("int main( { return }", Language::Cpp, quick());
  EXPECT_EQ(out.status, ExecStatus::CompileError);
  EXPECT_FALSE(out.stderr_text.empty());
  const auto py = shared_box().execute("def f(:\n  pass\n", Language::Python, quick());
  EXPECT_EQ(py.status, ExecStatus::CompileError);
}

TEST(Execute, ExitCodesAndCrashes) {
  EXPECT_EQ(shared_box().execute("int main(){return 3;}", Language::Cpp, quick()).status, ExecStatus::NonZeroExit);
  EXPECT_EQ(shared_box().execute("#include <cstdlib>\nint main(){std::abort();}", Language::Cpp, quick()).status,
            ExecStatus::Crashed);
  EXPECT_EQ(shared_box().execute("import sys\nsys.exit(4)\n", Language::Python, quick()).status,
            ExecStatus::NonZeroExit);
}

TEST(Execute, InfiniteLoopTimesOut) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = shared_box().execute("int main(){volatile int x=0; for(;;) ++x;}", Language::Cpp, quick(1.0));
  const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(out.status, ExecStatus::Timeout);
  EXPECT_LE(out.wall_time_used, 2.0);
  // compile time is included in `took`
  EXPECT_LT(took, 30.0);
}

TEST(Execute, MemoryLimit) {
  ResourceLimits l = quick();
  l.memory = 64u * 1024 * 1024;
  const auto out = shared_box().execute(
      "#include <vector>\n#include <cstdio>\nint main(){std::vector<char> v; for(;;){v.resize(v.size()+(1<<24)); v.back()=1;}}",
      Language::Cpp, l);
  EXPECT_EQ(out.status, ExecStatus::MemoryExceeded);
}

TEST(Execute, OutputIsTruncated) {
  ResourceLimits l = quick();
  l.max_output = 100;
  const auto out = shared_box().execute("print('x' * 5000)\n", Language::Python, l);
  EXPECT_LE(out.stdout_text.size(), 100u);
}

TEST(Execute, WritesOutsideWorkdirAreBlocked) {
  if (!shared_box().confined()) GTEST_SKIP() << "kernel lacks filesystem confinement";
  testutil::TempDir dir;
  const auto target = dir.path() / "escaped.txt";
  const std::string code = "#include <cstdio>\nint main(){FILE* f=std::fopen(\"" + target.string() +
                           "\",\"w\"); if(f){std::fputs(\"x\",f); std::fclose(f);} return 0;}";
  shared_box().execute(code, Language::Cpp, quick());
  EXPECT_FALSE(std::filesystem::exists(target));
  const std::string py = "open(" + json(target.string()).dump() + ", 'w').write('x')\n";
  shared_box().execute(py, Language::Python, quick());
  EXPECT_FALSE(std::filesystem::exists(target));
}

TEST(Suites, ReferenceSolutionsPassEverything) {
  for (auto problem : {ProblemId::TwoSum, ProblemId::MinStack, ProblemId::TicTacToe}) {
    for (auto lang : {Language::Cpp, Language::Python}) {
      const auto& suite = builtin_suite(problem);
      const auto rep = shared_box().run_suite(reference_solution(problem, lang), lang, suite, quick());
      ASSERT_EQ(rep.cases.size(), suite.cases.size());
      for (const auto& c : rep.cases) EXPECT_EQ(c.result, CaseResult::Pass) << suite.name << "/" << c.name << ": " << c.detail;
      EXPECT_TRUE(rep.all_passed);
    }
  }
}

TEST(Suites, BuggyMinStackFailsTheRightCategories) {
  const auto& suite = builtin_suite(ProblemId::MinStack);
  const auto rep = shared_box().run_suite(buggy_minstack_solution(), Language::Cpp, suite, quick());
  EXPECT_FALSE(rep.all_passed);
  bool empty_fail = false, min_fail = false;
  for (const auto& c : rep.cases) {
    if (c.result == CaseResult::Pass) continue;
    empty_fail |= c.category == "empty_stack";
    min_fail |= c.category == "min_tracking";
  }
  EXPECT_TRUE(empty_fail);
  EXPECT_TRUE(min_fail);
}

TEST(Suites, EmptyCodeFailsEveryCase) {
  const auto& suite = builtin_suite(ProblemId::TwoSum);
  const auto rep = shared_box().run_suite("", Language::Cpp, suite, quick());
  ASSERT_EQ(rep.cases.size(), suite.cases.size());
  for (const auto& c : rep.cases) {
    EXPECT_EQ(c.status, ExecStatus::CompileError);
    EXPECT_NE(c.result, CaseResult::Pass);
  }
  EXPECT_FALSE(rep.all_passed);
}

TEST(Suites, ExpectedErrorCaseNeedsTheError) {
  // returns an answer instead of raising on infeasible input
  const std::string lax = "def two_sum(nums, target):\n    return [0, 1]\n";
  const auto rep = shared_box().run_suite(lax, Language::Python, builtin_suite(ProblemId::TwoSum), quick());
  for (const auto& c : rep.cases) {
    if (c.name == "infeasible") EXPECT_NE(c.result, CaseResult::Pass);
  }
}

TEST(Suites, EvaluateSharesTheBuild) {
  const auto ev = shared_box().evaluate(reference_solution(ProblemId::TicTacToe, Language::Cpp), Language::Cpp,
                                        builtin_suite("tictactoe"), quick());
  EXPECT_EQ(ev.execution.status, ExecStatus::Ran);
  EXPECT_TRUE(ev.tests.all_passed);
  EXPECT_EQ(TestReport::from_json(ev.tests.to_json()).to_json(), ev.tests.to_json());
  EXPECT_THROW(builtin_suite("nosuch"), DomainError);
}

TEST(Setup, MissingCompilerIsEnvironmentError) {
  SandboxConfig cfg;
  cfg.cxx = "/nonexistent/bin/c++";
  Sandbox box(cfg);
  try {
    box.execute("int main(){}", Language::Cpp, quick());
    FAIL() << "expected SandboxSetupError";
  } catch (const SandboxSetupError& e) {
    EXPECT_EQ(e.category(), ErrorCategory::Environment);
  }
}
