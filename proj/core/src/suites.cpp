#include "prefalign/sandbox.hpp"

namespace prefalign {

namespace {

// Shared C++ harness pieces. Driver identifiers carry a pf_ prefix so they
// cannot collide with candidate names.
constexpr const char* kCppHarnessHead = R"(
#include <iostream>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

struct pf_failure { std::string what; };
#define PF_CHECK(cond, msg) do { if (!(cond)) throw pf_failure{msg}; } while (0)

template <class E, class F>
static bool pf_throws(F&& f) {
  try { f(); } catch (const E&) { return true; } catch (...) { return false; }
  return false;
}

static void pf_smoke();
static void pf_case(int index);

int main(int argc, char** argv) {
  try {
    if (argc < 3) { pf_smoke(); return 0; }
    const std::string token = argv[2];
    std::string verdict = "PASS";
    try {
      pf_case(std::stoi(argv[1]));
    } catch (const pf_failure& f) {
      verdict = "FAIL " + f.what;
    } catch (const std::bad_alloc&) {
      throw;
    } catch (const std::exception& e) {
      verdict = std::string("FAIL unexpected exception: ") + e.what();
    } catch (...) {
      verdict = "FAIL unexpected non-standard exception";
    }
    std::cout << std::flush;
    std::cout << "\n@@VERDICT " << token << " " << verdict << std::endl;
    return 0;
  } catch (const std::bad_alloc&) {
    std::cerr << "\n@@OOM" << std::endl;
    return 3;
  }
}
)";

constexpr const char* kTwoSumCpp = R"(
static void pf_check_pair(std::vector<int> nums, int target) {
  const std::vector<int> before = nums;
  std::vector<int> r = twoSum(nums, target);
  PF_CHECK(nums == before, "input was modified");
  PF_CHECK(r.size() == 2, "expected exactly two indices");
  const long long n = static_cast<long long>(nums.size());
  PF_CHECK(r[0] >= 0 && r[0] < n && r[1] >= 0 && r[1] < n, "index out of bounds");
  PF_CHECK(r[0] != r[1], "indices are not distinct");
  PF_CHECK(static_cast<long long>(nums[r[0]]) + nums[r[1]] == target, "indices do not sum to target");
}

static void pf_check_infeasible(std::vector<int> nums, int target) {
  const std::vector<int> before = nums;
  const bool thrown = pf_throws<std::invalid_argument>([&] { twoSum(nums, target); });
  PF_CHECK(thrown, "expected std::invalid_argument for infeasible input");
  PF_CHECK(nums == before, "input was modified");
}

static void pf_smoke() {
  std::vector<int> nums{2, 7, 11, 15};
  twoSum(nums, 9);
}

static void pf_case(int index) {
  switch (index) {
    case 0: return pf_check_pair({2, 7, 11, 15}, 9);
    case 1: return pf_check_pair({3, 3}, 6);
    case 2: return pf_check_pair({-3, 4, 3, 90}, 0);
    case 3: return pf_check_pair({0, 4, 3, 0}, 0);
    case 4: return pf_check_pair({1, 2}, 3);
    case 5: return pf_check_pair({5, 1, 8, 2, 9}, 11);
    case 6: return pf_check_pair({-1, -2, -3, -4, -5}, -8);
    case 7: {
      std::vector<int> big;
      for (int i = 0; i < 2000; ++i) big.push_back(2 * i);
      big.push_back(1);
      big.push_back(6001);
      return pf_check_pair(big, 6002);
    }
    case 8: return pf_check_infeasible({1, 2, 3}, 100);
    case 9: return pf_check_infeasible({5}, 10);
    case 10: return pf_check_infeasible({}, 0);
    case 11: return pf_check_infeasible({4, 1}, 8);
  }
  throw pf_failure{"unknown case"};
}
)";

constexpr const char* kMinStackCpp = R"(
static void pf_smoke() {
  MinStack s;
  s.push(1);
  s.top();
  s.getMin();
  s.pop();
}

static void pf_case(int index) {
  switch (index) {
    case 0: {
      MinStack s;
      s.push(1); s.push(2); s.push(3);
      PF_CHECK(s.top() == 3, "top after pushes");
      return;
    }
    case 1: {
      MinStack s;
      for (int v : {4, 8, 15, 16}) s.push(v);
      for (int v : {16, 15, 8, 4}) {
        PF_CHECK(s.top() == v, "pop order is not LIFO");
        s.pop();
      }
      return;
    }
    case 2: {
      MinStack s;
      s.push(5); s.push(3); s.push(7);
      PF_CHECK(s.getMin() == 3, "minimum after pushes");
      return;
    }
    case 3: {
      MinStack s;
      s.push(5); s.push(3);
      s.pop();
      PF_CHECK(s.getMin() == 5, "minimum not restored after pop");
      return;
    }
    case 4: {
      MinStack s;
      s.push(2); s.push(2); s.push(1); s.push(1);
      PF_CHECK(s.getMin() == 1, "plateau minimum");
      s.pop();
      PF_CHECK(s.getMin() == 1, "plateau minimum after popping a duplicate");
      s.pop();
      PF_CHECK(s.getMin() == 2, "minimum after leaving the plateau");
      s.pop();
      PF_CHECK(s.getMin() == 2, "duplicate minimum");
      return;
    }
    case 5: {
      MinStack s;
      s.push(-2); s.push(0); s.push(-3);
      PF_CHECK(s.getMin() == -3, "negative minimum");
      s.pop();
      PF_CHECK(s.top() == 0, "top after pop");
      PF_CHECK(s.getMin() == -2, "negative minimum after pop");
      return;
    }
    case 6: {
      MinStack s;
      for (int i = 1000; i >= 1; --i) s.push(i);
      for (int i = 1; i <= 1000; ++i) {
        PF_CHECK(s.getMin() == i, "running minimum over many pushes");
        PF_CHECK(s.top() == i, "top over many pushes");
        s.pop();
      }
      return;
    }
    case 7: {
      MinStack s;
      PF_CHECK(pf_throws<std::out_of_range>([&] { s.pop(); }), "pop on empty stack must throw std::out_of_range");
      return;
    }
    case 8: {
      MinStack s;
      PF_CHECK(pf_throws<std::out_of_range>([&] { (void)s.top(); }), "top on empty stack must throw std::out_of_range");
      return;
    }
    case 9: {
      MinStack s;
      PF_CHECK(pf_throws<std::out_of_range>([&] { (void)s.getMin(); }), "getMin on empty stack must throw std::out_of_range");
      return;
    }
    case 10: {
      MinStack s;
      s.push(7);
      s.pop();
      PF_CHECK(pf_throws<std::out_of_range>([&] { s.pop(); }), "pop on drained stack must throw std::out_of_range");
      s.push(9);
      PF_CHECK(s.top() == 9 && s.getMin() == 9, "stack unusable after failed pop");
      return;
    }
  }
  throw pf_failure{"unknown case"};
}
)";

constexpr const char* kTicTacToeCpp = R"(
struct pf_move { int r, c, p, expect; };

static void pf_play(int n, const std::vector<pf_move>& moves) {
  TicTacToe g(n);
  for (const auto& m : moves) {
    const int got = g.move(m.r, m.c, m.p);
    PF_CHECK(got == m.expect, "move (" + std::to_string(m.r) + "," + std::to_string(m.c) +
                              ") returned " + std::to_string(got) + ", expected " + std::to_string(m.expect));
  }
}

static void pf_smoke() {
  TicTacToe g(3);
  g.move(0, 0, 1);
}

static void pf_case(int index) {
  switch (index) {
    case 0: return pf_play(3, {{0, 0, 1, 0}, {1, 0, 2, 0}, {0, 1, 1, 0}, {1, 1, 2, 0}, {0, 2, 1, 1}});
    case 1: return pf_play(3, {{0, 1, 2, 0}, {0, 0, 1, 0}, {1, 1, 2, 0}, {2, 2, 1, 0}, {2, 1, 2, 2}});
    case 2: return pf_play(3, {{0, 0, 1, 0}, {0, 1, 2, 0}, {1, 1, 1, 0}, {0, 2, 2, 0}, {2, 2, 1, 1}});
    case 3: return pf_play(3, {{0, 2, 2, 0}, {0, 0, 1, 0}, {1, 1, 2, 0}, {1, 0, 1, 0}, {2, 0, 2, 2}});
    case 4: return pf_play(3, {{1, 1, 1, 0}, {0, 0, 2, 0}, {2, 2, 1, 0}, {0, 2, 2, 0}});
    case 5:
      return pf_play(3, {{0, 0, 1, 0}, {0, 1, 2, 0}, {0, 2, 1, 0}, {1, 1, 2, 0}, {1, 0, 1, 0},
                         {1, 2, 2, 0}, {2, 1, 1, 0}, {2, 0, 2, 0}, {2, 2, 1, 0}});
    case 6:
      return pf_play(4, {{3, 0, 2, 0}, {0, 0, 1, 0}, {3, 1, 2, 0}, {0, 1, 1, 0},
                         {3, 2, 2, 0}, {0, 2, 1, 0}, {3, 3, 2, 2}});
    case 7: {
      TicTacToe g(3);
      PF_CHECK(g.move(0, 0, 1) == 0, "first move");
      PF_CHECK(pf_throws<std::invalid_argument>([&] { g.move(0, 0, 2); }),
               "move on occupied cell must throw std::invalid_argument");
      PF_CHECK(g.move(1, 1, 2) == 0, "move after rejected move");
      PF_CHECK(g.move(0, 1, 1) == 0, "board changed by rejected move");
      PF_CHECK(g.move(2, 2, 2) == 0, "board changed by rejected move");
      PF_CHECK(g.move(0, 2, 1) == 1, "original occupant must still own the cell");
      return;
    }
    case 8: {
      TicTacToe g(3);
      PF_CHECK(pf_throws<std::invalid_argument>([&] { g.move(3, 0, 1); }),
               "row out of bounds must throw std::invalid_argument");
      PF_CHECK(pf_throws<std::invalid_argument>([&] { g.move(0, -1, 1); }),
               "column out of bounds must throw std::invalid_argument");
      PF_CHECK(g.move(0, 0, 2) == 0, "board changed by rejected move");
      PF_CHECK(g.move(1, 0, 2) == 0, "board changed by rejected move");
      PF_CHECK(g.move(1, 1, 1) == 0, "board changed by rejected move");
      PF_CHECK(g.move(2, 0, 2) == 2, "column win after rejected moves");
      return;
    }
    case 9: return pf_play(1, {{0, 0, 1, 1}});
  }
  throw pf_failure{"unknown case"};
}
)";

// Python drivers: solution.py sits next to driver.py.
constexpr const char* kPyHarnessHead = R"PY(import os, sys
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


class PfFailure(Exception):
    pass


def pf_check(cond, msg):
    if not cond:
        raise PfFailure(msg)


def pf_raises(exc, fn):
    try:
        fn()
    except exc:
        return True
    except Exception:
        return False
    return False

)PY";

constexpr const char* kPyHarnessTail = R"PY(

def pf_main():
    try:
        import solution
        if len(sys.argv) < 3:
            pf_smoke(solution)
            return 0
        token = sys.argv[2]
        verdict = "PASS"
        try:
            pf_case(solution, int(sys.argv[1]))
        except PfFailure as f:
            verdict = "FAIL " + str(f)
        except MemoryError:
            raise
        except Exception as e:
            verdict = "FAIL unexpected exception: %s: %s" % (type(e).__name__, e)
        sys.stdout.write("\n@@VERDICT %s %s\n" % (token, verdict))
        sys.stdout.flush()
        return 0
    except MemoryError:
        sys.stderr.write("\n@@OOM\n")
        return 3


if __name__ == "__main__":
    sys.exit(pf_main())
)PY";

constexpr const char* kTwoSumPy = R"PY(
def pf_fn(sol):
    for name in ("two_sum", "twoSum"):
        f = getattr(sol, name, None)
        if callable(f):
            return f
    return sol.Solution().twoSum


def pf_check_pair(sol, nums, target):
    before = list(nums)
    r = pf_fn(sol)(nums, target)
    pf_check(nums == before, "input was modified")
    r = list(r)
    pf_check(len(r) == 2, "expected exactly two indices")
    pf_check(all(isinstance(i, int) and 0 <= i < len(nums) for i in r), "index out of bounds")
    pf_check(r[0] != r[1], "indices are not distinct")
    pf_check(nums[r[0]] + nums[r[1]] == target, "indices do not sum to target")


def pf_check_infeasible(sol, nums, target):
    before = list(nums)
    pf_check(pf_raises(ValueError, lambda: pf_fn(sol)(nums, target)), "expected ValueError for infeasible input")
    pf_check(nums == before, "input was modified")


def pf_smoke(sol):
    pf_fn(sol)([2, 7, 11, 15], 9)


def pf_case(sol, index):
    big = [2 * i for i in range(2000)] + [1, 6001]
    cases = [
        lambda: pf_check_pair(sol, [2, 7, 11, 15], 9),
        lambda: pf_check_pair(sol, [3, 3], 6),
        lambda: pf_check_pair(sol, [-3, 4, 3, 90], 0),
        lambda: pf_check_pair(sol, [0, 4, 3, 0], 0),
        lambda: pf_check_pair(sol, [1, 2], 3),
        lambda: pf_check_pair(sol, [5, 1, 8, 2, 9], 11),
        lambda: pf_check_pair(sol, [-1, -2, -3, -4, -5], -8),
        lambda: pf_check_pair(sol, big, 6002),
        lambda: pf_check_infeasible(sol, [1, 2, 3], 100),
        lambda: pf_check_infeasible(sol, [5], 10),
        lambda: pf_check_infeasible(sol, [], 0),
        lambda: pf_check_infeasible(sol, [4, 1], 8),
    ]
    if not 0 <= index < len(cases):
        raise PfFailure("unknown case")
    cases[index]()
)PY";

constexpr const char* kMinStackPy = R"PY(
def pf_min(s):
    f = getattr(s, "get_min", None) or getattr(s, "getMin")
    return f()


def pf_smoke(sol):
    s = sol.MinStack()
    s.push(1)
    s.top()
    pf_min(s)
    s.pop()


def pf_case(sol, index):
    s = sol.MinStack()
    if index == 0:
        for v in (1, 2, 3):
            s.push(v)
        pf_check(s.top() == 3, "top after pushes")
    elif index == 1:
        for v in (4, 8, 15, 16):
            s.push(v)
        for v in (16, 15, 8, 4):
            pf_check(s.top() == v, "pop order is not LIFO")
            s.pop()
    elif index == 2:
        for v in (5, 3, 7):
            s.push(v)
        pf_check(pf_min(s) == 3, "minimum after pushes")
    elif index == 3:
        s.push(5)
        s.push(3)
        s.pop()
        pf_check(pf_min(s) == 5, "minimum not restored after pop")
    elif index == 4:
        for v in (2, 2, 1, 1):
            s.push(v)
        pf_check(pf_min(s) == 1, "plateau minimum")
        s.pop()
        pf_check(pf_min(s) == 1, "plateau minimum after popping a duplicate")
        s.pop()
        pf_check(pf_min(s) == 2, "minimum after leaving the plateau")
        s.pop()
        pf_check(pf_min(s) == 2, "duplicate minimum")
    elif index == 5:
        for v in (-2, 0, -3):
            s.push(v)
        pf_check(pf_min(s) == -3, "negative minimum")
        s.pop()
        pf_check(s.top() == 0, "top after pop")
        pf_check(pf_min(s) == -2, "negative minimum after pop")
    elif index == 6:
        for i in range(1000, 0, -1):
            s.push(i)
        for i in range(1, 1001):
            pf_check(pf_min(s) == i, "running minimum over many pushes")
            pf_check(s.top() == i, "top over many pushes")
            s.pop()
    elif index == 7:
        pf_check(pf_raises(IndexError, s.pop), "pop on empty stack must raise IndexError")
    elif index == 8:
        pf_check(pf_raises(IndexError, s.top), "top on empty stack must raise IndexError")
    elif index == 9:
        pf_check(pf_raises(IndexError, lambda: pf_min(s)), "get_min on empty stack must raise IndexError")
    elif index == 10:
        s.push(7)
        s.pop()
        pf_check(pf_raises(IndexError, s.pop), "pop on drained stack must raise IndexError")
        s.push(9)
        pf_check(s.top() == 9 and pf_min(s) == 9, "stack unusable after failed pop")
    else:
        raise PfFailure("unknown case")
)PY";

constexpr const char* kTicTacToePy = R"PY(
def pf_play(sol, n, moves):
    g = sol.TicTacToe(n)
    for r, c, p, expect in moves:
        got = g.move(r, c, p)
        pf_check(got == expect, "move (%d,%d) returned %r, expected %d" % (r, c, got, expect))


def pf_smoke(sol):
    sol.TicTacToe(3).move(0, 0, 1)


def pf_case(sol, index):
    if index == 0:
        pf_play(sol, 3, [(0, 0, 1, 0), (1, 0, 2, 0), (0, 1, 1, 0), (1, 1, 2, 0), (0, 2, 1, 1)])
    elif index == 1:
        pf_play(sol, 3, [(0, 1, 2, 0), (0, 0, 1, 0), (1, 1, 2, 0), (2, 2, 1, 0), (2, 1, 2, 2)])
    elif index == 2:
        pf_play(sol, 3, [(0, 0, 1, 0), (0, 1, 2, 0), (1, 1, 1, 0), (0, 2, 2, 0), (2, 2, 1, 1)])
    elif index == 3:
        pf_play(sol, 3, [(0, 2, 2, 0), (0, 0, 1, 0), (1, 1, 2, 0), (1, 0, 1, 0), (2, 0, 2, 2)])
    elif index == 4:
        pf_play(sol, 3, [(1, 1, 1, 0), (0, 0, 2, 0), (2, 2, 1, 0), (0, 2, 2, 0)])
    elif index == 5:
        pf_play(sol, 3, [(0, 0, 1, 0), (0, 1, 2, 0), (0, 2, 1, 0), (1, 1, 2, 0), (1, 0, 1, 0),
                         (1, 2, 2, 0), (2, 1, 1, 0), (2, 0, 2, 0), (2, 2, 1, 0)])
    elif index == 6:
        pf_play(sol, 4, [(3, 0, 2, 0), (0, 0, 1, 0), (3, 1, 2, 0), (0, 1, 1, 0),
                         (3, 2, 2, 0), (0, 2, 1, 0), (3, 3, 2, 2)])
    elif index == 7:
        g = sol.TicTacToe(3)
        pf_check(g.move(0, 0, 1) == 0, "first move")
        pf_check(pf_raises(ValueError, lambda: g.move(0, 0, 2)), "move on occupied cell must raise ValueError")
        pf_check(g.move(1, 1, 2) == 0, "move after rejected move")
        pf_check(g.move(0, 1, 1) == 0, "board changed by rejected move")
        pf_check(g.move(2, 2, 2) == 0, "board changed by rejected move")
        pf_check(g.move(0, 2, 1) == 1, "original occupant must still own the cell")
    elif index == 8:
        g = sol.TicTacToe(3)
        pf_check(pf_raises(ValueError, lambda: g.move(3, 0, 1)), "row out of bounds must raise ValueError")
        pf_check(pf_raises(ValueError, lambda: g.move(0, -1, 1)), "column out of bounds must raise ValueError")
        pf_check(g.move(0, 0, 2) == 0, "board changed by rejected move")
        pf_check(g.move(1, 0, 2) == 0, "board changed by rejected move")
        pf_check(g.move(1, 1, 1) == 0, "board changed by rejected move")
        pf_check(g.move(2, 0, 2) == 2, "column win after rejected moves")
    elif index == 9:
        pf_play(sol, 1, [(0, 0, 1, 1)])
    else:
        raise PfFailure("unknown case")
)PY";

TestSuite make_suite(ProblemId p) {
  TestSuite s;
  s.problem = p;
  switch (p) {
    case ProblemId::TwoSum:
      s.name = "twosum";
      s.function_name = "twoSum";
      s.cases = {{"basic", "pair", ""},
                 {"duplicates", "duplicates", ""},
                 {"negatives_and_zero_target", "negatives", ""},
                 {"zeros", "zeros", ""},
                 {"minimal_size", "minimal", ""},
                 {"unsorted", "pair", ""},
                 {"all_negative", "negatives", ""},
                 {"large_input", "scale", ""},
                 {"infeasible", "infeasible", "invalid_argument"},
                 {"single_element", "infeasible", "invalid_argument"},
                 {"empty_input", "infeasible", "invalid_argument"},
                 {"no_self_pairing", "infeasible", "invalid_argument"}};
      s.cpp_driver = std::string(kCppHarnessHead) + kTwoSumCpp;
      s.python_driver = std::string(kPyHarnessHead) + kTwoSumPy + kPyHarnessTail;
      break;
    case ProblemId::MinStack:
      s.name = "minstack";
      s.function_name = "getMin";
      s.cases = {{"push_top", "lifo", ""},
                 {"pop_order", "lifo", ""},
                 {"min_after_pushes", "min_tracking", ""},
                 {"min_after_pop", "min_tracking", ""},
                 {"min_plateau", "min_tracking", ""},
                 {"negative_values", "min_tracking", ""},
                 {"many_pushes", "growth", ""},
                 {"pop_empty", "empty_stack", "out_of_range"},
                 {"top_empty", "empty_stack", "out_of_range"},
                 {"getmin_empty", "empty_stack", "out_of_range"},
                 {"pop_after_drain", "empty_stack", "out_of_range"}};
      s.cpp_driver = std::string(kCppHarnessHead) + kMinStackCpp;
      s.python_driver = std::string(kPyHarnessHead) + kMinStackPy + kPyHarnessTail;
      break;
    case ProblemId::TicTacToe:
      s.name = "tictactoe";
      s.function_name = "move";
      s.cases = {{"row_win", "rows", ""},
                 {"column_win", "columns", ""},
                 {"diagonal_win", "diagonals", ""},
                 {"anti_diagonal_win", "diagonals", ""},
                 {"non_terminal", "non_terminal", ""},
                 {"draw", "draw", ""},
                 {"row_win_4x4", "rows", ""},
                 {"occupied_cell", "invalid_move", "invalid_argument"},
                 {"out_of_bounds", "invalid_move", "invalid_argument"},
                 {"one_by_one", "minimal", ""}};
      s.cpp_driver = std::string(kCppHarnessHead) + kTicTacToeCpp;
      s.python_driver = std::string(kPyHarnessHead) + kTicTacToePy + kPyHarnessTail;
      break;
    case ProblemId::Other:
      throw DomainError("no built-in suite for problem Other");
  }
  return s;
}

}  // namespace

const TestSuite& builtin_suite(ProblemId problem) {
  static const TestSuite two = make_suite(ProblemId::TwoSum);
  static const TestSuite min = make_suite(ProblemId::MinStack);
  static const TestSuite ttt = make_suite(ProblemId::TicTacToe);
  switch (problem) {
    case ProblemId::TwoSum: return two;
    case ProblemId::MinStack: return min;
    case ProblemId::TicTacToe: return ttt;
    case ProblemId::Other: break;
  }
  throw DomainError("no built-in suite for problem Other");
}

const TestSuite& builtin_suite(std::string_view name) {
  return builtin_suite(parse_problem_id(name));
}

}  // namespace prefalign
