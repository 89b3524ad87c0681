#include "prefalign/sandbox.hpp"

namespace prefalign {

namespace {

const std::string kTwoSumCpp = R"(#include <stdexcept>
#include <unordered_map>
#include <vector>
using namespace std;

vector<int> twoSum(vector<int>& nums, int target) {
    unordered_map<long long, int> seen;
    for (int i = 0; i < (int)nums.size(); ++i) {
        long long need = (long long)target - nums[i];
        auto it = seen.find(need);
        if (it != seen.end()) {
            return {it->second, i};
        }
        seen[nums[i]] = i;
    }
    throw invalid_argument("no two elements sum to target");
}
)";

const std::string kMinStackCpp = R"(#include <stdexcept>
#include <vector>
using namespace std;

class MinStack {
public:
    MinStack() {}

    void push(int val) {
        items.push_back(val);
        if (mins.empty() || val <= mins.back()) {
            mins.push_back(val);
        }
    }

    void pop() {
        if (items.empty()) {
            throw out_of_range("pop on empty stack");
        }
        if (items.back() == mins.back()) {
            mins.pop_back();
        }
        items.pop_back();
    }

    int top() {
        if (items.empty()) {
            throw out_of_range("top on empty stack");
        }
        return items.back();
    }

    int getMin() {
        if (mins.empty()) {
            throw out_of_range("getMin on empty stack");
        }
        return mins.back();
    }

private:
    vector<int> items;
    vector<int> mins;
};
)";

const std::string kTicTacToeCpp = R"(#include <cstdlib>
#include <stdexcept>
#include <vector>
using namespace std;

class TicTacToe {
public:
    explicit TicTacToe(int n) : size(n), board(n, vector<int>(n, 0)), rows(n, 0), cols(n, 0) {}

    int move(int row, int col, int player) {
        if (row < 0 || row >= size || col < 0 || col >= size) {
            throw invalid_argument("move out of bounds");
        }
        if (board[row][col] != 0) {
            throw invalid_argument("cell already occupied");
        }
        if (player != 1 && player != 2) {
            throw invalid_argument("unknown player");
        }
        board[row][col] = player;
        int delta = player == 1 ? 1 : -1;
        rows[row] += delta;
        cols[col] += delta;
        if (row == col) {
            diag += delta;
        }
        if (row + col == size - 1) {
            anti += delta;
        }
        if (abs(rows[row]) == size || abs(cols[col]) == size || abs(diag) == size || abs(anti) == size) {
            return player;
        }
        return 0;
    }

private:
    int size;
    vector<vector<int>> board;
    vector<int> rows;
    vector<int> cols;
    int diag = 0;
    int anti = 0;
};
)";

const std::string kTwoSumPy = R"(def two_sum(nums, target):
    seen = {}
    for i, value in enumerate(nums):
        need = target - value
        if need in seen:
            return [seen[need], i]
        seen[value] = i
    raise ValueError("no two elements sum to target")
)";

const std::string kMinStackPy = R"(class MinStack:
    def __init__(self):
        self.items = []
        self.mins = []

    def push(self, val):
        self.items.append(val)
        if not self.mins or val <= self.mins[-1]:
            self.mins.append(val)

    def pop(self):
        if not self.items:
            raise IndexError("pop on empty stack")
        if self.items[-1] == self.mins[-1]:
            self.mins.pop()
        self.items.pop()

    def top(self):
        if not self.items:
            raise IndexError("top on empty stack")
        return self.items[-1]

    def get_min(self):
        if not self.mins:
            raise IndexError("get_min on empty stack")
        return self.mins[-1]
)";

const std::string kTicTacToePy = R"(class TicTacToe:
    def __init__(self, n):
        self.n = n
        self.board = [[0] * n for _ in range(n)]
        self.rows = [0] * n
        self.cols = [0] * n
        self.diag = 0
        self.anti = 0

    def move(self, row, col, player):
        n = self.n
        if not (0 <= row < n and 0 <= col < n):
            raise ValueError("move out of bounds")
        if self.board[row][col] != 0:
            raise ValueError("cell already occupied")
        if player not in (1, 2):
            raise ValueError("unknown player")
        self.board[row][col] = player
        delta = 1 if player == 1 else -1
        self.rows[row] += delta
        self.cols[col] += delta
        if row == col:
            self.diag += delta
        if row + col == n - 1:
            self.anti += delta
        if n in (abs(self.rows[row]), abs(self.cols[col]), abs(self.diag), abs(self.anti)):
            return player
        return 0
)";

// Modeled on the motivating novice submission: a stray `p = new`, writes past
// the vector's size without growing it, no empty checks, and a single running
// minimum that is never restored on pop.
const std::string kBuggyMinStackCpp = R"(#include <vector>
using namespace std;

class MinStack {
public:
    vector<int> v;
    int* p;
    int size;
    int minVal;

    MinStack() {
        p = new int;
        size = 0;
        minVal = 2147483647;
        v.reserve(16);
    }

    void push(int val) {
        v[size] = val;
        size++;
        if (val < minVal) minVal = val;
        *p = val;
    }

    void pop() {
        size--;
    }

    int top() {
        return v[size - 1];
    }

    int getMin() {
        return minVal;
    }
};
)";

// Reuses an element with itself and returns an empty result when no pair exists.
const std::string kBuggyTwoSumCpp = R"(#include <vector>
using namespace std;

vector<int> twoSum(vector<int>& nums, int target) {
    for (int i = 0; i < nums.size(); i++) {
        for (int j = i; j < nums.size(); j++) {
            if (nums[i] + nums[j] == target) {
                return {i, j};
            }
        }
    }
    return {};
}
)";

// No bounds or occupancy checks, and the anti-diagonal is never counted.
const std::string kBuggyTicTacToeCpp = R"(#include <vector>
using namespace std;

class TicTacToe {
public:
    int n;
    vector<vector<int>> board;

    TicTacToe(int size) {
        n = size;
        board = vector<vector<int>>(n, vector<int>(n, 0));
    }

    int move(int row, int col, int player) {
        board[row][col] = player;
        bool win = true;
        for (int j = 0; j < n; j++) if (board[row][j] != player) win = false;
        if (win) return player;
        win = true;
        for (int i = 0; i < n; i++) if (board[i][col] != player) win = false;
        if (win) return player;
        win = true;
        for (int i = 0; i < n; i++) if (board[i][i] != player) win = false;
        if (win) return player;
        return 0;
    }
};
)";

const std::string kBuggyTwoSumPy = R"(def two_sum(nums, target):
    for i in range(len(nums)):
        for j in range(i, len(nums)):
            if nums[i] + nums[j] == target:
                return [i, j]
    return []
)";

const std::string kBuggyMinStackPy = R"(class MinStack:
    def __init__(self):
        self.items = []
        self.min_val = float("inf")

    def push(self, val):
        self.items.append(val)
        if val < self.min_val:
            self.min_val = val

    def pop(self):
        if self.items:
            self.items.pop()

    def top(self):
        return self.items[len(self.items) - 1] if self.items else None

    def get_min(self):
        return self.min_val
)";

const std::string kBuggyTicTacToePy = R"(class TicTacToe:
    def __init__(self, n):
        self.n = n
        self.board = [[0] * n for _ in range(n)]

    def move(self, row, col, player):
        self.board[row][col] = player
        n = self.n
        if all(self.board[row][j] == player for j in range(n)):
            return player
        if all(self.board[i][col] == player for i in range(n)):
            return player
        if all(self.board[i][i] == player for i in range(n)):
            return player
        return 0
)";

}  // namespace

const std::string& reference_solution(ProblemId problem, Language language) {
  const bool cpp = language == Language::Cpp;
  switch (problem) {
    case ProblemId::TwoSum: return cpp ? kTwoSumCpp : kTwoSumPy;
    case ProblemId::MinStack: return cpp ? kMinStackCpp : kMinStackPy;
    case ProblemId::TicTacToe: return cpp ? kTicTacToeCpp : kTicTacToePy;
    case ProblemId::Other: break;
  }
  throw DomainError("no reference solution for problem Other");
}

const std::string& buggy_minstack_solution() { return kBuggyMinStackCpp; }

const std::string& buggy_solution(ProblemId problem, Language language) {
  const bool cpp = language == Language::Cpp;
  switch (problem) {
    case ProblemId::TwoSum: return cpp ? kBuggyTwoSumCpp : kBuggyTwoSumPy;
    case ProblemId::MinStack: return cpp ? kBuggyMinStackCpp : kBuggyMinStackPy;
    case ProblemId::TicTacToe: return cpp ? kBuggyTicTacToeCpp : kBuggyTicTacToePy;
    case ProblemId::Other: break;
  }
  throw DomainError("no buggy fixture for problem Other");
}

}  // namespace prefalign
