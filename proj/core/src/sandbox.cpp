#include "prefalign/sandbox.hpp"

#include <fcntl.h>
#include <linux/landlock.h>
#include <poll.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <thread>

#include <spdlog/spdlog.h>

namespace prefalign {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Enum and record plumbing

std::string to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::CompileError: return "CompileError";
    case ExecStatus::Ran: return "Ran";
    case ExecStatus::NonZeroExit: return "NonZeroExit";
    case ExecStatus::Timeout: return "Timeout";
    case ExecStatus::MemoryExceeded: return "MemoryExceeded";
    case ExecStatus::Crashed: return "Crashed";
  }
  return "Crashed";
}

ExecStatus parse_exec_status(std::string_view s) {
  for (auto st : {ExecStatus::CompileError, ExecStatus::Ran, ExecStatus::NonZeroExit,
                  ExecStatus::Timeout, ExecStatus::MemoryExceeded, ExecStatus::Crashed}) {
    if (to_string(st) == s) return st;
  }
  throw FormatError("unknown execution status '" + std::string(s) + "'");
}

std::string to_string(CaseResult r) {
  switch (r) {
    case CaseResult::Pass: return "Pass";
    case CaseResult::Fail: return "Fail";
    case CaseResult::Error: return "Error";
  }
  return "Error";
}

CaseResult parse_case_result(std::string_view s) {
  if (s == "Pass") return CaseResult::Pass;
  if (s == "Fail") return CaseResult::Fail;
  if (s == "Error") return CaseResult::Error;
  throw FormatError("unknown case result '" + std::string(s) + "'");
}

void ResourceLimits::validate() const {
  if (!(wall_time > 0.0) || memory == 0 || max_output == 0) {
    throw DomainError("resource limits must be strictly positive");
  }
}

json ResourceLimits::to_json() const {
  return {{"wall_time", wall_time}, {"memory", memory}, {"max_output", max_output}};
}

ResourceLimits ResourceLimits::from_json(const json& j) {
  ResourceLimits l;
  l.wall_time = j.value("wall_time", l.wall_time);
  l.memory = j.value("memory", l.memory);
  l.max_output = j.value("max_output", l.max_output);
  l.validate();
  return l;
}

json ExecutionOutcome::to_json() const {
  return {{"status", prefalign::to_string(status)},
          {"exit_code", exit_code},
          {"signal", signal},
          {"stdout", stdout_text},
          {"stderr", stderr_text}};
}

ExecutionOutcome ExecutionOutcome::from_json(const json& j) {
  ExecutionOutcome o;
  o.status = parse_exec_status(j.at("status").get<std::string>());
  o.exit_code = j.value("exit_code", 0);
  o.signal = j.value("signal", 0);
  o.stdout_text = j.value("stdout", std::string{});
  o.stderr_text = j.value("stderr", std::string{});
  o.wall_time_used = j.value("wall_time_used", 0.0);
  return o;
}

std::vector<CaseResult> TestReport::results() const {
  std::vector<CaseResult> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(c.result);
  return out;
}

json TestReport::to_json() const {
  json cs = json::array();
  for (const auto& c : cases) {
    cs.push_back({{"name", c.name},
                  {"category", c.category},
                  {"result", prefalign::to_string(c.result)},
                  {"status", prefalign::to_string(c.status)},
                  {"detail", c.detail}});
  }
  return {{"problem_id", prefalign::to_string(problem)}, {"cases", cs}, {"all_passed", all_passed}};
}

TestReport TestReport::from_json(const json& j) {
  TestReport r;
  r.problem = parse_problem_id(j.at("problem_id").get<std::string>());
  for (const auto& c : j.at("cases")) {
    r.cases.push_back({c.at("name").get<std::string>(), c.value("category", std::string{}),
                       parse_case_result(c.at("result").get<std::string>()),
                       parse_exec_status(c.value("status", std::string("Ran"))),
                       c.value("detail", std::string{})});
  }
  r.all_passed = j.at("all_passed").get<bool>();
  return r;
}

// ---------------------------------------------------------------------------
// Process control

namespace {

int landlock_abi() {
#ifdef SYS_landlock_create_ruleset
  const long v = syscall(SYS_landlock_create_ruleset, nullptr, 0, LANDLOCK_CREATE_RULESET_VERSION);
  return v > 0 ? static_cast<int>(v) : 0;
#else
  return 0;
#endif
}

constexpr std::uint64_t kWriteAccess =
    LANDLOCK_ACCESS_FS_WRITE_FILE | LANDLOCK_ACCESS_FS_REMOVE_DIR |
    LANDLOCK_ACCESS_FS_REMOVE_FILE | LANDLOCK_ACCESS_FS_MAKE_CHAR |
    LANDLOCK_ACCESS_FS_MAKE_DIR | LANDLOCK_ACCESS_FS_MAKE_REG |
    LANDLOCK_ACCESS_FS_MAKE_SOCK | LANDLOCK_ACCESS_FS_MAKE_FIFO |
    LANDLOCK_ACCESS_FS_MAKE_BLOCK | LANDLOCK_ACCESS_FS_MAKE_SYM;

// Ruleset allowing writes only beneath `dir`. Returns -1 when unsupported.
int make_write_ruleset(const fs::path& dir) {
  landlock_ruleset_attr attr{};
  attr.handled_access_fs = kWriteAccess;
  const int rs = static_cast<int>(syscall(SYS_landlock_create_ruleset, &attr, sizeof attr, 0));
  if (rs < 0) return -1;
  const int dfd = ::open(dir.c_str(), O_PATH | O_CLOEXEC);
  if (dfd < 0) {
    ::close(rs);
    return -1;
  }
  landlock_path_beneath_attr pb{};
  pb.allowed_access = kWriteAccess;
  pb.parent_fd = dfd;
  const long rc = syscall(SYS_landlock_add_rule, rs, LANDLOCK_RULE_PATH_BENEATH, &pb, 0);
  ::close(dfd);
  if (rc < 0) {
    ::close(rs);
    return -1;
  }
  return rs;
}

struct SpawnOptions {
  std::vector<std::string> argv;
  std::vector<std::string> env;
  fs::path cwd;
  double wall_time = 10.0;
  std::size_t memory = 0;       // 0: no address-space limit
  std::size_t max_output = 64 * 1024;
  std::size_t max_file = 64u * 1024 * 1024;
  int ruleset_fd = -1;
};

struct SpawnResult {
  bool timed_out = false;
  int exit_code = 0;
  int signal = 0;
  std::string out, err;
  std::string out_tail;  // last bytes of stdout, kept regardless of truncation
  double wall = 0.0;
};

constexpr std::size_t kTailBytes = 4096;

void append_capped(std::string& dst, const char* data, std::size_t n, std::size_t cap) {
  if (dst.size() < cap) dst.append(data, std::min(n, cap - dst.size()));
}

SpawnResult spawn(const SpawnOptions& o) {
  std::vector<char*> argv, envp;
  for (const auto& a : o.argv) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  for (const auto& e : o.env) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);

  int out_pipe[2], err_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) throw SandboxSetupError("pipe: " + std::string(std::strerror(errno)));
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    throw SandboxSetupError("pipe: " + std::string(std::strerror(errno)));
  }
  const std::string cwd = o.cwd.string();
  const rlim_t cpu = static_cast<rlim_t>(std::ceil(o.wall_time)) + 1;

  const auto start = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) throw SandboxSetupError("fork: " + std::string(std::strerror(errno)));
  if (pid == 0) {
    // Child: only async-signal-safe calls from here on.
    ::setpgid(0, 0);
    const int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, 0);
    ::dup2(out_pipe[1], 1);
    ::dup2(err_pipe[1], 2);
    if (::chdir(cwd.c_str()) != 0) _exit(126);
    rlimit rl{};
    if (o.memory > 0) {
      rl.rlim_cur = rl.rlim_max = o.memory;
      ::setrlimit(RLIMIT_AS, &rl);
    }
    rl.rlim_cur = rl.rlim_max = cpu;
    ::setrlimit(RLIMIT_CPU, &rl);
    rl.rlim_cur = rl.rlim_max = o.max_file;
    ::setrlimit(RLIMIT_FSIZE, &rl);
    rl.rlim_cur = rl.rlim_max = 0;
    ::setrlimit(RLIMIT_CORE, &rl);
    if (o.ruleset_fd >= 0) {
      if (::prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0) _exit(125);
      if (syscall(SYS_landlock_restrict_self, o.ruleset_fd, 0) != 0) _exit(125);
    }
    ::execve(argv[0], argv.data(), envp.data());
    _exit(127);
  }
  ::setpgid(pid, pid);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);

  SpawnResult r;
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  int open_fds = 2;
  const auto deadline = start + std::chrono::duration<double>(o.wall_time);
  char buf[8192];
  while (open_fds > 0) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      r.timed_out = true;
      ::kill(-pid, SIGKILL);
      break;
    }
    const int ms = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
    const int n = ::poll(fds, 2, std::min(ms, 100));
    if (n < 0 && errno != EINTR) break;
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const ssize_t got = ::read(fds[i].fd, buf, sizeof buf);
      if (got <= 0) {
        ::close(fds[i].fd);
        fds[i].fd = -1;
        --open_fds;
        continue;
      }
      if (i == 0) {
        append_capped(r.out, buf, static_cast<std::size_t>(got), o.max_output);
        r.out_tail.append(buf, static_cast<std::size_t>(got));
        if (r.out_tail.size() > 2 * kTailBytes) r.out_tail.erase(0, r.out_tail.size() - kTailBytes);
      } else {
        append_capped(r.err, buf, static_cast<std::size_t>(got), o.max_output);
      }
    }
  }
  for (auto& f : fds) {
    if (f.fd >= 0) ::close(f.fd);
  }

  // Pipes closed but the process (or a daemonized child keeping no pipe) may linger.
  int status = 0;
  while (true) {
    const pid_t w = ::waitpid(pid, &status, WNOHANG);
    if (w == pid) break;
    if (w < 0 && errno != EINTR) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      r.timed_out = true;
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  ::kill(-pid, SIGKILL);  // reap stragglers in the process group
  r.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
  if (WIFSIGNALED(status)) r.signal = WTERMSIG(status);
  return r;
}

std::optional<fs::path> which(const std::string& name) {
  const char* path = std::getenv("PATH");
  std::string p = path ? path : "/usr/local/bin:/usr/bin:/bin";
  std::size_t start = 0;
  while (start <= p.size()) {
    const auto end = p.find(':', start);
    const fs::path dir = p.substr(start, end == std::string::npos ? std::string::npos : end - start);
    const fs::path cand = dir / name;
    if (!dir.empty() && ::access(cand.c_str(), X_OK) == 0) return cand;
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return std::nullopt;
}

fs::path resolve_tool(const fs::path& configured, const char* env_var,
                      std::initializer_list<const char*> names) {
  if (!configured.empty()) {
    if (configured.is_absolute()) return configured;
    if (auto p = which(configured.string())) return *p;
    return {};
  }
  if (const char* e = std::getenv(env_var); e && *e) {
    if (fs::path(e).is_absolute()) return e;
    if (auto p = which(e)) return *p;
  }
  for (const char* n : names) {
    if (auto p = which(n)) return *p;
  }
  return {};
}

std::vector<std::string> child_env(const fs::path& home) {
  const char* path = std::getenv("PATH");
  return {std::string("PATH=") + (path ? path : "/usr/local/bin:/usr/bin:/bin"),
          "HOME=" + home.string(), "LANG=C", "LC_ALL=C", "PYTHONDONTWRITEBYTECODE=1",
          "PYTHONHASHSEED=0", "TMPDIR=" + home.string()};
}

// Common headers and `using namespace std;` so snippets without includes compile.
constexpr const char* kCppPrelude = R"(#include <algorithm>
#include <cassert>
#include <climits>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <stack>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>
using namespace std;
)";

bool defines_main(const std::string& code) {
  std::vector<Token> toks;
  try {
    toks = tokenize(code, Language::Cpp);
  } catch (const LexError&) {
    return false;
  }
  auto next_sig = [&](std::size_t i) {
    for (++i; i < toks.size(); ++i) {
      if (toks[i].kind != TokenKind::Whitespace && toks[i].kind != TokenKind::Comment) return i;
    }
    return toks.size();
  };
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].kind == TokenKind::Identifier && toks[i].lexeme == "main") {
      const auto j = next_sig(i);
      if (j < toks.size() && toks[j].lexeme == "(") return true;
    }
  }
  return false;
}

std::string verdict_line(const std::string& tail, const std::string& token) {
  const std::string key = "@@VERDICT " + token + " ";
  const auto pos = tail.rfind(key);
  if (pos == std::string::npos) return {};
  auto end = tail.find('\n', pos);
  return tail.substr(pos + key.size(), end == std::string::npos ? std::string::npos : end - pos - key.size());
}

// Allocation failure under RLIMIT_AS shows up as the drivers' marker, an
// uncaught std::bad_alloc, or a Python traceback ending in MemoryError.
bool out_of_memory(const std::string& err) {
  if (err.find("@@OOM") != std::string::npos || err.find("std::bad_alloc") != std::string::npos) return true;
  const std::string t = trim(err);
  const std::string_view key = "MemoryError";
  return t.size() >= key.size() && t.compare(t.size() - key.size(), key.size(), key) == 0;
}

ExecStatus classify(const SpawnResult& r) {
  if (r.timed_out || r.signal == SIGXCPU) return ExecStatus::Timeout;
  if ((r.signal != 0 || r.exit_code != 0) && out_of_memory(r.err)) return ExecStatus::MemoryExceeded;
  if (r.signal != 0) return ExecStatus::Crashed;
  if (r.exit_code == 0) return ExecStatus::Ran;
  return ExecStatus::NonZeroExit;
}

}  // namespace

// ---------------------------------------------------------------------------
// Sandbox

Sandbox::Sandbox(SandboxConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.workers == 0) cfg_.workers = std::max(1u, std::thread::hardware_concurrency());
  cfg_.cxx = resolve_tool(cfg_.cxx, "PREFALIGN_CXX", {"c++", "g++", "clang++"});
  cfg_.python = resolve_tool(cfg_.python, "PREFALIGN_PYTHON", {"python3", "python"});
  confinement_abi_ = landlock_abi();
  if (confinement_abi_ == 0) {
    if (cfg_.require_confinement) {
      throw SandboxSetupError("kernel does not support Landlock write confinement");
    }
    spdlog::warn("sandbox: Landlock unavailable, candidate writes are not confined");
  }
  if (cfg_.scratch.empty()) {
    std::string tmpl = (fs::temp_directory_path() / "prefalign-sandbox-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw SandboxSetupError("cannot create scratch directory");
    scratch_ = tmpl;
    owns_scratch_ = true;
  } else {
    scratch_ = cfg_.scratch;
    std::error_code ec;
    fs::create_directories(scratch_, ec);
    if (ec) throw SandboxSetupError("cannot create scratch directory " + scratch_.string());
  }
}

Sandbox::~Sandbox() {
  if (owns_scratch_) {
    std::error_code ec;
    fs::remove_all(scratch_, ec);
  }
}

fs::path Sandbox::fresh_dir(const std::string& stem) {
  std::uint64_t n;
  {
    std::lock_guard lock(mu_);
    n = counter_++;
  }
  fs::path dir = scratch_ / (stem + "-" + std::to_string(n));
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) throw SandboxSetupError("cannot create " + dir.string());
  return dir;
}

std::shared_ptr<const BuildArtifact> Sandbox::build(const std::string& code, Language language,
                                                     const std::string& driver) {
  std::string key_material = to_string(language) + '\x1f' + code + '\x1f' + driver;
  for (const auto& f : cfg_.cxx_flags) key_material += '\x1f' + f;
  const std::string key = sha256_hex(key_material);

  std::lock_guard lock(mu_);
  if (auto it = builds_.find(key); it != builds_.end()) return it->second;

  auto art = std::make_shared<BuildArtifact>();
  art->language = language;
  art->dir = scratch_ / ("build-" + key.substr(0, 16));
  std::error_code ec;
  fs::remove_all(art->dir, ec);
  fs::create_directories(art->dir, ec);
  if (ec) throw SandboxSetupError("cannot create " + art->dir.string());

  if (trim(code).empty()) {
    art->ok = false;
    art->diagnostics = "empty source";
    builds_[key] = art;
    return art;
  }

  if (language == Language::Cpp) {
    if (cfg_.cxx.empty()) throw SandboxSetupError("no C++ compiler found (set PREFALIGN_CXX)");
    std::string tu;
    if (!driver.empty()) {
      const bool has_main = defines_main(code);
      tu += kCppPrelude;
      if (has_main) tu += "#define main prefalign_candidate_main\n";
      tu += "#line 1 \"solution.cpp\"\n" + code + "\n";
      if (has_main) tu += "#undef main\n";
      tu += "#line 1 \"driver.cpp\"\n" + driver;
    } else {
      tu = "#line 1 \"solution.cpp\"\n" + code + "\n";
    }
    write_file_atomic(art->dir / "main.cpp", tu);
    SpawnOptions o;
    o.argv = {cfg_.cxx.string()};
    o.argv.insert(o.argv.end(), cfg_.cxx_flags.begin(), cfg_.cxx_flags.end());
    o.argv.insert(o.argv.end(), {"main.cpp", "-o", "prog"});
    o.env = child_env(art->dir);
    o.cwd = art->dir;
    o.wall_time = cfg_.compile_timeout;
    o.max_output = 64 * 1024;
    const SpawnResult r = spawn(o);
    if (r.exit_code == 127 && r.err.empty()) {
      throw SandboxSetupError("cannot execute compiler " + cfg_.cxx.string());
    }
    art->ok = !r.timed_out && r.signal == 0 && r.exit_code == 0;
    art->diagnostics = r.timed_out ? "compilation timed out" : r.err;
    art->entry = art->dir / "prog";
  } else {
    if (cfg_.python.empty()) throw SandboxSetupError("no Python interpreter found (set PREFALIGN_PYTHON)");
    write_file_atomic(art->dir / "solution.py", code);
    if (!driver.empty()) write_file_atomic(art->dir / "driver.py", driver);
    SpawnOptions o;
    o.argv = {cfg_.python.string(), "-c",
              "import ast,sys\n"
              "src=open('solution.py',encoding='utf-8').read()\n"
              "try:\n    ast.parse(src,'solution.py')\n"
              "except SyntaxError as e:\n    print(f'solution.py:{e.lineno}: {e.msg}',file=sys.stderr); sys.exit(1)\n"};
    o.env = child_env(art->dir);
    o.cwd = art->dir;
    o.wall_time = cfg_.compile_timeout;
    const SpawnResult r = spawn(o);
    if (r.exit_code == 127 && r.err.empty()) {
      throw SandboxSetupError("cannot execute interpreter " + cfg_.python.string());
    }
    art->ok = !r.timed_out && r.signal == 0 && r.exit_code == 0;
    art->diagnostics = r.err;
    art->entry = art->dir / (driver.empty() ? "solution.py" : "driver.py");
  }
  builds_[key] = art;
  return art;
}

ExecutionOutcome Sandbox::run(const BuildArtifact& artifact, const std::vector<std::string>& args,
                              const ResourceLimits& limits, const fs::path& workdir, std::string* stdout_tail) {
  SpawnOptions o;
  if (artifact.language == Language::Cpp) {
    o.argv = {artifact.entry.string()};
  } else {
    o.argv = {cfg_.python.string(), "-S", artifact.entry.string()};
  }
  o.argv.insert(o.argv.end(), args.begin(), args.end());
  o.env = child_env(workdir);
  o.cwd = workdir;
  o.wall_time = limits.wall_time;
  o.memory = limits.memory;
  o.max_output = limits.max_output;
  o.max_file = std::max<std::size_t>(limits.max_output, 1024 * 1024);
  if (confinement_abi_ > 0) {
    o.ruleset_fd = make_write_ruleset(workdir);
    if (o.ruleset_fd < 0) throw SandboxSetupError("cannot build Landlock ruleset for " + workdir.string());
  }
  SpawnResult r;
  try {
    r = spawn(o);
  } catch (...) {
    if (o.ruleset_fd >= 0) ::close(o.ruleset_fd);
    throw;
  }
  if (o.ruleset_fd >= 0) ::close(o.ruleset_fd);
  ExecutionOutcome out;
  out.status = classify(r);
  out.stdout_text = std::move(r.out);
  out.stderr_text = std::move(r.err);
  out.wall_time_used = r.wall;
  out.exit_code = r.exit_code;
  out.signal = r.signal;
  // The verdict line is read from the tail, which survives stdout truncation.
  if (stdout_tail) *stdout_tail = std::move(r.out_tail);
  return out;
}

ExecutionOutcome Sandbox::execute(const std::string& code, Language language,
                                  const ResourceLimits& limits, const std::string& driver) {
  limits.validate();
  const auto art = build(code, language, driver);
  if (!art->ok) {
    ExecutionOutcome out;
    out.status = ExecStatus::CompileError;
    out.stderr_text = art->diagnostics.substr(0, limits.max_output);
    if (out.stderr_text.empty()) out.stderr_text = "compilation failed";
    return out;
  }
  const fs::path wd = fresh_dir("run");
  ExecutionOutcome out = run(*art, {}, limits, wd);
  std::error_code ec;
  fs::remove_all(wd, ec);
  return out;
}

TestReport Sandbox::run_suite(const std::string& code, Language language, const TestSuite& suite,
                              const ResourceLimits& limits) {
  limits.validate();
  const auto art = build(code, language, suite.driver(language));
  TestReport report;
  report.problem = suite.problem;
  report.cases.resize(suite.cases.size());
  for (std::size_t i = 0; i < suite.cases.size(); ++i) {
    report.cases[i].name = suite.cases[i].name;
    report.cases[i].category = suite.cases[i].category;
  }
  if (!art->ok) {
    for (auto& c : report.cases) {
      c.result = CaseResult::Error;
      c.status = ExecStatus::CompileError;
      c.detail = "compile error";
    }
    report.all_passed = false;
    return report;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= suite.cases.size()) return;
      try {
        const std::string token = sha256_hex(art->dir.string() + "#" + std::to_string(i)).substr(0, 24);
        const fs::path wd = fresh_dir("case");
        std::string tail;
        const ExecutionOutcome out = run(*art, {std::to_string(i), token}, limits, wd, &tail);
        std::error_code ec;
        fs::remove_all(wd, ec);
        auto& c = report.cases[i];
        c.status = out.status;
        if (out.status != ExecStatus::Ran) {
          c.result = CaseResult::Error;
          c.detail = to_string(out.status);
          continue;
        }
        const std::string v = verdict_line(tail, token);
        if (v.rfind("PASS", 0) == 0) {
          c.result = CaseResult::Pass;
        } else if (v.rfind("FAIL", 0) == 0) {
          c.result = CaseResult::Fail;
          c.detail = trim(v.substr(4));
        } else {
          c.result = CaseResult::Error;
          c.detail = "no verdict";
        }
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::min<unsigned>(cfg_.workers, static_cast<unsigned>(suite.cases.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  report.all_passed = std::all_of(report.cases.begin(), report.cases.end(),
                                  [](const CaseReport& c) { return c.result == CaseResult::Pass; });
  return report;
}

Sandbox::Evaluation Sandbox::evaluate(const std::string& code, Language language,
                                      const TestSuite& suite, const ResourceLimits& limits) {
  Evaluation ev;
  ev.execution = execute(code, language, limits, suite.driver(language));
  ev.tests = run_suite(code, language, suite, limits);
  return ev;
}

// ---------------------------------------------------------------------------
// Metrics

double pass_at_k(int n, int c, int k) {
  if (n < 0 || c < 0 || c > n || k < 1 || k > n) {
    throw DomainError("pass_at_k requires 0 <= c <= n and 1 <= k <= n (got n=" + std::to_string(n) +
                      ", c=" + std::to_string(c) + ", k=" + std::to_string(k) + ")");
  }
  if (n - c < k) return 1.0;
  // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
  double ratio = 1.0;
  for (int i = n - c + 1; i <= n; ++i) ratio *= 1.0 - static_cast<double>(k) / i;
  return 1.0 - ratio;
}

json AccuracyReport::to_json() const {
  json p = json::object();
  for (const auto& [k, v] : pass_at_k) p[std::to_string(k)] = v;
  return {{"executability_rate", executability_rate},
          {"pass_at_k", p},
          {"tasks", tasks},
          {"candidates", candidates}};
}

AccuracyReport accuracy_report(const std::vector<std::vector<CandidateResult>>& groups,
                               const std::vector<int>& k_values) {
  if (groups.empty()) throw EmptyInput("no task groups");
  if (k_values.empty()) throw EmptyInput("no k values");
  const std::size_t n = groups.front().size();
  if (n == 0) throw EmptyInput("task group with no candidates");
  for (const auto& g : groups) {
    if (g.size() != n) throw EmptyInput("task groups have unequal sample counts");
  }
  AccuracyReport rep;
  rep.tasks = groups.size();
  rep.candidates = groups.size() * n;
  std::size_t ran = 0;
  std::vector<int> correct;
  for (const auto& g : groups) {
    int c = 0;
    for (const auto& r : g) {
      if (r.status == ExecStatus::Ran) ++ran;
      if (r.status == ExecStatus::Ran && r.all_passed) ++c;
    }
    correct.push_back(c);
  }
  rep.executability_rate = static_cast<double>(ran) / static_cast<double>(rep.candidates);
  for (int k : k_values) {
    double sum = 0.0;
    for (int c : correct) sum += pass_at_k(static_cast<int>(n), c, k);
    rep.pass_at_k[k] = sum / static_cast<double>(groups.size());
  }
  return rep;
}

}  // namespace prefalign
