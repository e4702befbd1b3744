#include "gift/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <spawn.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

extern char** environ;

namespace gift {

namespace {

constexpr const char* kHarnessSource =
#include "sandbox_harness.inc"
    ;

constexpr uid_t kNobody = 65534;

using Clock = std::chrono::steady_clock;

std::string resolve_executable(const std::string& name) {
  if (name.find('/') != std::string::npos) return access(name.c_str(), X_OK) == 0 ? name : std::string();
  const char* path = std::getenv("PATH");
  std::string dirs = path ? path : "/usr/local/bin:/usr/bin:/bin";
  std::stringstream ss(dirs);
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    if (dir.empty()) continue;
    std::string candidate = dir + "/" + name;
    if (access(candidate.c_str(), X_OK) == 0) return candidate;
  }
  return {};
}

class ScratchDir {
 public:
  ScratchDir() {
    std::string pattern = (std::filesystem::temp_directory_path() / "gift-sandbox-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw SandboxEnvironmentError("cannot create scratch directory: " + std::string(std::strerror(errno)));
    path_ = pattern;
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

  void write(const std::string& name, std::string_view contents) const {
    auto file = path_ / name;
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw SandboxEnvironmentError("cannot write " + file.string());
    out.close();
    if (geteuid() == 0 && chown(file.c_str(), kNobody, kNobody) != 0)
      throw SandboxEnvironmentError("cannot hand " + file.string() + " to the sandbox user");
  }

  void hand_over() const {
    if (geteuid() == 0 && chown(path_.c_str(), kNobody, kNobody) != 0)
      throw SandboxEnvironmentError("cannot hand " + path_.string() + " to the sandbox user");
    (void)chmod(path_.c_str(), 0700);
  }

 private:
  std::filesystem::path path_;
};

struct Pipe {
  int fds[2] = {-1, -1};
  Pipe() {
    if (pipe2(fds, O_CLOEXEC) != 0) throw SandboxEnvironmentError("pipe2 failed: " + std::string(std::strerror(errno)));
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (fds[0] >= 0) close(fds[0]);
    fds[0] = -1;
  }
  void close_write() {
    if (fds[1] >= 0) close(fds[1]);
    fds[1] = -1;
  }
};

struct ProcessOutcome {
  std::string stdout_text;
  bool timed_out = false;
  bool output_exceeded = false;
  int wait_status = 0;
};

void set_limit(int resource, rlim_t value) {
  struct rlimit rl{value, value};
  setrlimit(resource, &rl);
}

// Everything between fork and exec must be async-signal-safe: argv/env are built beforehand.
ProcessOutcome run_process(const std::string& python, const ScratchDir& scratch, std::size_t start_index,
                           Clock::time_point deadline, const SandboxLimits& limits) {
  std::string start_arg = std::to_string(start_index);
  std::string home = "HOME=" + scratch.path().string();
  std::vector<std::string> env_storage = {"PATH=/usr/local/bin:/usr/bin:/bin", home, "LANG=C.UTF-8",
                                          "PYTHONHASHSEED=0", "PYTHONDONTWRITEBYTECODE=1", "PYTHONNOUSERSITE=1"};
  std::vector<char*> envp;
  for (auto& e : env_storage) envp.push_back(e.data());
  envp.push_back(nullptr);
  std::string harness = "harness.py";
  std::string flag_s = "-s", flag_b = "-B";
  std::string python_arg = python;
  std::vector<char*> argv = {python_arg.data(), flag_s.data(), flag_b.data(), harness.data(), start_arg.data(), nullptr};
  const std::string dir = scratch.path().string();

  const auto timeout_s = static_cast<rlim_t>(
      std::chrono::duration_cast<std::chrono::seconds>(limits.wall_timeout).count() + 1);
  const rlim_t memory = static_cast<rlim_t>(limits.memory_bytes);
  const rlim_t file_size = static_cast<rlim_t>(std::max<std::size_t>(limits.output_cap_bytes, 1 << 20) * 16);
  const bool drop_privileges = geteuid() == 0;

  Pipe out, err;
  int devnull = open("/dev/null", O_RDONLY | O_CLOEXEC);
  pid_t pid = fork();
  if (pid < 0) {
    if (devnull >= 0) close(devnull);
    throw SandboxEnvironmentError("fork failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    setpgid(0, 0);
    if (limits.no_network) {
      if (unshare(CLONE_NEWNET) != 0) (void)unshare(CLONE_NEWUSER | CLONE_NEWNET);
    }
    set_limit(RLIMIT_AS, memory);
    set_limit(RLIMIT_CPU, timeout_s);
    set_limit(RLIMIT_FSIZE, file_size);
    set_limit(RLIMIT_CORE, 0);
    set_limit(RLIMIT_NOFILE, 64);
    if (devnull >= 0) dup2(devnull, STDIN_FILENO);
    dup2(out.fds[1], STDOUT_FILENO);
    dup2(err.fds[1], STDERR_FILENO);
    if (chdir(dir.c_str()) != 0) _exit(126);
    if (drop_privileges) {
      if (setgid(kNobody) != 0 || setuid(kNobody) != 0) _exit(126);
    }
    execve(argv[0], argv.data(), envp.data());
    _exit(127);
  }
  if (devnull >= 0) close(devnull);
  setpgid(pid, pid);
  out.close_write();
  err.close_write();

  ProcessOutcome outcome;
  std::size_t total_bytes = 0;
  std::optional<Clock::time_point> drain_deadline;
  bool killed = false;
  auto kill_group = [&] {
    if (!killed) {
      kill(-pid, SIGKILL);
      kill(pid, SIGKILL);
      killed = true;
      drain_deadline = Clock::now() + std::chrono::milliseconds(200);
    }
  };

  char buffer[8192];
  while (out.fds[0] >= 0 || err.fds[0] >= 0) {
    auto now = Clock::now();
    if (!killed && now >= deadline) {
      outcome.timed_out = true;
      kill_group();
    }
    if (drain_deadline && now >= *drain_deadline) break;
    auto until = drain_deadline ? *drain_deadline : deadline;
    int wait_ms = static_cast<int>(
        std::max<long long>(1, std::chrono::duration_cast<std::chrono::milliseconds>(until - now).count()));

    pollfd fds[2];
    nfds_t count = 0;
    int* owners[2];
    for (Pipe* p : {&out, &err}) {
      if (p->fds[0] >= 0) {
        fds[count] = {p->fds[0], POLLIN, 0};
        owners[count] = &p->fds[0];
        ++count;
      }
    }
    int ready = poll(fds, count, wait_ms);
    if (ready < 0 && errno != EINTR) break;
    for (nfds_t i = 0; i < count && ready > 0; ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      ssize_t n = read(fds[i].fd, buffer, sizeof buffer);
      if (n <= 0) {
        close(*owners[i]);
        *owners[i] = -1;
        continue;
      }
      total_bytes += static_cast<std::size_t>(n);
      if (owners[i] == &out.fds[0]) outcome.stdout_text.append(buffer, static_cast<std::size_t>(n));
      if (total_bytes > limits.output_cap_bytes && !killed) {
        outcome.output_exceeded = true;
        kill_group();
      }
    }
  }
  // Pipes may still be held open by stray grandchildren; the group kill covers them.
  if (!killed) kill(-pid, SIGKILL);
  waitpid(pid, &outcome.wait_status, 0);
  return outcome;
}

struct ParsedStream {
  bool loaded = false;
  bool done = false;
  std::optional<std::size_t> in_progress;
  std::vector<std::pair<std::size_t, TestVerdict>> verdicts;
};

ParsedStream parse_stream(const std::string& text, const std::string& nonce) {
  ParsedStream parsed;
  std::istringstream in(text);
  std::string line;
  const std::string prefix = nonce + " ";
  while (std::getline(in, line)) {
    if (!line.starts_with(prefix)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line.substr(prefix.size()));
    } catch (const nlohmann::json::exception&) {
      continue;  // a truncated final line after a kill
    }
    const std::string event = j.value("event", "");
    if (event == "loaded") {
      parsed.loaded = true;
    } else if (event == "begin") {
      parsed.in_progress = j.at("index").get<std::size_t>();
    } else if (event == "verdict") {
      TestVerdict v;
      v.passed = j.value("passed", false);
      v.detail = j.value("detail", "");
      if (!v.passed) v.failure_kind = parse_failure_kind(j.value("failure_kind", "runtime_error")).value_or(FailureKind::runtime_error);
      auto index = j.at("index").get<std::size_t>();
      parsed.verdicts.emplace_back(index, std::move(v));
      if (parsed.in_progress == index) parsed.in_progress.reset();
    } else if (event == "done") {
      parsed.done = true;
    }
  }
  return parsed;
}

TestVerdict abnormal_verdict(const ProcessOutcome& outcome, const SandboxLimits& limits) {
  TestVerdict v;
  if (outcome.timed_out) {
    v.failure_kind = FailureKind::timeout;
    v.detail = "exceeded wall time of " + std::to_string(limits.wall_timeout.count()) + " ms";
  } else if (outcome.output_exceeded) {
    v.failure_kind = FailureKind::resource_limit;
    v.detail = "output exceeded " + std::to_string(limits.output_cap_bytes) + " bytes";
  } else if (WIFSIGNALED(outcome.wait_status)) {
    int sig = WTERMSIG(outcome.wait_status);
    if (sig == SIGXCPU) {
      v.failure_kind = FailureKind::timeout;
      v.detail = "CPU time limit exceeded";
    } else if (sig == SIGXFSZ) {
      v.failure_kind = FailureKind::resource_limit;
      v.detail = "file size limit exceeded";
    } else {
      v.failure_kind = FailureKind::runtime_error;
      v.detail = "process killed by signal " + std::to_string(sig);
    }
  } else {
    v.failure_kind = FailureKind::runtime_error;
    int status = WIFEXITED(outcome.wait_status) ? WEXITSTATUS(outcome.wait_status) : -1;
    v.detail = "process exited with status " + std::to_string(status);
  }
  return v;
}

std::string make_nonce() {
  std::random_device rd;
  std::uniform_int_distribution<unsigned> dist(0, 15);
  std::string nonce = "@@gift-";
  for (int i = 0; i < 24; ++i) nonce.push_back("0123456789abcdef"[dist(rd)]);
  return nonce;
}

std::string tests_json(const SeedTask& task) {
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& t : task.tests) {
    tests.push_back({{"call", t.call_expression},
                     {"expected", t.expected},
                     {"approx", t.comparison == Comparison::approx},
                     {"tol", t.tolerance}});
  }
  return tests.dump();
}

}  // namespace

Sandbox::Sandbox(SandboxLimits limits, std::string python, int max_concurrent)
    : limits_(limits), python_(resolve_executable(python)), slots_(std::max(1, max_concurrent)) {
  if (limits_.wall_timeout.count() <= 0) throw PreconditionError("wall_timeout_ms must be > 0");
  if (python_.empty()) throw SandboxEnvironmentError("python runtime '" + python + "' not found on PATH");
}

void Sandbox::probe_runtime(const std::string& python) {
  std::string resolved = resolve_executable(python);
  if (resolved.empty()) throw SandboxEnvironmentError("python runtime '" + python + "' not found on PATH");
  std::string flag = "-c";
  std::string script = "import sys; sys.exit(0 if sys.version_info >= (3, 8) else 3)";
  std::vector<char*> argv = {resolved.data(), flag.data(), script.data(), nullptr};
  pid_t pid;
  if (posix_spawn(&pid, resolved.c_str(), nullptr, nullptr, argv.data(), environ) != 0)
    throw SandboxEnvironmentError("cannot start python runtime '" + resolved + "'");
  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw SandboxEnvironmentError("python runtime '" + resolved + "' is unusable (need Python >= 3.8)");
}

PassReport Sandbox::run_tests(std::string_view code, const SeedTask& task) {
  if (code.empty()) throw PreconditionError("code must be nonempty");

  slots_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{slots_};

  const auto started = Clock::now();
  ScratchDir scratch;
  scratch.write("harness.py", kHarnessSource);
  scratch.write("candidate.py", code);
  scratch.write("tests.json", tests_json(task));
  scratch.hand_over();

  const std::size_t n = task.tests.size();
  std::vector<std::optional<TestVerdict>> verdicts(n);
  // The wall limit covers the whole submission, restarts included.
  const auto deadline = started + limits_.wall_timeout;
  std::size_t start = 0;
  while (start < n) {
    if (Clock::now() >= deadline) {
      ProcessOutcome expired;
      expired.timed_out = true;
      for (std::size_t i = start; i < n; ++i)
        if (!verdicts[i]) verdicts[i] = abnormal_verdict(expired, limits_);
      break;
    }
    const std::string nonce = make_nonce();
    scratch.write("nonce", nonce);
    ProcessOutcome outcome = run_process(python_, scratch, start, deadline, limits_);
    ParsedStream parsed = parse_stream(outcome.stdout_text, nonce);
    for (auto& [index, verdict] : parsed.verdicts) {
      if (index < n) verdicts[index] = std::move(verdict);
    }
    if (parsed.done) break;

    TestVerdict failure = abnormal_verdict(outcome, limits_);
    if (!parsed.loaded) {
      // The candidate never finished loading, so no remaining test can run.
      for (std::size_t i = start; i < n; ++i)
        if (!verdicts[i]) verdicts[i] = failure;
      break;
    }
    if (parsed.in_progress && *parsed.in_progress < n) {
      verdicts[*parsed.in_progress] = failure;
    } else {
      auto first_missing = std::find_if(verdicts.begin() + static_cast<std::ptrdiff_t>(start), verdicts.end(),
                                        [](const auto& v) { return !v.has_value(); });
      if (first_missing == verdicts.end()) break;
      *first_missing = failure;
    }
    auto next = std::find_if(verdicts.begin() + static_cast<std::ptrdiff_t>(start), verdicts.end(),
                             [](const auto& v) { return !v.has_value(); });
    start = static_cast<std::size_t>(next - verdicts.begin());
  }

  PassReport report;
  report.per_test.reserve(n);
  for (auto& v : verdicts) {
    if (!v) v = TestVerdict{false, FailureKind::runtime_error, "no verdict produced"};
    report.per_test.push_back(std::move(*v));
  }
  report.all_passed = std::all_of(report.per_test.begin(), report.per_test.end(), [](const auto& v) { return v.passed; });
  report.wall_time_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started).count();
  return report;
}

double pass_rate(std::span<const PassReport> reports) {
  if (reports.empty()) throw PreconditionError("pass_rate needs at least one report");
  auto passed = std::count_if(reports.begin(), reports.end(), [](const PassReport& r) { return r.all_passed; });
  return static_cast<double>(passed) / static_cast<double>(reports.size());
}

}  // namespace gift
