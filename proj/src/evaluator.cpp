#include "sage/evaluator.hpp"

#include "sage/errors.hpp"

#include <nlohmann/json.hpp>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>

namespace sage {

namespace {

namespace fs = std::filesystem;
using features::Feature;
using features::index_of;

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) throw EvaluatorUnavailable(std::strerror(errno));
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  Pipe(const Pipe&) = delete;
  Pipe& operator=(const Pipe&) = delete;
  void close_read() {
    if (fd[0] >= 0) ::close(fd[0]);
    fd[0] = -1;
  }
  void close_write() {
    if (fd[1] >= 0) ::close(fd[1]);
    fd[1] = -1;
  }
};

class ScratchDir {
 public:
  ScratchDir() {
    std::string tmpl = (fs::temp_directory_path() / "sage-sandbox-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw EvaluatorUnavailable("cannot create scratch dir");
    path_ = tmpl;
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

std::string_view status_name(SandboxStatus s) {
  switch (s) {
    case SandboxStatus::ok: return "ok";
    case SandboxStatus::error: return "error";
    case SandboxStatus::timeout: return "timeout";
  }
  return "";
}

}  // namespace

SyntheticParams SyntheticParams::defaults() {
  SyntheticParams p;
  const std::array<std::pair<double, double>, features::kFeatureCount> ranges = {{
      {0, 2000}, {0, 2000}, {0, 2},  {0, 20},  {0, 5},   {0, 50},   {0, 10},  {0, 20},
      {0, 30},   {0, 1},    {-1, 1}, {0, 60},  {0, 30},  {0, 20},   {0, 60},  {0, 20},
      {0, 30},   {0, 4000}, {0, 800}, {0, 40}, {0, 10},  {0, 15},
  }};
  p.ranges = ranges;
  p.weights[index_of(Feature::total_parameter_count)] = 3.0;
  p.weights[index_of(Feature::total_cyclomatic_complexity)] = 3.0;
  return p;
}

double synthetic_fitness(const features::FeatureVector& x, const SyntheticParams& params) {
  double score = params.bias;
  for (std::size_t j = 0; j < features::kFeatureCount; ++j) {
    if (params.weights[j] == 0.0) continue;
    const auto [lo, hi] = params.ranges[j];
    const double z = hi > lo ? std::clamp((x[j] - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    score += params.weights[j] * z;
  }
  return 1.0 / (1.0 + std::exp(-score));
}

Evaluation SyntheticEvaluator::evaluate(const std::string& code) {
  try {
    return Evaluation{synthetic_fitness(cache_.get(code), params_), std::nullopt, false};
  } catch (const ParseError& e) {
    return Evaluation{0.0, std::string("ParseError: ") + e.what(), false};
  }
}

nlohmann::json to_json(const SandboxRequest& request) {
  nlohmann::ordered_json j;
  j["code"] = request.code;
  j["problem"] = nlohmann::ordered_json::parse(bench::to_json(request.problem).dump());
  j["time_limit_s"] = request.time_limit_s;
  j["seed"] = request.seed;
  return nlohmann::json::parse(j.dump());
}

nlohmann::json to_json(const SandboxResponse& response) {
  nlohmann::json j;
  j["status"] = status_name(response.status);
  j["trace"] = response.trace;
  j["evals_used"] = response.evals_used;
  j["error_message"] = response.error_message ? nlohmann::json(*response.error_message)
                                               : nlohmann::json(nullptr);
  j["wall_time_s"] = response.wall_time_s;
  return j;
}

SandboxResponse sandbox_response_from_json(const nlohmann::json& j) {
  SandboxResponse r;
  try {
    const auto status = j.at("status").get<std::string>();
    if (status == "ok") {
      r.status = SandboxStatus::ok;
    } else if (status == "error") {
      r.status = SandboxStatus::error;
    } else if (status == "timeout") {
      r.status = SandboxStatus::timeout;
    } else {
      throw MalformedResponse("unknown sandbox status '" + status + "'");
    }
    r.trace = j.at("trace").get<std::vector<double>>();
    r.evals_used = j.at("evals_used").get<int>();
    if (j.contains("error_message") && !j["error_message"].is_null()) {
      r.error_message = j["error_message"].get<std::string>();
    }
    r.wall_time_s = j.at("wall_time_s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponse(std::string("sandbox response: ") + e.what());
  }
  if (r.status == SandboxStatus::ok && r.trace.empty()) {
    throw MalformedResponse("sandbox reported ok with an empty trace");
  }
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    if (r.trace[i] > r.trace[i - 1]) throw MalformedResponse("sandbox trace is not best-so-far");
  }
  return r;
}

ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input,
                          std::chrono::duration<double> timeout) {
  if (argv.empty()) throw EvaluatorUnavailable("empty sandbox command");
  ScratchDir scratch;
  Pipe in;
  Pipe out;
  Pipe err;
  Pipe exec_status;  // carries errno if execvp fails

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) throw EvaluatorUnavailable(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in.fd[0], STDIN_FILENO);
    ::dup2(out.fd[1], STDOUT_FILENO);
    ::dup2(err.fd[1], STDERR_FILENO);
    if (::chdir(scratch.path().c_str()) != 0) ::_exit(126);
    ::execvp(args[0], args.data());
    const int code = errno;
    [[maybe_unused]] auto n = ::write(exec_status.fd[1], &code, sizeof code);
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  in.close_read();
  out.close_write();
  err.close_write();
  exec_status.close_write();

  ProcessResult result;
  int exec_errno = 0;
  if (::read(exec_status.fd[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno) {
    ::waitpid(pid, nullptr, 0);
    result.spawn_failed = true;
    result.err = std::string("cannot execute '") + argv[0] + "': " + std::strerror(exec_errno);
    return result;
  }

  ::fcntl(in.fd[1], F_SETFL, O_NONBLOCK);
  std::size_t written = 0;
  if (input.empty()) in.close_write();
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(timeout);
  char buffer[65536];
  while (out.fd[0] >= 0 || err.fd[0] >= 0) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      ::kill(-pid, SIGKILL);
      result.killed_on_timeout = true;
      break;
    }
    const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
    std::vector<pollfd> fds;
    if (in.fd[1] >= 0) fds.push_back({in.fd[1], POLLOUT, 0});
    if (out.fd[0] >= 0) fds.push_back({out.fd[0], POLLIN, 0});
    if (err.fd[0] >= 0) fds.push_back({err.fd[0], POLLIN, 0});
    const int ready = ::poll(fds.data(), fds.size(),
                             static_cast<int>(std::min<long long>(wait_ms.count() + 1, 1000)));
    if (ready < 0 && errno != EINTR) break;
    for (const auto& p : fds) {
      if (p.revents == 0) continue;
      if (p.fd == in.fd[1]) {
        if (p.revents & (POLLERR | POLLHUP)) {
          in.close_write();
          continue;
        }
        const ssize_t n = ::write(in.fd[1], input.data() + written, input.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if (written == input.size() || (n < 0 && errno != EAGAIN)) in.close_write();
      } else {
        const bool is_out = p.fd == out.fd[0];
        const ssize_t n = ::read(p.fd, buffer, sizeof buffer);
        if (n > 0) {
          (is_out ? result.out : result.err).append(buffer, static_cast<std::size_t>(n));
        } else if (n == 0 || errno != EAGAIN) {
          is_out ? out.close_read() : err.close_read();
        }
      }
    }
  }
  // Reap stray descendants that kept running after closing their pipes.
  if (!result.killed_on_timeout) {
    int status = 0;
    while (true) {
      const pid_t r = ::waitpid(pid, &status, WNOHANG);
      if (r == pid) break;
      if (std::chrono::steady_clock::now() >= deadline) {
        ::kill(-pid, SIGKILL);
        result.killed_on_timeout = true;
        break;
      }
      ::usleep(1000);
    }
    if (!result.killed_on_timeout) {
      result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
      ::kill(-pid, SIGKILL);
      return result;
    }
  }
  ::waitpid(pid, nullptr, 0);
  return result;
}

SandboxResponse execute_in_sandbox(const SandboxParams& params, const SandboxRequest& request) {
  const auto limit = std::chrono::duration<double>(request.time_limit_s + params.kill_grace_s);
  const ProcessResult proc = run_process(params.command, to_json(request).dump(), limit);
  if (proc.spawn_failed) throw EvaluatorUnavailable(proc.err);
  if (proc.killed_on_timeout) {
    SandboxResponse r;
    r.status = SandboxStatus::timeout;
    r.error_message = "killed after " + std::to_string(limit.count()) + " s";
    r.wall_time_s = limit.count();
    return r;
  }
  try {
    return sandbox_response_from_json(nlohmann::json::parse(proc.out));
  } catch (const nlohmann::json::exception&) {
    SandboxResponse r;
    r.status = SandboxStatus::error;
    std::string tail = proc.err.size() > 2000 ? proc.err.substr(proc.err.size() - 2000) : proc.err;
    r.error_message = "sandbox produced no valid response (exit code " +
                      std::to_string(proc.exit_code) + ")" + (tail.empty() ? "" : ": " + tail);
    return r;
  }
}

SandboxEvaluator::SandboxEvaluator(SandboxParams params) : params_(std::move(params)) {
  if (params_.command.empty()) throw ConfigError("sandbox command is empty");
  if (params_.problems.empty()) throw ConfigError("sandbox evaluator needs at least one problem");
  for (const auto& spec : params_.problems) problems_.push_back(bench::make_problem(spec));
}

Evaluation SandboxEvaluator::evaluate(const std::string& code) {
  std::vector<double> scores;
  Evaluation result;
  for (const auto& problem : problems_) {
    const SandboxRequest request{code, problem.spec(), params_.time_limit_s, params_.seed};
    SandboxResponse response;
    try {
      response = execute_in_sandbox(params_, request);
    } catch (const MalformedResponse& e) {
      return Evaluation{0.0, std::string(e.what()), false};
    }
    if (response.status == SandboxStatus::error) {
      return Evaluation{0.0, response.error_message.value_or("candidate failed"), false};
    }
    if (response.status == SandboxStatus::timeout) {
      result.timed_out = true;
      if (response.trace.empty()) {
        return Evaluation{0.0, response.error_message.value_or("timeout"), true};
      }
    }
    scores.push_back(bench::aocc(bench::Trace(response.trace), problem.spec().inner_budget,
                                 problem.optimum_value(), params_.aocc));
  }
  result.fitness = bench::aggregate_fitness(scores);
  if (result.timed_out) result.error = "timeout: scored partial trace";
  return result;
}

}  // namespace sage
