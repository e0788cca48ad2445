#include "peace/util/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "peace/error.hpp"

extern char** environ;

namespace peace::util {

namespace {

void close_fd(int& fd) {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

}  // namespace

std::optional<std::filesystem::path> which(const std::string& name) {
  if (name.find('/') != std::string::npos) {
    if (::access(name.c_str(), X_OK) == 0) return std::filesystem::path(name);
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  if (!path) return std::nullopt;
  std::string_view rest(path);
  while (!rest.empty()) {
    auto colon = rest.find(':');
    auto dir = rest.substr(0, colon);
    if (!dir.empty()) {
      auto candidate = std::filesystem::path(std::string(dir)) / name;
      if (::access(candidate.c_str(), X_OK) == 0) return candidate;
    }
    if (colon == std::string_view::npos) break;
    rest.remove_prefix(colon + 1);
  }
  return std::nullopt;
}

ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& opts) {
  if (argv.empty()) throw Error(ErrorCode::CommandNotFound, "empty command");
  auto exe = which(argv[0]);
  if (!exe) throw Error(ErrorCode::CommandNotFound, argv[0]);

  int in_pipe[2], out_pipe[2], err_pipe[2], exec_pipe[2];
  if (::pipe(in_pipe) || ::pipe(out_pipe) || ::pipe(err_pipe) || ::pipe2(exec_pipe, O_CLOEXEC))
    throw Error(ErrorCode::Io, std::string("pipe: ") + std::strerror(errno));

  // Build argv/envp before fork; only async-signal-safe calls in the child.
  std::vector<char*> cargv;
  for (auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  std::map<std::string, std::string> env_map;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    env_map[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
  }
  for (auto& [k, v] : opts.env) env_map[k] = v;
  std::vector<std::string> env_strings;
  env_strings.reserve(env_map.size());
  for (auto& [k, v] : env_map) env_strings.push_back(k + "=" + v);
  std::vector<char*> cenv;
  for (auto& s : env_strings) cenv.push_back(s.data());
  cenv.push_back(nullptr);

  std::string exe_str = exe->string();
  std::string cwd_str = opts.cwd.string();

  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::Io, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[0]);
    ::close(err_pipe[1]);
    ::close(exec_pipe[0]);
    if (!cwd_str.empty() && ::chdir(cwd_str.c_str()) != 0) {
      int e = errno;
      [[maybe_unused]] auto n = ::write(exec_pipe[1], &e, sizeof e);
      ::_exit(127);
    }
    ::execve(exe_str.c_str(), cargv.data(), cenv.data());
    int e = errno;
    [[maybe_unused]] auto n = ::write(exec_pipe[1], &e, sizeof e);
    ::_exit(127);
  }

  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ::close(exec_pipe[1]);

  int exec_errno = 0;
  if (::read(exec_pipe[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno) {
    ::close(exec_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    int status = 0;
    ::waitpid(pid, &status, 0);
    throw Error(ErrorCode::CommandNotFound, argv[0] + ": " + std::strerror(exec_errno));
  }
  ::close(exec_pipe[0]);

  ProcessResult result;
  int fds[3] = {in_pipe[1], out_pipe[0], err_pipe[0]};
  std::size_t written = 0;
  if (opts.stdin_data.empty()) close_fd(fds[0]);
  for (int i = 0; i < 3; ++i)
    if (fds[i] >= 0) ::fcntl(fds[i], F_SETFL, ::fcntl(fds[i], F_GETFL) | O_NONBLOCK);

  auto deadline = opts.timeout ? std::optional(std::chrono::steady_clock::now() + *opts.timeout)
                               : std::nullopt;
  char buf[65536];
  while (fds[1] >= 0 || fds[2] >= 0) {
    pollfd pfds[3];
    int n = 0;
    int which_fd[3];
    for (int i = 0; i < 3; ++i) {
      if (fds[i] < 0) continue;
      pfds[n].fd = fds[i];
      pfds[n].events = i == 0 ? POLLOUT : POLLIN;
      pfds[n].revents = 0;
      which_fd[n++] = i;
    }
    int wait_ms = -1;
    if (deadline) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          *deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        result.timed_out = true;
        break;
      }
      wait_ms = static_cast<int>(left.count());
    }
    int rc = ::poll(pfds, n, wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (rc == 0) continue;
    for (int k = 0; k < n; ++k) {
      int i = which_fd[k];
      if (!pfds[k].revents) continue;
      if (i == 0) {
        auto left = opts.stdin_data.size() - written;
        auto w = ::write(fds[0], opts.stdin_data.data() + written, left);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN) written = opts.stdin_data.size();
        if (written >= opts.stdin_data.size()) close_fd(fds[0]);
        continue;
      }
      auto r = ::read(fds[i], buf, sizeof buf);
      if (r > 0) {
        (i == 1 ? result.out : result.err).append(buf, static_cast<std::size_t>(r));
      } else if (r == 0 || (errno != EAGAIN && errno != EINTR)) {
        close_fd(fds[i]);
      }
    }
  }
  for (auto& fd : fds) close_fd(fd);

  int status = 0;
  if (result.timed_out) {
    ::kill(-pid, SIGKILL);
    ::kill(pid, SIGKILL);
  }
  ::waitpid(pid, &status, 0);
  if (WIFEXITED(status))
    result.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status))
    result.exit_code = 128 + WTERMSIG(status);
  return result;
}

}  // namespace peace::util
