#include "repogen/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include <nlohmann/json.hpp>

#include "repogen/error.hpp"
#include "repogen/text.hpp"

extern char** environ;

namespace repogen {

using nlohmann::json;

namespace {

bool is_within(const fs::path& root, const fs::path& p) {
  auto r = root.begin();
  auto q = p.begin();
  for (; r != root.end(); ++r, ++q) {
    if (r->empty()) continue;  // trailing separator
    if (q == p.end() || *r != *q) return false;
  }
  return true;
}

}  // namespace

Sandbox::Sandbox(SandboxOptions options) : options_(std::move(options)) {
  if (options_.root.empty()) throw Error(ErrorKind::ConfigError, "sandbox root is empty");
  fs::create_directories(options_.root);
  root_ = fs::weakly_canonical(fs::absolute(options_.root));
  const fs::path log = options_.audit_log ? *options_.audit_log : root_ / "sandbox_audit.jsonl";
  audit_.open(log, std::ios::binary | std::ios::app);
  if (!audit_) throw Error(ErrorKind::IoError, "cannot open audit log " + log.string());
}

void Sandbox::set_phase(std::string phase) {
  std::lock_guard lock(mu_);
  phase_ = std::move(phase);
}

void Sandbox::audit(json record) {
  std::lock_guard lock(mu_);
  record["seq"] = seq_++;
  record["phase"] = phase_;
  audit_ << record.dump() << '\n';
  audit_.flush();
}

std::string Sandbox::rel(const fs::path& abs) const {
  const auto r = abs.lexically_relative(root_).generic_string();
  return r.empty() ? "." : r;
}

bool Sandbox::contains(const fs::path& p) const {
  const fs::path abs = (p.is_absolute() ? p : root_ / p).lexically_normal();
  if (!is_within(root_, abs)) return false;
  // Symlinks inside the workspace must not lead out of it.
  const fs::path canon = fs::weakly_canonical(abs);
  return is_within(root_, canon);
}

fs::path Sandbox::resolve(const fs::path& p) {
  const fs::path abs = (p.is_absolute() ? p : root_ / p).lexically_normal();
  if (!contains(abs)) {
    audit({{"op", "deny"}, {"path", abs.generic_string()}, {"denied", true}});
    throw Error(ErrorKind::SandboxViolation, "path " + abs.string() + " is outside the workspace " + root_.string());
  }
  return abs;
}

void Sandbox::write_file(const fs::path& p, std::string_view content) {
  const fs::path abs = resolve(p);
  write_text_file(abs, content);
  audit({{"op", "write"}, {"path", rel(abs)}, {"bytes", content.size()}});
}

std::string Sandbox::read_file(const fs::path& p) {
  const fs::path abs = resolve(p);
  audit({{"op", "read"}, {"path", rel(abs)}});
  return read_text_file(abs);
}

bool Sandbox::exists(const fs::path& p) {
  const fs::path abs = resolve(p);
  return fs::exists(abs);
}

std::uintmax_t Sandbox::file_size(const fs::path& p) {
  const fs::path abs = resolve(p);
  return fs::file_size(abs);
}

void Sandbox::remove(const fs::path& p) {
  const fs::path abs = resolve(p);
  fs::remove(abs);
  audit({{"op", "remove"}, {"path", rel(abs)}});
}

void Sandbox::remove_all(const fs::path& p) {
  const fs::path abs = resolve(p);
  if (rel(abs) == ".") throw Error(ErrorKind::SandboxViolation, "refusing to remove the workspace root");
  fs::remove_all(abs);
  audit({{"op", "remove"}, {"path", rel(abs)}});
}

void Sandbox::create_directories(const fs::path& p) {
  const fs::path abs = resolve(p);
  fs::create_directories(abs);
  audit({{"op", "mkdir"}, {"path", rel(abs)}});
}

std::vector<std::string> Sandbox::list_files(const fs::path& dir) {
  const fs::path abs = resolve(dir);
  std::vector<std::string> out;
  if (fs::is_directory(abs)) {
    for (const auto& e : fs::recursive_directory_iterator(abs)) {
      if (e.is_regular_file()) out.push_back(e.path().lexically_relative(abs).generic_string());
    }
  }
  std::sort(out.begin(), out.end());
  audit({{"op", "list"}, {"path", rel(abs)}});
  return out;
}

void Sandbox::import_tree(const fs::path& host_source, const fs::path& dest) {
  const fs::path abs = resolve(dest);
  fs::create_directories(abs);
  fs::copy(host_source, abs, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  audit({{"op", "import"}, {"path", rel(abs)}});
}

void Sandbox::copy_tree(const fs::path& source, const fs::path& dest) {
  const fs::path src = resolve(source);
  const fs::path dst = resolve(dest);
  fs::create_directories(dst);
  fs::copy(src, dst, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  audit({{"op", "copy"}, {"path", rel(dst)}, {"from", rel(src)}});
}

bool Sandbox::available() { return ::access("/bin/sh", X_OK) == 0; }

std::vector<std::string> Sandbox::command_line(const std::string& command, const fs::path& cwd) const {
  if (options_.backend == SandboxBackend::Container) {
    std::vector<std::string> argv = {options_.container_cli, "run", "--rm", "--network", "none",
                                     "-v", root_.string() + ":" + root_.string(), "-w", cwd.string()};
    for (const auto& [k, v] : options_.env) {
      argv.push_back("-e");
      argv.push_back(k + "=" + v);
    }
    argv.push_back(options_.container_image);
    argv.insert(argv.end(), {"/bin/sh", "-c", command});
    return argv;
  }
  return {"/bin/sh", "-c", command};
}

ExecResult Sandbox::run(const std::string& command, const fs::path& cwd, std::chrono::milliseconds timeout,
                        const std::map<std::string, std::string>& extra_env) {
  const fs::path dir = resolve(cwd);
  if (!available()) throw Error(ErrorKind::SandboxUnavailable, "/bin/sh is not executable");
  fs::create_directories(dir);

  std::map<std::string, std::string> env;
  if (const char* path = std::getenv("PATH")) env["PATH"] = path;
  env["HOME"] = (root_ / "env" / "home").string();
  env["LANG"] = "C.UTF-8";
  env["PYTHONDONTWRITEBYTECODE"] = "1";
  env["PYTHONHASHSEED"] = "0";
  for (const auto& [k, v] : options_.env) env[k] = v;
  for (const auto& [k, v] : extra_env) env[k] = v;
  fs::create_directories(root_ / "env" / "home");

  std::vector<std::string> env_strings;
  for (const auto& [k, v] : env) env_strings.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);

  std::vector<std::string> argv_strings = command_line(command, dir);
  std::vector<char*> argv;
  for (auto& s : argv_strings) argv.push_back(s.data());
  argv.push_back(nullptr);

  int out_pipe[2], err_pipe[2];
  if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0) {
    throw Error(ErrorKind::SandboxUnavailable, std::string("pipe: ") + std::strerror(errno));
  }

  const auto start = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorKind::SandboxUnavailable, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[0]);
    ::close(err_pipe[1]);
    int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
    if (::chdir(dir.c_str()) != 0) ::_exit(126);
    if (options_.backend == SandboxBackend::Container) {
      ::execvpe(argv[0], argv.data(), envp.data());
    } else {
      ::execve(argv[0], argv.data(), envp.data());
    }
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);

  ExecResult result;
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  int open_fds = 2;
  const auto deadline = start + timeout;
  char buf[8192];
  while (open_fds > 0) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      result.timed_out = true;
      ::kill(-pid, SIGKILL);
      break;
    }
    const int wait_ms =
        static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
    const int rc = ::poll(fds, 2, std::min(wait_ms, 200));
    if (rc < 0 && errno != EINTR) break;
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
      if (n > 0) {
        (i == 0 ? result.stdout_text : result.stderr_text).append(buf, static_cast<std::size_t>(n));
      } else {
        ::close(fds[i].fd);
        fds[i].fd = -1;
        --open_fds;
      }
    }
  }
  for (auto& f : fds) {
    if (f.fd >= 0) ::close(f.fd);
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  // Reap any leftover members of the group.
  ::kill(-pid, SIGKILL);
  result.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  if (result.timed_out) result.exit_code = 124;

  audit({{"op", "exec"},
         {"path", rel(dir)},
         {"command", command},
         {"exit_code", result.exit_code},
         {"timed_out", result.timed_out}});
  return result;
}

AuditSummary check_audit_log(const fs::path& audit_log) {
  AuditSummary s;
  std::ifstream in(audit_log);
  if (!in) throw Error(ErrorKind::IoError, "cannot read audit log " + audit_log.string());
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const json r = json::parse(line);
    ++s.records;
    if (r.value("denied", false)) {
      ++s.denied;
      continue;
    }
    bool escapes = false;
    for (const char* key : {"path", "from"}) {
      if (!r.contains(key)) continue;
      const fs::path p{r.at(key).get<std::string>()};
      escapes = escapes || p.is_absolute();
      for (const auto& part : p) {
        if (part == "..") escapes = true;
      }
    }
    if (escapes) ++s.outside_root;
  }
  return s;
}

}  // namespace repogen
