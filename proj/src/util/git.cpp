#include "peace/util/git.hpp"

#include "peace/error.hpp"
#include "peace/util/subprocess.hpp"
#include "peace/util/text.hpp"

namespace peace::util {

Git::Git(std::filesystem::path repo) : repo_(std::move(repo)) {}

std::optional<std::string> Git::try_run(const std::vector<std::string>& args) const {
  std::vector<std::string> argv = {"git", "-c", "core.quotepath=off", "-C", repo_.string()};
  argv.insert(argv.end(), args.begin(), args.end());
  ProcessOptions opts;
  opts.env["GIT_TERMINAL_PROMPT"] = "0";
  opts.env["LC_ALL"] = "C";
  auto r = run_process(argv, opts);
  if (r.exit_code != 0) return std::nullopt;
  return std::move(r.out);
}

std::string Git::run(const std::vector<std::string>& args) const {
  std::vector<std::string> argv = {"git", "-c", "core.quotepath=off", "-C", repo_.string()};
  argv.insert(argv.end(), args.begin(), args.end());
  ProcessOptions opts;
  opts.env["GIT_TERMINAL_PROMPT"] = "0";
  opts.env["LC_ALL"] = "C";
  auto r = run_process(argv, opts);
  if (r.exit_code != 0) {
    std::string cmd;
    for (auto& a : args) cmd += " " + a;
    throw Error(ErrorCode::Io, "git" + cmd + ": " + trim(r.err));
  }
  return std::move(r.out);
}

void Git::ensure_repo() const {
  if (!std::filesystem::exists(repo_))
    throw Error(ErrorCode::NotARepo, repo_.string() + " does not exist");
  auto out = try_run({"rev-parse", "--git-dir"});
  if (!out) throw Error(ErrorCode::NotARepo, repo_.string());
}

std::string Git::resolve(const std::string& rev) const {
  auto out = try_run({"rev-parse", "--verify", "--quiet", rev + "^{commit}"});
  if (!out) throw Error(ErrorCode::RevisionNotFound, rev);
  return trim(*out);
}

std::vector<std::string> Git::list_files(const std::string& rev) const {
  auto out = run({"ls-tree", "-r", "--name-only", rev});
  return split_lines(out);
}

std::optional<std::string> Git::show_file(const std::string& rev, const std::string& path) const {
  return try_run({"show", rev + ":" + path});
}

}  // namespace peace::util
