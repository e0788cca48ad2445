#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace peace::util {

// Thin wrapper over the `git` executable. Every call runs without a shell.
class Git {
 public:
  explicit Git(std::filesystem::path repo);

  // Throws Error{NotARepo} when the path is not a git work tree or bare repo.
  void ensure_repo() const;

  // Runs `git <args>` and returns stdout; throws Error{Io} on nonzero exit.
  std::string run(const std::vector<std::string>& args) const;
  // Like run() but returns nullopt on nonzero exit.
  std::optional<std::string> try_run(const std::vector<std::string>& args) const;

  // Full sha of a revision; throws Error{RevisionNotFound}.
  std::string resolve(const std::string& rev) const;
  std::vector<std::string> list_files(const std::string& rev) const;
  std::optional<std::string> show_file(const std::string& rev, const std::string& path) const;

  const std::filesystem::path& repo() const { return repo_; }

 private:
  std::filesystem::path repo_;
};

}  // namespace peace::util
