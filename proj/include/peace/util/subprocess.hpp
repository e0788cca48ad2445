#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace peace::util {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string out;
  std::string err;
};

struct ProcessOptions {
  std::filesystem::path cwd;
  std::map<std::string, std::string> env;  // merged over the parent environment
  std::optional<std::chrono::milliseconds> timeout;
  std::string stdin_data;
};

// Runs argv[0] (looked up on PATH) without a shell. Throws Error{CommandNotFound}
// when the executable cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& opts = {});

// Absolute path of an executable on PATH, if any.
std::optional<std::filesystem::path> which(const std::string& name);

}  // namespace peace::util
