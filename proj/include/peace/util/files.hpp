#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace peace::util {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Fresh directory under the system temp dir; removed by the destructor.
class TempDir {
 public:
  explicit TempDir(std::string_view prefix = "peace");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace peace::util
