#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace peace {

struct DiffLine {
  char op = ' ';  // ' ', '+', '-'
  std::string text;
  bool no_newline = false;  // followed by "\ No newline at end of file"
};

struct Hunk {
  std::size_t old_start = 0;
  std::size_t old_count = 0;
  std::size_t new_start = 0;
  std::size_t new_count = 0;
  std::vector<DiffLine> lines;
};

struct FileDiff {
  std::string old_path;  // empty for a created file
  std::string new_path;  // empty for a deleted file
  bool binary = false;
  std::vector<Hunk> hunks;

  const std::string& path() const { return new_path.empty() ? old_path : new_path; }
  bool created() const { return old_path.empty(); }
  bool deleted() const { return new_path.empty(); }
  std::size_t added() const;
  std::size_t removed() const;
};

// Accepts git-style and plain unified diffs. "a/" and "b/" prefixes are
// stripped; /dev/null marks creation or deletion. Throws std::invalid_argument
// on a malformed hunk.
std::vector<FileDiff> parse_unified_diff(std::string_view text);

std::string format_file_diff(const FileDiff& diff);

// Applies the hunks to `original`. Hunks are located at their stated line,
// or at the nearest offset where the context matches. Throws
// Error{PatchApplyFailure}.
std::string apply_file_diff(std::string_view original, const FileDiff& diff);

// Line-based Myers diff with `context` lines around each change. Returns the
// empty string when the texts are equal. Empty old_path / new_path render as
// /dev/null.
std::string unified_diff(const std::string& old_path, const std::string& new_path, std::string_view old_text,
                         std::string_view new_text, std::size_t context = 3);
FileDiff diff_texts(const std::string& old_path, const std::string& new_path, std::string_view old_text,
                    std::string_view new_text, std::size_t context = 3);

}  // namespace peace
