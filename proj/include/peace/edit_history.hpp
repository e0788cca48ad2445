#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peace/call_graph.hpp"
#include "peace/diff.hpp"
#include "peace/relevance.hpp"
#include "peace/util/git.hpp"

namespace peace {

inline constexpr std::size_t kDefaultCommitWindow = 2000;

struct CommitRecord {
  std::string sha;
  std::vector<std::string> parents;
  std::string message;
  std::int64_t timestamp = 0;
  std::size_t files_changed = 0;
  std::size_t lines_changed = 0;
  std::vector<FileDiff> diffs;  // against the first parent; binary files carry no hunks
  std::string patch;           // the raw unified diff text

  std::string subject() const;
};

// Newest first. Merge commits are diffed against their first parent.
// Throws Error{NotARepo} / Error{RevisionNotFound}.
std::vector<CommitRecord> mine_commits(const util::Git& git, const std::string& revision_range = "HEAD",
                                       std::size_t limit = kDefaultCommitWindow);
CommitRecord load_commit(const util::Git& git, const std::string& rev);

struct EditRecord {
  std::string origin;  // commit sha, or "pipeline" for edits made during optimization
  std::string path;
  std::optional<std::string> function_id;
  std::string before;
  std::string after;
  std::string message;

  nlohmann::json to_json() const;
  static EditRecord from_json(const nlohmann::json& j);
  bool operator==(const EditRecord&) const = default;
};

// Changed lines are attributed to the innermost enclosing function: added
// lines by the after snapshot, removed lines by the before snapshot. Each
// touched function yields one record with its whole before/after body; hunks
// with changes outside any function yield a record without function_id.
std::vector<EditRecord> extract_edits(const CommitRecord& commit, const Corpus& before, const Corpus& after);

// Mines commits and extracts edits, loading only the changed Python files of
// each commit and its first parent.
std::vector<EditRecord> mine_edits(const util::Git& git, const std::string& revision_range = "HEAD",
                                   std::size_t limit = kDefaultCommitWindow);

struct RankedEdit {
  EditRecord edit;
  RelevanceScore score;
};
using RankedEdits = std::vector<RankedEdit>;

// Text an edit is scored and embedded by.
std::string edit_subject_text(const EditRecord& edit);

// Descending combined score; ties by origin, then path, then input order.
RankedEdits rank_edits(const FunctionRecord& function, const std::vector<EditRecord>& edits,
                       RelevanceScorer& scorer);

nlohmann::json edit_log_to_json(const std::vector<EditRecord>& edits);
std::vector<EditRecord> edit_log_from_json(const nlohmann::json& j);
void save_edit_log(const std::filesystem::path& path, const std::vector<EditRecord>& edits);
std::vector<EditRecord> load_edit_log(const std::filesystem::path& path);

}  // namespace peace
