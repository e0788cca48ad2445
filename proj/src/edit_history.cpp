#include "peace/edit_history.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "peace/error.hpp"
#include "peace/util/files.hpp"
#include "peace/util/text.hpp"

namespace peace {

namespace {

constexpr std::size_t kMessageExcerpt = 500;

bool is_python(const std::string& path) { return path.size() > 3 && path.ends_with(".py"); }

std::string excerpt(const std::string& message) {
  auto m = util::trim(message);
  if (m.size() > kMessageExcerpt) m = m.substr(0, kMessageExcerpt);
  return m;
}

void check_range(const util::Git& git, const std::string& range) {
  auto dots = range.find("..");
  if (dots == std::string::npos) {
    git.resolve(range);
    return;
  }
  auto lhs = range.substr(0, dots);
  auto rhs = range.substr(range.find_first_not_of('.', dots));
  if (!lhs.empty()) git.resolve(lhs);
  if (!rhs.empty()) git.resolve(rhs);
}

std::string commit_patch(const util::Git& git, const CommitRecord& c) {
  std::vector<std::string> args = {"diff-tree", "-p", "-r", "--no-color", "--no-ext-diff", "--no-renames",
                                   "--no-commit-id"};
  if (c.parents.empty()) {
    args.push_back("--root");
    args.push_back(c.sha);
  } else {
    args.push_back(c.parents.front());
    args.push_back(c.sha);
  }
  return git.run(args);
}

void fill_diffs(CommitRecord& c, std::string patch) {
  c.patch = std::move(patch);
  c.diffs = parse_unified_diff(c.patch);
  c.files_changed = c.diffs.size();
  c.lines_changed = 0;
  for (auto& d : c.diffs) c.lines_changed += d.added() + d.removed();
}

std::vector<CommitRecord> parse_log(const std::string& out) {
  std::vector<CommitRecord> commits;
  std::size_t pos = 0;
  while (pos < out.size()) {
    auto end = out.find('\x1e', pos);
    if (end == std::string::npos) end = out.size();
    auto rec = out.substr(pos, end - pos);
    pos = end + 1;
    auto first = rec.find_first_not_of("\n");
    if (first == std::string::npos) continue;
    rec = rec.substr(first);
    std::vector<std::string> fields;
    std::size_t p = 0;
    for (int k = 0; k < 3; ++k) {
      auto sep = rec.find('\x1f', p);
      if (sep == std::string::npos) throw Error(ErrorCode::Io, "unexpected git log output");
      fields.push_back(rec.substr(p, sep - p));
      p = sep + 1;
    }
    CommitRecord c;
    c.sha = fields[0];
    std::string parents = fields[1];
    std::size_t q = 0;
    while (q < parents.size()) {
      auto sp = parents.find(' ', q);
      if (sp == std::string::npos) sp = parents.size();
      if (sp > q) c.parents.push_back(parents.substr(q, sp - q));
      q = sp + 1;
    }
    c.timestamp = std::stoll(fields[2]);
    c.message = util::trim(rec.substr(p));
    commits.push_back(std::move(c));
  }
  return commits;
}

const std::string kLogFormat = "--format=%H%x1f%P%x1f%ct%x1f%B%x1e";

const FunctionRecord* innermost(const SourceUnit* unit, std::size_t line) {
  if (!unit) return nullptr;
  const FunctionRecord* best = nullptr;
  for (auto& f : unit->functions) {
    if (line < f.start_line || line > f.end_line) continue;
    if (!best || f.end_line - f.start_line < best->end_line - best->start_line) best = &f;
  }
  return best;
}

}  // namespace

std::string CommitRecord::subject() const {
  auto nl = message.find('\n');
  return nl == std::string::npos ? message : message.substr(0, nl);
}

std::vector<CommitRecord> mine_commits(const util::Git& git, const std::string& revision_range,
                                       std::size_t limit) {
  git.ensure_repo();
  check_range(git, revision_range);
  auto out = git.run({"log", kLogFormat, "-n", std::to_string(limit), revision_range, "--"});
  auto commits = parse_log(out);
  for (auto& c : commits) fill_diffs(c, commit_patch(git, c));
  return commits;
}

CommitRecord load_commit(const util::Git& git, const std::string& rev) {
  git.ensure_repo();
  auto sha = git.resolve(rev);
  auto commits = parse_log(git.run({"log", kLogFormat, "-n", "1", sha, "--"}));
  if (commits.empty()) throw Error(ErrorCode::RevisionNotFound, rev);
  fill_diffs(commits.front(), commit_patch(git, commits.front()));
  return commits.front();
}

nlohmann::json EditRecord::to_json() const {
  nlohmann::json j = {{"origin", origin}, {"path", path}, {"before", before}, {"after", after}, {"message", message}};
  j["function_id"] = function_id ? nlohmann::json(*function_id) : nlohmann::json(nullptr);
  return j;
}

EditRecord EditRecord::from_json(const nlohmann::json& j) {
  EditRecord e;
  e.origin = j.at("origin").get<std::string>();
  e.path = j.at("path").get<std::string>();
  if (j.contains("function_id") && !j["function_id"].is_null()) e.function_id = j["function_id"].get<std::string>();
  e.before = j.at("before").get<std::string>();
  e.after = j.at("after").get<std::string>();
  e.message = j.value("message", std::string());
  return e;
}

std::vector<EditRecord> extract_edits(const CommitRecord& commit, const Corpus& before, const Corpus& after) {
  std::vector<EditRecord> out;
  auto msg = excerpt(commit.message);
  for (auto& d : commit.diffs) {
    if (d.binary || !is_python(d.path())) continue;
    const SourceUnit* bu = d.old_path.empty() ? nullptr : before.find_unit(d.old_path);
    const SourceUnit* au = d.new_path.empty() ? nullptr : after.find_unit(d.new_path);
    std::set<std::string> touched;  // ordered by first appearance below
    std::vector<std::string> order;
    auto touch = [&](const FunctionRecord* f) {
      if (f && touched.insert(f->id).second) order.push_back(f->id);
    };
    for (auto& h : d.hunks) {
      std::size_t old_line = h.old_count == 0 ? h.old_start + 1 : h.old_start;
      std::size_t new_line = h.new_count == 0 ? h.new_start + 1 : h.new_start;
      bool outside = false;
      std::string hunk_before, hunk_after;
      for (auto& l : h.lines) {
        if (l.op == '+') {
          const auto* f = innermost(au, new_line);
          if (f) touch(f);
          else if (!util::trim(l.text).empty()) outside = true;
          ++new_line;
        } else if (l.op == '-') {
          const auto* f = innermost(bu, old_line);
          if (f) touch(f);
          else if (!util::trim(l.text).empty()) outside = true;
          ++old_line;
        } else {
          ++old_line;
          ++new_line;
        }
        if (l.op != '+') hunk_before += l.text + "\n";
        if (l.op != '-') hunk_after += l.text + "\n";
      }
      if (outside && hunk_before != hunk_after)
        out.push_back({commit.sha, d.path(), std::nullopt, hunk_before, hunk_after, msg});
    }
    for (auto& id : order) {
      const auto* bf = bu ? bu->find(id) : nullptr;
      const auto* af = au ? au->find(id) : nullptr;
      EditRecord e{commit.sha, d.path(), id, bf ? bf->body : "", af ? af->body : "", msg};
      if (e.before != e.after) out.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<EditRecord> mine_edits(const util::Git& git, const std::string& revision_range, std::size_t limit) {
  std::vector<EditRecord> out;
  for (auto& c : mine_commits(git, revision_range, limit)) {
    std::vector<std::pair<std::string, std::string>> before_files, after_files;
    for (auto& d : c.diffs) {
      if (d.binary || !is_python(d.path())) continue;
      if (!d.old_path.empty() && !c.parents.empty())
        if (auto text = git.show_file(c.parents.front(), d.old_path)) before_files.emplace_back(d.old_path, *text);
      if (!d.new_path.empty())
        if (auto text = git.show_file(c.sha, d.new_path)) after_files.emplace_back(d.new_path, *text);
    }
    if (before_files.empty() && after_files.empty()) continue;
    auto edits = extract_edits(c, make_corpus(std::move(before_files)), make_corpus(std::move(after_files)));
    out.insert(out.end(), edits.begin(), edits.end());
  }
  return out;
}

std::string edit_subject_text(const EditRecord& edit) {
  if (edit.before.empty()) return edit.after;
  if (edit.after.empty()) return edit.before;
  return edit.before + "\n" + edit.after;
}

RankedEdits rank_edits(const FunctionRecord& function, const std::vector<EditRecord>& edits,
                       RelevanceScorer& scorer) {
  std::vector<Subject> subjects;
  for (std::size_t i = 0; i < edits.size(); ++i)
    subjects.push_back({edits[i].function_id.value_or(edits[i].path), edit_subject_text(edits[i])});
  auto scores = scorer.score({function.id, function.body}, subjects);
  std::vector<std::size_t> idx(edits.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a].combined != scores[b].combined) return scores[a].combined > scores[b].combined;
    if (edits[a].origin != edits[b].origin) return edits[a].origin < edits[b].origin;
    return edits[a].path < edits[b].path;
  });
  RankedEdits out;
  for (auto i : idx) out.push_back({edits[i], scores[i]});
  return out;
}

nlohmann::json edit_log_to_json(const std::vector<EditRecord>& edits) {
  nlohmann::json arr = nlohmann::json::array();
  for (auto& e : edits) arr.push_back(e.to_json());
  return {{"edits", arr}};
}

std::vector<EditRecord> edit_log_from_json(const nlohmann::json& j) {
  std::vector<EditRecord> out;
  for (auto& e : j.at("edits")) out.push_back(EditRecord::from_json(e));
  return out;
}

void save_edit_log(const std::filesystem::path& path, const std::vector<EditRecord>& edits) {
  util::write_file_atomic(path, edit_log_to_json(edits).dump(2) + "\n");
}

std::vector<EditRecord> load_edit_log(const std::filesystem::path& path) {
  return edit_log_from_json(nlohmann::json::parse(util::read_file(path)));
}

}  // namespace peace
