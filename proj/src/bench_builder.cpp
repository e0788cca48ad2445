#include "peace/bench_builder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "peace/diff.hpp"
#include "peace/error.hpp"
#include "peace/util/files.hpp"
#include "peace/util/git.hpp"
#include "peace/util/text.hpp"

namespace peace {

namespace {

const FunctionRecord* innermost(const SourceUnit* unit, std::size_t line) {
  if (!unit) return nullptr;
  const FunctionRecord* best = nullptr;
  for (auto& f : unit->functions) {
    if (line < f.start_line || line > f.end_line) continue;
    if (!best || f.end_line - f.start_line < best->end_line - best->start_line) best = &f;
  }
  return best;
}

// Calls fn(op, unit function) for every changed line of every text diff.
template <typename Fn>
void for_each_changed_line(const CommitRecord& commit, const Corpus* before, const Corpus* after, Fn&& fn) {
  for (auto& d : commit.diffs) {
    if (d.binary) continue;
    const SourceUnit* bu = before && !d.old_path.empty() ? before->find_unit(d.old_path) : nullptr;
    const SourceUnit* au = after && !d.new_path.empty() ? after->find_unit(d.new_path) : nullptr;
    for (auto& h : d.hunks) {
      std::size_t old_line = h.old_count == 0 ? h.old_start + 1 : h.old_start;
      std::size_t new_line = h.new_count == 0 ? h.new_start + 1 : h.new_start;
      for (auto& l : h.lines) {
        if (l.op == '+') fn('+', innermost(au, new_line++));
        else if (l.op == '-') fn('-', innermost(bu, old_line++));
        else ++old_line, ++new_line;
      }
    }
  }
}

std::string short_sha(const std::string& sha) { return sha.substr(0, 12); }

std::string truncate(const std::string& text, std::size_t max_chars) {
  if (text.size() <= max_chars) return text;
  return text.substr(0, max_chars) + "\n... (truncated)";
}

std::string class_short_name(const FunctionRecord& fn) {
  auto dot = fn.class_name.rfind('.');
  return dot == std::string::npos ? fn.class_name : fn.class_name.substr(dot + 1);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::SchemaViolation, "missing " + path.string());
  auto j = nlohmann::json::parse(util::read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::SchemaViolation, "malformed JSON in " + path.string());
  return j;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  util::write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace

std::vector<std::string> default_efficiency_keywords() {
  return {"optimize", "latency",  "efficiency", "efficient",  "fast",    "speed",      "speedup",
          "perf",     "performance", "slow",    "accelerate", "throughput", "bottleneck", "overhead",
          "cache",    "memoize",  "vectorize"};
}

void FilterConfig::validate() const {
  if (keywords.empty()) throw Error(ErrorCode::ConfigInvalid, "keyword list is empty");
  if (min_lines == 0 || max_lines == 0 || max_files == 0 || commit_window == 0)
    throw Error(ErrorCode::ConfigInvalid, "size bounds and commit window must be positive");
  if (min_lines > max_lines) throw Error(ErrorCode::ConfigInvalid, "min_lines exceeds max_lines");
  if (score_threshold < 0 || std::isnan(score_threshold))
    throw Error(ErrorCode::ConfigInvalid, "score_threshold must be non-negative");
}

std::string stem(std::string_view word) {
  static const std::vector<std::string> kSuffixes = {
      "izations", "ization", "encies", "ations", "ingly", "ently", "izing", "ation", "ances", "ized", "izes",
      "ency",     "ance",   "ing",    "ies",    "ize",   "ent",   "est",   "ers",   "ed",   "er",   "ly",
      "es",       "s"};
  std::string w = util::to_lower(word);
  for (auto& s : kSuffixes) {
    if (w.size() < s.size() + 3 || w.compare(w.size() - s.size(), s.size(), s) != 0) continue;
    // "speed", "need": the 'e' belongs to the stem.
    if (s == "ed" && w[w.size() - 3] == 'e') continue;
    w.resize(w.size() - s.size());
    if (s == "ies") w += 'y';
    break;
  }
  if (w.size() > 3 && w.back() == 'e') w.pop_back();
  return w;
}

std::vector<std::string> message_tokens(std::string_view message) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : message) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<double> keyword_scores(const std::vector<CommitRecord>& commits, const FilterConfig& config) {
  std::set<std::string> stems;
  for (auto& k : config.keywords) stems.insert(stem(k));
  std::vector<std::map<std::string, std::size_t>> hits(commits.size());
  std::vector<std::size_t> lengths(commits.size());
  std::map<std::string, std::size_t> df;
  for (std::size_t i = 0; i < commits.size(); ++i) {
    auto tokens = message_tokens(commits[i].message);
    lengths[i] = tokens.size();
    for (auto& t : tokens)
      if (auto s = stem(t); stems.count(s)) ++hits[i][s];
    for (auto& [s, _] : hits[i]) ++df[s];
  }
  double n = static_cast<double>(commits.size());
  std::vector<double> scores(commits.size(), 0.0);
  for (std::size_t i = 0; i < commits.size(); ++i)
    for (auto& [s, count] : hits[i]) {
      double idf = std::log((1 + n) / (1 + static_cast<double>(df[s]))) + 1;
      scores[i] += static_cast<double>(count) / static_cast<double>(lengths[i]) * idf;
    }
  return scores;
}

std::vector<CommitRecord> keyword_filter(const std::vector<CommitRecord>& commits, const FilterConfig& config) {
  config.validate();
  auto scores = keyword_scores(commits, config);
  std::vector<CommitRecord> out;
  for (std::size_t i = 0; i < commits.size(); ++i)
    if (scores[i] > config.score_threshold) out.push_back(commits[i]);
  return out;
}

bool within_size_bounds(const CommitRecord& c, const FilterConfig& config) {
  return c.lines_changed >= config.min_lines && c.lines_changed <= config.max_lines &&
         c.files_changed <= config.max_files;
}

std::vector<CommitRecord> size_filter(const std::vector<CommitRecord>& commits, const FilterConfig& config) {
  config.validate();
  std::vector<CommitRecord> out;
  for (auto& c : commits)
    if (within_size_bounds(c, config)) out.push_back(c);
  return out;
}

nlohmann::json Verdict::to_json() const {
  return {{"verdict", relevant ? "relevant" : "irrelevant"}, {"score", score}, {"rationale", rationale}};
}

Verdict semantic_confirm(const CommitRecord& commit, ChatProvider& model, const RetryPolicy& retry,
                         InteractionLog* log, const PromptLibrary& prompts) {
  ModelRequest req;
  req.messages.push_back(
      {"user", prompts.render("confirm_commit", {{"message", commit.message}, {"diff", truncate(commit.patch, 12000)}}),
       std::nullopt,
       {}});
  req.params.purpose = "confirm:" + commit.sha;
  auto resp = complete(req, model, retry, log, ModelResponse::Kind::Text);
  auto j = parse_json_reply(resp.content);
  if (!j || !j->contains("verdict") || !(*j)["verdict"].is_string())
    throw Error(ErrorCode::ModelFailure, "no verdict in the reply for " + short_sha(commit.sha));
  auto v = (*j)["verdict"].get<std::string>();
  if (v != "relevant" && v != "irrelevant")
    throw Error(ErrorCode::ModelFailure, "unknown verdict '" + v + "' for " + short_sha(commit.sha));
  Verdict out;
  out.relevant = v == "relevant";
  if (j->contains("score") && (*j)["score"].is_number()) out.score = std::clamp((*j)["score"].get<double>(), 0.0, 1.0);
  if (j->contains("rationale") && (*j)["rationale"].is_string()) out.rationale = (*j)["rationale"];
  return out;
}

nlohmann::json FilterReport::to_json() const {
  nlohmann::json v = nlohmann::json::array();
  for (auto& [sha, verdict] : verdicts) {
    auto j = verdict.to_json();
    j["sha"] = sha;
    v.push_back(j);
  }
  return {{"mined", mined},         {"keyword_kept", keyword_kept}, {"size_kept", size_kept},
          {"confirmed", confirmed}, {"needs_review", needs_review}, {"verdicts", v}};
}

std::vector<CommitRecord> run_filter_chain(const std::vector<CommitRecord>& commits, const FilterConfig& config,
                                           ChatProvider& model, FilterReport& report, const RetryPolicy& retry,
                                           InteractionLog* log, const PromptLibrary& prompts) {
  report = {};
  report.mined = commits.size();
  auto by_keyword = keyword_filter(commits, config);
  for (auto& c : by_keyword) report.keyword_kept.push_back(c.sha);
  auto by_size = size_filter(by_keyword, config);
  for (auto& c : by_size) report.size_kept.push_back(c.sha);
  std::vector<CommitRecord> out;
  for (auto& c : by_size) {
    try {
      auto v = semantic_confirm(c, model, retry, log, prompts);
      report.verdicts.emplace_back(c.sha, v);
      if (v.relevant) {
        report.confirmed.push_back(c.sha);
        out.push_back(c);
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ScriptExhausted) throw;
      spdlog::warn("commit {} needs review: {}", short_sha(c.sha), e.what());
      report.needs_review.push_back(c.sha);
    }
  }
  return out;
}

bool is_test_path(std::string_view path) {
  std::string p(path);
  if (p.size() < 3 || p.compare(p.size() - 3, 3, ".py") != 0) return false;
  auto slash = p.rfind('/');
  std::string file = slash == std::string::npos ? p : p.substr(slash + 1);
  if (file.rfind("test_", 0) == 0 || (file.size() > 8 && file.compare(file.size() - 8, 8, "_test.py") == 0) ||
      file == "conftest.py")
    return true;
  std::string dirs = "/" + (slash == std::string::npos ? std::string() : p.substr(0, slash)) + "/";
  return dirs.find("/tests/") != std::string::npos || dirs.find("/test/") != std::string::npos;
}

bool is_test_function(const FunctionRecord& fn) {
  if (!is_test_path(fn.path) || fn.name.rfind("test", 0) != 0) return false;
  if (fn.class_name.empty()) return fn.parent == module_name_for(fn.path);
  return class_short_name(fn).rfind("Test", 0) == 0;
}

std::string test_node_id(const FunctionRecord& fn) {
  if (fn.class_name.empty()) return fn.path + "::" + fn.name;
  return fn.path + "::" + class_short_name(fn) + "::" + fn.name;
}

std::vector<std::string> extract_test_cases(const CommitRecord& commit, const Corpus& after,
                                            const std::string& target_id) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for_each_changed_line(commit, nullptr, &after, [&](char op, const FunctionRecord* f) {
    if (op == '+' && f && is_test_function(*f) && seen.insert(test_node_id(*f)).second)
      out.push_back(test_node_id(*f));
  });
  auto graph = build_call_graph(after);
  std::vector<std::string> reaching;
  if (graph.contains(target_id))
    for (const auto* f : after.functions()) {
      if (!is_test_function(*f) || seen.count(test_node_id(*f))) continue;
      if (callees_of(graph, f->id).count(target_id)) reaching.push_back(test_node_id(*f));
    }
  std::sort(reaching.begin(), reaching.end());
  out.insert(out.end(), reaching.begin(), reaching.end());
  if (out.empty()) throw Error(ErrorCode::NoTests, "no test reaches " + target_id + " in " + short_sha(commit.sha));
  return out;
}

std::optional<std::string> default_target(const CommitRecord& commit, const Corpus& before, const Corpus& after) {
  std::map<std::string, std::size_t> changed;
  for_each_changed_line(commit, &before, &after, [&](char, const FunctionRecord* f) {
    if (f && !is_test_path(f->path) && before.find_function(f->id)) ++changed[f->id];
  });
  if (changed.empty()) return std::nullopt;
  std::set<std::string> terms;
  for (auto& t : message_tokens(commit.message)) terms.insert(stem(t));
  auto overlap = [&](const std::string& id) {
    const auto* f = before.find_function(id);
    std::string name = f->name;
    std::replace(name.begin(), name.end(), '_', ' ');
    std::size_t n = 0;
    for (auto& t : message_tokens(name)) n += terms.count(stem(t));
    return n;
  };
  std::string best;
  for (auto& [id, count] : changed) {
    if (best.empty()) {
      best = id;
      continue;
    }
    auto bc = changed[best];
    if (count > bc || (count == bc && overlap(id) > overlap(best))) best = id;
  }
  return best;
}

nlohmann::json default_environment() {
  return {{"kind", "container"},
          {"image", "python:3.11-slim"},
          {"workdir", "/project"},
          {"setup", {"pip install --quiet pytest"}},
          {"test_command", {"python", "-m", "pytest", "-q"}}};
}

nlohmann::json TaskBundle::manifest() const {
  return {{"schema_version", kBundleSchemaVersion},
          {"id", id},
          {"target_function", {{"id", target_function}, {"body", target_body}}},
          {"task_prompt", task_prompt ? nlohmann::json(*task_prompt) : nlohmann::json(nullptr)},
          {"generic_instruction", !task_prompt.has_value()},
          {"history", kHistory},
          {"project", {{"dir", kProject}, {"base_revision", base_revision}, {"environment", kEnvironment}}},
          {"source_commit", source_commit},
          {"tests", kTests},
          {"ground_truth", kGroundTruth}};
}

void save_bundle(const TaskBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_json(dir / TaskBundle::kManifest, b.manifest());
  write_json(dir / TaskBundle::kTests, b.tests);
  write_json(dir / TaskBundle::kEnvironment, b.environment);
  save_edit_log(dir / TaskBundle::kHistory, b.history);
  util::write_file_atomic(dir / TaskBundle::kGroundTruth, b.ground_truth_diff);
}

TaskBundle load_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::SchemaViolation, dir.string() + " is not a bundle");
  auto m = read_json(dir / TaskBundle::kManifest);
  TaskBundle b;
  try {
    if (m.at("schema_version").get<int>() != kBundleSchemaVersion)
      throw Error(ErrorCode::SchemaViolation, "unsupported bundle schema version");
    b.id = m.at("id").get<std::string>();
    b.target_function = m.at("target_function").at("id").get<std::string>();
    b.target_body = m.at("target_function").at("body").get<std::string>();
    if (!m.at("task_prompt").is_null()) b.task_prompt = m["task_prompt"].get<std::string>();
    if (m.at("generic_instruction").get<bool>() == b.task_prompt.has_value())
      throw Error(ErrorCode::SchemaViolation, "generic_instruction disagrees with task_prompt");
    b.source_commit = m.at("source_commit").get<std::string>();
    b.base_revision = m.at("project").at("base_revision").get<std::string>();
    if (m["project"].at("dir") != TaskBundle::kProject || m.at("tests") != TaskBundle::kTests ||
        m.at("history") != TaskBundle::kHistory || m["project"].at("environment") != TaskBundle::kEnvironment ||
        m.at("ground_truth") != TaskBundle::kGroundTruth)
      throw Error(ErrorCode::SchemaViolation, "nonstandard bundle layout");
    b.tests = read_json(dir / TaskBundle::kTests).get<std::vector<std::string>>();
    b.environment = read_json(dir / TaskBundle::kEnvironment);
    b.history = edit_log_from_json(read_json(dir / TaskBundle::kHistory));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, dir.string() + ": " + e.what());
  }
  if (!std::filesystem::exists(dir / TaskBundle::kGroundTruth))
    throw Error(ErrorCode::SchemaViolation, "missing " + std::string(TaskBundle::kGroundTruth));
  b.ground_truth_diff = util::read_file(dir / TaskBundle::kGroundTruth);
  return b;
}

TaskBundle validate_bundle(const std::filesystem::path& dir) {
  auto b = load_bundle(dir);
  auto fail = [&](const std::string& why) { throw Error(ErrorCode::SchemaViolation, b.id + ": " + why); };
  if (b.tests.empty()) fail("no tests");
  if (!b.environment.is_object() || !b.environment.contains("test_command")) fail("environment has no test_command");
  auto project = dir / TaskBundle::kProject;
  if (!std::filesystem::is_directory(project)) fail("missing project snapshot");
  auto corpus = load_corpus_dir(project);
  const auto* fn = corpus.find_function(b.target_function);
  if (!fn) fail("target " + b.target_function + " is not defined in the project");
  if (const auto* unit = corpus.find_unit(fn->path); !unit->syntax_ok())
    fail(fn->path + " does not parse: " + unit->diagnostics.front());
  if (fn->body != b.target_body) fail("target body differs from the project");
  std::vector<FileDiff> diffs;
  try {
    diffs = parse_unified_diff(b.ground_truth_diff);
  } catch (const std::invalid_argument& e) {
    fail(std::string("ground truth diff: ") + e.what());
  }
  for (auto& d : diffs) {
    auto path = project / d.path();
    std::string original = d.created() ? "" : (std::filesystem::exists(path) ? util::read_file(path) : "");
    if (!d.created() && !std::filesystem::exists(path)) fail("ground truth touches missing file " + d.path());
    try {
      apply_file_diff(original, d);
    } catch (const Error& e) {
      fail(std::string("ground truth does not apply: ") + e.what());
    }
  }
  return b;
}

TaskBundle emit_task_bundle(const util::Git& git, const CommitRecord& commit, const BundleSelections& selections,
                            const FilterConfig& config, const std::filesystem::path& out_dir) {
  if (commit.parents.empty())
    throw Error(ErrorCode::SchemaViolation, short_sha(commit.sha) + " has no parent revision to optimize");
  const auto& parent = commit.parents.front();
  auto before = load_corpus_git(git, parent);
  auto after = load_corpus_git(git, commit.sha);

  TaskBundle b;
  b.id = short_sha(commit.sha);
  b.source_commit = commit.sha;
  b.base_revision = parent;
  b.environment = selections.environment;
  auto target = selections.target ? selections.target : default_target(commit, before, after);
  if (!target) throw Error(ErrorCode::SchemaViolation, b.id + ": no modified function to target");
  const auto* fn = before.find_function(*target);
  if (!fn) throw Error(ErrorCode::SchemaViolation, b.id + ": " + *target + " is not defined at the base revision");
  if (!before.find_unit(fn->path)->syntax_ok())
    throw Error(ErrorCode::SchemaViolation, b.id + ": " + fn->path + " does not parse at the base revision");
  b.target_function = fn->id;
  b.target_body = fn->body;
  if (selections.task_prompt) b.task_prompt = selections.task_prompt;
  else if (selections.task_prompt_from_message && !commit.subject().empty()) b.task_prompt = commit.subject();

  b.tests = extract_test_cases(commit, after, b.target_function);
  b.history = mine_edits(git, parent, config.commit_window);
  for (auto& d : commit.diffs)
    if (!d.binary && !is_test_path(d.path())) b.ground_truth_diff += format_file_diff(d);

  auto dir = out_dir / b.id;
  auto project = dir / TaskBundle::kProject;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(project);
  for (auto& path : git.list_files(parent))
    if (auto content = git.show_file(parent, path)) {
      util::write_file_atomic(project / path, *content);
    }
  for (auto& d : commit.diffs) {
    if (!is_test_path(d.path())) continue;
    if (!d.old_path.empty()) std::filesystem::remove(project / d.old_path);
    if (!d.new_path.empty())
      if (auto content = git.show_file(commit.sha, d.new_path)) {
        util::write_file_atomic(project / d.new_path, *content);
      }
  }
  save_bundle(b, dir);
  return validate_bundle(dir);
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json rej = nlohmann::json::array();
  for (auto& [sha, why] : rejected) rej.push_back({{"sha", sha}, {"reason", why}});
  return {{"filters", filters.to_json()}, {"bundles", bundles}, {"rejected", rej}};
}

BenchReport build_bench(const util::Git& git, const FilterConfig& config, ChatProvider& model,
                        const std::filesystem::path& out_dir, const BundleSelections& selections,
                        InteractionLog* log, const PromptLibrary& prompts) {
  config.validate();
  BenchReport report;
  auto commits = mine_commits(git, "HEAD", config.commit_window);
  auto kept = run_filter_chain(commits, config, model, report.filters, {}, log, prompts);
  for (auto& c : kept) {
    try {
      emit_task_bundle(git, c, selections, config, out_dir);
      report.bundles.push_back((out_dir / short_sha(c.sha)).string());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoTests && e.code() != ErrorCode::SchemaViolation) throw;
      std::filesystem::remove_all(out_dir / short_sha(c.sha));
      report.rejected.emplace_back(c.sha, e.what());
    }
  }
  return report;
}

}  // namespace peace
