// peace: command-line driver for planning, edit selection, optimization,
// benchmark construction and evaluation.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "peace/commands.hpp"
#include "peace/util/files.hpp"
#include "peace/util/git.hpp"

namespace fs = std::filesystem;
using namespace peace;

namespace {

void emit(const std::string& text, const std::optional<fs::path>& out) {
  if (out) util::write_file_atomic(*out, text);
  else std::cout << text;
}

void require_path(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error(ErrorCode::ConfigInvalid, what + " " + p.string() + " does not exist");
}

nlohmann::json read_json_file(const fs::path& p, const std::string& what) {
  require_path(p, what);
  auto j = nlohmann::json::parse(util::read_file(p), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::SchemaViolation, what + " " + p.string() + " is not valid JSON");
  return j;
}

ProjectPatch read_patch(const fs::path& p) { return ProjectPatch::from_json(read_json_file(p, "patch")); }

Corpus load_repo(const fs::path& repo, const std::optional<std::string>& revision) {
  require_path(repo, "repository");
  if (revision) return load_corpus_git(util::Git(repo), *revision);
  return load_corpus_dir(repo);
}

std::vector<EditRecord> load_history(const std::optional<fs::path>& file, bool mine, const fs::path& repo,
                                     const PipelineConfig& config) {
  if (file) {
    require_path(*file, "history");
    return load_edit_log(*file);
  }
  if (mine) return mine_edits(util::Git(repo), "HEAD", config.bench.commit_window);
  return {};
}

void configure_logging(const std::string& level) {
  auto logger = spdlog::stderr_color_mt("peace");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Project-aware efficiency optimization of Python functions"};
  app.require_subcommand(1);

  std::optional<fs::path> config_path, interactions_path;
  const char* env_level = std::getenv("PEACE_LOG_LEVEL");
  std::string log_level = env_level ? env_level : "warn";
  app.add_option("--config", config_path, "Pipeline config (JSON)");
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off (env PEACE_LOG_LEVEL)");
  app.add_option("--interactions", interactions_path, "Write every model interaction here (JSONL)");

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "Order the target and its relevant callers and callees");
  fs::path plan_repo;
  std::string plan_target;
  std::optional<std::string> plan_rev;
  std::optional<fs::path> plan_scores, plan_out;
  std::optional<double> plan_threshold;
  plan_cmd->add_option("--repo", plan_repo, "Project directory (or git repo with --revision)")->required();
  plan_cmd->add_option("--target", plan_target, "Target function id, e.g. pkg.mod.func")->required();
  plan_cmd->add_option("--revision", plan_rev, "Read the project at this git revision");
  plan_cmd->add_option("--scores", plan_scores, "Fixed relevance scores {id: score} instead of the scorer");
  plan_cmd->add_option("--threshold", plan_threshold, "Relevance threshold (default from config)");
  plan_cmd->add_option("--out", plan_out, "Write the sequence here instead of stdout");

  // edits
  auto* edits_cmd = app.add_subcommand("edits", "Select historical edits that help optimize one function");
  fs::path edits_repo;
  std::string edits_fn;
  std::optional<fs::path> edits_history, edits_out;
  bool edits_mine = false;
  edits_cmd->add_option("--repo", edits_repo, "Project directory")->required();
  edits_cmd->add_option("--function", edits_fn, "Function id")->required();
  edits_cmd->add_option("--history", edits_history, "Edit log JSON");
  edits_cmd->add_flag("--mine", edits_mine, "Mine the history from the repository's git log");
  edits_cmd->add_option("--out", edits_out, "Write the selection here instead of stdout");

  // optimize
  auto* opt_cmd = app.add_subcommand("optimize", "Run the optimization pipeline and write a project patch");
  std::optional<fs::path> opt_bundle, opt_repo, opt_history;
  std::optional<std::string> opt_target, opt_prompt;
  fs::path opt_out;
  bool opt_no_edits = false, opt_no_retrieval = false, opt_mine = false, opt_no_validate = false,
       opt_validate_each = false;
  opt_cmd->add_option("--bundle", opt_bundle, "Task bundle directory");
  opt_cmd->add_option("--repo", opt_repo, "Project directory (instead of a bundle)");
  opt_cmd->add_option("--target", opt_target, "Target function id (default: the bundle's)");
  opt_cmd->add_option("--history", opt_history, "Edit log JSON (repo mode)");
  opt_cmd->add_flag("--mine", opt_mine, "Mine the history from git (repo mode)");
  opt_cmd->add_option("--task-prompt", opt_prompt, "Task description for the initial edit");
  opt_cmd->add_option("--out-dir", opt_out, "Artifact directory")->required();
  opt_cmd->add_flag("--no-valid-edits", opt_no_edits, "Skip historical edit selection");
  opt_cmd->add_flag("--no-retrieval", opt_no_retrieval, "Skip knowledge retrieval");
  opt_cmd->add_flag("--no-validate", opt_no_validate, "Do not run the bundle's tests on the result");
  opt_cmd->add_flag("--validate-per-function", opt_validate_each, "Also gate every applied edit on the bundle's tests");

  // bench build
  auto* bench_cmd = app.add_subcommand("bench", "Benchmark construction");
  bench_cmd->require_subcommand(1);
  auto* build_cmd = bench_cmd->add_subcommand("build", "Mine a repository into task bundles");
  fs::path bench_repo, bench_out;
  std::optional<std::string> bench_target;
  bool bench_generic = false;
  build_cmd->add_option("--repo", bench_repo, "Git repository")->required();
  build_cmd->add_option("--out", bench_out, "Output directory for bundles")->required();
  build_cmd->add_option("--target", bench_target, "Target function for every bundle");
  build_cmd->add_flag("--generic-instruction", bench_generic, "Do not derive task prompts from commit messages");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Run a bundle's tests on a patch and report metrics");
  fs::path eval_bundle, eval_patch;
  std::optional<fs::path> eval_baseline, eval_baseline_patch, eval_out, eval_records;
  eval_cmd->add_option("--bundle", eval_bundle, "Task bundle directory")->required();
  eval_cmd->add_option("--patch", eval_patch, "Project patch (patch.json) of the method")->required();
  eval_cmd->add_option("--baseline", eval_baseline, "Baseline measurement records (JSON array or JSONL)");
  eval_cmd->add_option("--baseline-patch", eval_baseline_patch, "Measure this patch as the baseline variant");
  eval_cmd->add_option("--out", eval_out, "Write the report JSON here");
  eval_cmd->add_option("--records-out", eval_records, "Write all measurement records here");

  // knowledge
  auto* kn_cmd = app.add_subcommand("knowledge", "Snippet index");
  kn_cmd->require_subcommand(1);
  auto* ingest_cmd = kn_cmd->add_subcommand("ingest", "Add snippets to an index file");
  fs::path kn_index;
  std::optional<fs::path> kn_snippets, kn_repo;
  std::string kn_origin = "external";
  ingest_cmd->add_option("--index", kn_index, "Index file (created if missing)")->required();
  ingest_cmd->add_option("--snippets", kn_snippets, "JSONL snippets or a directory of .py files");
  ingest_cmd->add_option("--repo", kn_repo, "Ingest a project's functions as internal snippets");
  ingest_cmd->add_option("--origin", kn_origin, "Origin of --snippets: external|internal");
  auto* query_cmd = kn_cmd->add_subcommand("query", "Nearest snippets to a text");
  fs::path q_index;
  std::optional<std::string> q_text, q_origin;
  std::optional<fs::path> q_file;
  std::size_t q_k = kDefaultRetrievalK;
  query_cmd->add_option("--index", q_index, "Index file")->required();
  query_cmd->add_option("--text", q_text, "Query text");
  query_cmd->add_option("--file", q_file, "Read the query from a file");
  query_cmd->add_option("-k", q_k, "Results to return");
  query_cmd->add_option("--origin", q_origin, "Only internal or external snippets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    configure_logging(log_level);
    PipelineConfig config;
    if (config_path) config = PipelineConfig::load(*config_path);
    Session session(config);
    auto write_interactions = [&] {
      if (interactions_path) util::write_file_atomic(*interactions_path, session.log().to_jsonl());
    };

    if (*plan_cmd) {
      if (plan_threshold) {
        session.mutable_config().relevance_threshold = *plan_threshold;
        session.mutable_config().validate();
      }
      auto corpus = load_repo(plan_repo, plan_rev);
      std::optional<std::map<std::string, double>> table;
      if (plan_scores) table = load_score_table(*plan_scores);
      auto seq = plan(session, corpus, plan_target, table);
      emit(seq.to_json().dump(2) + "\n", plan_out);
    } else if (*edits_cmd) {
      auto corpus = load_repo(edits_repo, std::nullopt);
      auto history = load_history(edits_history, edits_mine, edits_repo, session.config());
      auto result = find_valid_edits(session, corpus, edits_fn, history);
      nlohmann::json j = {{"function", edits_fn},
                          {"valid_edits", result.valid.to_json()},
                          {"transcript", result.transcript.to_json()}};
      emit(j.dump(2) + "\n", edits_out);
    } else if (*opt_cmd) {
      if (opt_no_edits) session.mutable_config().use_valid_edits = false;
      if (opt_no_retrieval) session.mutable_config().use_retrieval = false;
      if (opt_no_validate) session.mutable_config().validate_tests = false;
      if (opt_validate_each) session.mutable_config().validate_per_function = true;
      if (opt_bundle.has_value() == opt_repo.has_value())
        throw Error(ErrorCode::ConfigInvalid, "give exactly one of --bundle and --repo");
      OptimizeOutput out;
      if (opt_bundle) {
        out = optimize_bundle(session, *opt_bundle, opt_target);
      } else {
        require_path(*opt_repo, "repository");
        if (!opt_target) throw Error(ErrorCode::ConfigInvalid, "--target is required with --repo");
        auto history = load_history(opt_history, opt_mine, *opt_repo, session.config());
        out = optimize_project(session, read_python_files(*opt_repo), *opt_target, history, opt_prompt);
      }
      write_optimize_artifacts(out, opt_out);
      std::cout << "applied " << out.report()["applied"] << " of " << out.run.patch.entries.size()
                << " functions; artifacts in " << opt_out.string() << "\n";
      if (out.validation)
        std::cout << "bundle tests " << (out.validation->pass_at_1 ? "pass" : "FAIL") << " on the optimized project\n";
    } else if (*build_cmd) {
      require_path(bench_repo, "repository");
      BundleSelections sel;
      sel.target = bench_target;
      sel.task_prompt_from_message = !bench_generic;
      auto report = build_bench(util::Git(bench_repo), session.config().bench, session.providers().chat("confirm"),
                                bench_out, sel, &session.log(), session.prompts());
      util::write_file_atomic(bench_out / "bench_report.json", report.to_json().dump(2) + "\n");
      std::cout << report.bundles.size() << " bundles, " << report.rejected.size() << " rejected, "
                << report.filters.needs_review.size() << " need review\n";
    } else if (*eval_cmd) {
      require_path(eval_bundle, "bundle");
      auto patch = read_patch(eval_patch);
      std::vector<MeasurementRecord> baseline;
      if (eval_baseline) {
        require_path(*eval_baseline, "baseline records");
        baseline = load_measurements(*eval_baseline);
      }
      std::optional<ProjectPatch> baseline_patch;
      if (eval_baseline_patch) baseline_patch = read_patch(*eval_baseline_patch);
      if (!eval_baseline && !baseline_patch)
        throw Error(ErrorCode::MissingBaseline, "give --baseline records or a --baseline-patch");
      auto probe = make_probe(session.config());
      auto report = evaluate_bundle(session, eval_bundle, patch, baseline, baseline_patch, *probe);
      if (eval_out) util::write_file_atomic(*eval_out, report.to_json().dump(2) + "\n");
      if (eval_records) {
        std::vector<MeasurementRecord> all;
        for (auto& t : report.tasks) all.insert(all.end(), t.records.begin(), t.records.end());
        save_measurements(*eval_records, all);
      }
      std::cout << report.summary_table();
    } else if (*ingest_cmd) {
      auto& embedder = session.providers().embedder();
      KnowledgeIndex index;
      if (fs::exists(kn_index)) index = KnowledgeIndex::load(kn_index);
      if (!kn_snippets && !kn_repo) throw Error(ErrorCode::ConfigInvalid, "give --snippets or --repo");
      if (kn_snippets) {
        require_path(*kn_snippets, "snippets");
        Origin origin;
        try {
          origin = origin_from_string(kn_origin);
        } catch (const std::exception& e) {
          throw Error(ErrorCode::ConfigInvalid, e.what());
        }
        index.ingest(load_snippet_sources(*kn_snippets), origin, embedder);
      }
      if (kn_repo) index.ingest(snippet_sources_from_corpus(load_repo(*kn_repo, std::nullopt)), Origin::Internal, embedder);
      index.save(kn_index);
      auto s = index.stats();
      std::cout << s.internal << " internal, " << s.external << " external snippets in " << kn_index.string() << "\n";
    } else if (*query_cmd) {
      require_path(q_index, "index");
      auto index = KnowledgeIndex::load(q_index);
      std::string text;
      if (q_text) text = *q_text;
      else if (q_file) {
        require_path(*q_file, "query file");
        text = util::read_file(*q_file);
      } else {
        throw Error(ErrorCode::ConfigInvalid, "give --text or --file");
      }
      std::optional<Origin> filter;
      if (q_origin) filter = origin_from_string(*q_origin);
      auto result = index.retrieve(text, q_k, session.providers().embedder(), filter);
      nlohmann::json arr = nlohmann::json::array();
      for (auto& e : result.entries)
        arr.push_back({{"id", e.snippet.id},
                       {"origin", to_string(e.snippet.origin)},
                       {"similarity", e.similarity},
                       {"body", e.snippet.body}});
      std::cout << arr.dump(2) << "\n";
    }
    write_interactions();
    return kExitOk;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kExitInternal;
  }
}
