#include "peace/commands.hpp"

#include <spdlog/spdlog.h>

#include "peace/util/files.hpp"

namespace peace {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
      return kExitConfig;
    case ErrorCode::UndecodableFile:
    case ErrorCode::UnknownFunction:
    case ErrorCode::NotARepo:
    case ErrorCode::RevisionNotFound:
    case ErrorCode::EmptyRange:
    case ErrorCode::NoTests:
    case ErrorCode::SchemaViolation:
    case ErrorCode::Io:
      return kExitInput;
    case ErrorCode::ScorerUnavailable:
    case ErrorCode::EmbedderUnavailable:
    case ErrorCode::ModelFailure:
    case ErrorCode::MalformedToolCall:
    case ErrorCode::ScriptExhausted:
    case ErrorCode::UnparseableCandidate:
      return kExitModel;
    case ErrorCode::EnvSetupFailure:
    case ErrorCode::PatchApplyFailure:
    case ErrorCode::Timeout:
    case ErrorCode::CommandNotFound:
      return kExitEnvironment;
    case ErrorCode::EmptySet:
    case ErrorCode::ZeroBaseline:
    case ErrorCode::ZeroMethodCount:
    case ErrorCode::MissingBaseline:
    case ErrorCode::BackendMismatch:
      return kExitMetric;
  }
  return kExitInternal;
}

Session::Session(PipelineConfig config) : config_(std::move(config)), prompts_(PromptLibrary::builtin()) {
  if (config_.prompts_dir) prompts_.load_overrides(*config_.prompts_dir);
}

ProviderSet& Session::providers() {
  if (!providers_) providers_ = std::make_unique<ProviderSet>(config_);
  return *providers_;
}

std::unique_ptr<RelevanceScorer> Session::relevance_scorer(const CallGraph* graph) {
  scorers_.push_back(std::make_unique<FallbackDependencyScorer>(graph));
  DependencyScorer* fallback = scorers_.back().get();
  DependencyScorer* primary = fallback;
  if (config_.dependency_scorer == "model") {
    scorers_.push_back(std::make_unique<ModelDependencyScorer>(providers().chat("dependency"), config_.generation.params,
                                                               config_.generation.retry, &log_, prompts_));
    primary = scorers_.back().get();
  }
  ScoringOptions opts;
  opts.dependency_weight = config_.dependency_weight;
  return std::make_unique<RelevanceScorer>(*primary, providers().embedder(), opts, fallback);
}

std::map<std::string, double> load_score_table(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::ConfigInvalid, "score table " + path.string() + " does not exist");
  auto j = nlohmann::json::parse(util::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::ConfigInvalid, path.string() + " must be a JSON object of id -> score");
  std::map<std::string, double> out;
  for (auto& [id, v] : j.items()) {
    if (!v.is_number()) throw Error(ErrorCode::ConfigInvalid, "score of " + id + " is not a number");
    out[id] = v.get<double>();
  }
  return out;
}

OptimizingFunctionSequence plan(Session& session, const Corpus& corpus, const std::string& target,
                                const std::optional<std::map<std::string, double>>& score_table) {
  auto graph = build_call_graph(corpus);
  SequenceOptions opts;
  opts.threshold = session.config().relevance_threshold;
  if (session.config().graph_depth) opts.depth = *session.config().graph_depth;
  if (score_table) {
    TableRelevanceScorer scorer(*score_table);
    return plan_sequence(corpus, graph, target, scorer, opts);
  }
  auto scorer = session.relevance_scorer(&graph);
  return plan_sequence(corpus, graph, target, *scorer, opts);
}

AgentResult find_valid_edits(Session& session, const Corpus& corpus, const std::string& function_id,
                             const std::vector<EditRecord>& history) {
  const auto* fn = corpus.find_function(function_id);
  if (!fn) throw Error(ErrorCode::UnknownFunction, function_id);
  auto graph = build_call_graph(corpus);
  auto scorer = session.relevance_scorer(&graph);
  auto ranked = rank_edits(*fn, history, *scorer);
  return identify_valid_edits(*fn, ranked, session.providers().chat("agent"), session.config().agent, &session.log(),
                              session.prompts());
}

KnowledgeIndex build_knowledge(Session& session, const Corpus& corpus) {
  const auto& cfg = session.config();
  KnowledgeIndex index;
  auto& embedder = session.providers().embedder();
  if (cfg.knowledge_index && fs::exists(*cfg.knowledge_index)) index = KnowledgeIndex::load(*cfg.knowledge_index);
  if (cfg.external_snippets) index.ingest(load_snippet_sources(*cfg.external_snippets), Origin::External, embedder);
  index.ingest(snippet_sources_from_corpus(corpus), Origin::Internal, embedder);
  return index;
}

nlohmann::json OptimizeOutput::report() const {
  return {{"target", target},
          {"sequence", sequence.to_json()},
          {"knowledge", {{"internal", knowledge.internal}, {"external", knowledge.external}}},
          {"steps", run.report.to_json()},
          {"applied", std::count_if(run.patch.entries.begin(), run.patch.entries.end(),
                                    [](const PatchEntry& e) { return !e.noop(); })},
          {"validation", validation ? validation->to_json() : nlohmann::json(nullptr)}};
}

OptimizeOutput optimize_project(Session& session, const FileMap& files, const std::string& target,
                                std::vector<EditRecord> history, const std::optional<std::string>& task_prompt,
                                const std::string& base_revision, const StepGate& gate) {
  const auto& cfg = session.config();
  OptimizeOutput out;
  out.target = target;
  out.original = files;
  auto corpus = corpus_from_files(files);
  if (!corpus.find_function(target)) throw Error(ErrorCode::UnknownFunction, target);
  out.sequence = plan(session, corpus, target);
  auto knowledge = build_knowledge(session, corpus);
  out.knowledge = knowledge.stats();

  auto graph = build_call_graph(corpus);
  auto edit_scorer = session.relevance_scorer(&graph);
  auto& providers = session.providers();
  PipelineModels models;
  models.agent = &providers.chat("agent");
  models.generator = &providers.chat("generator");
  models.optimizer = &providers.chat("optimizer");
  models.integrator = &providers.chat("integrator");
  models.edit_scorer = edit_scorer.get();
  models.embedder = &providers.embedder();

  PipelineOptions opts;
  opts.use_valid_edits = cfg.use_valid_edits;
  opts.use_retrieval = cfg.use_retrieval;
  opts.retrieval_k = cfg.retrieval_k;
  opts.agent = cfg.agent;
  opts.generation = cfg.generation;
  opts.task_prompt = task_prompt;

  out.run = run_sequence(files, out.sequence.ids(), std::move(history), knowledge, models, opts, &session.log(), gate,
                         session.prompts());
  out.run.patch.base_revision = base_revision;
  return out;
}

TestOutcome test_files(const fs::path& bundle_dir, const TaskBundle& bundle, const FileMap& files,
                       const EvalConfig& config) {
  util::TempDir work("peace-validate");
  auto project = work.path() / "project";
  fs::copy(bundle_dir / TaskBundle::kProject, project, fs::copy_options::recursive);
  for (auto& [path, content] : files) util::write_file_atomic(project / path, content);
  UnmeasuredProbe probe;
  EvalConfig once = config;
  once.repeats = 1;
  return run_bundle_tests(bundle, project, Variant::Method, probe, once).outcome;
}

namespace {

std::string failing_tests(const TestOutcome& o) {
  std::string out;
  for (auto& [t, ok] : o.passed)
    if (!ok) out += (out.empty() ? "" : ", ") + t;
  if (o.timed_out) out += " (timed out)";
  return out.empty() ? "non-zero exit" : out;
}

}  // namespace

OptimizeOutput optimize_bundle(Session& session, const fs::path& bundle_dir, const std::optional<std::string>& target,
                               const StepGate& gate) {
  if (!fs::is_directory(bundle_dir))
    throw Error(ErrorCode::ConfigInvalid, "bundle " + bundle_dir.string() + " does not exist");
  const auto& cfg = session.config();
  auto bundle = validate_bundle(bundle_dir);
  auto files = read_python_files(bundle_dir / TaskBundle::kProject);
  StepGate step = gate;
  if (cfg.validate_tests && cfg.validate_per_function)
    step = [&, gate](const FileMap& f) -> std::optional<std::string> {
      if (gate)
        if (auto why = gate(f)) return why;
      auto outcome = test_files(bundle_dir, bundle, f, cfg.eval);
      if (!outcome.pass_at_1) return "bundle tests fail: " + failing_tests(outcome);
      return std::nullopt;
    };
  auto out = optimize_project(session, files, target.value_or(bundle.target_function), bundle.history,
                              bundle.task_prompt, bundle.base_revision, step);
  if (cfg.validate_tests) {
    out.validation = test_files(bundle_dir, bundle, out.run.files, cfg.eval);
    if (!out.validation->pass_at_1)
      spdlog::warn("optimized project fails the bundle tests: {}", failing_tests(*out.validation));
  }
  return out;
}

void write_optimize_artifacts(const OptimizeOutput& out, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  util::write_file_atomic(out_dir / "patch.json", out.run.patch.to_json().dump(2) + "\n");
  util::write_file_atomic(out_dir / "patch.diff", out.diff());
  util::write_file_atomic(out_dir / "report.json", out.report().dump(2) + "\n");
}

std::unique_ptr<Probe> make_probe(const PipelineConfig& config) {
  return std::make_unique<SubprocessProbe>(config.eval.probe_command);
}

EvalReport evaluate_bundle(Session& session, const fs::path& bundle_dir, const ProjectPatch& patch,
                           std::vector<MeasurementRecord> baseline, const std::optional<ProjectPatch>& baseline_patch,
                           Probe& probe) {
  if (!fs::is_directory(bundle_dir))
    throw Error(ErrorCode::ConfigInvalid, "bundle " + bundle_dir.string() + " does not exist");
  const auto& cfg = session.config();
  if (baseline_patch) {
    auto run = run_task(bundle_dir, Variant::Baseline, &*baseline_patch, probe, cfg.eval);
    if (!run.measurement) throw Error(ErrorCode::MissingBaseline, "baseline run produced no measurement");
    if (!run.outcome.pass_at_1) spdlog::warn("baseline variant fails the bundle tests; its count is still used");
    baseline.push_back(*run.measurement);
  }
  return evaluate({{bundle_dir, patch}}, baseline, probe, cfg.eval, cfg.workers);
}

}  // namespace peace
