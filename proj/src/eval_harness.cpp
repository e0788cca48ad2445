#include "peace/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "peace/diff.hpp"
#include "peace/error.hpp"
#include "peace/util/files.hpp"
#include "peace/util/subprocess.hpp"
#include "peace/util/text.hpp"

namespace peace {

namespace fs = std::filesystem;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::GroundTruth: return "ground_truth";
    case Variant::Method: return "method";
    case Variant::Baseline: return "baseline";
  }
  return "method";
}

Variant variant_from_string(std::string_view s) {
  if (s == "ground_truth") return Variant::GroundTruth;
  if (s == "method") return Variant::Method;
  if (s == "baseline") return Variant::Baseline;
  throw Error(ErrorCode::SchemaViolation, "unknown variant '" + std::string(s) + "'");
}

std::string to_string(Backend b) { return b == Backend::Trace ? "trace" : "hardware"; }

Backend backend_from_string(std::string_view s) {
  if (s == "trace") return Backend::Trace;
  if (s == "hardware") return Backend::Hardware;
  throw Error(ErrorCode::SchemaViolation, "unknown backend '" + std::string(s) + "'");
}

std::uint64_t median_count(std::vector<std::uint64_t> counts) {
  if (counts.empty()) throw Error(ErrorCode::SchemaViolation, "no repeats to aggregate");
  auto mid = counts.begin() + static_cast<std::ptrdiff_t>((counts.size() - 1) / 2);
  std::nth_element(counts.begin(), mid, counts.end());
  return *mid;
}

MeasurementRecord MeasurementRecord::from_repeats(std::string task_id, Variant variant, Backend backend,
                                                  std::vector<std::uint64_t> repeats) {
  MeasurementRecord r;
  r.instruction_count = median_count(repeats);
  r.task_id = std::move(task_id);
  r.variant = variant;
  r.backend = backend;
  r.repeats = std::move(repeats);
  return r;
}

nlohmann::json MeasurementRecord::to_json() const {
  return {{"task_id", task_id},
          {"variant", to_string(variant)},
          {"instruction_count", instruction_count},
          {"backend", to_string(backend)},
          {"repeats", repeats}};
}

MeasurementRecord MeasurementRecord::from_json(const nlohmann::json& j) {
  try {
    auto r = from_repeats(j.at("task_id").get<std::string>(), variant_from_string(j.at("variant").get<std::string>()),
                          backend_from_string(j.at("backend").get<std::string>()),
                          j.at("repeats").get<std::vector<std::uint64_t>>());
    if (j.contains("instruction_count") && j["instruction_count"].get<std::uint64_t>() != r.instruction_count)
      throw Error(ErrorCode::SchemaViolation, "instruction_count of " + r.task_id + " is not the median of repeats");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("measurement record: ") + e.what());
  }
}

std::vector<MeasurementRecord> load_measurements(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "no such file " + path.string());
  auto text = util::read_file(path);
  std::vector<MeasurementRecord> out;
  auto whole = nlohmann::json::parse(text, nullptr, false);
  if (!whole.is_discarded() && whole.is_array()) {
    for (auto& j : whole) out.push_back(MeasurementRecord::from_json(j));
    return out;
  }
  for (auto& line : util::split_lines(text)) {
    if (util::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::SchemaViolation, "malformed measurement line in " + path.string());
    out.push_back(MeasurementRecord::from_json(j));
  }
  return out;
}

void save_measurements(const fs::path& path, const std::vector<MeasurementRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (auto& r : records) arr.push_back(r.to_json());
  util::write_file_atomic(path, arr.dump(2) + "\n");
}

nlohmann::json TestOutcome::to_json() const {
  nlohmann::json tests = nlohmann::json::array();
  for (auto& [id, ok] : passed) tests.push_back({{"test", id}, {"passed", ok}});
  return {{"task_id", task_id},
          {"tests", tests},
          {"pass_at_1", pass_at_1},
          {"timed_out", timed_out},
          {"diagnostics", diagnostics}};
}

TestOutcome TestOutcome::from_json(const nlohmann::json& j) {
  try {
    TestOutcome o;
    o.task_id = j.at("task_id").get<std::string>();
    for (auto& t : j.at("tests")) o.passed.emplace_back(t.at("test").get<std::string>(), t.at("passed").get<bool>());
    o.pass_at_1 = j.at("pass_at_1").get<bool>();
    o.timed_out = j.value("timed_out", false);
    o.diagnostics = j.value("diagnostics", std::vector<std::string>{});
    bool all = !o.passed.empty() && std::all_of(o.passed.begin(), o.passed.end(), [](auto& p) { return p.second; });
    if (o.pass_at_1 && !all) throw Error(ErrorCode::SchemaViolation, o.task_id + ": pass_at_1 with a failing test");
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("test outcome: ") + e.what());
  }
}

ProbeResult ProbeResult::parse(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::SchemaViolation, "probe output is not a JSON object");
  try {
    ProbeResult r;
    r.backend = backend_from_string(j.at("backend").get<std::string>());
    if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
    r.detail = j.value("detail", "");
    for (const auto& c : j.at("counts")) {
      if (!c.is_number_unsigned()) throw Error(ErrorCode::SchemaViolation, "probe count is not a non-negative integer");
      r.counts.push_back(c.get<std::uint64_t>());
    }
    if (!j.at("exit_status").is_null()) r.exit_status = j["exit_status"].get<int>();
    if (j.contains("verdicts") && !j["verdicts"].is_null())
      r.verdicts = j["verdicts"].get<std::map<std::string, std::string>>();
    if (!r.error && !r.exit_status) throw Error(ErrorCode::SchemaViolation, "probe output has no exit status");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("probe output: ") + e.what());
  }
}

nlohmann::json ProbeResult::to_json() const {
  nlohmann::json j = {{"schema", "probe-result/1"},
                      {"backend", to_string(backend)},
                      {"counts", counts},
                      {"exit_status", exit_status ? nlohmann::json(*exit_status) : nlohmann::json(nullptr)},
                      {"verdicts", verdicts ? nlohmann::json(*verdicts) : nlohmann::json(nullptr)},
                      {"error", error ? nlohmann::json(*error) : nlohmann::json(nullptr)}};
  if (!detail.empty()) j["detail"] = detail;
  return j;
}

SubprocessProbe::SubprocessProbe(std::vector<std::string> probe_command, std::vector<std::string> wrapper)
    : probe_(std::move(probe_command)), wrapper_(std::move(wrapper)) {
  if (probe_.empty()) throw Error(ErrorCode::ConfigInvalid, "empty probe command");
}

ProbeResult SubprocessProbe::measure(const ProbeRequest& req) {
  std::vector<std::string> argv = wrapper_;
  argv.insert(argv.end(), probe_.begin(), probe_.end());
  argv.insert(argv.end(), {"--backend", to_string(req.backend), "--repeats", std::to_string(req.repeats), "--"});
  argv.insert(argv.end(), req.command.begin(), req.command.end());
  util::ProcessOptions opts;
  opts.cwd = req.workdir;
  opts.env = req.env;
  opts.timeout = req.timeout;
  spdlog::debug("probe {}: {}", req.label, util::join_lines(argv, false));
  auto res = util::run_process(argv, opts);
  if (res.timed_out) throw Error(ErrorCode::Timeout, req.label + " exceeded " + std::to_string(req.timeout.count()) + " ms");
  std::string last;
  for (auto& l : util::split_lines(res.out))
    if (!util::trim(l).empty()) last = l;
  if (last.empty()) {
    auto err = res.err.size() > 2000 ? res.err.substr(res.err.size() - 2000) : res.err;
    throw Error(ErrorCode::SchemaViolation, "probe printed no record (exit " + std::to_string(res.exit_code) + "): " + err);
  }
  auto r = ProbeResult::parse(last);
  if (!r.error && *r.exit_status != res.exit_code)
    throw Error(ErrorCode::SchemaViolation, "probe exit code " + std::to_string(res.exit_code) +
                                                " does not mirror test status " + std::to_string(*r.exit_status));
  return r;
}

ProbeResult UnmeasuredProbe::measure(const ProbeRequest& req) {
  util::ProcessOptions opts;
  opts.cwd = req.workdir;
  opts.env = req.env;
  opts.timeout = req.timeout;
  auto res = util::run_process(req.command, opts);
  if (res.timed_out) throw Error(ErrorCode::Timeout, req.label + " exceeded " + std::to_string(req.timeout.count()) + " ms");
  ProbeResult r;
  r.backend = req.backend;
  r.exit_status = res.exit_code;
  return r;
}

void CannedProbe::set(const std::string& label, ProbeResult result) {
  std::lock_guard lock(mu_);
  results_[label] = std::move(result);
}

void CannedProbe::set_passing(const std::string& label, std::vector<std::uint64_t> counts) {
  ProbeResult r;
  r.counts = std::move(counts);
  r.exit_status = 0;
  set(label, std::move(r));
}

ProbeResult CannedProbe::measure(const ProbeRequest& req) {
  std::lock_guard lock(mu_);
  requests_.push_back(req);
  auto it = results_.find(req.label);
  if (it == results_.end()) it = results_.find(req.label.substr(0, req.label.find(':')));
  if (it == results_.end()) throw Error(ErrorCode::SchemaViolation, "no canned probe result for " + req.label);
  return it->second;
}

std::vector<ProbeRequest> CannedProbe::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::string to_string(SandboxMode m) {
  switch (m) {
    case SandboxMode::Auto: return "auto";
    case SandboxMode::Container: return "container";
    case SandboxMode::Local: return "local";
  }
  return "auto";
}

SandboxMode sandbox_from_string(std::string_view s) {
  if (s == "auto") return SandboxMode::Auto;
  if (s == "container") return SandboxMode::Container;
  if (s == "local") return SandboxMode::Local;
  throw Error(ErrorCode::ConfigInvalid, "sandbox must be auto, container or local, not '" + std::string(s) + "'");
}

std::size_t EvalConfig::effective_repeats() const {
  if (repeats) return *repeats;
  return backend == Backend::Trace ? 1 : 3;
}

namespace {

void apply_ground_truth(const fs::path& root, const std::string& diff_text) {
  std::vector<FileDiff> diffs;
  try {
    diffs = parse_unified_diff(diff_text);
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorCode::PatchApplyFailure, std::string("ground truth: ") + e.what());
  }
  for (auto& d : diffs) {
    auto path = root / d.path();
    if (d.deleted()) {
      fs::remove(root / d.old_path);
      continue;
    }
    std::string original;
    if (!d.created()) {
      if (!fs::exists(root / d.old_path)) throw Error(ErrorCode::PatchApplyFailure, "missing " + d.old_path);
      original = util::read_file(root / d.old_path);
      if (d.old_path != d.new_path) fs::remove(root / d.old_path);
    }
    util::write_file_atomic(path, apply_file_diff(original, d));
  }
}

void apply_patch(const fs::path& root, const ProjectPatch& patch) {
  auto before = read_python_files(root);
  auto after = apply_project_patch(before, patch);
  for (auto& [rel, content] : after)
    if (before[rel] != content) util::write_file_atomic(root / rel, content);
}

bool container_available(const EvalConfig& config, const std::string& image, std::string& why) {
  if (!util::which(config.container_runtime)) {
    why = "container runtime '" + config.container_runtime + "' not found";
    return false;
  }
  auto r = util::run_process({config.container_runtime, "image", "inspect", image},
                             {.cwd = {}, .env = {}, .timeout = std::chrono::milliseconds(30000), .stdin_data = {}});
  if (r.exit_code != 0) {
    why = "environment image '" + image + "' is not available";
    return false;
  }
  return true;
}

}  // namespace

TaskRun run_task(const fs::path& bundle_dir, Variant variant, const ProjectPatch* patch, Probe& probe,
                 const EvalConfig& config) {
  auto bundle = load_bundle(bundle_dir);
  TaskRun run;
  run.outcome.task_id = bundle.id;
  auto& diags = run.outcome.diagnostics;

  util::TempDir work("peace-eval");
  auto project = work.path() / "project";
  fs::copy(bundle_dir / TaskBundle::kProject, project, fs::copy_options::recursive);
  if (variant == Variant::GroundTruth) {
    apply_ground_truth(project, bundle.ground_truth_diff);
  } else if (patch) {
    if (!patch->base_revision.empty() && patch->base_revision != bundle.base_revision)
      diags.push_back("patch base " + patch->base_revision + " differs from bundle base " + bundle.base_revision);
    apply_patch(project, *patch);
  }

  return run_bundle_tests(bundle, project, variant, probe, config, std::move(run));
}

TaskRun run_bundle_tests(const TaskBundle& bundle, const fs::path& project, Variant variant, Probe& probe,
                         const EvalConfig& config, TaskRun run) {
  run.outcome.task_id = bundle.id;
  auto& diags = run.outcome.diagnostics;
  const auto& env = bundle.environment;
  std::vector<std::string> command = env.value("test_command", std::vector<std::string>{});
  if (command.empty()) throw Error(ErrorCode::EnvSetupFailure, bundle.id + ": environment has no test_command");
  std::vector<std::string> wrapper;
  bool container = env.value("kind", "local") == "container" && config.sandbox != SandboxMode::Local;
  if (container) {
    std::string image = env.value("image", ""), why;
    if (image.empty()) why = "environment names no image";
    else if (container_available(config, image, why)) {
      auto workdir = env.value("workdir", "/project");
      std::string setup;
      for (auto& s : env.value("setup", std::vector<std::string>{})) setup += s + " && ";
      wrapper = {config.container_runtime, "run", "--rm", "-v", fs::absolute(project).string() + ":" + workdir,
                 "-w", workdir, image, "sh", "-c", setup + "exec \"$@\"", "sh"};
    }
    if (wrapper.empty()) {
      if (config.sandbox == SandboxMode::Container) throw Error(ErrorCode::EnvSetupFailure, bundle.id + ": " + why);
      spdlog::warn("{}: {}; running tests in the local interpreter, results may differ from the declared environment",
                   bundle.id, why);
      diags.push_back("local fallback: " + why);
      container = false;
    }
  }
  if (!container && command.front() == "python") command.front() = config.local_python;
  run.sandbox = container ? "container" : "local";
  command.insert(command.end(), bundle.tests.begin(), bundle.tests.end());

  ProbeRequest req;
  req.command = command;
  req.workdir = project;
  req.backend = config.backend;
  req.repeats = config.effective_repeats();
  req.timeout = config.per_test_timeout * static_cast<long>(std::max<std::size_t>(1, bundle.tests.size()) *
                                                              req.repeats);
  req.label = bundle.id + ":" + to_string(variant);

  ProbeResult result;
  SubprocessProbe* sub = dynamic_cast<SubprocessProbe*>(&probe);
  std::optional<SubprocessProbe> wrapped;
  // Container runs wrap the probe invocation itself, or the bare test
  // command for probes that run it directly.
  if (sub && !wrapper.empty()) wrapped.emplace(sub->wrapped(wrapper));
  else if (!wrapper.empty()) req.command.insert(req.command.begin(), wrapper.begin(), wrapper.end());
  try {
    result = wrapped ? wrapped->measure(req) : probe.measure(req);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Timeout) {
      run.outcome.timed_out = true;
      for (auto& t : bundle.tests) run.outcome.passed.emplace_back(t, false);
      diags.push_back(e.what());
      return run;
    }
    if (e.code() == ErrorCode::CommandNotFound) throw Error(ErrorCode::EnvSetupFailure, e.what());
    throw;
  }
  if (result.error) {
    if (*result.error == "TEST_CRASH") {
      for (auto& t : bundle.tests) run.outcome.passed.emplace_back(t, false);
      diags.push_back("test run crashed: " + result.detail);
      return run;
    }
    throw Error(ErrorCode::EnvSetupFailure, bundle.id + ": probe reported " + *result.error + " " + result.detail);
  }
  if (result.backend != config.backend)
    throw Error(ErrorCode::BackendMismatch, "probe used " + to_string(result.backend) + ", expected " +
                                                to_string(config.backend));

  bool all = *result.exit_status == 0;
  for (auto& t : bundle.tests) {
    bool ok;
    if (result.verdicts) {
      auto it = result.verdicts->find(t);
      ok = it != result.verdicts->end() && it->second == "passed";
      if (it == result.verdicts->end()) diags.push_back("no verdict for " + t);
    } else {
      ok = *result.exit_status == 0;
    }
    run.outcome.passed.emplace_back(t, ok);
    all = all && ok;
  }
  run.outcome.pass_at_1 = all && !bundle.tests.empty();
  if (!result.counts.empty())
    run.measurement = MeasurementRecord::from_repeats(bundle.id, variant, result.backend, result.counts);
  return run;
}

double pass_at_1(const std::vector<TestOutcome>& outcomes) {
  if (outcomes.empty()) throw Error(ErrorCode::EmptySet, "no outcomes");
  auto n = std::count_if(outcomes.begin(), outcomes.end(), [](auto& o) { return o.pass_at_1; });
  return static_cast<double>(n) / static_cast<double>(outcomes.size());
}

double opt_rate(double baseline_count, double method_count) {
  if (std::isnan(baseline_count) || std::isnan(method_count) || baseline_count < 0 || method_count < 0)
    throw std::invalid_argument("instruction counts must be non-negative");
  if (baseline_count == 0) throw Error(ErrorCode::ZeroBaseline, "baseline instruction count is zero");
  return (baseline_count - method_count) / baseline_count;
}

double speedup(double gt_count, double method_count) {
  if (std::isnan(gt_count) || std::isnan(method_count) || gt_count < 0 || method_count < 0)
    throw std::invalid_argument("instruction counts must be non-negative");
  if (method_count == 0) throw Error(ErrorCode::ZeroMethodCount, "method instruction count is zero");
  return gt_count / method_count;
}

EvalReport aggregate(const std::vector<MeasurementRecord>& records, const std::vector<TestOutcome>& outcomes) {
  if (outcomes.empty()) throw Error(ErrorCode::EmptySet, "no task outcomes");
  EvalReport report;
  if (!records.empty()) report.backend = records.front().backend;
  std::map<std::pair<std::string, Variant>, const MeasurementRecord*> by_key;
  bool any_baseline = false;
  for (auto& r : records) {
    if (r.backend != report.backend)
      throw Error(ErrorCode::BackendMismatch, "records mix " + to_string(report.backend) + " and " +
                                                  to_string(r.backend) + " counts");
    if (!by_key.emplace(std::pair{r.task_id, r.variant}, &r).second)
      throw Error(ErrorCode::SchemaViolation, "duplicate " + to_string(r.variant) + " record for " + r.task_id);
    any_baseline = any_baseline || r.variant == Variant::Baseline;
  }
  if (!any_baseline) throw Error(ErrorCode::MissingBaseline, "no baseline records");
  auto find = [&](const std::string& id, Variant v) -> const MeasurementRecord* {
    auto it = by_key.find({id, v});
    return it == by_key.end() ? nullptr : it->second;
  };

  std::set<std::string> seen;
  double opt_sum = 0, speed_sum = 0;
  std::size_t opt_n = 0, speed_n = 0;
  for (auto& o : outcomes) {
    if (!seen.insert(o.task_id).second) throw Error(ErrorCode::SchemaViolation, "duplicate outcome for " + o.task_id);
    TaskEval t;
    t.task_id = o.task_id;
    t.outcome = o;
    for (auto v : {Variant::Baseline, Variant::Method, Variant::GroundTruth})
      if (auto* r = find(o.task_id, v)) t.records.push_back(*r);
    auto* method = find(o.task_id, Variant::Method);
    if (!o.pass_at_1) {
      report.excluded.push_back({o.task_id, o.timed_out ? "timed out" : "failed correctness checks"});
    } else if (!method) {
      report.excluded.push_back({o.task_id, "no method measurement"});
    } else {
      auto* base = find(o.task_id, Variant::Baseline);
      if (!base) throw Error(ErrorCode::MissingBaseline, "no baseline record for " + o.task_id);
      t.opt_rate = opt_rate(static_cast<double>(base->instruction_count), static_cast<double>(method->instruction_count));
      opt_sum += *t.opt_rate;
      ++opt_n;
      if (auto* gt = find(o.task_id, Variant::GroundTruth)) {
        t.speedup = speedup(static_cast<double>(gt->instruction_count), static_cast<double>(method->instruction_count));
        speed_sum += *t.speedup;
        ++speed_n;
      }
    }
    report.tasks.push_back(std::move(t));
  }
  report.pass_at_1 = pass_at_1(outcomes);
  if (opt_n) report.mean_opt_rate = opt_sum / static_cast<double>(opt_n);
  if (speed_n) report.mean_speedup = speed_sum / static_cast<double>(speed_n);
  return report;
}

nlohmann::json EvalReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json tasks_j = nlohmann::json::array();
  for (auto& t : tasks) {
    nlohmann::json recs = nlohmann::json::array();
    for (auto& r : t.records) recs.push_back(r.to_json());
    tasks_j.push_back({{"task_id", t.task_id},
                       {"outcome", t.outcome.to_json()},
                       {"measurements", recs},
                       {"opt_rate", opt(t.opt_rate)},
                       {"speedup", opt(t.speedup)}});
  }
  nlohmann::json ex = nlohmann::json::array();
  for (auto& e : excluded) ex.push_back({{"task_id", e.task_id}, {"reason", e.reason}});
  return {{"backend", to_string(backend)},
          {"tasks", tasks_j},
          {"aggregates",
           {{"tasks", tasks.size()},
            {"pass_at_1", pass_at_1},
            {"mean_opt_rate", opt(mean_opt_rate)},
            {"mean_speedup", opt(mean_speedup)},
            {"included", tasks.size() - excluded.size()}}},
          {"excluded", ex}};
}

std::string EvalReport::summary_table() const {
  auto num = [](const std::optional<double>& v, bool percent) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(percent ? 1 : 3);
    if (percent) s << std::showpos << *v * 100 << "%";
    else s << *v;
    return s.str();
  };
  std::size_t w = 4;
  for (auto& t : tasks) w = std::max(w, t.task_id.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(w)) << "task" << "  pass  opt_rate  speedup\n";
  for (auto& t : tasks)
    out << std::left << std::setw(static_cast<int>(w)) << t.task_id << "  " << std::setw(4)
        << (t.outcome.pass_at_1 ? "yes" : "no") << "  " << std::setw(8) << num(t.opt_rate, true) << "  "
        << num(t.speedup, false) << "\n";
  out << "pass@1 " << num(pass_at_1, true).substr(1) << "  mean opt rate " << num(mean_opt_rate, true)
      << "  mean speedup " << num(mean_speedup, false) << "  (" << excluded.size() << " excluded, backend "
      << to_string(backend) << ")\n";
  return out.str();
}

EvalReport evaluate(const std::vector<EvalJob>& jobs, const std::vector<MeasurementRecord>& baseline, Probe& probe,
                    const EvalConfig& config, std::size_t workers) {
  if (jobs.empty()) throw Error(ErrorCode::EmptySet, "no tasks to evaluate");
  struct Slot {
    std::size_t job;
    Variant variant;
    std::optional<TaskRun> run;
    std::exception_ptr error;
  };
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    slots.push_back({i, Variant::Method, std::nullopt, nullptr});
    slots.push_back({i, Variant::GroundTruth, std::nullopt, nullptr});
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next++) < slots.size();) {
      auto& s = slots[k];
      const auto& job = jobs[s.job];
      try {
        s.run = run_task(job.bundle_dir, s.variant, job.patch ? &*job.patch : nullptr, probe, config);
      } catch (...) {
        s.error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < std::clamp<std::size_t>(workers, 1, slots.size()); ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::vector<MeasurementRecord> records;
  for (auto& r : baseline)
    if (r.variant == Variant::Baseline) records.push_back(r);
  std::vector<TestOutcome> outcomes;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto& method = slots[2 * i];
    auto& gt = slots[2 * i + 1];
    if (method.error) {
      try {
        std::rethrow_exception(method.error);
      } catch (const Error& e) {
        // A candidate that does not apply is a failed first sample.
        if (e.code() != ErrorCode::PatchApplyFailure) throw;
        TestOutcome o;
        o.task_id = load_bundle(jobs[i].bundle_dir).id;
        o.diagnostics.push_back(e.what());
        outcomes.push_back(std::move(o));
      }
    } else {
      outcomes.push_back(method.run->outcome);
      if (method.run->measurement) records.push_back(*method.run->measurement);
    }
    if (gt.error) std::rethrow_exception(gt.error);
    if (gt.run->outcome.pass_at_1 && gt.run->measurement) records.push_back(*gt.run->measurement);
    else outcomes.back().diagnostics.push_back("ground truth did not pass; no speedup");
  }
  return aggregate(records, outcomes);
}

}  // namespace peace
