#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peace/bench_builder.hpp"
#include "peace/optimize_pipeline.hpp"

namespace peace {

enum class Variant { GroundTruth, Method, Baseline };
std::string to_string(Variant v);
Variant variant_from_string(std::string_view s);  // throws Error{SchemaViolation}

enum class Backend { Trace, Hardware };
std::string to_string(Backend b);
Backend backend_from_string(std::string_view s);  // throws Error{SchemaViolation}

// Lower median, so the aggregate is always one of the observed counts.
std::uint64_t median_count(std::vector<std::uint64_t> counts);

struct MeasurementRecord {
  std::string task_id;
  Variant variant = Variant::Method;
  std::uint64_t instruction_count = 0;  // median of repeats
  Backend backend = Backend::Trace;
  std::vector<std::uint64_t> repeats;

  // Throws Error{SchemaViolation} when repeats is empty.
  static MeasurementRecord from_repeats(std::string task_id, Variant variant, Backend backend,
                                        std::vector<std::uint64_t> repeats);
  nlohmann::json to_json() const;
  // Checks the median invariant. Throws Error{SchemaViolation}.
  static MeasurementRecord from_json(const nlohmann::json& j);
  bool operator==(const MeasurementRecord&) const = default;
};

// A JSON array, or one record per line.
std::vector<MeasurementRecord> load_measurements(const std::filesystem::path& path);
void save_measurements(const std::filesystem::path& path, const std::vector<MeasurementRecord>& records);

struct TestOutcome {
  std::string task_id;
  std::vector<std::pair<std::string, bool>> passed;  // per test, bundle order
  bool pass_at_1 = false;                           // every test passed
  bool timed_out = false;
  std::vector<std::string> diagnostics;

  nlohmann::json to_json() const;
  static TestOutcome from_json(const nlohmann::json& j);
};

// The single-line record the probe prints.
struct ProbeResult {
  Backend backend = Backend::Trace;
  std::vector<std::uint64_t> counts;
  std::optional<int> exit_status;
  std::optional<std::map<std::string, std::string>> verdicts;  // node id -> passed | failed | skipped
  std::optional<std::string> error;                            // COMMAND_NOT_FOUND, BACKEND_UNAVAILABLE, ...
  std::string detail;

  // Throws Error{SchemaViolation}.
  static ProbeResult parse(std::string_view line);
  nlohmann::json to_json() const;
};

struct ProbeRequest {
  std::vector<std::string> command;  // test command, tests appended
  std::filesystem::path workdir;
  std::map<std::string, std::string> env;
  Backend backend = Backend::Trace;
  std::size_t repeats = 1;
  std::chrono::milliseconds timeout{60000};
  std::string label;  // "<task>:<variant>", for canned probes and logs
};

class Probe {
 public:
  virtual ~Probe() = default;
  // Throws Error{Timeout}, Error{CommandNotFound}, Error{SchemaViolation}.
  virtual ProbeResult measure(const ProbeRequest& request) = 0;
};

// Runs `<probe...> --backend B --repeats N -- <command>` and reads the last
// stdout line. Optionally wraps the whole invocation (container runs).
class SubprocessProbe : public Probe {
 public:
  explicit SubprocessProbe(std::vector<std::string> probe_command, std::vector<std::string> wrapper = {});
  ProbeResult measure(const ProbeRequest& request) override;
  SubprocessProbe wrapped(std::vector<std::string> wrapper) const { return SubprocessProbe(probe_, std::move(wrapper)); }

 private:
  std::vector<std::string> probe_;
  std::vector<std::string> wrapper_;
};

// Runs the test command itself with no counting: the exit status only, no
// verdicts, no counts. For pass/fail checks where instructions do not matter.
// Wrapped container runs need a SubprocessProbe.
class UnmeasuredProbe : public Probe {
 public:
  ProbeResult measure(const ProbeRequest& request) override;
};

// Returns prepared results by label; for runs without a real probe.
class CannedProbe : public Probe {
 public:
  void set(const std::string& label, ProbeResult result);
  // Every test passes with the given per-repeat counts.
  void set_passing(const std::string& label, std::vector<std::uint64_t> counts);
  ProbeResult measure(const ProbeRequest& request) override;
  std::vector<ProbeRequest> requests() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, ProbeResult> results_;
  std::vector<ProbeRequest> requests_;
};

enum class SandboxMode { Auto, Container, Local };
std::string to_string(SandboxMode m);
SandboxMode sandbox_from_string(std::string_view s);  // throws Error{ConfigInvalid}

struct EvalConfig {
  std::vector<std::string> probe_command = {"instr-probe"};
  Backend backend = Backend::Trace;
  std::optional<std::size_t> repeats;  // default: 1 for trace, 3 for hardware
  std::chrono::milliseconds per_test_timeout{60000};
  SandboxMode sandbox = SandboxMode::Auto;
  std::string container_runtime = "docker";
  std::string local_python = "python3";  // replaces a leading "python" in local runs

  std::size_t effective_repeats() const;
};

struct TaskRun {
  TestOutcome outcome;
  std::optional<MeasurementRecord> measurement;  // absent when the probe produced no counts
  std::string sandbox;                           // "container" or "local"
};

// Copies the bundle's project, applies the variant's change (ground truth
// diff, the given patch, or nothing), runs the tests under the probe.
// A failing or timed-out run is reported in the outcome, not thrown.
// Throws Error{PatchApplyFailure}, Error{EnvSetupFailure}.
TaskRun run_task(const std::filesystem::path& bundle_dir, Variant variant, const ProjectPatch* patch, Probe& probe,
                 const EvalConfig& config = {});

// The test half of run_task, on a project tree prepared by the caller.
// `run` carries diagnostics gathered so far.
TaskRun run_bundle_tests(const TaskBundle& bundle, const std::filesystem::path& project, Variant variant, Probe& probe,
                         const EvalConfig& config = {}, TaskRun run = {});

// Rate of outcomes with pass_at_1. Throws Error{EmptySet}.
double pass_at_1(const std::vector<TestOutcome>& outcomes);
// (baseline - method) / baseline. Throws Error{ZeroBaseline}.
double opt_rate(double baseline_count, double method_count);
// ground truth / method. Throws Error{ZeroMethodCount}.
double speedup(double gt_count, double method_count);

struct TaskEval {
  std::string task_id;
  TestOutcome outcome;
  std::vector<MeasurementRecord> records;
  std::optional<double> opt_rate;
  std::optional<double> speedup;
};

struct Exclusion {
  std::string task_id;
  std::string reason;
};

struct EvalReport {
  std::vector<TaskEval> tasks;
  double pass_at_1 = 0;
  std::optional<double> mean_opt_rate;  // over included tasks
  std::optional<double> mean_speedup;   // over included tasks with a ground truth count
  std::vector<Exclusion> excluded;
  Backend backend = Backend::Trace;

  nlohmann::json to_json() const;
  std::string summary_table() const;
};

// Outcomes are the method's first-sample results, one per task. Tasks
// failing correctness are excluded from efficiency means. Throws
// Error{EmptySet}, Error{MissingBaseline}, Error{BackendMismatch}.
EvalReport aggregate(const std::vector<MeasurementRecord>& records, const std::vector<TestOutcome>& outcomes);

struct EvalJob {
  std::filesystem::path bundle_dir;
  std::optional<ProjectPatch> patch;  // method variant
};

// Runs the method and ground truth variants of every job on up to `workers`
// threads (each measurement is one probe process), then aggregates with the
// given baseline records.
EvalReport evaluate(const std::vector<EvalJob>& jobs, const std::vector<MeasurementRecord>& baseline, Probe& probe,
                    const EvalConfig& config = {}, std::size_t workers = 1);

}  // namespace peace
