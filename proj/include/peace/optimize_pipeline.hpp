#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peace/call_graph.hpp"
#include "peace/edit_agent.hpp"
#include "peace/edit_history.hpp"
#include "peace/knowledge_store.hpp"
#include "peace/model_gateway.hpp"
#include "peace/prompts.hpp"
#include "peace/relevance.hpp"

namespace peace {

enum class Stage { Initial, Optimized, Integrated };
std::string to_string(Stage stage);

struct EditCandidate {
  std::string function_id;
  std::string new_body;  // dedented, starts at `def`
  Stage stage = Stage::Initial;
  std::string provenance;  // provider + prompt, plus the chosen alternative if any
  bool fallback = false;   // produced by a degradation path, not by the model
  std::vector<std::string> diagnostics;

  nlohmann::json to_json() const;
};

struct Alternative {
  std::string label;  // "initial edit", "internal: <id>", "external: <id>"
  std::string body;
  double relevance = 1.0;  // retrieval similarity; the initial edit is never dropped
};

struct OptimizerPrompt {
  std::string original;
  std::vector<Alternative> alternatives;

  std::string render(const PromptLibrary& prompts = PromptLibrary::builtin()) const;
};

struct GenerationConfig {
  ModelParams params;
  RetryPolicy retry;
  // Approximate prompt size limit; 0 disables. Over budget, the lowest-ranked
  // associated edits (initial edit prompt) or the least similar snippets
  // (optimizer prompt) are left out.
  std::size_t context_budget_tokens = 0;
};

// Keeps the prompt within `budget` tokens by dropping alternatives after the
// first, least relevant first. Returns the number dropped.
std::size_t fit_optimizer_prompt(OptimizerPrompt& prompt, std::size_t budget,
                                 const PromptLibrary& prompts = PromptLibrary::builtin());

// Parses a model reply into a standalone function: the first fenced block,
// else the whole text. Returns the dedented `def` span (decorators dropped).
std::optional<FunctionRecord> extract_function(const std::string& reply);

// Whether a call site can bind to the function's parameters. Star arguments
// at the site are assumed compatible; methods skip the implicit receiver
// unless decorated as static.
bool call_compatible(const FunctionRecord& fn, const CallSite& site);

// Call sites in the corpus that resolve to `function_id`.
std::vector<CallSite> call_sites_of(const Corpus& corpus, const CallGraph& graph, const std::string& function_id);

// Step 1. Keeps the name and parameter count; one reprompt on violation, then
// Error{UnparseableCandidate}. Model failures surface as Error{ModelFailure}.
EditCandidate generate_initial_edit(const FunctionRecord& fn, const std::vector<EditRecord>& valid_edits,
                                    const std::optional<std::string>& task_prompt, ChatProvider& model,
                                    const GenerationConfig& config = {}, InteractionLog* log = nullptr,
                                    const PromptLibrary& prompts = PromptLibrary::builtin());

// Step 2 to 3 glue: initial candidate first, then internal and external
// bodies, dropping any whose normalized text was already seen.
OptimizerPrompt augment(const FunctionRecord& fn, const EditCandidate& initial, const RetrievalResult& internal,
                        const RetrievalResult& external);

// Step 3. Model failure or an unusable reply falls back to the initial
// candidate with `fallback` set.
EditCandidate propose_optimized(const FunctionRecord& fn, const OptimizerPrompt& prompt, const EditCandidate& initial,
                                ChatProvider& optimizer, const GenerationConfig& config = {},
                                InteractionLog* log = nullptr,
                                const PromptLibrary& prompts = PromptLibrary::builtin());

// Step 4. The result keeps the public name and fits every call site; one
// reprompt on violation, then the original body (a no-op) with `fallback` set.
EditCandidate integrate(const FunctionRecord& fn, const EditCandidate& optimized, const std::vector<CallSite>& sites,
                        ChatProvider& model, const GenerationConfig& config = {}, InteractionLog* log = nullptr,
                        const PromptLibrary& prompts = PromptLibrary::builtin());

// Appends before -> after for the function. No-ops and exact duplicates are
// rejected; returns whether the history grew.
bool append_history(std::vector<EditRecord>& history, const FunctionRecord& fn, const EditCandidate& integrated,
                    const std::string& origin);

struct PatchEntry {
  std::string function_id;
  std::string path;
  std::string old_body;
  std::string new_body;

  bool noop() const { return old_body == new_body; }
  bool operator==(const PatchEntry&) const = default;
};

struct ProjectPatch {
  std::string base_revision;
  std::vector<PatchEntry> entries;  // sequence order

  nlohmann::json to_json() const;
  static ProjectPatch from_json(const nlohmann::json& j);
};

using FileMap = std::map<std::string, std::string>;  // relative path -> content

// Replaces the function's `def` span with `new_body` re-indented to its column.
std::string splice_function(const std::string& content, const FunctionRecord& fn, const std::string& new_body);

// Applies entries in order. An entry whose function already has new_body is
// skipped, so re-application is a no-op. Throws Error{PatchApplyFailure} when
// a function is missing or holds neither body.
FileMap apply_project_patch(const FileMap& files, const ProjectPatch& patch);

// Unified diff (a/ b/ prefixes) of every file that differs.
std::string files_diff(const FileMap& before, const FileMap& after);

FileMap read_python_files(const std::filesystem::path& root);
Corpus corpus_from_files(const FileMap& files);

struct PipelineOptions {
  bool use_valid_edits = true;  // false: no associated edits
  bool use_retrieval = true;    // false: no knowledge augmentation
  std::size_t retrieval_k = kDefaultRetrievalK;
  AgentConfig agent;
  GenerationConfig generation;
  std::optional<std::string> task_prompt;
  std::string run_label = "peace";  // origin of history records this run appends
};

// Model endpoints per role; they may all be the same provider.
struct PipelineModels {
  ChatProvider* agent = nullptr;
  ChatProvider* generator = nullptr;
  ChatProvider* optimizer = nullptr;
  ChatProvider* integrator = nullptr;
  RelevanceScorer* edit_scorer = nullptr;  // ranks history for the agent
  Embedder* embedder = nullptr;            // retrieval queries
};

// Optional gate run after each applied edit; returns a failure reason, or
// nullopt to accept. A rejected edit is reverted.
using StepGate = std::function<std::optional<std::string>(const FileMap&)>;

struct StepReport {
  std::string function_id;
  std::size_t ranked_edits = 0;
  std::size_t valid_edits = 0;
  std::string agent_outcome;
  std::vector<std::string> retrieved;
  std::optional<EditCandidate> initial, optimized, integrated;
  bool applied = false;
  bool parseable = true;  // corpus parses after this step
  std::vector<std::string> diagnostics;

  nlohmann::json to_json() const;
};

struct RunReport {
  std::vector<StepReport> steps;
  nlohmann::json to_json() const;
};

struct RunResult {
  ProjectPatch patch;
  FileMap files;  // working tree after the run
  std::vector<EditRecord> history;
  RunReport report;
};

// Processes the sequence in order. Each accepted edit is applied to the
// working files before the next function; a failed function yields a no-op
// entry and the run continues.
RunResult run_sequence(const FileMap& files, const std::vector<std::string>& sequence,
                       std::vector<EditRecord> history, KnowledgeIndex& knowledge, const PipelineModels& models,
                       const PipelineOptions& options, InteractionLog* log = nullptr, const StepGate& gate = {},
                       const PromptLibrary& prompts = PromptLibrary::builtin());

}  // namespace peace
