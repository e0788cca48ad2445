#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peace/bench_builder.hpp"
#include "peace/eval_harness.hpp"
#include "peace/model_gateway.hpp"
#include "peace/optimize_pipeline.hpp"
#include "peace/relevance.hpp"

namespace peace {

// One chat endpoint. kind: "scripted" (canned transcript), "echo", "remote".
struct ProviderSpec {
  std::string kind = "scripted";
  std::optional<std::filesystem::path> script;  // scripted
  std::size_t echo_block = 1;                   // echo
  RemoteSettings remote;                        // remote
};

// kind: "hashing" or "remote".
struct EmbedderSpec {
  std::string kind = "hashing";
  std::size_t dimension = 256;
  std::uint64_t seed = 0x5eed;
  RemoteSettings remote;
};

// Every key is optional in the file; missing keys take the defaults below.
// Unknown keys are rejected.
struct PipelineConfig {
  ProviderSpec chat;
  // Per-role overrides of `chat`: agent, generator, optimizer, integrator,
  // dependency, confirm.
  std::map<std::string, ProviderSpec> roles;
  EmbedderSpec embedder;

  double relevance_threshold = 0.5;
  double dependency_weight = 0.5;
  std::string dependency_scorer = "model";  // or "fallback"
  std::optional<std::size_t> graph_depth;   // unbounded when absent

  AgentConfig agent;
  bool use_valid_edits = true;
  bool use_retrieval = true;
  std::size_t retrieval_k = kDefaultRetrievalK;
  GenerationConfig generation;

  FilterConfig bench;
  EvalConfig eval;
  std::size_t workers = 1;
  // Run the bundle's tests on the optimized tree; per function additionally
  // gates every applied edit (a failing edit is reverted).
  bool validate_tests = true;
  bool validate_per_function = false;

  std::optional<std::filesystem::path> prompts_dir;
  std::optional<std::filesystem::path> external_snippets;
  std::optional<std::filesystem::path> knowledge_index;

  static const std::vector<std::string>& role_names();
  // Throws Error{ConfigInvalid}.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

// Replaces ${NAME} and ${NAME:-default} in every string value. Throws
// Error{ConfigInvalid} for an unset variable without a default.
nlohmann::json interpolate_env(const nlohmann::json& j);

// Owns the providers a config describes. Roles without an override share the
// `chat` provider, and with it one scripted transcript. Chat providers are
// built on first use, so embedder-only commands need no chat settings.
class ProviderSet {
 public:
  explicit ProviderSet(const PipelineConfig& config);
  ChatProvider& chat(const std::string& role);
  Embedder& embedder() { return *embedder_; }

 private:
  std::unique_ptr<ChatProvider> make(const ProviderSpec& spec);
  ProviderSpec chat_spec_;
  std::map<std::string, ProviderSpec> role_specs_;
  std::mutex mu_;
  std::shared_ptr<ChatProvider> shared_;
  std::map<std::string, std::shared_ptr<ChatProvider>> by_role_;
  std::unique_ptr<Embedder> embedder_;
};

}  // namespace peace
