#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peace/edit_history.hpp"
#include "peace/model_gateway.hpp"
#include "peace/prompts.hpp"

namespace peace {

inline constexpr const char* kFragmentsTool = "get_fragments_range";

struct AgentConfig {
  int max_iterations = 10;
  std::size_t fragments_per_call_cap = 10;
  std::size_t max_edit_lines = 200;  // per side, when rendered into a prompt
  ModelParams params;
  RetryPolicy retry;
};

struct FragmentRange {
  std::size_t first = 0;  // 1-based, inclusive
  std::size_t last = 0;
  bool clamped = false;
  std::vector<const RankedEdit*> entries;
};

// Entries i..j (1-based, inclusive). j is clamped to the list length, and to
// i + cap - 1 when cap > 0, setting `clamped`. Throws Error{EmptyRange} when
// i exceeds the length and std::invalid_argument when i < 1 or j < i.
FragmentRange get_fragments_range(const RankedEdits& ranked, long i, long j, std::size_t cap = 0);

ToolSchema fragments_tool_schema();

struct AgentTurn {
  std::string kind;  // tool_call | answer | reprompt | summarize | abort
  nlohmann::json response;
  std::string tool_result;
};

struct AgentTranscript {
  std::vector<AgentTurn> turns;
  int tool_calls = 0;
  // empty | answered | summarized | aborted | model_failure
  std::string outcome;
  std::vector<std::string> diagnostics;

  nlohmann::json to_json() const;
};

struct SelectedEdit {
  std::size_t index = 0;  // 1-based position in the ranked list
  EditRecord edit;
  std::string rationale;
};

struct ValidAssociatedEdits {
  std::vector<SelectedEdit> edits;

  std::vector<EditRecord> records() const;
  nlohmann::json to_json() const;
};

struct AgentResult {
  ValidAssociatedEdits valid;
  AgentTranscript transcript;
};

// Messages of the first request: a system message with the task and a user
// message with the definition, tool description, output format and function.
std::vector<Message> agent_opening(const FunctionRecord& function, std::size_t edit_count,
                                   const AgentConfig& config, const PromptLibrary& prompts);

// Runs the tool loop until the model answers or max_iterations tool calls
// have been served, then asks once for a summary without tools. Model or
// format failures yield an empty selection; the transcript says why.
AgentResult identify_valid_edits(const FunctionRecord& function, const RankedEdits& ranked, ChatProvider& model,
                                 const AgentConfig& config = {}, InteractionLog* log = nullptr,
                                 const PromptLibrary& prompts = PromptLibrary::builtin());

}  // namespace peace
