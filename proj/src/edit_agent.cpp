#include "peace/edit_agent.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "peace/error.hpp"
#include "peace/util/text.hpp"

namespace peace {

namespace {

std::string truncate_lines(const std::string& text, std::size_t max_lines) {
  auto lines = util::split_lines(text);
  if (lines.size() <= max_lines) return text;
  auto dropped = lines.size() - max_lines;
  lines.resize(max_lines);
  return util::join_lines(lines, true) + "... (" + std::to_string(dropped) + " more lines)";
}

std::optional<long> as_index(const nlohmann::json& args, const char* key) {
  if (!args.is_object() || !args.contains(key)) return std::nullopt;
  const auto& v = args[key];
  if (v.is_number_integer()) return v.get<long>();
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (std::floor(d) == d) return static_cast<long>(d);
  }
  return std::nullopt;
}

std::string render_range(const FragmentRange& range, std::size_t total, const AgentConfig& config,
                         const PromptLibrary& prompts) {
  std::string out = "Edits " + std::to_string(range.first) + ".." + std::to_string(range.last) + " of " +
                    std::to_string(total);
  if (range.clamped) out += " (range clamped)";
  out += ":\n";
  std::size_t index = range.first;
  for (const auto* r : range.entries) {
    const auto& e = r->edit;
    auto message_lines = util::split_lines(e.message);
    out += "\n" + prompts.render("edit_fragment",
                                 {{"index", std::to_string(index++)},
                                  {"origin", e.origin.substr(0, 12)},
                                  {"path", e.path},
                                  {"function_suffix", e.function_id ? " (" + *e.function_id + ")" : ""},
                                  {"message", message_lines.empty() ? "" : message_lines[0]},
                                  {"before", truncate_lines(e.before, config.max_edit_lines)},
                                  {"after", truncate_lines(e.after, config.max_edit_lines)}}) +
           "\n";
  }
  return out;
}

struct ParsedAnswer {
  bool ok = false;
  std::string problem;
  std::vector<std::pair<long, std::string>> picks;
};

ParsedAnswer parse_answer(const std::string& text) {
  ParsedAnswer a;
  auto j = parse_json_reply(text);
  if (!j) {
    a.problem = "the reply is not a JSON object";
    return a;
  }
  if (!j->contains("valid_edits") || !(*j)["valid_edits"].is_array()) {
    a.problem = "the JSON object has no \"valid_edits\" list";
    return a;
  }
  for (auto& item : (*j)["valid_edits"]) {
    std::optional<long> idx;
    std::string rationale;
    if (item.is_number()) {
      idx = as_index(nlohmann::json{{"index", item}}, "index");
    } else if (item.is_object()) {
      idx = as_index(item, "index");
      if (item.contains("rationale") && item["rationale"].is_string()) rationale = item["rationale"];
    }
    if (!idx) {
      a.problem = "an entry of \"valid_edits\" has no integer index";
      return a;
    }
    a.picks.emplace_back(*idx, rationale);
  }
  a.ok = true;
  return a;
}

}  // namespace

FragmentRange get_fragments_range(const RankedEdits& ranked, long i, long j, std::size_t cap) {
  if (i < 1 || j < i) throw std::invalid_argument("fragment range needs 1 <= i <= j");
  auto n = static_cast<long>(ranked.size());
  if (i > n) throw Error(ErrorCode::EmptyRange, "i=" + std::to_string(i) + " exceeds " + std::to_string(n));
  FragmentRange r;
  r.first = static_cast<std::size_t>(i);
  long last = j;
  if (last > n) {
    last = n;
    r.clamped = true;
  }
  if (cap > 0 && last - i + 1 > static_cast<long>(cap)) {
    last = i + static_cast<long>(cap) - 1;
    r.clamped = true;
  }
  r.last = static_cast<std::size_t>(last);
  for (long k = i; k <= last; ++k) r.entries.push_back(&ranked[static_cast<std::size_t>(k - 1)]);
  return r;
}

ToolSchema fragments_tool_schema() {
  return {kFragmentsTool,
          "Return historical edits i through j (1-based, inclusive) in descending relevance order.",
          {{"type", "object"},
           {"properties", {{"i", {{"type", "integer"}, {"minimum", 1}}}, {"j", {{"type", "integer"}, {"minimum", 1}}}}},
           {"required", {"i", "j"}}}};
}

nlohmann::json AgentTranscript::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (auto& t : turns) {
    nlohmann::json jt = {{"kind", t.kind}, {"response", t.response}};
    if (!t.tool_result.empty()) jt["tool_result"] = t.tool_result;
    arr.push_back(std::move(jt));
  }
  return {{"turns", arr}, {"tool_calls", tool_calls}, {"outcome", outcome}, {"diagnostics", diagnostics}};
}

std::vector<EditRecord> ValidAssociatedEdits::records() const {
  std::vector<EditRecord> out;
  for (auto& e : edits) out.push_back(e.edit);
  return out;
}

nlohmann::json ValidAssociatedEdits::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (auto& e : edits) arr.push_back({{"index", e.index}, {"rationale", e.rationale}, {"edit", e.edit.to_json()}});
  return {{"valid_edits", arr}};
}

std::vector<Message> agent_opening(const FunctionRecord& function, std::size_t edit_count, const AgentConfig& config,
                                   const PromptLibrary& prompts) {
  PromptVars vars = {{"function_id", function.id},
                     {"edit_count", std::to_string(edit_count)},
                     {"per_call_cap", std::to_string(config.fragments_per_call_cap)},
                     {"max_iterations", std::to_string(config.max_iterations)},
                     {"function_body", function.body}};
  std::string user = prompts.render("agent_definition", vars) + "\n\n" + prompts.render("agent_tool", vars) +
                     "\n\n" + prompts.render("agent_output", vars) + "\n\n" +
                     prompts.render("agent_function", vars);
  return {{"system", prompts.render("agent_system", vars), std::nullopt, {}}, {"user", user, std::nullopt, {}}};
}

AgentResult identify_valid_edits(const FunctionRecord& function, const RankedEdits& ranked, ChatProvider& model,
                                 const AgentConfig& config, InteractionLog* log, const PromptLibrary& prompts) {
  if (config.max_iterations < 1) throw std::invalid_argument("max_iterations must be at least 1");
  AgentResult result;
  auto& tr = result.transcript;
  if (ranked.empty()) {
    tr.outcome = "empty";
    return result;
  }

  auto messages = agent_opening(function, ranked.size(), config, prompts);
  bool reprompted = false;
  bool summarizing = false;
  ModelParams params = config.params;
  params.purpose = "agent:" + function.id;

  auto fail = [&](const std::string& outcome, const std::string& why) {
    tr.outcome = outcome;
    tr.diagnostics.push_back(why);
    tr.turns.push_back({"abort", nlohmann::json(why), {}});
    spdlog::warn("edit agent for {}: {}", function.id, why);
    result.valid.edits.clear();
    return result;
  };
  auto reprompt = [&](const ModelResponse& resp, const std::string& problem) {
    reprompted = true;
    tr.turns.push_back({"reprompt", resp.to_json(), problem});
    messages.push_back({"assistant", resp.kind == ModelResponse::Kind::Text ? resp.content : "", {}, {}});
    if (resp.kind == ModelResponse::Kind::ToolCall) messages.back().tool_call = resp.tool_call;
    if (resp.kind == ModelResponse::Kind::ToolCall)
      messages.push_back({"tool", "error: " + problem, std::nullopt, resp.tool_call.id});
    messages.push_back({"user", prompts.render("agent_reprompt", {{"problem", problem}}), std::nullopt, {}});
  };

  while (true) {
    ModelRequest req;
    req.messages = messages;
    req.params = params;
    if (!summarizing) req.tools.push_back(fragments_tool_schema());

    ModelResponse resp;
    try {
      resp = complete(req, model, config.retry, log);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ScriptExhausted) throw;
      // A tool call while summarizing is a format failure as well.
      return fail(summarizing ? "aborted" : "model_failure", e.what());
    }

    if (resp.kind == ModelResponse::Kind::ToolCall) {
      const auto& call = resp.tool_call;
      auto i = as_index(call.arguments, "i");
      auto j = as_index(call.arguments, "j");
      std::string problem;
      if (call.name != kFragmentsTool) problem = "unknown tool '" + call.name + "'";
      else if (!i || !j) problem = "arguments i and j must be integers";
      else if (*i < 1 || *j < *i) problem = "the range must satisfy 1 <= i <= j";
      if (!problem.empty()) {
        if (reprompted) return fail("aborted", "malformed tool call after reprompt: " + problem);
        reprompt(resp, problem);
        continue;
      }
      std::string tool_result;
      try {
        tool_result = render_range(get_fragments_range(ranked, *i, *j, config.fragments_per_call_cap),
                                   ranked.size(), config, prompts);
      } catch (const Error&) {
        tool_result = "EMPTY_RANGE: there are only " + std::to_string(ranked.size()) + " edits";
      }
      ++tr.tool_calls;
      tr.turns.push_back({"tool_call", resp.to_json(), tool_result});
      Message assistant{"assistant", "", call, {}};
      messages.push_back(assistant);
      messages.push_back({"tool", tool_result, std::nullopt, call.id});
      if (tr.tool_calls >= config.max_iterations) {
        summarizing = true;
        tr.turns.push_back({"summarize", nlohmann::json(nullptr), {}});
        messages.push_back({"user", prompts.render("agent_summarize", {}), std::nullopt, {}});
      }
      continue;
    }

    auto answer = parse_answer(resp.content);
    if (!answer.ok) {
      if (reprompted) return fail("aborted", "malformed answer after reprompt: " + answer.problem);
      reprompt(resp, answer.problem);
      continue;
    }
    tr.turns.push_back({"answer", resp.to_json(), {}});
    tr.outcome = summarizing ? "summarized" : "answered";
    std::set<long> seen;
    for (auto& [idx, rationale] : answer.picks) {
      if (idx < 1 || idx > static_cast<long>(ranked.size())) {
        tr.diagnostics.push_back("dropped edit #" + std::to_string(idx) + ": not in the ranked list");
        continue;
      }
      if (!seen.insert(idx).second) continue;
      result.valid.edits.push_back(
          {static_cast<std::size_t>(idx), ranked[static_cast<std::size_t>(idx - 1)].edit, rationale});
    }
    return result;
  }
}

}  // namespace peace
