#include "peace/optimize_pipeline.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "peace/diff.hpp"
#include "peace/error.hpp"
#include "peace/util/text.hpp"

namespace peace {

namespace {

using Kind = ModelResponse::Kind;

// The function text with its first line at column 0 and the body shifted by
// the same amount, so methods read like top-level functions.
std::string function_source(const FunctionRecord& fn) {
  auto lines = util::split_lines(fn.body);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::size_t strip = 0;
    while (strip < fn.column && strip < lines[i].size() && lines[i][strip] == ' ') ++strip;
    lines[i] = lines[i].substr(strip);
  }
  return util::join_lines(lines, false);
}

bool is_static(const FunctionRecord& fn) {
  return std::any_of(fn.decorators.begin(), fn.decorators.end(),
                     [](const std::string& d) { return d.find("staticmethod") != std::string::npos; });
}

// A call shaped like the original's plain positional use, so functions with
// no call sites in the corpus still keep a usable signature.
CallSite signature_site(const FunctionRecord& fn) {
  CallSite s;
  s.callee = fn.name;
  bool method = !fn.class_name.empty() && !is_static(fn);
  for (std::size_t i = method ? 1 : 0; i < fn.params.size(); ++i) {
    auto& p = fn.params[i];
    if ((p.kind == Parameter::Kind::Positional || p.kind == Parameter::Kind::PositionalOnly) && !p.has_default)
      ++s.positional_args;
    if (p.kind == Parameter::Kind::KeywordOnly && !p.has_default) s.keyword_args.push_back(p.name);
  }
  return s;
}

std::string describe_site(const CallSite& s) {
  std::string out = s.callee + "(";
  std::vector<std::string> parts;
  if (s.positional_args) parts.push_back(std::to_string(s.positional_args) + " positional");
  for (auto& k : s.keyword_args) parts.push_back(k + "=...");
  if (s.star_args) parts.push_back("*args");
  if (s.star_kwargs) parts.push_back("**kwargs");
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ", " : "") + parts[i];
  return out + ")";
}

// Renames the def header and direct recursive calls.
std::string rename_function(const std::string& body, const std::string& from, const std::string& to) {
  if (from == to) return body;
  std::regex call("\\b" + from + "\\s*\\(");
  return std::regex_replace(body, call, to + "(");
}

struct Attempt {
  std::optional<FunctionRecord> fn;
  std::string problem;
};

// Asks for a function twice at most; `check` returns a problem or "".
Attempt ask_for_function(std::vector<Message> messages, const std::string& purpose, ChatProvider& model,
                         const GenerationConfig& config, InteractionLog* log, const PromptLibrary& prompts,
                         const std::string& name, std::size_t arity,
                         const std::function<std::string(const FunctionRecord&)>& check) {
  Attempt last;
  for (int attempt = 0; attempt < 2; ++attempt) {
    ModelRequest req{messages, {}, config.params};
    req.params.purpose = purpose;
    auto resp = complete(req, model, config.retry, log, Kind::Text);
    auto rec = extract_function(resp.content);
    last.problem = rec ? check(*rec) : "the reply does not contain exactly one parseable Python function";
    if (last.problem.empty()) {
      last.fn = std::move(rec);
      return last;
    }
    messages.push_back({"assistant", resp.content, std::nullopt, {}});
    messages.push_back({"user",
                        prompts.render("code_reprompt",
                                       {{"problem", last.problem}, {"name", name}, {"arity", std::to_string(arity)}}),
                        std::nullopt,
                        {}});
  }
  return last;
}

std::string render_edits(const std::vector<EditRecord>& edits, const PromptLibrary& prompts) {
  std::string out;
  for (std::size_t i = 0; i < edits.size(); ++i) {
    const auto& e = edits[i];
    auto lines = util::split_lines(e.message);
    out += "\n" + prompts.render("edit_fragment", {{"index", std::to_string(i + 1)},
                                                   {"origin", e.origin.substr(0, 12)},
                                                   {"path", e.path},
                                                   {"function_suffix", e.function_id ? " (" + *e.function_id + ")" : ""},
                                                   {"message", lines.empty() ? "" : lines[0]},
                                                   {"before", e.before},
                                                   {"after", e.after}}) +
           "\n";
  }
  return out;
}

std::string prompt_tag(const std::string& name, const PromptLibrary& prompts) {
  return name + "@v" + prompts.version();
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Initial: return "initial";
    case Stage::Optimized: return "optimized";
    case Stage::Integrated: return "integrated";
  }
  return "?";
}

nlohmann::json EditCandidate::to_json() const {
  return {{"function_id", function_id}, {"stage", to_string(stage)}, {"new_body", new_body},
          {"provenance", provenance},   {"fallback", fallback},      {"diagnostics", diagnostics}};
}

std::string OptimizerPrompt::render(const PromptLibrary& prompts) const {
  std::string alts;
  for (std::size_t i = 0; i < alternatives.size(); ++i) {
    if (i) alts += "\n\n";
    alts += prompts.render("alternative", {{"index", std::to_string(i + 1)},
                                           {"label", alternatives[i].label},
                                           {"body", alternatives[i].body}});
  }
  return prompts.render("optimize", {{"original", original}, {"alternatives", alts}});
}

std::optional<FunctionRecord> extract_function(const std::string& reply) {
  auto fenced = util::first_fenced_block(reply);
  auto rec = parse_function_definition(fenced.found ? fenced.body : reply);
  if (!rec) return std::nullopt;
  rec->body = function_source(*rec);
  return rec;
}

bool call_compatible(const FunctionRecord& fn, const CallSite& site) {
  if (site.star_args || site.star_kwargs) return true;
  std::vector<Parameter> params = fn.params;
  bool method = !fn.class_name.empty() && !is_static(fn);
  if (method && !params.empty() &&
      (params[0].kind == Parameter::Kind::Positional || params[0].kind == Parameter::Kind::PositionalOnly))
    params.erase(params.begin());

  std::vector<const Parameter*> slots;
  bool var_positional = false, var_keyword = false;
  for (auto& p : params) {
    if (p.kind == Parameter::Kind::Positional || p.kind == Parameter::Kind::PositionalOnly) slots.push_back(&p);
    if (p.kind == Parameter::Kind::VarPositional) var_positional = true;
    if (p.kind == Parameter::Kind::VarKeyword) var_keyword = true;
  }
  if (site.positional_args > slots.size() && !var_positional) return false;
  std::set<std::string> bound;
  for (std::size_t i = 0; i < std::min(site.positional_args, slots.size()); ++i) bound.insert(slots[i]->name);
  for (auto& kw : site.keyword_args) {
    auto it = std::find_if(params.begin(), params.end(), [&](const Parameter& p) {
      return p.name == kw && (p.kind == Parameter::Kind::Positional || p.kind == Parameter::Kind::KeywordOnly);
    });
    if (it == params.end()) {
      if (!var_keyword) return false;
      continue;
    }
    if (!bound.insert(kw).second) return false;
  }
  for (auto& p : params) {
    bool required = !p.has_default && p.kind != Parameter::Kind::VarPositional && p.kind != Parameter::Kind::VarKeyword;
    if (required && !bound.count(p.name)) return false;
  }
  return true;
}

std::vector<CallSite> call_sites_of(const Corpus& corpus, const CallGraph& graph, const std::string& function_id) {
  std::vector<CallSite> out;
  for (auto& edge : graph.edges()) {
    if (edge.callee != function_id) continue;
    const auto* caller = corpus.find_function(edge.caller);
    if (!caller) continue;
    for (auto& site : edge.sites)
      for (auto& c : caller->calls)
        if (c.span == site.span && caller->path == site.path) out.push_back(c);
  }
  return out;
}

EditCandidate generate_initial_edit(const FunctionRecord& fn, const std::vector<EditRecord>& valid_edits,
                                    const std::optional<std::string>& task_prompt, ChatProvider& model,
                                    const GenerationConfig& config, InteractionLog* log,
                                    const PromptLibrary& prompts) {
  auto source = function_source(fn);
  bool has_task = task_prompt && !util::trim(*task_prompt).empty();
  std::string instruction = has_task ? *task_prompt : prompts.raw("generic_instruction");
  auto render_user = [&](const std::vector<EditRecord>& edits) {
    std::string section =
        edits.empty() ? "" : prompts.render("valid_edits_section", {{"edits", render_edits(edits, prompts)}});
    return prompts.render("initial_edit",
                          {{"instruction", instruction}, {"function_body", source}, {"valid_edits_section", section}});
  };
  std::vector<EditRecord> shown = valid_edits;
  std::size_t dropped = 0;
  if (config.context_budget_tokens) {
    // Edits arrive in rank order; later ones go first.
    std::vector<BudgetItem> items, none;
    for (std::size_t i = 0; i < valid_edits.size(); ++i) items.push_back({{}, -static_cast<double>(i), i});
    auto measure = [&] {
      shown.clear();
      for (auto& it : items) shown.push_back(valid_edits[it.index]);
      return estimate_tokens(render_user(shown));
    };
    dropped = fit_to_budget(measure, items, none, config.context_budget_tokens);
    measure();
  }
  std::string user = render_user(shown);

  auto arity = fn.params.size();
  auto attempt = ask_for_function({{"user", user, std::nullopt, {}}}, "initial_edit:" + fn.id, model, config, log,
                                  prompts, fn.name, arity, [&](const FunctionRecord& c) -> std::string {
                                    if (c.name != fn.name) return "the function must keep the name `" + fn.name + "`";
                                    if (c.params.size() != arity)
                                      return "the function must keep " + std::to_string(arity) + " parameter(s)";
                                    return "";
                                  });
  if (!attempt.fn) throw Error(ErrorCode::UnparseableCandidate, fn.id + ": " + attempt.problem);
  EditCandidate c{fn.id, attempt.fn->body, Stage::Initial, model.name() + "/" + prompt_tag("initial_edit", prompts), false, {}};
  if (!has_task) c.diagnostics.push_back("no task prompt; generic instruction used");
  if (dropped) c.diagnostics.push_back(std::to_string(dropped) + " associated edit(s) left out to fit the context budget");
  return c;
}

OptimizerPrompt augment(const FunctionRecord& fn, const EditCandidate& initial, const RetrievalResult& internal,
                        const RetrievalResult& external) {
  OptimizerPrompt p;
  p.original = function_source(fn);
  std::set<std::string> seen;
  auto add = [&](std::string label, const std::string& body, double relevance) {
    if (seen.insert(util::normalize_code(body)).second) p.alternatives.push_back({std::move(label), body, relevance});
  };
  add("initial edit", initial.new_body, 1.0);
  for (auto& e : internal.entries) add("internal: " + e.snippet.id, e.snippet.body, e.similarity);
  for (auto& e : external.entries) add("external: " + e.snippet.id, e.snippet.body, e.similarity);
  return p;
}

std::size_t fit_optimizer_prompt(OptimizerPrompt& prompt, std::size_t budget, const PromptLibrary& prompts) {
  if (!budget || prompt.alternatives.size() < 2) return 0;
  const auto all = prompt.alternatives;
  std::vector<BudgetItem> none, items;
  for (std::size_t i = 1; i < all.size(); ++i) items.push_back({{}, all[i].relevance, i});
  auto measure = [&] {
    prompt.alternatives.assign(1, all.front());
    for (auto& it : items) prompt.alternatives.push_back(all[it.index]);
    return estimate_tokens(prompt.render(prompts));
  };
  auto removed = fit_to_budget(measure, none, items, budget);
  measure();
  return removed;
}

EditCandidate propose_optimized(const FunctionRecord& fn, const OptimizerPrompt& prompt, const EditCandidate& initial,
                                ChatProvider& optimizer, const GenerationConfig& config, InteractionLog* log,
                                const PromptLibrary& prompts) {
  auto fallback = [&](const std::string& why) {
    EditCandidate c = initial;
    c.stage = Stage::Optimized;
    c.fallback = true;
    c.provenance = "fallback: initial edit";
    c.diagnostics.push_back("optimizer unusable: " + why);
    spdlog::warn("optimizer for {}: {}", fn.id, why);
    return c;
  };
  OptimizerPrompt fitted = prompt;
  auto dropped = fit_optimizer_prompt(fitted, config.context_budget_tokens, prompts);
  ModelRequest req{{{"user", fitted.render(prompts), std::nullopt, {}}}, {}, config.params};
  req.params.purpose = "optimize:" + fn.id;
  ModelResponse resp;
  try {
    resp = complete(req, optimizer, config.retry, log, Kind::Text);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ScriptExhausted) throw;
    return fallback(e.what());
  }
  auto rec = extract_function(resp.content);
  if (!rec) return fallback("the reply does not contain exactly one parseable Python function");
  EditCandidate c{fn.id, rec->body, Stage::Optimized, optimizer.name() + "/" + prompt_tag("optimize", prompts), false, {}};
  auto norm = util::normalize_code(rec->body);
  for (auto& alt : fitted.alternatives)
    if (util::normalize_code(alt.body) == norm) {
      c.provenance += " selected " + alt.label;
      break;
    }
  if (dropped) c.diagnostics.push_back(std::to_string(dropped) + " snippet(s) left out to fit the context budget");
  return c;
}

EditCandidate integrate(const FunctionRecord& fn, const EditCandidate& optimized, const std::vector<CallSite>& sites,
                        ChatProvider& model, const GenerationConfig& config, InteractionLog* log,
                        const PromptLibrary& prompts) {
  auto source = function_source(fn);
  auto noop = [&](const std::string& why) {
    EditCandidate c{fn.id, source, Stage::Integrated, "fallback: original", true, optimized.diagnostics};
    c.diagnostics.push_back("integration failed: " + why);
    spdlog::warn("integration for {}: {}", fn.id, why);
    return c;
  };
  auto parsed = parse_function_definition(optimized.new_body);
  if (!parsed) return noop("the optimized candidate does not parse");
  auto suggested = rename_function(optimized.new_body, parsed->name, fn.name);

  std::vector<CallSite> checks = sites;
  checks.push_back(signature_site(fn));
  std::string site_text;
  if (!sites.empty()) {
    site_text = "\nCall sites in the project:\n";
    for (auto& s : sites) site_text += "- " + describe_site(s) + "\n";
  }
  std::string user = prompts.render("integrate", {{"function_id", fn.id},
                                                  {"name", fn.name},
                                                  {"current", source},
                                                  {"suggested", suggested},
                                                  {"call_sites", site_text}});
  Attempt attempt;
  try {
    attempt = ask_for_function({{"user", user, std::nullopt, {}}}, "integrate:" + fn.id, model, config, log, prompts,
                               fn.name, fn.params.size(), [&](const FunctionRecord& c) -> std::string {
                                 if (c.name != fn.name) return "the function must keep the name `" + fn.name + "`";
                                 // Methods keep their receiver semantics from the original.
                                 FunctionRecord probe = c;
                                 probe.class_name = fn.class_name;
                                 probe.decorators = fn.decorators;
                                 for (auto& s : checks)
                                   if (!call_compatible(probe, s))
                                     return "the parameters no longer fit the call " + describe_site(s);
                                 return "";
                               });
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ScriptExhausted) throw;
    return noop(e.what());
  }
  if (!attempt.fn) return noop(attempt.problem);
  EditCandidate c{fn.id, attempt.fn->body, Stage::Integrated, model.name() + "/" + prompt_tag("integrate", prompts),
                  false, optimized.diagnostics};
  return c;
}

bool append_history(std::vector<EditRecord>& history, const FunctionRecord& fn, const EditCandidate& integrated,
                    const std::string& origin) {
  auto before = function_source(fn);
  if (integrated.fallback || integrated.new_body == before) return false;
  EditRecord rec{origin, fn.path, fn.id, before, integrated.new_body, "optimize " + fn.id};
  for (auto& e : history)
    if (e.function_id == rec.function_id && e.before == rec.before && e.after == rec.after) return false;
  history.push_back(std::move(rec));
  return true;
}

nlohmann::json ProjectPatch::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (auto& e : entries)
    arr.push_back({{"function_id", e.function_id},
                   {"path", e.path},
                   {"old_body", e.old_body},
                   {"new_body", e.new_body},
                   {"noop", e.noop()}});
  return {{"base_revision", base_revision}, {"entries", arr}};
}

ProjectPatch ProjectPatch::from_json(const nlohmann::json& j) {
  ProjectPatch p;
  try {
    p.base_revision = j.value("base_revision", std::string());
    for (auto& e : j.at("entries"))
      p.entries.push_back({e.at("function_id").get<std::string>(), e.at("path").get<std::string>(),
                           e.at("old_body").get<std::string>(), e.at("new_body").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("project patch: ") + e.what());
  }
  return p;
}

std::string splice_function(const std::string& content, const FunctionRecord& fn, const std::string& new_body) {
  return content.substr(0, fn.span.begin) + util::reindent(new_body, fn.column) + content.substr(fn.span.end);
}

FileMap apply_project_patch(const FileMap& files, const ProjectPatch& patch) {
  FileMap out = files;
  for (auto& e : patch.entries) {
    if (e.noop()) continue;
    auto it = out.find(e.path);
    if (it == out.end()) throw Error(ErrorCode::PatchApplyFailure, e.path + " is missing");
    auto unit = parse_unit(e.path, it->second);
    const auto* fn = unit.find(e.function_id);
    if (!fn) throw Error(ErrorCode::PatchApplyFailure, e.function_id + " is not defined in " + e.path);
    auto current = function_source(*fn);
    if (current == e.new_body) continue;
    if (current != e.old_body)
      throw Error(ErrorCode::PatchApplyFailure, e.function_id + " differs from the patch's base body");
    it->second = splice_function(it->second, *fn, e.new_body);
  }
  return out;
}

std::string files_diff(const FileMap& before, const FileMap& after) {
  std::set<std::string> paths;
  for (auto& [p, _] : before) paths.insert(p);
  for (auto& [p, _] : after) paths.insert(p);
  std::string out;
  for (auto& p : paths) {
    auto b = before.find(p);
    auto a = after.find(p);
    out += unified_diff(b == before.end() ? "" : p, a == after.end() ? "" : p, b == before.end() ? "" : b->second,
                        a == after.end() ? "" : a->second);
  }
  return out;
}

FileMap read_python_files(const std::filesystem::path& root) {
  FileMap out;
  for (auto& u : load_corpus_dir(root).units) out[u.path] = u.content;
  return out;
}

Corpus corpus_from_files(const FileMap& files) {
  return make_corpus(std::vector<std::pair<std::string, std::string>>(files.begin(), files.end()));
}

nlohmann::json StepReport::to_json() const {
  nlohmann::json j = {{"function_id", function_id}, {"ranked_edits", ranked_edits}, {"valid_edits", valid_edits},
                      {"agent_outcome", agent_outcome}, {"retrieved", retrieved},     {"applied", applied},
                      {"parseable", parseable},       {"diagnostics", diagnostics}};
  j["initial"] = initial ? initial->to_json() : nlohmann::json(nullptr);
  j["optimized"] = optimized ? optimized->to_json() : nlohmann::json(nullptr);
  j["integrated"] = integrated ? integrated->to_json() : nlohmann::json(nullptr);
  return j;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (auto& s : steps) arr.push_back(s.to_json());
  return {{"steps", arr}};
}

RunResult run_sequence(const FileMap& files, const std::vector<std::string>& sequence,
                       std::vector<EditRecord> history, KnowledgeIndex& knowledge, const PipelineModels& models,
                       const PipelineOptions& options, InteractionLog* log, const StepGate& gate,
                       const PromptLibrary& prompts) {
  if (!models.generator || !models.optimizer || !models.integrator)
    throw std::invalid_argument("run_sequence needs generator, optimizer and integrator models");
  RunResult res;
  res.files = files;
  res.history = std::move(history);
  auto corpus = corpus_from_files(res.files);
  auto graph = build_call_graph(corpus);
  auto all_parse = [](const Corpus& c) {
    return std::all_of(c.units.begin(), c.units.end(), [](const SourceUnit& u) { return u.syntax_ok(); });
  };

  for (std::size_t index = 0; index < sequence.size(); ++index) {
    const auto& id = sequence[index];
    StepReport step;
    step.function_id = id;
    PatchEntry entry{id, "", "", ""};
    const auto* found = corpus.find_function(id);
    if (!found) {
      step.diagnostics.push_back("function not found in the working corpus");
      res.patch.entries.push_back(entry);
      step.parseable = all_parse(corpus);
      res.report.steps.push_back(std::move(step));
      continue;
    }
    FunctionRecord fn = *found;
    auto source = function_source(fn);
    entry.path = fn.path;
    entry.old_body = entry.new_body = source;

    try {
      std::vector<EditRecord> valid;
      if (options.use_valid_edits && models.agent && models.edit_scorer) {
        auto ranked = rank_edits(fn, res.history, *models.edit_scorer);
        step.ranked_edits = ranked.size();
        auto agent = identify_valid_edits(fn, ranked, *models.agent, options.agent, log, prompts);
        step.agent_outcome = agent.transcript.outcome;
        for (auto& d : agent.transcript.diagnostics) step.diagnostics.push_back("agent: " + d);
        valid = agent.valid.records();
        step.valid_edits = valid.size();
      }

      auto initial = generate_initial_edit(fn, valid, options.task_prompt, *models.generator, options.generation, log,
                                           prompts);
      step.initial = initial;

      RetrievalResult internal, external;
      if (options.use_retrieval && models.embedder) {
        internal = knowledge.retrieve(source, options.retrieval_k, *models.embedder, Origin::Internal, {id});
        external = knowledge.retrieve(source, options.retrieval_k, *models.embedder, Origin::External);
        for (auto* r : {&internal, &external})
          for (auto& e : r->entries) step.retrieved.push_back(e.snippet.id);
      }
      auto prompt = augment(fn, initial, internal, external);
      auto optimized = propose_optimized(fn, prompt, initial, *models.optimizer, options.generation, log, prompts);
      step.optimized = optimized;

      auto integrated = integrate(fn, optimized, call_sites_of(corpus, graph, id), *models.integrator,
                                  options.generation, log, prompts);
      step.integrated = integrated;
      for (auto& d : integrated.diagnostics) step.diagnostics.push_back(d);

      if (!integrated.fallback && integrated.new_body != source) {
        FileMap trial = res.files;
        trial[fn.path] = splice_function(trial[fn.path], fn, integrated.new_body);
        auto unit = parse_unit(fn.path, trial[fn.path]);
        std::optional<std::string> rejected;
        if (!unit.syntax_ok()) rejected = "the edited file does not parse: " + unit.diagnostics.front();
        else if (!unit.find(id)) rejected = "the edited file no longer defines " + id;
        else if (gate) rejected = gate(trial);
        if (rejected) {
          step.diagnostics.push_back("edit reverted: " + *rejected);
        } else {
          res.files = std::move(trial);
          corpus = corpus_from_files(res.files);
          graph = build_call_graph(corpus);
          entry.new_body = integrated.new_body;
          step.applied = true;
          append_history(res.history, fn, integrated, options.run_label + ":" + std::to_string(index + 1));
          if (options.use_retrieval && models.embedder) {
            auto existing = knowledge.find(id);
            if (existing && existing->origin == Origin::Internal)
              knowledge.ingest({{id, fn.path, integrated.new_body}}, Origin::Internal, *models.embedder);
          }
        }
      }
    } catch (const Error& e) {
      step.diagnostics.push_back(std::string("step failed: ") + e.what());
      spdlog::warn("optimizing {} failed: {}", id, e.what());
    }
    step.parseable = all_parse(corpus);
    res.patch.entries.push_back(std::move(entry));
    res.report.steps.push_back(std::move(step));
  }
  return res;
}

}  // namespace peace
