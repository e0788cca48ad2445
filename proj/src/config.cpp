#include "peace/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <regex>
#include <set>

#include "peace/error.hpp"
#include "peace/util/files.hpp"

namespace peace {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

// Reads the keys of one object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) invalid(where_ + " must be an object");
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) && !j_[key].is_null();
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_[key].get<T>();
    } catch (const nlohmann::json::exception&) {
      invalid(where_ + "." + key + " has the wrong type");
    }
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!has(key)) return;
    T v{};
    get(key, v);
    out = v;
  }

  Section sub(const std::string& key) {
    static const nlohmann::json empty = nlohmann::json::object();
    return has(key) ? Section(j_[key], where_ + "." + key) : Section(empty, where_ + "." + key);
  }

  void done() const {
    for (auto& [k, _] : j_.items())
      if (!used_.count(k)) invalid("unknown key " + where_ + "." + k);
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> used_;
};

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.is_absolute() || base.empty()) return p;
  return base / p;
}

void read_remote(Section& s, RemoteSettings& r) {
  s.get("endpoint", r.endpoint);
  s.get("model", r.model);
  s.get("api_key_env", r.api_key_env);
  s.get("requests_per_second", r.requests_per_second);
  std::optional<double> timeout;
  s.get("timeout_s", timeout);
  if (timeout) r.timeout = std::chrono::seconds(static_cast<long>(*timeout));
  s.get("embedding_dimension", r.embedding_dimension);
}

nlohmann::json remote_json(const RemoteSettings& r) {
  return {{"endpoint", r.endpoint},
          {"model", r.model},
          {"api_key_env", r.api_key_env},
          {"requests_per_second", r.requests_per_second},
          {"timeout_s", r.timeout.count()},
          {"embedding_dimension", r.embedding_dimension}};
}

ProviderSpec read_provider(Section s, const fs::path& base) {
  ProviderSpec p;
  s.get("kind", p.kind);
  std::optional<std::string> script;
  s.get("script", script);
  if (script) p.script = resolve(*script, base);
  s.get("echo_block", p.echo_block);
  read_remote(s, p.remote);
  s.done();
  return p;
}

nlohmann::json provider_json(const ProviderSpec& p) {
  auto j = remote_json(p.remote);
  j["kind"] = p.kind;
  j["script"] = p.script ? nlohmann::json(p.script->string()) : nlohmann::json(nullptr);
  j["echo_block"] = p.echo_block;
  return j;
}

void check_provider(const ProviderSpec& p, const std::string& where) {
  if (p.kind == "scripted") {
    if (!p.script) invalid(where + ": scripted provider needs a script");
  } else if (p.kind == "remote") {
    if (p.remote.endpoint.empty()) invalid(where + ": remote provider needs an endpoint");
  } else if (p.kind == "echo") {
    if (p.echo_block == 0) invalid(where + ": echo_block starts at 1");
  } else {
    invalid(where + ": unknown provider kind '" + p.kind + "'");
  }
}

std::string substitute_env(const std::string& s) {
  static const std::regex var(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)(:-([^}]*))?\})");
  std::string out;
  auto begin = std::sregex_iterator(s.begin(), s.end(), var);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    auto& m = *it;
    out += s.substr(last, static_cast<std::size_t>(m.position()) - last);
    const char* v = std::getenv(m[1].str().c_str());
    if (v) out += v;
    else if (m[2].matched) out += m[3].str();
    else invalid("environment variable " + m[1].str() + " is not set");
    last = static_cast<std::size_t>(m.position() + m.length());
  }
  return out + s.substr(last);
}

}  // namespace

nlohmann::json interpolate_env(const nlohmann::json& j) {
  if (j.is_string()) return substitute_env(j.get<std::string>());
  if (j.is_array() || j.is_object()) {
    auto out = j;
    for (auto it = out.begin(); it != out.end(); ++it) *it = interpolate_env(*it);
    return out;
  }
  return j;
}

const std::vector<std::string>& PipelineConfig::role_names() {
  static const std::vector<std::string> names = {"agent",      "generator",  "optimizer",
                                                 "integrator", "dependency", "confirm"};
  return names;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& raw, const fs::path& base) {
  auto j = interpolate_env(raw);
  PipelineConfig c;
  Section root(j, "config");

  auto providers = root.sub("providers");
  if (providers.has("chat")) c.chat = read_provider(providers.sub("chat"), base);
  auto roles = providers.sub("roles");
  for (auto& name : role_names())
    if (roles.has(name)) c.roles[name] = read_provider(roles.sub(name), base);
  roles.done();
  auto emb = providers.sub("embedder");
  emb.get("kind", c.embedder.kind);
  emb.get("dimension", c.embedder.dimension);
  emb.get("seed", c.embedder.seed);
  read_remote(emb, c.embedder.remote);
  emb.done();
  providers.done();

  auto rel = root.sub("relevance");
  rel.get("threshold", c.relevance_threshold);
  rel.get("dependency_weight", c.dependency_weight);
  rel.get("dependency_scorer", c.dependency_scorer);
  rel.get("graph_depth", c.graph_depth);
  rel.done();

  auto agent = root.sub("agent");
  agent.get("max_iterations", c.agent.max_iterations);
  agent.get("fragments_per_call_cap", c.agent.fragments_per_call_cap);
  agent.get("max_edit_lines", c.agent.max_edit_lines);
  agent.get("use_valid_edits", c.use_valid_edits);
  agent.done();

  auto ret = root.sub("retrieval");
  ret.get("enabled", c.use_retrieval);
  ret.get("k", c.retrieval_k);
  ret.done();

  auto val = root.sub("validation");
  val.get("enabled", c.validate_tests);
  val.get("per_function", c.validate_per_function);
  val.done();

  auto gen = root.sub("generation");
  gen.get("model", c.generation.params.model);
  gen.get("temperature", c.generation.params.temperature);
  gen.get("max_output_tokens", c.generation.params.max_output_tokens);
  gen.get("max_retries", c.generation.retry.max_retries);
  gen.get("context_budget_tokens", c.generation.context_budget_tokens);
  std::optional<long> backoff;
  gen.get("backoff_ms", backoff);
  if (backoff) c.generation.retry.base_backoff = std::chrono::milliseconds(*backoff);
  gen.done();
  c.agent.params = c.generation.params;
  c.agent.retry = c.generation.retry;

  auto bench = root.sub("bench");
  bench.get("keywords", c.bench.keywords);
  bench.get("min_lines", c.bench.min_lines);
  bench.get("max_lines", c.bench.max_lines);
  bench.get("max_files", c.bench.max_files);
  bench.get("commit_window", c.bench.commit_window);
  bench.get("score_threshold", c.bench.score_threshold);
  bench.done();

  auto ev = root.sub("eval");
  ev.get("probe_command", c.eval.probe_command);
  // Relative script paths in the probe command resolve against the config file.
  for (auto& part : c.eval.probe_command) {
    fs::path p(part);
    bool script_like = part.find('/') != std::string::npos || p.extension() == ".py";
    if (!base.empty() && p.is_relative() && script_like && fs::exists(base / p)) part = fs::absolute(base / p).string();
  }
  std::optional<std::string> backend;
  ev.get("backend", backend);
  if (backend) {
    try {
      c.eval.backend = backend_from_string(*backend);
    } catch (const Error& e) {
      invalid(std::string("config.eval.backend: ") + e.what());
    }
  }
  ev.get("repeats", c.eval.repeats);
  std::optional<double> timeout;
  ev.get("per_test_timeout_s", timeout);
  if (timeout) c.eval.per_test_timeout = std::chrono::milliseconds(static_cast<long>(*timeout * 1000));
  std::optional<std::string> sandbox;
  ev.get("sandbox", sandbox);
  if (sandbox) c.eval.sandbox = sandbox_from_string(*sandbox);
  ev.get("container_runtime", c.eval.container_runtime);
  ev.get("local_python", c.eval.local_python);
  ev.get("workers", c.workers);
  ev.done();

  auto paths = root.sub("paths");
  std::optional<std::string> p;
  paths.get("prompts", p);
  if (p) c.prompts_dir = resolve(*p, base);
  p.reset();
  paths.get("external_snippets", p);
  if (p) c.external_snippets = resolve(*p, base);
  p.reset();
  paths.get("knowledge_index", p);
  if (p) c.knowledge_index = resolve(*p, base);
  paths.done();

  root.done();
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  if (!fs::exists(path)) invalid("config file " + path.string() + " does not exist");
  auto j = nlohmann::json::parse(util::read_file(path), nullptr, false, true);
  if (j.is_discarded()) invalid("config file " + path.string() + " is not valid JSON");
  return from_json(j, path.parent_path());
}

void PipelineConfig::validate() const {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0 && v <= 1)) invalid(std::string(name) + " must be in [0, 1]");
  };
  unit(relevance_threshold, "relevance.threshold");
  unit(dependency_weight, "relevance.dependency_weight");
  if (dependency_scorer != "model" && dependency_scorer != "fallback")
    invalid("relevance.dependency_scorer must be model or fallback");
  if (agent.max_iterations < 1) invalid("agent.max_iterations must be at least 1");
  if (agent.fragments_per_call_cap < 1) invalid("agent.fragments_per_call_cap must be at least 1");
  if (retrieval_k < 1) invalid("retrieval.k must be at least 1");
  if (generation.params.temperature < 0) invalid("generation.temperature must be non-negative");
  if (generation.retry.max_retries < 0) invalid("generation.max_retries must be non-negative");
  if (embedder.kind != "hashing" && embedder.kind != "remote") invalid("unknown embedder kind " + embedder.kind);
  if (embedder.kind == "hashing" && embedder.dimension == 0) invalid("embedder.dimension must be positive");
  if (embedder.kind == "remote" && embedder.remote.endpoint.empty()) invalid("remote embedder needs an endpoint");
  if (eval.probe_command.empty()) invalid("eval.probe_command is empty");
  if (eval.repeats && *eval.repeats == 0) invalid("eval.repeats must be at least 1");
  if (eval.per_test_timeout.count() <= 0) invalid("eval.per_test_timeout_s must be positive");
  if (workers == 0) invalid("eval.workers must be at least 1");
  bench.validate();
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json roles_j = nlohmann::json::object();
  for (auto& [name, spec] : roles) roles_j[name] = provider_json(spec);
  auto emb = remote_json(embedder.remote);
  emb["kind"] = embedder.kind;
  emb["dimension"] = embedder.dimension;
  emb["seed"] = embedder.seed;
  auto opt_path = [](const std::optional<fs::path>& p) {
    return p ? nlohmann::json(p->string()) : nlohmann::json(nullptr);
  };
  return {
      {"providers", {{"chat", provider_json(chat)}, {"roles", roles_j}, {"embedder", emb}}},
      {"relevance",
       {{"threshold", relevance_threshold},
        {"dependency_weight", dependency_weight},
        {"dependency_scorer", dependency_scorer},
        {"graph_depth", graph_depth ? nlohmann::json(*graph_depth) : nlohmann::json(nullptr)}}},
      {"agent",
       {{"max_iterations", agent.max_iterations},
        {"fragments_per_call_cap", agent.fragments_per_call_cap},
        {"max_edit_lines", agent.max_edit_lines},
        {"use_valid_edits", use_valid_edits}}},
      {"retrieval", {{"enabled", use_retrieval}, {"k", retrieval_k}}},
      {"validation", {{"enabled", validate_tests}, {"per_function", validate_per_function}}},
      {"generation",
       {{"model", generation.params.model},
        {"temperature", generation.params.temperature},
        {"max_output_tokens", generation.params.max_output_tokens},
        {"max_retries", generation.retry.max_retries},
        {"backoff_ms", generation.retry.base_backoff.count()},
        {"context_budget_tokens", generation.context_budget_tokens}}},
      {"bench",
       {{"keywords", bench.keywords},
        {"min_lines", bench.min_lines},
        {"max_lines", bench.max_lines},
        {"max_files", bench.max_files},
        {"commit_window", bench.commit_window},
        {"score_threshold", bench.score_threshold}}},
      {"eval",
       {{"probe_command", eval.probe_command},
        {"backend", to_string(eval.backend)},
        {"repeats", eval.repeats ? nlohmann::json(*eval.repeats) : nlohmann::json(nullptr)},
        {"per_test_timeout_s", static_cast<double>(eval.per_test_timeout.count()) / 1000.0},
        {"sandbox", to_string(eval.sandbox)},
        {"container_runtime", eval.container_runtime},
        {"local_python", eval.local_python},
        {"workers", workers}}},
      {"paths",
       {{"prompts", opt_path(prompts_dir)},
        {"external_snippets", opt_path(external_snippets)},
        {"knowledge_index", opt_path(knowledge_index)}}},
  };
}

ProviderSet::ProviderSet(const PipelineConfig& config) : chat_spec_(config.chat), role_specs_(config.roles) {
  if (config.embedder.kind == "remote") embedder_ = std::make_unique<RemoteEmbedder>(config.embedder.remote);
  else embedder_ = std::make_unique<HashingEmbedder>(config.embedder.dimension, config.embedder.seed);
}

std::unique_ptr<ChatProvider> ProviderSet::make(const ProviderSpec& spec) {
  if (spec.kind == "echo") return std::make_unique<EchoProvider>(spec.echo_block);
  if (spec.kind == "remote") return std::make_unique<RemoteChatProvider>(spec.remote);
  if (!fs::exists(*spec.script)) invalid("script " + spec.script->string() + " does not exist");
  try {
    return ScriptedProvider::from_file(*spec.script);
  } catch (const Error& e) {
    invalid("script " + spec.script->string() + ": " + e.what());
  }
}

ChatProvider& ProviderSet::chat(const std::string& role) {
  const auto& names = PipelineConfig::role_names();
  if (std::find(names.begin(), names.end(), role) == names.end())
    throw std::invalid_argument("unknown provider role " + role);
  std::lock_guard lock(mu_);
  auto& slot = by_role_[role];
  if (slot) return *slot;
  if (auto it = role_specs_.find(role); it != role_specs_.end()) {
    check_provider(it->second, "providers.roles." + role);
    slot = make(it->second);
  } else {
    if (!shared_) {
      check_provider(chat_spec_, "providers.chat");
      shared_ = make(chat_spec_);
    }
    slot = shared_;
  }
  return *slot;
}

}  // namespace peace
