#include "peace/model_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <thread>

#include "peace/error.hpp"
#include "peace/util/files.hpp"
#include "peace/util/text.hpp"

namespace peace {

void ModelRequest::validate() const {
  if (messages.empty()) throw std::invalid_argument("model request has no messages");
  if (params.temperature < 0) throw std::invalid_argument("temperature must be >= 0");
}

nlohmann::json ModelRequest::to_json() const {
  nlohmann::json msgs = nlohmann::json::array();
  for (auto& m : messages) {
    nlohmann::json jm = {{"role", m.role}, {"content", m.content}};
    if (m.tool_call)
      jm["tool_call"] = {{"id", m.tool_call->id}, {"name", m.tool_call->name},
                         {"arguments", m.tool_call->arguments}};
    if (!m.tool_call_id.empty()) jm["tool_call_id"] = m.tool_call_id;
    msgs.push_back(std::move(jm));
  }
  nlohmann::json tools_j = nlohmann::json::array();
  for (auto& t : tools)
    tools_j.push_back({{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}});
  return {{"messages", msgs},
          {"tools", tools_j},
          {"params",
           {{"model", params.model},
            {"temperature", params.temperature},
            {"max_output_tokens", params.max_output_tokens},
            {"purpose", params.purpose}}}};
}

nlohmann::json ModelResponse::to_json() const {
  nlohmann::json j;
  if (kind == Kind::ToolCall) {
    j["tool_call"] = {{"id", tool_call.id}, {"name", tool_call.name}, {"arguments", tool_call.arguments}};
  } else {
    j["text"] = content;
  }
  j["usage"] = {{"prompt_tokens", usage.prompt_tokens}, {"completion_tokens", usage.completion_tokens}};
  return j;
}

ModelResponse ModelResponse::from_json(const nlohmann::json& j) {
  ModelResponse r;
  if (j.contains("tool_call")) {
    r.kind = Kind::ToolCall;
    const auto& tc = j["tool_call"];
    r.tool_call.id = tc.value("id", std::string("call_0"));
    r.tool_call.name = tc.value("name", std::string());
    r.tool_call.arguments = tc.value("arguments", nlohmann::json::object());
  } else {
    r.content = j.value("text", std::string());
  }
  if (j.contains("usage")) {
    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::size_t{0});
    r.usage.completion_tokens = j["usage"].value("completion_tokens", std::size_t{0});
  }
  return r;
}

ModelResponse ModelResponse::text(std::string content) {
  ModelResponse r;
  r.content = std::move(content);
  return r;
}

ModelResponse ModelResponse::tool(std::string name, nlohmann::json arguments) {
  ModelResponse r;
  r.kind = Kind::ToolCall;
  r.tool_call.id = "call_0";
  r.tool_call.name = std::move(name);
  r.tool_call.arguments = std::move(arguments);
  return r;
}

void InteractionLog::record(const std::string& provider, const ModelRequest& request,
                            const std::optional<ModelResponse>& response, const std::string& error) {
  std::lock_guard lock(mu_);
  nlohmann::json e = {{"seq", entries_.size() + 1}, {"provider", provider}, {"request", request.to_json()}};
  if (response) e["response"] = response->to_json();
  if (!error.empty()) e["error"] = error;
  entries_.push_back(std::move(e));
}

std::size_t InteractionLog::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::vector<nlohmann::json> InteractionLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::string InteractionLog::to_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (auto& e : entries_) out += e.dump() + "\n";
  return out;
}

ModelResponse complete(const ModelRequest& request, ChatProvider& provider, const RetryPolicy& policy,
                       InteractionLog* log, std::optional<ModelResponse::Kind> expected) {
  request.validate();
  std::string last_error;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt > 0 && policy.base_backoff.count() > 0)
      std::this_thread::sleep_for(policy.base_backoff * (1 << std::min(attempt - 1, 10)));
    ModelResponse response;
    try {
      response = provider.send(request);
    } catch (const TransientError& e) {
      last_error = e.what();
      if (log) log->record(provider.name(), request, std::nullopt, last_error);
      continue;
    } catch (const Error& e) {
      if (log) log->record(provider.name(), request, std::nullopt, e.what());
      throw;
    } catch (const std::exception& e) {
      if (log) log->record(provider.name(), request, std::nullopt, e.what());
      throw Error(ErrorCode::ModelFailure, e.what());
    }
    if (log) log->record(provider.name(), request, response);
    if (response.kind == ModelResponse::Kind::ToolCall && request.tools.empty())
      throw Error(ErrorCode::ModelFailure, "tool call returned for a request without tools");
    if (expected && response.kind != *expected)
      throw Error(ErrorCode::ModelFailure, "unexpected response kind");
    return response;
  }
  throw Error(ErrorCode::ModelFailure,
              "transport failed after " + std::to_string(policy.max_retries + 1) +
                  " attempts: " + last_error);
}

std::vector<Vector> embed(const std::vector<std::string>& texts, Embedder& embedder) {
  std::vector<Vector> out;
  try {
    out = embedder.embed(texts);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmbedderUnavailable) throw;
    throw Error(ErrorCode::EmbedderUnavailable, e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::EmbedderUnavailable, e.what());
  }
  if (out.size() != texts.size())
    throw Error(ErrorCode::EmbedderUnavailable, "embedder returned wrong number of vectors");
  for (auto& v : out)
    if (v.size() != embedder.dimension())
      throw Error(ErrorCode::EmbedderUnavailable, "embedding dimension mismatch");
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::optional<nlohmann::json> parse_json_reply(std::string_view text) {
  auto try_parse = [](std::string_view t) -> std::optional<nlohmann::json> {
    auto j = nlohmann::json::parse(t, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
  };
  if (auto j = try_parse(text)) return j;
  if (auto block = util::first_fenced_block(text); block.found)
    if (auto j = try_parse(block.body)) return j;
  auto open = text.find('{');
  auto close = text.rfind('}');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open)
    return try_parse(text.substr(open, close - open + 1));
  return std::nullopt;
}

ScriptedProvider::ScriptedProvider(std::vector<nlohmann::json> sequence) {
  sequence_.responses = std::move(sequence);
}

std::unique_ptr<ScriptedProvider> ScriptedProvider::from_json(const nlohmann::json& script) {
  auto p = std::make_unique<ScriptedProvider>();
  if (script.is_array()) {
    for (auto& r : script) p->push(r);
    return p;
  }
  if (script.contains("sequence"))
    for (auto& r : script["sequence"]) p->push(r);
  if (script.contains("by_purpose")) {
    for (auto& [key, value] : script["by_purpose"].items()) {
      if (value.is_array()) {
        p->add_keyed(key, value.get<std::vector<nlohmann::json>>());
      } else {
        p->add_keyed(key, value.at("responses").get<std::vector<nlohmann::json>>(),
                     value.value("repeat", false));
      }
    }
  }
  return p;
}

std::unique_ptr<ScriptedProvider> ScriptedProvider::from_file(const std::filesystem::path& path) {
  return from_json(nlohmann::json::parse(util::read_file(path)));
}

void ScriptedProvider::push(nlohmann::json response) {
  std::lock_guard lock(mu_);
  sequence_.responses.push_back(std::move(response));
}

void ScriptedProvider::add_keyed(const std::string& purpose, std::vector<nlohmann::json> responses,
                                 bool repeat) {
  std::lock_guard lock(mu_);
  auto& q = keyed_[purpose];
  q.responses = std::move(responses);
  q.repeat = repeat;
  q.cursor = 0;
}

std::size_t ScriptedProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::optional<nlohmann::json> ScriptedProvider::take(Queue& q) {
  if (q.cursor < q.responses.size()) return q.responses[q.cursor++];
  if (q.repeat && !q.responses.empty()) return q.responses.back();
  return std::nullopt;
}

ModelResponse ScriptedProvider::materialize(const nlohmann::json& entry, const ModelRequest& request) {
  if (entry.contains("fail")) throw TransientError("scripted failure: " + entry["fail"].dump());
  if (entry.contains("echo")) {
    const auto& e = entry["echo"];
    if (e.is_number_integer() && e.get<long>() >= 1) return EchoProvider(e.get<std::size_t>()).send(request);
    if (e.is_boolean() && e.get<bool>()) return EchoProvider().send(request);
  }
  return ModelResponse::from_json(entry);
}

ModelResponse ScriptedProvider::send(const ModelRequest& request) {
  std::lock_guard lock(mu_);
  ++calls_;
  const auto& purpose = request.params.purpose;
  std::vector<std::string> keys = {purpose};
  if (auto colon = purpose.find(':'); colon != std::string::npos) keys.push_back(purpose.substr(0, colon));
  keys.push_back("*");
  for (auto& k : keys) {
    auto it = keyed_.find(k);
    if (it == keyed_.end()) continue;
    if (auto entry = take(it->second)) return materialize(*entry, request);
  }
  if (auto entry = take(sequence_)) return materialize(*entry, request);
  throw Error(ErrorCode::ScriptExhausted,
              "no scripted response left (call " + std::to_string(calls_) + ", purpose '" + purpose + "')");
}

ModelResponse EchoProvider::send(const ModelRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role != "user") continue;
    auto blocks = util::fenced_blocks(it->content);
    if (block_ >= 1 && block_ <= blocks.size()) return ModelResponse::text("```python\n" + blocks[block_ - 1] + "\n```");
    return ModelResponse::text(it->content);
  }
  return ModelResponse::text(request.messages.back().content);
}

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // Final avalanche (splitmix64 finalizer).
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

std::vector<std::string> hash_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (std::isalnum(c) || c == '_') {
      std::size_t j = i;
      while (j < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
        ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace

HashingEmbedder::HashingEmbedder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

std::vector<Vector> HashingEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (auto& text : texts) {
    Vector v(dimension_, 0.0);
    auto toks = hash_tokens(text);
    auto add = [&](std::string_view feature, double weight) {
      auto h = fnv1a(feature, seed_);
      double sign = (h >> 63) ? -1.0 : 1.0;
      v[h % dimension_] += sign * weight;
    };
    for (std::size_t i = 0; i < toks.size(); ++i) {
      add(toks[i], 1.0);
      if (i + 1 < toks.size()) add(toks[i] + "\x1f" + toks[i + 1], 0.5);
    }
    double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm > 0)
      for (auto& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Vector> TableEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<Vector> out;
  for (auto& t : texts) {
    auto it = table_.find(t);
    if (it == table_.end()) throw Error(ErrorCode::EmbedderUnavailable, "no table entry for text");
    out.push_back(it->second);
  }
  return out;
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::size_t fit_to_budget(const std::function<std::size_t()>& measure, std::vector<BudgetItem>& drop_first,
                          std::vector<BudgetItem>& drop_second, std::size_t budget) {
  auto drop_lowest = [](std::vector<BudgetItem>& items) {
    if (items.empty()) return false;
    auto victim = items.begin();
    for (auto j = items.begin(); j != items.end(); ++j)
      if (j->relevance <= victim->relevance) victim = j;
    items.erase(victim);
    return true;
  };
  std::size_t removed = 0;
  while (measure() > budget && (drop_lowest(drop_first) || drop_lowest(drop_second))) ++removed;
  return removed;
}

std::size_t fit_to_budget(std::size_t fixed_tokens, std::vector<BudgetItem>& drop_first,
                          std::vector<BudgetItem>& drop_second, std::size_t budget) {
  auto total = [&]() {
    std::size_t t = fixed_tokens;
    for (auto& i : drop_first) t += estimate_tokens(i.text);
    for (auto& i : drop_second) t += estimate_tokens(i.text);
    return t;
  };
  return fit_to_budget(total, drop_first, drop_second, budget);
}

}  // namespace peace
