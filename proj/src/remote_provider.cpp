#include <httplib.h>

#include <cstdlib>
#include <thread>

#include "peace/error.hpp"
#include "peace/model_gateway.hpp"

namespace peace {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::ConfigInvalid, "endpoint needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) e.prefix = url.substr(path_start);
  while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  return e;
}

// Spaces out requests to at most `rps` per second.
class RateLimiter {
 public:
  explicit RateLimiter(double rps) : interval_(rps > 0 ? std::chrono::duration<double>(1.0 / rps) : std::chrono::duration<double>(0)) {}

  void acquire() {
    if (interval_.count() <= 0) return;
    std::unique_lock lock(mu_);
    auto now = std::chrono::steady_clock::now();
    if (next_ > now) {
      auto wait = next_ - now;
      next_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      return;
    }
    next_ = now + std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval_);
  }

 private:
  std::chrono::duration<double> interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

struct HttpClient {
  HttpClient(const RemoteSettings& s) : settings(s), endpoint(split_endpoint(s.endpoint)), limiter(s.requests_per_second) {}

  nlohmann::json post(const std::string& path, const nlohmann::json& body) {
    limiter.acquire();
    httplib::Client cli(endpoint.origin);
    cli.set_connection_timeout(settings.timeout);
    cli.set_read_timeout(settings.timeout);
    cli.set_write_timeout(settings.timeout);
    httplib::Headers headers;
    if (const char* key = std::getenv(settings.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
    auto res = cli.Post(endpoint.prefix + path, headers, body.dump(), "application/json");
    if (!res) throw TransientError("HTTP request failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
      throw TransientError("HTTP " + std::to_string(res->status));
    if (res->status < 200 || res->status >= 300)
      throw Error(ErrorCode::ModelFailure, "HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ModelFailure, std::string("malformed response body: ") + e.what());
    }
  }

  RemoteSettings settings;
  Endpoint endpoint;
  RateLimiter limiter;
};

nlohmann::json wire_messages(const ModelRequest& request) {
  nlohmann::json out = nlohmann::json::array();
  for (auto& m : request.messages) {
    nlohmann::json jm = {{"role", m.role}, {"content", m.content}};
    if (m.tool_call) {
      jm["tool_calls"] = nlohmann::json::array(
          {{{"id", m.tool_call->id},
            {"type", "function"},
            {"function", {{"name", m.tool_call->name}, {"arguments", m.tool_call->arguments.dump()}}}}});
    }
    if (!m.tool_call_id.empty()) jm["tool_call_id"] = m.tool_call_id;
    out.push_back(std::move(jm));
  }
  return out;
}

}  // namespace

struct RemoteChatProvider::Impl {
  explicit Impl(RemoteSettings s) : http(s) {}
  HttpClient http;
};

RemoteChatProvider::RemoteChatProvider(RemoteSettings settings)
    : impl_(std::make_unique<Impl>(std::move(settings))) {}
RemoteChatProvider::~RemoteChatProvider() = default;

std::string RemoteChatProvider::name() const { return "remote:" + impl_->http.settings.model; }

ModelResponse RemoteChatProvider::send(const ModelRequest& request) {
  nlohmann::json body = {{"model", request.params.model.empty() ? impl_->http.settings.model : request.params.model},
                         {"messages", wire_messages(request)},
                         {"temperature", request.params.temperature},
                         {"max_tokens", request.params.max_output_tokens}};
  if (!request.tools.empty()) {
    nlohmann::json tools = nlohmann::json::array();
    for (auto& t : request.tools)
      tools.push_back({{"type", "function"},
                       {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
    body["tools"] = std::move(tools);
  }
  auto reply = impl_->http.post("/chat/completions", body);
  try {
    const auto& msg = reply.at("choices").at(0).at("message");
    ModelResponse r;
    if (msg.contains("tool_calls") && msg["tool_calls"].is_array() && !msg["tool_calls"].empty()) {
      const auto& call = msg["tool_calls"][0];
      r.kind = ModelResponse::Kind::ToolCall;
      r.tool_call.id = call.value("id", std::string("call_0"));
      r.tool_call.name = call.at("function").at("name").get<std::string>();
      const auto& args = call.at("function").at("arguments");
      if (args.is_string()) {
        auto parsed = nlohmann::json::parse(args.get<std::string>(), nullptr, false);
        r.tool_call.arguments = parsed.is_discarded() ? nlohmann::json(args) : parsed;
      } else {
        r.tool_call.arguments = args;
      }
    } else {
      r.content = msg.value("content", std::string());
    }
    if (reply.contains("usage")) {
      r.usage.prompt_tokens = reply["usage"].value("prompt_tokens", std::size_t{0});
      r.usage.completion_tokens = reply["usage"].value("completion_tokens", std::size_t{0});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ModelFailure, std::string("unexpected chat reply shape: ") + e.what());
  }
}

struct RemoteEmbedder::Impl {
  explicit Impl(RemoteSettings s) : http(s), dimension(s.embedding_dimension) {}
  HttpClient http;
  std::size_t dimension;
};

RemoteEmbedder::RemoteEmbedder(RemoteSettings settings) : impl_(std::make_unique<Impl>(std::move(settings))) {}
RemoteEmbedder::~RemoteEmbedder() = default;

std::size_t RemoteEmbedder::dimension() const { return impl_->dimension; }

std::vector<Vector> RemoteEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  nlohmann::json reply;
  try {
    reply = impl_->http.post("/embeddings", {{"model", impl_->http.settings.model}, {"input", texts}});
  } catch (const TransientError& e) {
    throw Error(ErrorCode::EmbedderUnavailable, e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::EmbedderUnavailable, e.what());
  }
  std::vector<Vector> out;
  try {
    for (auto& item : reply.at("data")) out.push_back(item.at("embedding").get<Vector>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::EmbedderUnavailable, std::string("unexpected embedding reply: ") + e.what());
  }
  if (impl_->dimension == 0 && !out.empty()) impl_->dimension = out.front().size();
  return out;
}

}  // namespace peace
