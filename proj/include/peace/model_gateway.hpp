#pragma once

#include <chrono>
#include <cstdint>
#include <cstddef>
#include <filesystem>
#include <map>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace peace {

using Vector = std::vector<double>;

struct ToolCall {
  std::string id;
  std::string name;
  nlohmann::json arguments = nlohmann::json::object();
};

struct Message {
  std::string role;  // system | user | assistant | tool
  std::string content;
  std::optional<ToolCall> tool_call;  // assistant turns that called a tool
  std::string tool_call_id;           // tool turns
};

struct ToolSchema {
  std::string name;
  std::string description;
  nlohmann::json parameters;  // JSON schema of the arguments object
};

struct ModelParams {
  std::string model;
  double temperature = 0.0;
  int max_output_tokens = 2048;
  // Caller-supplied label ("agent", "initial_edit:<fn>", ...). Remote
  // providers ignore it; scripted providers key canned responses on it.
  std::string purpose;
};

struct ModelRequest {
  std::vector<Message> messages;
  std::vector<ToolSchema> tools;
  ModelParams params;

  // Throws std::invalid_argument when there are no messages or the
  // temperature is negative.
  void validate() const;
  nlohmann::json to_json() const;
};

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct ModelResponse {
  enum class Kind { Text, ToolCall };
  Kind kind = Kind::Text;
  std::string content;
  ToolCall tool_call;
  Usage usage;

  nlohmann::json to_json() const;
  static ModelResponse from_json(const nlohmann::json& j);
  static ModelResponse text(std::string content);
  static ModelResponse tool(std::string name, nlohmann::json arguments);
};

// Retryable transport failure (connection refused, 5xx, rate limited).
class TransientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ModelResponse send(const ModelRequest& request) = 0;
  virtual std::string name() const = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
  virtual std::size_t dimension() const = 0;
  // True when every component is non-negative, so cosine is already in [0,1].
  virtual bool non_negative() const { return false; }
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_backoff{200};
};

// Thread-safe record of every model interaction, in call order.
class InteractionLog {
 public:
  void record(const std::string& provider, const ModelRequest& request,
              const std::optional<ModelResponse>& response, const std::string& error = {});
  std::size_t size() const;
  std::vector<nlohmann::json> entries() const;
  std::string to_jsonl() const;

 private:
  mutable std::mutex mu_;
  std::vector<nlohmann::json> entries_;
};

// Sends through `provider`, retrying TransientError up to policy.max_retries
// times with exponential backoff. A tool_call answer to a request that offered
// no tools, or a kind other than `expected`, is a format failure. Throws
// Error{ModelFailure} on exhaustion or format failure; Error{ScriptExhausted}
// passes through untouched.
ModelResponse complete(const ModelRequest& request, ChatProvider& provider,
                       const RetryPolicy& policy = {}, InteractionLog* log = nullptr,
                       std::optional<ModelResponse::Kind> expected = std::nullopt);

// Embeds and checks that all vectors share the provider's dimension. Provider
// failures surface as Error{EmbedderUnavailable}.
std::vector<Vector> embed(const std::vector<std::string>& texts, Embedder& embedder);

double cosine(std::span<const double> a, std::span<const double> b);

// JSON object in a model reply: the whole text, else the first fenced block,
// else the span from the first '{' to the last '}'.
std::optional<nlohmann::json> parse_json_reply(std::string_view text);

// Canned responses for offline runs. A script JSON document has the form
//   { "by_purpose": { "<purpose>": [resp...], "<prefix>": {"responses": [...], "repeat": true} },
//     "sequence": [resp...] }
// where resp is {"text": ...} | {"tool_call": {"name": ..., "arguments": {...}}}
// | {"echo": true} | {"echo": <n>} | {"fail": "transient"}; echo entries reply
// like EchoProvider, with block n when given. Lookup tries the exact purpose,
// then the purpose prefix before ':', then "*", then the positional sequence.
// Replay is deterministic; calls are serialized.
class ScriptedProvider : public ChatProvider {
 public:
  ScriptedProvider() = default;
  explicit ScriptedProvider(std::vector<nlohmann::json> sequence);
  static std::unique_ptr<ScriptedProvider> from_json(const nlohmann::json& script);
  static std::unique_ptr<ScriptedProvider> from_file(const std::filesystem::path& path);

  void push(nlohmann::json response);
  void add_keyed(const std::string& purpose, std::vector<nlohmann::json> responses,
                 bool repeat = false);

  ModelResponse send(const ModelRequest& request) override;
  std::string name() const override { return "scripted"; }
  std::size_t calls() const;

 private:
  struct Queue {
    std::vector<nlohmann::json> responses;
    std::size_t cursor = 0;
    bool repeat = false;
  };
  std::optional<nlohmann::json> take(Queue& q);
  ModelResponse materialize(const nlohmann::json& entry, const ModelRequest& request);

  mutable std::mutex mu_;
  Queue sequence_;
  std::map<std::string, Queue> keyed_;
  std::size_t calls_ = 0;
};

// Replies with the n-th (1-based) fenced code block of the last user message,
// or the whole message when there is no such block. Stands in for a model
// that accepts its input unchanged.
class EchoProvider : public ChatProvider {
 public:
  explicit EchoProvider(std::size_t block = 1) : block_(block) {}
  ModelResponse send(const ModelRequest& request) override;
  std::string name() const override { return "echo"; }

 private:
  std::size_t block_;
};

// Seeded feature hashing over identifier and operator tokens, L2-normalized.
// Deterministic; the empty string maps to the zero vector.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256, std::uint64_t seed = 0x5eed);
  std::vector<Vector> embed(const std::vector<std::string>& texts) override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

// Fixed text -> vector table for tests. Unknown texts are an error.
class TableEmbedder : public Embedder {
 public:
  TableEmbedder(std::size_t dimension, std::map<std::string, Vector> table, bool non_negative = false)
      : dimension_(dimension), table_(std::move(table)), non_negative_(non_negative) {}
  std::vector<Vector> embed(const std::vector<std::string>& texts) override;
  std::size_t dimension() const override { return dimension_; }
  bool non_negative() const override { return non_negative_; }

 private:
  std::size_t dimension_;
  std::map<std::string, Vector> table_;
  bool non_negative_;
};

struct RemoteSettings {
  std::string endpoint;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key_env = "PEACE_API_KEY";
  double requests_per_second = 0;  // 0 = unlimited
  std::chrono::seconds timeout{120};
  std::size_t embedding_dimension = 0;  // expected; 0 = take from first reply
};

// Chat-completions wire protocol over HTTP(S). Connection failures, 429 and
// 5xx are transient; other HTTP errors are Error{ModelFailure}.
class RemoteChatProvider : public ChatProvider {
 public:
  explicit RemoteChatProvider(RemoteSettings settings);
  ~RemoteChatProvider() override;
  ModelResponse send(const ModelRequest& request) override;
  std::string name() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class RemoteEmbedder : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteSettings settings);
  ~RemoteEmbedder() override;
  std::vector<Vector> embed(const std::vector<std::string>& texts) override;
  std::size_t dimension() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Approximate tokens as ceil(chars / 4).
std::size_t estimate_tokens(std::string_view text);

struct BudgetItem {
  std::string text;
  double relevance = 0;
  std::size_t index = 0;  // caller's position, for mapping survivors back
};

// Drops the lowest-relevance entry of `drop_first` (the later one among
// ties), then of `drop_second`, until measure() <= budget or nothing is left.
// measure() is re-evaluated after every drop and sees the current lists.
// Surviving items keep their relative order. Returns the number removed.
std::size_t fit_to_budget(const std::function<std::size_t()>& measure, std::vector<BudgetItem>& drop_first,
                          std::vector<BudgetItem>& drop_second, std::size_t budget);
// Same, measuring fixed_tokens plus the estimated tokens of every item.
std::size_t fit_to_budget(std::size_t fixed_tokens, std::vector<BudgetItem>& drop_first,
                          std::vector<BudgetItem>& drop_second, std::size_t budget);

}  // namespace peace
