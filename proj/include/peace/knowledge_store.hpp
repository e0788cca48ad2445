#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peace/call_graph.hpp"
#include "peace/model_gateway.hpp"

namespace peace {

enum class Origin { Internal, External };

std::string to_string(Origin origin);
Origin origin_from_string(const std::string& s);

struct Snippet {
  std::string id;
  Origin origin = Origin::Internal;
  std::string source_tag;  // project path or collection name
  std::string body;
  Vector embedding;

  nlohmann::json to_json() const;
  static Snippet from_json(const nlohmann::json& j);
};

// Input to ingest(): a function text and where it came from.
struct SnippetSource {
  std::string id;
  std::string source_tag;
  std::string body;
};

struct IndexStats {
  std::size_t internal = 0;
  std::size_t external = 0;
  std::size_t total() const { return internal + external; }
};

struct RetrievalEntry {
  Snippet snippet;
  double similarity = 0;
};

struct RetrievalResult {
  std::vector<RetrievalEntry> entries;  // descending similarity, then id
};

inline constexpr std::size_t kDefaultRetrievalK = 3;

// In-memory embedding index. Reads may run concurrently; ingest takes an
// exclusive lock.
class KnowledgeIndex {
 public:
  KnowledgeIndex() = default;
  KnowledgeIndex(const KnowledgeIndex& other);
  KnowledgeIndex& operator=(const KnowledgeIndex& other);

  // Embeds and stores every source; an existing id is replaced. Throws
  // Error{EmbedderUnavailable} from the embedder, Error{SchemaViolation} when
  // an id is re-ingested under the other origin or the dimension changes.
  IndexStats ingest(const std::vector<SnippetSource>& sources, Origin origin, Embedder& embedder);

  // Top-k by cosine similarity; ties break by id. `exclude` drops ids (the
  // function being optimized should not retrieve itself).
  RetrievalResult retrieve(const std::string& text, std::size_t k, Embedder& embedder,
                           std::optional<Origin> filter = std::nullopt,
                           const std::set<std::string>& exclude = {}) const;
  RetrievalResult retrieve_vector(const Vector& query, std::size_t k, std::optional<Origin> filter = std::nullopt,
                                  const std::set<std::string>& exclude = {}) const;

  IndexStats stats() const;
  std::size_t dimension() const;
  std::optional<Snippet> find(const std::string& id) const;

  // JSON lines: one {id, origin, source_tag, body, embedding} per line,
  // sorted by id.
  void save(const std::filesystem::path& path) const;
  static KnowledgeIndex load(const std::filesystem::path& path);

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, Snippet> snippets_;
  std::size_t dimension_ = 0;
};

// Every function of the corpus, tagged with its file path.
std::vector<SnippetSource> snippet_sources_from_corpus(const Corpus& corpus);

// Reads a snippet collection: a .jsonl file of {id, source_tag?, body} objects
// (extra provenance fields are ignored), or a directory whose .py files are
// parsed into functions. Throws Error{ConfigInvalid} on malformed input.
std::vector<SnippetSource> load_snippet_sources(const std::filesystem::path& path);

}  // namespace peace
