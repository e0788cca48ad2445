#include "peace/knowledge_store.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>

#include "peace/error.hpp"
#include "peace/util/files.hpp"
#include "peace/util/text.hpp"

namespace peace {

std::string to_string(Origin origin) { return origin == Origin::Internal ? "internal" : "external"; }

Origin origin_from_string(const std::string& s) {
  if (s == "internal") return Origin::Internal;
  if (s == "external") return Origin::External;
  throw std::invalid_argument("unknown origin '" + s + "'");
}

nlohmann::json Snippet::to_json() const {
  return {{"id", id}, {"origin", to_string(origin)}, {"source_tag", source_tag}, {"body", body}, {"embedding", embedding}};
}

Snippet Snippet::from_json(const nlohmann::json& j) {
  Snippet s;
  s.id = j.at("id").get<std::string>();
  s.origin = origin_from_string(j.at("origin").get<std::string>());
  s.source_tag = j.value("source_tag", std::string());
  s.body = j.at("body").get<std::string>();
  s.embedding = j.at("embedding").get<Vector>();
  return s;
}

KnowledgeIndex::KnowledgeIndex(const KnowledgeIndex& other) {
  std::shared_lock lock(other.mu_);
  snippets_ = other.snippets_;
  dimension_ = other.dimension_;
}

KnowledgeIndex& KnowledgeIndex::operator=(const KnowledgeIndex& other) {
  if (this == &other) return *this;
  std::unique_lock lock(mu_, std::defer_lock);
  std::shared_lock other_lock(other.mu_, std::defer_lock);
  std::lock(lock, other_lock);
  snippets_ = other.snippets_;
  dimension_ = other.dimension_;
  return *this;
}

IndexStats KnowledgeIndex::ingest(const std::vector<SnippetSource>& sources, Origin origin, Embedder& embedder) {
  std::vector<std::string> texts;
  texts.reserve(sources.size());
  for (auto& s : sources) texts.push_back(s.body);
  // Embed outside the lock; the embedder may be slow or remote.
  auto vectors = texts.empty() ? std::vector<Vector>{} : embed(texts, embedder);

  std::unique_lock lock(mu_);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    auto it = snippets_.find(sources[i].id);
    if (it != snippets_.end() && it->second.origin != origin)
      throw Error(ErrorCode::SchemaViolation, "snippet '" + sources[i].id + "' is already " + to_string(it->second.origin));
    if (dimension_ != 0 && vectors[i].size() != dimension_)
      throw Error(ErrorCode::SchemaViolation, "embedding dimension " + std::to_string(vectors[i].size()) +
                                                  " differs from the index (" + std::to_string(dimension_) + ")");
  }
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (dimension_ == 0) dimension_ = vectors[i].size();
    snippets_[sources[i].id] = {sources[i].id, origin, sources[i].source_tag, sources[i].body, std::move(vectors[i])};
  }
  IndexStats st;
  for (auto& [id, s] : snippets_) (s.origin == Origin::Internal ? st.internal : st.external)++;
  return st;
}

RetrievalResult KnowledgeIndex::retrieve(const std::string& text, std::size_t k, Embedder& embedder,
                                         std::optional<Origin> filter, const std::set<std::string>& exclude) const {
  if (stats().total() == 0 || k == 0) return {};
  auto q = embed({text}, embedder);
  return retrieve_vector(q.front(), k, filter, exclude);
}

RetrievalResult KnowledgeIndex::retrieve_vector(const Vector& query, std::size_t k, std::optional<Origin> filter,
                                                const std::set<std::string>& exclude) const {
  RetrievalResult r;
  if (k == 0) return r;
  std::shared_lock lock(mu_);
  if (snippets_.empty()) return r;
  if (query.size() != dimension_)
    throw Error(ErrorCode::SchemaViolation, "query dimension " + std::to_string(query.size()) +
                                                " differs from the index (" + std::to_string(dimension_) + ")");
  std::vector<std::pair<double, const Snippet*>> scored;
  for (auto& [id, s] : snippets_) {
    if (filter && s.origin != *filter) continue;
    if (exclude.count(id)) continue;
    scored.emplace_back(cosine(query, s.embedding), &s);
  }
  auto n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second->id < b.second->id;
                    });
  for (std::size_t i = 0; i < n; ++i) r.entries.push_back({*scored[i].second, scored[i].first});
  return r;
}

IndexStats KnowledgeIndex::stats() const {
  std::shared_lock lock(mu_);
  IndexStats st;
  for (auto& [id, s] : snippets_) (s.origin == Origin::Internal ? st.internal : st.external)++;
  return st;
}

std::size_t KnowledgeIndex::dimension() const {
  std::shared_lock lock(mu_);
  return dimension_;
}

std::optional<Snippet> KnowledgeIndex::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = snippets_.find(id);
  if (it == snippets_.end()) return std::nullopt;
  return it->second;
}

void KnowledgeIndex::save(const std::filesystem::path& path) const {
  std::string out;
  {
    std::shared_lock lock(mu_);
    for (auto& [id, s] : snippets_) out += s.to_json().dump() + "\n";
  }
  util::write_file_atomic(path, out);
}

KnowledgeIndex KnowledgeIndex::load(const std::filesystem::path& path) {
  KnowledgeIndex idx;
  std::istringstream in(util::read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    Snippet s;
    try {
      s = Snippet::from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::SchemaViolation, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (idx.dimension_ == 0) idx.dimension_ = s.embedding.size();
    if (s.embedding.size() != idx.dimension_)
      throw Error(ErrorCode::SchemaViolation, path.string() + ":" + std::to_string(lineno) + ": dimension mismatch");
    idx.snippets_[s.id] = std::move(s);
  }
  return idx;
}

std::vector<SnippetSource> snippet_sources_from_corpus(const Corpus& corpus) {
  std::vector<SnippetSource> out;
  for (const auto* f : corpus.functions()) out.push_back({f->id, f->path, f->body});
  return out;
}

std::vector<SnippetSource> load_snippet_sources(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return snippet_sources_from_corpus(load_corpus_dir(path));
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::ConfigInvalid, "no snippet collection at " + path.string());
  std::vector<SnippetSource> out;
  std::istringstream in(util::read_file(path));
  std::string line;
  std::size_t lineno = 0;
  auto tag = path.stem().string();
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("body") || !j["id"].is_string() ||
        !j["body"].is_string())
      throw Error(ErrorCode::ConfigInvalid,
                  path.string() + ":" + std::to_string(lineno) + ": expected {\"id\": ..., \"body\": ...}");
    out.push_back({j["id"].get<std::string>(), j.value("source_tag", tag), j["body"].get<std::string>()});
  }
  return out;
}

}  // namespace peace
