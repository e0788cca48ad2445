#include "peace/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "peace/error.hpp"
#include "peace/util/text.hpp"

namespace peace {

nlohmann::json RelevanceScore::to_json() const {
  return {{"dependency", dependency}, {"semantic", semantic}, {"combined", combined}};
}

RelevanceScore RelevanceScore::from_json(const nlohmann::json& j) {
  return {j.at("dependency").get<double>(), j.at("semantic").get<double>(), j.at("combined").get<double>()};
}

double FallbackDependencyScorer::score(const Subject& a, const Subject& b) {
  double edge = 0;
  if (graph_ && (graph_->has_edge(a.id, b.id) || graph_->has_edge(b.id, a.id))) edge = 1;
  auto ia = util::identifiers(a.text);
  auto ib = util::identifiers(b.text);
  std::set<std::string> sa(ia.begin(), ia.end()), sb(ib.begin(), ib.end());
  std::size_t inter = 0;
  for (auto& s : sa) inter += sb.count(s);
  std::size_t uni = sa.size() + sb.size() - inter;
  double jaccard = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
  return 0.5 * edge + 0.5 * jaccard;
}

ModelDependencyScorer::ModelDependencyScorer(ChatProvider& provider, ModelParams params, RetryPolicy retry,
                                             InteractionLog* log, const PromptLibrary& prompts)
    : provider_(provider), params_(std::move(params)), retry_(retry), log_(log), prompts_(prompts) {}

double ModelDependencyScorer::score(const Subject& a, const Subject& b) {
  ModelRequest req;
  req.params = params_;
  req.params.purpose = "dependency:" + b.id;
  req.messages.push_back({"user",
                          prompts_.render("dependency_score",
                                          {{"a_id", a.id}, {"a_body", a.text}, {"b_id", b.id}, {"b_body", b.text}}),
                          std::nullopt,
                          {}});
  std::string text;
  try {
    text = complete(req, provider_, retry_, log_, ModelResponse::Kind::Text).content;
  } catch (const Error& e) {
    throw Error(ErrorCode::ScorerUnavailable, e.what());
  }
  static const std::regex number(R"([-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)");
  std::smatch m;
  if (!std::regex_search(text, m, number))
    throw Error(ErrorCode::ScorerUnavailable, "scorer reply has no number: " + text);
  return std::stod(m.str());
}

double TableDependencyScorer::score(const Subject&, const Subject& b) {
  auto it = table_.find(b.id);
  return it == table_.end() ? 0.0 : it->second;
}

double dependency_score(const Subject& a, const Subject& b, DependencyScorer& scorer) {
  double s = scorer.score(a, b);
  if (std::isnan(s)) throw Error(ErrorCode::ScorerUnavailable, "scorer returned NaN");
  return std::clamp(s, 0.0, 1.0);
}

double semantic_from_cosine(double cos, bool non_negative) {
  if (non_negative) return std::clamp(cos, 0.0, 1.0);
  return std::clamp((cos + 1.0) / 2.0, 0.0, 1.0);
}

double semantic_score(const Subject& a, const Subject& b, Embedder& embedder) {
  auto v = embed({a.text, b.text}, embedder);
  return semantic_from_cosine(cosine(v[0], v[1]), embedder.non_negative());
}

double combine(double dep, double sem, double w) { return w * dep + (1.0 - w) * sem; }

RelevanceScorer::RelevanceScorer(DependencyScorer& dependency, Embedder& embedder, ScoringOptions options,
                                 DependencyScorer* fallback)
    : dependency_(&dependency), embedder_(&embedder), options_(options), fallback_(fallback) {
  if (options_.dependency_weight < 0 || options_.dependency_weight > 1)
    throw std::invalid_argument("dependency weight must be in [0,1]");
}

std::vector<RelevanceScore> RelevanceScorer::score(const Subject& anchor, const std::vector<Subject>& others) {
  std::vector<RelevanceScore> out;
  if (others.empty()) return out;
  std::vector<std::string> texts{anchor.text};
  for (auto& o : others) texts.push_back(o.text);
  auto vecs = embed(texts, *embedder_);
  for (std::size_t i = 0; i < others.size(); ++i) {
    RelevanceScore s;
    try {
      s.dependency = dependency_score(anchor, others[i], *dependency_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ScorerUnavailable || !options_.fallback_on_unavailable || !fallback_) throw;
      spdlog::warn("dependency scorer unavailable for {}, using fallback: {}", others[i].id, e.what());
      s.dependency = dependency_score(anchor, others[i], *fallback_);
    }
    s.semantic = semantic_from_cosine(cosine(vecs[0], vecs[i + 1]), embedder_->non_negative());
    s.combined = combine(s.dependency, s.semantic, options_.dependency_weight);
    out.push_back(s);
  }
  return out;
}

std::vector<RelevanceScore> TableRelevanceScorer::score(const Subject&, const std::vector<Subject>& others) {
  std::vector<RelevanceScore> out;
  for (auto& o : others) {
    auto it = table_.find(o.id);
    out.push_back(RelevanceScore::uniform(it == table_.end() ? 0.0 : it->second));
  }
  return out;
}

std::string to_string(Role role) {
  switch (role) {
    case Role::Callee: return "callee";
    case Role::Target: return "target";
    case Role::Caller: return "caller";
  }
  return "?";
}

namespace {

Role role_from_string(const std::string& s) {
  if (s == "callee") return Role::Callee;
  if (s == "target") return Role::Target;
  if (s == "caller") return Role::Caller;
  throw std::invalid_argument("unknown role: " + s);
}

}  // namespace

std::vector<std::string> OptimizingFunctionSequence::ids() const {
  std::vector<std::string> out;
  for (auto& e : entries) out.push_back(e.id);
  return out;
}

nlohmann::json OptimizingFunctionSequence::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (auto& e : entries) arr.push_back({{"id", e.id}, {"role", to_string(e.role)}, {"score", e.score.to_json()}});
  return {{"entries", arr}};
}

OptimizingFunctionSequence OptimizingFunctionSequence::from_json(const nlohmann::json& j) {
  OptimizingFunctionSequence s;
  for (auto& e : j.at("entries"))
    s.entries.push_back({e.at("id").get<std::string>(), role_from_string(e.at("role").get<std::string>()),
                         RelevanceScore::from_json(e.at("score"))});
  return s;
}

void OptimizingFunctionSequence::check(double threshold) const {
  int targets = 0;
  Role last = Role::Callee;
  const SequenceEntry* prev = nullptr;
  for (auto& e : entries) {
    if (e.role == Role::Target) ++targets;
    if (static_cast<int>(e.role) < static_cast<int>(last)) throw std::logic_error("role order violated at " + e.id);
    if (e.role != Role::Target && e.score.combined < threshold)
      throw std::logic_error("entry below threshold: " + e.id);
    if (prev && prev->role == e.role && e.role != Role::Target && prev->score.combined < e.score.combined)
      throw std::logic_error("block not in descending order at " + e.id);
    last = e.role;
    prev = &e;
  }
  if (targets != 1) throw std::logic_error("sequence must contain exactly one target");
}

OptimizingFunctionSequence build_sequence(const CallGraph& graph, const std::string& target_id,
                                          const std::map<std::string, RelevanceScore>& scores,
                                          const SequenceOptions& options) {
  auto callees = callees_of(graph, target_id, options.depth);
  auto callers = callers_of(graph, target_id, options.depth);
  callees.erase(target_id);
  callers.erase(target_id);

  auto block = [&](const std::set<std::string>& ids, Role role, const std::set<std::string>& skip) {
    std::vector<SequenceEntry> out;
    for (auto& id : ids) {
      if (skip.count(id)) continue;
      auto it = scores.find(id);
      if (it == scores.end()) {
        spdlog::debug("no relevance score for {}, dropped", id);
        continue;
      }
      if (it->second.combined < options.threshold) continue;
      out.push_back({id, role, it->second});
    }
    std::stable_sort(out.begin(), out.end(), [](const SequenceEntry& a, const SequenceEntry& b) {
      if (a.score.combined != b.score.combined) return a.score.combined > b.score.combined;
      return a.id < b.id;
    });
    return out;
  };

  OptimizingFunctionSequence seq;
  auto callee_block = block(callees, Role::Callee, {});
  auto caller_block = block(callers, Role::Caller, callees);
  seq.entries = std::move(callee_block);
  seq.entries.push_back({target_id, Role::Target, RelevanceScore::uniform(1.0)});
  seq.entries.insert(seq.entries.end(), caller_block.begin(), caller_block.end());
  return seq;
}

OptimizingFunctionSequence plan_sequence(const Corpus& corpus, const CallGraph& graph,
                                         const std::string& target_id, RelevanceScorer& scorer,
                                         const SequenceOptions& options) {
  const auto* target = corpus.find_function(target_id);
  if (!target || !graph.contains(target_id)) throw Error(ErrorCode::UnknownFunction, target_id);
  std::set<std::string> candidates;
  for (auto& id : callees_of(graph, target_id, options.depth)) candidates.insert(id);
  for (auto& id : callers_of(graph, target_id, options.depth)) candidates.insert(id);
  candidates.erase(target_id);

  std::vector<Subject> subjects;
  for (auto& id : candidates) {
    const auto* f = corpus.find_function(id);
    if (!f) continue;
    subjects.push_back({id, f->body});
  }
  auto scored = scorer.score({target_id, target->body}, subjects);
  std::map<std::string, RelevanceScore> table;
  for (std::size_t i = 0; i < subjects.size(); ++i) table[subjects[i].id] = scored[i];
  return build_sequence(graph, target_id, table, options);
}

}  // namespace peace
