#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "peace/python_syntax.hpp"

namespace peace {

namespace util {
class Git;
}

// One parsed snapshot of a Python project. Units are sorted by path.
struct Corpus {
  std::vector<SourceUnit> units;
  std::vector<std::string> warnings;

  const SourceUnit* find_unit(std::string_view path) const;
  const FunctionRecord* find_function(std::string_view id) const;
  std::vector<const FunctionRecord*> functions() const;
};

// Parses (path, content) pairs. Files that fail to decode are skipped and a
// warning is recorded. Parsing runs on a small thread pool.
Corpus make_corpus(std::vector<std::pair<std::string, std::string>> files);
Corpus load_corpus_dir(const std::filesystem::path& root);
Corpus load_corpus_git(const util::Git& git, const std::string& revision);

struct SiteRef {
  std::string path;
  Span span;
  bool operator<(const SiteRef& o) const {
    return std::tie(path, span.begin, span.end) < std::tie(o.path, o.span.begin, o.span.end);
  }
  bool operator==(const SiteRef&) const = default;
};

struct CallEdge {
  std::string caller;
  std::string callee;
  std::vector<SiteRef> sites;  // sorted, unique
};

struct ExternalCall {
  std::string caller;
  std::string callee;
  bool operator<(const ExternalCall& o) const {
    return std::tie(caller, callee) < std::tie(o.caller, o.callee);
  }
};

class CallGraph {
 public:
  void add_node(const std::string& id);
  // Both endpoints must already be nodes.
  void add_edge(const std::string& caller, const std::string& callee, SiteRef site = {});
  void add_external(const std::string& caller, const std::string& callee);

  bool contains(std::string_view id) const { return nodes_.count(std::string(id)) > 0; }
  bool has_edge(std::string_view caller, std::string_view callee) const;
  const std::set<std::string>& nodes() const { return nodes_; }
  std::vector<CallEdge> edges() const;
  const std::set<ExternalCall>& external_calls() const { return external_; }

  const std::set<std::string>& direct_callees(const std::string& id) const;
  const std::set<std::string>& direct_callers(const std::string& id) const;

  nlohmann::json to_json() const;
  static CallGraph from_json(const nlohmann::json& j);

 private:
  std::set<std::string> nodes_;
  std::map<std::pair<std::string, std::string>, std::set<SiteRef>> edges_;
  std::map<std::string, std::set<std::string>> out_;
  std::map<std::string, std::set<std::string>> in_;
  std::set<ExternalCall> external_;
};

// Static, best-effort resolution: enclosing scopes and same-module
// definitions, then explicit imports, then a corpus-unique module-level name.
// Unresolved calls are recorded as external and produce no edge.
CallGraph build_call_graph(const Corpus& corpus);

inline constexpr std::size_t kUnboundedDepth = std::numeric_limits<std::size_t>::max();

// BFS over reversed / forward edges up to `depth` hops. The start id is only
// included when a cycle leads back to it. Throws Error{UnknownFunction}.
std::set<std::string> callers_of(const CallGraph& graph, const std::string& id,
                                 std::size_t depth = kUnboundedDepth);
std::set<std::string> callees_of(const CallGraph& graph, const std::string& id,
                                 std::size_t depth = kUnboundedDepth);

}  // namespace peace
