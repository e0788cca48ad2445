#include "peace/call_graph.hpp"

#include <algorithm>
#include <deque>
#include <future>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "peace/error.hpp"
#include "peace/util/files.hpp"
#include "peace/util/git.hpp"

namespace peace {

namespace fs = std::filesystem;

const SourceUnit* Corpus::find_unit(std::string_view path) const {
  auto it = std::lower_bound(units.begin(), units.end(), path,
                             [](const SourceUnit& u, std::string_view p) { return u.path < p; });
  if (it != units.end() && it->path == path) return &*it;
  return nullptr;
}

const FunctionRecord* Corpus::find_function(std::string_view id) const {
  for (auto& u : units)
    if (auto* f = u.find(id)) return f;
  return nullptr;
}

std::vector<const FunctionRecord*> Corpus::functions() const {
  std::vector<const FunctionRecord*> out;
  for (auto& u : units)
    for (auto& f : u.functions) out.push_back(&f);
  return out;
}

Corpus make_corpus(std::vector<std::pair<std::string, std::string>> files) {
  std::sort(files.begin(), files.end());
  Corpus corpus;
  corpus.units.resize(files.size());
  std::vector<std::string> errors(files.size());
  std::vector<char> ok(files.size(), 0);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        corpus.units[i] = parse_unit(files[i].first, std::move(files[i].second));
        ok[i] = 1;
      } catch (const Error& e) {
        errors[i] = e.what();
      }
    }
  };
  std::size_t workers = std::max(1u, std::min(4u, std::thread::hardware_concurrency()));
  if (files.size() < 16) workers = 1;
  std::vector<std::future<void>> jobs;
  std::size_t chunk = (files.size() + workers - 1) / std::max<std::size_t>(workers, 1);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t b = w * chunk, e = std::min(files.size(), b + chunk);
    if (b >= e) break;
    jobs.push_back(std::async(std::launch::async, work, b, e));
  }
  for (auto& j : jobs) j.get();

  std::vector<SourceUnit> kept;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (ok[i]) {
      for (auto& d : corpus.units[i].diagnostics)
        corpus.warnings.push_back(corpus.units[i].path + ": " + d);
      kept.push_back(std::move(corpus.units[i]));
    } else {
      spdlog::warn("skipping {}", errors[i]);
      corpus.warnings.push_back(errors[i]);
    }
  }
  corpus.units = std::move(kept);
  return corpus;
}

namespace {

bool skipped_dir(const fs::path& p) {
  auto name = p.filename().string();
  return (!name.empty() && name[0] == '.') || name == "__pycache__" || name == "venv" ||
         name == "node_modules" || name == "site-packages";
}

}  // namespace

Corpus load_corpus_dir(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::Io, root.string() + " is not a directory");
  std::vector<std::pair<std::string, std::string>> files;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator();
       ++it) {
    if (it->is_directory() && skipped_dir(it->path())) {
      it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file() || it->path().extension() != ".py") continue;
    auto rel = fs::relative(it->path(), root).generic_string();
    files.emplace_back(rel, util::read_file(it->path()));
  }
  return make_corpus(std::move(files));
}

Corpus load_corpus_git(const util::Git& git, const std::string& revision) {
  std::vector<std::pair<std::string, std::string>> files;
  for (auto& path : git.list_files(revision)) {
    if (path.size() < 3 || path.compare(path.size() - 3, 3, ".py") != 0) continue;
    if (auto content = git.show_file(revision, path)) files.emplace_back(path, std::move(*content));
  }
  return make_corpus(std::move(files));
}

void CallGraph::add_node(const std::string& id) { nodes_.insert(id); }

void CallGraph::add_edge(const std::string& caller, const std::string& callee, SiteRef site) {
  if (!contains(caller) || !contains(callee))
    throw Error(ErrorCode::UnknownFunction, "edge " + caller + " -> " + callee);
  auto& sites = edges_[{caller, callee}];
  if (!site.path.empty()) sites.insert(std::move(site));
  out_[caller].insert(callee);
  in_[callee].insert(caller);
}

void CallGraph::add_external(const std::string& caller, const std::string& callee) {
  external_.insert({caller, callee});
}

bool CallGraph::has_edge(std::string_view caller, std::string_view callee) const {
  return edges_.count({std::string(caller), std::string(callee)}) > 0;
}

std::vector<CallEdge> CallGraph::edges() const {
  std::vector<CallEdge> out;
  out.reserve(edges_.size());
  for (auto& [key, sites] : edges_)
    out.push_back({key.first, key.second, std::vector<SiteRef>(sites.begin(), sites.end())});
  return out;
}

const std::set<std::string>& CallGraph::direct_callees(const std::string& id) const {
  static const std::set<std::string> kEmpty;
  auto it = out_.find(id);
  return it == out_.end() ? kEmpty : it->second;
}

const std::set<std::string>& CallGraph::direct_callers(const std::string& id) const {
  static const std::set<std::string> kEmpty;
  auto it = in_.find(id);
  return it == in_.end() ? kEmpty : it->second;
}

nlohmann::json CallGraph::to_json() const {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (auto& n : nodes_) j["nodes"].push_back(n);
  j["edges"] = nlohmann::json::array();
  for (auto& e : edges()) {
    nlohmann::json sites = nlohmann::json::array();
    for (auto& s : e.sites) sites.push_back({{"path", s.path}, {"begin", s.span.begin}, {"end", s.span.end}});
    j["edges"].push_back({{"caller", e.caller}, {"callee", e.callee}, {"sites", sites}});
  }
  j["external"] = nlohmann::json::array();
  for (auto& x : external_) j["external"].push_back({{"caller", x.caller}, {"callee", x.callee}});
  return j;
}

CallGraph CallGraph::from_json(const nlohmann::json& j) {
  CallGraph g;
  for (auto& n : j.at("nodes")) g.add_node(n.get<std::string>());
  for (auto& e : j.at("edges")) {
    auto caller = e.at("caller").get<std::string>();
    auto callee = e.at("callee").get<std::string>();
    if (e.contains("sites") && !e["sites"].empty()) {
      for (auto& s : e["sites"])
        g.add_edge(caller, callee,
                   {s.at("path").get<std::string>(),
                    {s.at("begin").get<std::size_t>(), s.at("end").get<std::size_t>()}});
    } else {
      g.add_edge(caller, callee);
    }
  }
  if (j.contains("external"))
    for (auto& x : j["external"])
      g.add_external(x.at("caller").get<std::string>(), x.at("callee").get<std::string>());
  return g;
}

namespace {

const std::unordered_set<std::string_view>& builtin_names() {
  static const std::unordered_set<std::string_view> names = {
      "abs",      "all",        "any",       "ascii",     "bin",        "bool",     "breakpoint",
      "bytearray", "bytes",     "callable",  "chr",       "classmethod", "compile", "complex",
      "delattr",  "dict",       "dir",       "divmod",    "enumerate",  "eval",     "exec",
      "filter",   "float",      "format",    "frozenset", "getattr",    "globals",  "hasattr",
      "hash",     "help",       "hex",       "id",        "input",      "int",      "isinstance",
      "issubclass", "iter",     "len",       "list",      "locals",     "map",      "max",
      "memoryview", "min",      "next",      "object",    "oct",        "open",     "ord",
      "pow",      "print",      "property",  "range",     "repr",       "reversed", "round",
      "set",      "setattr",    "slice",     "sorted",    "staticmethod", "str",    "sum",
      "super",    "tuple",      "type",      "vars",      "zip",        "__import__"};
  return names;
}

class Resolver {
 public:
  explicit Resolver(const Corpus& corpus) : corpus_(corpus) {
    for (auto& u : corpus.units) {
      for (auto& f : u.functions) {
        functions_[f.id] = &f;
        bool module_level = f.parent == u.module;
        if (module_level) by_short_name_[f.name].push_back(f.id);
      }
      for (auto& c : u.classes) classes_.insert(c.id);
    }
  }

  // Resolved callee id, or empty string.
  std::string resolve(const SourceUnit& unit, const FunctionRecord& fn, const CallSite& call) const {
    auto parts = split(call.callee);
    if (parts.empty()) return {};
    if (parts.size() == 1) return resolve_simple(unit, fn, parts[0]);

    const std::string& head = parts[0];
    std::string rest = join(parts, 1);
    if ((head == "self" || head == "cls") && !fn.class_name.empty()) {
      if (auto id = callable(fn.class_name + "." + rest); !id.empty()) return id;
      return {};
    }
    for (auto& b : unit.imports) {
      if (b.alias != head) continue;
      if (auto id = callable(b.target + "." + rest); !id.empty()) return id;
    }
    if (classes_.count(unit.module + "." + head))
      if (auto id = callable(unit.module + "." + head + "." + rest); !id.empty()) return id;
    return {};
  }

 private:
  static std::vector<std::string> split(const std::string& dotted) {
    std::vector<std::string> parts;
    std::size_t s = 0;
    while (s <= dotted.size()) {
      auto d = dotted.find('.', s);
      if (d == std::string::npos) d = dotted.size();
      parts.push_back(dotted.substr(s, d - s));
      s = d + 1;
    }
    return parts;
  }

  static std::string join(const std::vector<std::string>& parts, std::size_t from) {
    std::string out;
    for (std::size_t i = from; i < parts.size(); ++i) out += (i > from ? "." : "") + parts[i];
    return out;
  }

  // A function id, or a class id whose constructor is defined.
  std::string callable(const std::string& qualified) const {
    if (functions_.count(qualified)) return qualified;
    if (classes_.count(qualified) && functions_.count(qualified + ".__init__"))
      return qualified + ".__init__";
    return {};
  }

  std::string resolve_simple(const SourceUnit& unit, const FunctionRecord& fn,
                             const std::string& name) const {
    // Enclosing function scopes, then the module. Class bodies are not
    // visible from nested functions.
    std::string scope = fn.id;
    while (true) {
      if (!classes_.count(scope)) {
        if (auto id = callable(scope + "." + name); !id.empty()) return id;
      }
      if (scope == unit.module || scope.size() <= unit.module.size()) break;
      auto dot = scope.rfind('.');
      if (dot == std::string::npos) break;
      scope = scope.substr(0, dot);
    }
    for (auto& b : unit.imports) {
      if (b.alias == name)
        if (auto id = callable(b.target); !id.empty()) return id;
    }
    for (auto& b : unit.imports) {
      if (b.alias == "*")
        if (auto id = callable(b.target + "." + name); !id.empty()) return id;
    }
    if (builtin_names().count(name)) return {};
    auto it = by_short_name_.find(name);
    if (it != by_short_name_.end() && it->second.size() == 1) return it->second.front();
    return {};
  }

  const Corpus& corpus_;
  std::unordered_map<std::string, const FunctionRecord*> functions_;
  std::unordered_set<std::string> classes_;
  std::unordered_map<std::string, std::vector<std::string>> by_short_name_;
};

std::set<std::string> bfs(const CallGraph& graph, const std::string& id, std::size_t depth,
                          bool forward) {
  if (!graph.contains(id)) throw Error(ErrorCode::UnknownFunction, id);
  if (depth == 0) throw std::invalid_argument("depth must be >= 1");
  std::set<std::string> result;
  std::set<std::string> expanded = {id};
  std::vector<std::string> frontier = {id};
  for (std::size_t level = 0; level < depth && !frontier.empty(); ++level) {
    std::vector<std::string> next;
    for (auto& node : frontier) {
      const auto& nbrs = forward ? graph.direct_callees(node) : graph.direct_callers(node);
      for (auto& n : nbrs) {
        result.insert(n);
        if (expanded.insert(n).second) next.push_back(n);
      }
    }
    frontier = std::move(next);
  }
  return result;
}

}  // namespace

CallGraph build_call_graph(const Corpus& corpus) {
  CallGraph graph;
  for (auto& u : corpus.units)
    for (auto& f : u.functions) graph.add_node(f.id);
  Resolver resolver(corpus);
  for (auto& u : corpus.units) {
    for (auto& f : u.functions) {
      for (auto& call : f.calls) {
        auto target = resolver.resolve(u, f, call);
        if (target.empty())
          graph.add_external(f.id, call.callee);
        else
          graph.add_edge(f.id, target, {u.path, call.span});
      }
    }
  }
  return graph;
}

std::set<std::string> callers_of(const CallGraph& graph, const std::string& id, std::size_t depth) {
  return bfs(graph, id, depth, false);
}

std::set<std::string> callees_of(const CallGraph& graph, const std::string& id, std::size_t depth) {
  return bfs(graph, id, depth, true);
}

}  // namespace peace
