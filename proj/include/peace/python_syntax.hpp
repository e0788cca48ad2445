#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace peace {

// Half-open byte range into a file's content.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool contains(std::size_t offset) const { return begin <= offset && offset < end; }
  bool contains(const Span& other) const { return begin <= other.begin && other.end <= end; }
  bool operator==(const Span&) const = default;
};

struct Parameter {
  enum class Kind { Positional, PositionalOnly, VarPositional, KeywordOnly, VarKeyword };
  std::string name;
  Kind kind = Kind::Positional;
  bool has_default = false;
};

// A syntactic call `a.b.c(...)`. `callee` is the dotted name chain; calls on
// arbitrary expressions (`f()()`, `x[0](...)`) are not recorded.
struct CallSite {
  std::string callee;
  Span span;
  std::size_t positional_args = 0;
  std::vector<std::string> keyword_args;
  bool star_args = false;
  bool star_kwargs = false;
};

struct FunctionRecord {
  std::string id;    // module + dotted scope + name
  std::string name;  // short name
  std::string path;  // repo-relative file path
  Span span;         // `def` (or `async`) keyword through the end of the last body line
  std::size_t start_line = 0;  // 1-based, inclusive
  std::size_t end_line = 0;
  std::size_t column = 0;  // byte column of the `def`/`async` token
  std::string body;        // content[span]
  std::vector<Parameter> params;
  std::optional<std::string> doc;
  std::vector<std::string> decorators;
  std::string parent;       // qualified name of the enclosing scope
  std::string class_name;   // enclosing class id when this is a method, else empty
  std::vector<CallSite> calls;

  std::vector<std::string> signature() const;
};

struct ClassRecord {
  std::string id;
  std::string name;
  Span span;
};

// `alias` is the name bound in the module; `target` the fully qualified dotted
// path it refers to. Star imports use alias "*".
struct ImportBinding {
  std::string alias;
  std::string target;
};

struct SourceUnit {
  std::string path;
  std::string module;
  std::string content;
  std::vector<FunctionRecord> functions;
  std::vector<ClassRecord> classes;
  std::vector<ImportBinding> imports;
  std::vector<std::string> diagnostics;

  bool syntax_ok() const { return diagnostics.empty(); }
  const FunctionRecord* find(std::string_view id) const;
};

// "pkg/sub/mod.py" -> "pkg.sub.mod"; "pkg/__init__.py" -> "pkg".
std::string module_name_for(std::string_view path);

// Throws Error{UndecodableFile} for binary or non-UTF-8 content. Broken
// syntax yields zero functions and at least one diagnostic.
SourceUnit parse_unit(std::string path, std::string content);

// Returns diagnostics for `text`; empty when the text tokenizes and its block
// structure is well formed.
std::vector<std::string> check_syntax(std::string_view text);

// Parses a standalone function definition (possibly indented, possibly
// preceded by decorators). Returns nullopt unless the text holds exactly one
// top-level `def` and nothing else besides decorators and comments.
std::optional<FunctionRecord> parse_function_definition(std::string_view text);

}  // namespace peace
