#include "peace/python_syntax.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <unordered_set>

#include "peace/error.hpp"
#include "peace/util/text.hpp"

namespace peace {

namespace {

enum class Tok { Name, Number, String, Op, Newline, Indent, Dedent, End };

struct Token {
  Tok kind;
  std::size_t begin;
  std::size_t end;
  std::size_t line;
  std::size_t col;
  std::string_view text;
};

bool is_name_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_name_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool is_string_prefix(std::string_view s) {
  if (s.empty() || s.size() > 2) return false;
  auto l = util::to_lower(s);
  return l == "r" || l == "u" || l == "b" || l == "f" || l == "br" || l == "rb" || l == "fr" ||
         l == "rf";
}

const std::unordered_set<std::string_view>& keywords() {
  static const std::unordered_set<std::string_view> k = {
      "False", "None",   "True",    "and",      "as",   "assert", "async", "await",
      "break", "class",  "continue", "def",     "del",  "elif",   "else",  "except",
      "finally", "for",  "from",    "global",   "if",   "import", "in",    "is",
      "lambda", "nonlocal", "not",  "or",       "pass", "raise",  "return", "try",
      "while", "with",   "yield"};
  return k;
}

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view src) : src_(src) {}

  std::vector<Token> run(std::vector<std::string>& diags) {
    indents_.push_back(0);
    bool at_line_start = true;
    while (pos_ < src_.size()) {
      if (at_line_start && depth_ == 0) {
        if (!handle_indentation(diags)) continue;
        at_line_start = false;
      }
      char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\f' || c == '\r') {
        ++pos_;
        continue;
      }
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
        continue;
      }
      if (c == '\\') {
        std::size_t p = pos_ + 1;
        if (p < src_.size() && src_[p] == '\r') ++p;
        if (p < src_.size() && src_[p] == '\n') {
          pos_ = p + 1;
          ++line_;
          line_start_ = pos_;
          continue;
        }
        diags.push_back(where() + "unexpected character after line continuation");
        ++pos_;
        continue;
      }
      if (c == '\n') {
        if (depth_ == 0) {
          if (!tokens_.empty() && tokens_.back().kind != Tok::Newline &&
              tokens_.back().kind != Tok::Indent && tokens_.back().kind != Tok::Dedent)
            push(Tok::Newline, pos_, pos_ + 1);
          at_line_start = true;
        }
        ++pos_;
        ++line_;
        line_start_ = pos_;
        continue;
      }
      auto uc = static_cast<unsigned char>(c);
      if (is_name_start(uc)) {
        std::size_t b = pos_;
        while (pos_ < src_.size() && is_name_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == '\'' || src_[pos_] == '"') &&
            is_string_prefix(src_.substr(b, pos_ - b))) {
          read_string(b, diags);
        } else {
          push(Tok::Name, b, pos_);
        }
        continue;
      }
      if (std::isdigit(uc) ||
          (c == '.' && pos_ + 1 < src_.size() &&
           std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        std::size_t b = pos_;
        while (pos_ < src_.size()) {
          char d = src_[pos_];
          if (std::isalnum(static_cast<unsigned char>(d)) || d == '_' || d == '.') {
            ++pos_;
          } else if ((d == '+' || d == '-') && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E') &&
                     !(src_.substr(b, 2) == "0x" || src_.substr(b, 2) == "0X")) {
            ++pos_;
          } else {
            break;
          }
        }
        push(Tok::Number, b, pos_);
        continue;
      }
      if (c == '\'' || c == '"') {
        read_string(pos_, diags);
        continue;
      }
      read_operator(diags);
    }
    if (depth_ > 0) diags.push_back("unexpected EOF: unclosed bracket");
    if (!tokens_.empty() && tokens_.back().kind != Tok::Newline &&
        tokens_.back().kind != Tok::Dedent && tokens_.back().kind != Tok::Indent)
      push(Tok::Newline, pos_, pos_);
    while (indents_.size() > 1) {
      indents_.pop_back();
      push(Tok::Dedent, pos_, pos_);
    }
    push(Tok::End, pos_, pos_);
    return std::move(tokens_);
  }

 private:
  std::string where() const { return "line " + std::to_string(line_) + ": "; }

  void push(Tok kind, std::size_t b, std::size_t e) {
    tokens_.push_back(Token{kind, b, e, line_, b >= line_start_ ? b - line_start_ : 0,
                            src_.substr(b, e - b)});
  }

  // Returns false when the line was blank (pos_ advanced past it).
  bool handle_indentation(std::vector<std::string>& diags) {
    std::size_t width = 0;
    std::size_t p = pos_;
    while (p < src_.size()) {
      if (src_[p] == ' ') {
        ++width;
      } else if (src_[p] == '\t') {
        width = (width / 8 + 1) * 8;
      } else if (src_[p] == '\f') {
        width = 0;
      } else {
        break;
      }
      ++p;
    }
    if (p >= src_.size()) {
      pos_ = p;
      return false;
    }
    if (src_[p] == '#' || src_[p] == '\n' || src_[p] == '\r') {
      while (p < src_.size() && src_[p] != '\n') ++p;
      if (p < src_.size()) {
        ++p;
        ++line_;
        line_start_ = p;
      }
      pos_ = p;
      return false;
    }
    pos_ = p;
    if (width > indents_.back()) {
      indents_.push_back(width);
      push(Tok::Indent, pos_, pos_);
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        push(Tok::Dedent, pos_, pos_);
      }
      if (width != indents_.back())
        diags.push_back(where() + "unindent does not match any outer indentation level");
    }
    return true;
  }

  void read_string(std::size_t begin, std::vector<std::string>& diags) {
    char q = src_[pos_];
    bool triple = pos_ + 2 < src_.size() && src_[pos_ + 1] == q && src_[pos_ + 2] == q;
    std::size_t start_line = line_;
    pos_ += triple ? 3 : 1;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\\') {
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') {
          ++line_;
          line_start_ = pos_ + 2;
        }
        pos_ += 2;
        continue;
      }
      if (c == '\n') {
        if (!triple) {
          diags.push_back("line " + std::to_string(start_line) + ": unterminated string literal");
          push(Tok::String, begin, pos_);
          return;
        }
        ++line_;
        line_start_ = pos_ + 1;
        ++pos_;
        continue;
      }
      if (c == q) {
        if (!triple) {
          ++pos_;
          push(Tok::String, begin, pos_);
          return;
        }
        if (pos_ + 2 < src_.size() && src_[pos_ + 1] == q && src_[pos_ + 2] == q) {
          pos_ += 3;
          push(Tok::String, begin, pos_);
          return;
        }
      }
      ++pos_;
    }
    diags.push_back("line " + std::to_string(start_line) + ": unterminated string literal");
    pos_ = src_.size();
    push(Tok::String, begin, pos_);
  }

  void read_operator(std::vector<std::string>& diags) {
    static const char* kThree[] = {"**=", "//=", ">>=", "<<=", "...", nullptr};
    static const char* kTwo[] = {"**", "//", ">>", "<<", "<=", ">=", "==", "!=", "->", "+=",
                                 "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", ":=", nullptr};
    std::size_t b = pos_;
    for (auto** op = kThree; *op; ++op)
      if (src_.substr(pos_, 3) == *op) {
        pos_ += 3;
        push(Tok::Op, b, pos_);
        return;
      }
    for (auto** op = kTwo; *op; ++op)
      if (src_.substr(pos_, 2) == *op) {
        pos_ += 2;
        push(Tok::Op, b, pos_);
        return;
      }
    char c = src_[pos_];
    static const std::string_view kSingle = "+-*/%@&|^~<>()[]{},:;.=!";
    if (kSingle.find(c) == std::string_view::npos) {
      diags.push_back(where() + "invalid character '" + std::string(1, c) + "'");
      ++pos_;
      return;
    }
    if (c == '(' || c == '[' || c == '{') {
      brackets_.push_back(c);
      ++depth_;
    } else if (c == ')' || c == ']' || c == '}') {
      char open = c == ')' ? '(' : c == ']' ? '[' : '{';
      if (brackets_.empty() || brackets_.back() != open) {
        diags.push_back(where() + "unmatched '" + std::string(1, c) + "'");
      } else {
        brackets_.pop_back();
        --depth_;
      }
    }
    ++pos_;
    push(Tok::Op, b, pos_);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t line_start_ = 0;
  int depth_ = 0;
  std::vector<char> brackets_;
  std::vector<std::size_t> indents_;
  std::vector<Token> tokens_;
};

struct Line {
  std::size_t first;  // token index
  std::size_t last;   // one past the last content token (before Newline)
  int depth;
};

bool is_op(const Token& t, std::string_view s) { return t.kind == Tok::Op && t.text == s; }
bool is_name(const Token& t, std::string_view s) { return t.kind == Tok::Name && t.text == s; }

// Index of the bracket closing tokens[open]; tokens.size() if unbalanced.
std::size_t match_close(const std::vector<Token>& toks, std::size_t open, std::size_t limit) {
  int depth = 0;
  for (std::size_t i = open; i < limit; ++i) {
    if (toks[i].kind != Tok::Op) continue;
    auto t = toks[i].text;
    if (t == "(" || t == "[" || t == "{") ++depth;
    if (t == ")" || t == "]" || t == "}") {
      if (--depth == 0) return i;
    }
  }
  return toks.size();
}

// Splits tokens (open, close) at top-level commas into [begin, end) ranges.
std::vector<std::pair<std::size_t, std::size_t>> split_args(const std::vector<Token>& toks,
                                                            std::size_t open, std::size_t close) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  int depth = 0;
  std::size_t seg = open + 1;
  for (std::size_t i = open + 1; i < close; ++i) {
    if (toks[i].kind != Tok::Op) continue;
    auto t = toks[i].text;
    if (t == "(" || t == "[" || t == "{") ++depth;
    if (t == ")" || t == "]" || t == "}") --depth;
    if (t == "," && depth == 0) {
      if (i > seg) out.emplace_back(seg, i);
      seg = i + 1;
    }
  }
  if (close > seg) out.emplace_back(seg, close);
  return out;
}

std::vector<Parameter> parse_params(const std::vector<Token>& toks, std::size_t open,
                                    std::size_t close) {
  std::vector<Parameter> params;
  bool keyword_only = false;
  for (auto [b, e] : split_args(toks, open, close)) {
    const auto& first = toks[b];
    if (is_op(first, "/") && e == b + 1) {
      for (auto& p : params)
        if (p.kind == Parameter::Kind::Positional) p.kind = Parameter::Kind::PositionalOnly;
      continue;
    }
    if (is_op(first, "*")) {
      keyword_only = true;
      if (e == b + 1) continue;
      if (toks[b + 1].kind == Tok::Name)
        params.push_back({std::string(toks[b + 1].text), Parameter::Kind::VarPositional, false});
      continue;
    }
    if (is_op(first, "**")) {
      if (b + 1 < e && toks[b + 1].kind == Tok::Name)
        params.push_back({std::string(toks[b + 1].text), Parameter::Kind::VarKeyword, false});
      continue;
    }
    if (first.kind != Tok::Name) continue;
    Parameter p;
    p.name = std::string(first.text);
    p.kind = keyword_only ? Parameter::Kind::KeywordOnly : Parameter::Kind::Positional;
    int depth = 0;
    for (std::size_t i = b + 1; i < e; ++i) {
      if (toks[i].kind != Tok::Op) continue;
      auto t = toks[i].text;
      if (t == "(" || t == "[" || t == "{") ++depth;
      if (t == ")" || t == "]" || t == "}") --depth;
      if (t == "=" && depth == 0) p.has_default = true;
    }
    params.push_back(std::move(p));
  }
  return params;
}

std::string string_literal_value(std::string_view tok) {
  std::size_t i = 0;
  while (i < tok.size() && tok[i] != '\'' && tok[i] != '"') ++i;
  auto body = tok.substr(i);
  std::size_t q = (body.size() >= 6 && body[0] == body[1] && body[1] == body[2]) ? 3 : 1;
  if (body.size() < 2 * q) return {};
  return std::string(body.substr(q, body.size() - 2 * q));
}

void collect_calls(const std::vector<Token>& toks, std::size_t from, std::size_t to,
                   std::vector<CallSite>& out) {
  for (std::size_t k = from + 1; k < to; ++k) {
    if (!is_op(toks[k], "(")) continue;
    const auto& prev = toks[k - 1];
    if (prev.kind != Tok::Name || keywords().count(prev.text)) continue;
    // Walk back over a `Name(.Name)*` chain.
    std::size_t start = k - 1;
    while (start >= from + 2 && is_op(toks[start - 1], ".") && toks[start - 2].kind == Tok::Name &&
           !keywords().count(toks[start - 2].text))
      start -= 2;
    if (start > from) {
      const auto& before = toks[start - 1];
      if (is_op(before, ".")) continue;  // call on an expression result
      if (is_name(before, "def") || is_name(before, "class")) continue;
    }
    std::string callee;
    for (std::size_t i = start; i < k; ++i) callee += toks[i].text;
    std::size_t close = match_close(toks, k, to);
    if (close >= to) continue;
    CallSite site;
    site.callee = std::move(callee);
    site.span = {toks[start].begin, toks[close].end};
    for (auto [b, e] : split_args(toks, k, close)) {
      if (is_op(toks[b], "*")) {
        site.star_args = true;
      } else if (is_op(toks[b], "**")) {
        site.star_kwargs = true;
      } else if (toks[b].kind == Tok::Name && b + 1 < e && is_op(toks[b + 1], "=")) {
        site.keyword_args.emplace_back(toks[b].text);
      } else {
        ++site.positional_args;
      }
    }
    out.push_back(std::move(site));
  }
}

std::string resolve_relative(const std::string& module, bool is_package, std::size_t level,
                             const std::string& rest) {
  std::vector<std::string> parts;
  std::size_t s = 0;
  while (s <= module.size()) {
    auto dot = module.find('.', s);
    if (dot == std::string::npos) dot = module.size();
    if (dot > s) parts.push_back(module.substr(s, dot - s));
    s = dot + 1;
  }
  if (!is_package && !parts.empty()) parts.pop_back();
  for (std::size_t i = 1; i < level && !parts.empty(); ++i) parts.pop_back();
  std::string base;
  for (auto& p : parts) base += (base.empty() ? "" : ".") + p;
  if (rest.empty()) return base;
  return base.empty() ? rest : base + "." + rest;
}

void collect_imports(const std::vector<Token>& toks, const Line& line, const std::string& module,
                     bool is_package, std::vector<ImportBinding>& out) {
  std::size_t i = line.first;
  auto dotted = [&](std::size_t& p) {
    std::string s;
    while (p < line.last && (toks[p].kind == Tok::Name || is_op(toks[p], "."))) {
      if (is_name(toks[p], "import") || is_name(toks[p], "as")) break;
      s += toks[p].text;
      ++p;
    }
    return s;
  };
  if (is_name(toks[i], "import")) {
    ++i;
    while (i < line.last) {
      std::string target = dotted(i);
      std::string alias;
      if (i < line.last && is_name(toks[i], "as") && i + 1 < line.last) {
        alias = std::string(toks[i + 1].text);
        i += 2;
      } else {
        alias = target.substr(0, target.find('.'));
        target = alias;
      }
      if (!target.empty()) out.push_back({alias, target});
      if (i < line.last && is_op(toks[i], ",")) ++i;
      else break;
    }
    return;
  }
  if (!is_name(toks[i], "from")) return;
  ++i;
  std::size_t level = 0;
  while (i < line.last && (is_op(toks[i], ".") || is_op(toks[i], "..."))) {
    level += toks[i].text.size();
    ++i;
  }
  std::string base = dotted(i);
  if (level > 0) base = resolve_relative(module, is_package, level, base);
  if (i >= line.last || !is_name(toks[i], "import")) return;
  ++i;
  while (i < line.last) {
    if (is_op(toks[i], "(") || is_op(toks[i], ")") || is_op(toks[i], ",")) {
      ++i;
      continue;
    }
    if (is_op(toks[i], "*")) {
      out.push_back({"*", base});
      ++i;
      continue;
    }
    if (toks[i].kind != Tok::Name) {
      ++i;
      continue;
    }
    std::string name(toks[i].text);
    std::string alias = name;
    ++i;
    if (i + 1 < line.last && is_name(toks[i], "as")) {
      alias = std::string(toks[i + 1].text);
      i += 2;
    }
    out.push_back({alias, base.empty() ? name : base + "." + name});
  }
}

struct Scope {
  enum class Kind { Function, Class } kind;
  std::string qualified;
  int header_depth;
  std::size_t record;  // index into functions or classes
  std::size_t last_token_end;
  std::size_t last_line;
  std::size_t statements = 0;
};

struct Analysis {
  std::vector<FunctionRecord> functions;
  std::vector<ClassRecord> classes;
  std::vector<ImportBinding> imports;
};

std::vector<Line> split_logical_lines(const std::vector<Token>& toks) {
  std::vector<Line> lines;
  int depth = 0;
  std::size_t i = 0;
  while (i < toks.size() && toks[i].kind != Tok::End) {
    if (toks[i].kind == Tok::Indent) {
      ++depth;
      ++i;
      continue;
    }
    if (toks[i].kind == Tok::Dedent) {
      --depth;
      ++i;
      continue;
    }
    std::size_t b = i;
    while (i < toks.size() && toks[i].kind != Tok::Newline && toks[i].kind != Tok::End) ++i;
    if (i > b) lines.push_back({b, i, depth});
    if (i < toks.size() && toks[i].kind == Tok::Newline) ++i;
  }
  return lines;
}

// Index of the block-opening ':' on the line, or line.last if the line is not
// a compound-statement header.
std::size_t header_colon(const std::vector<Token>& toks, const Line& line) {
  int depth = 0;
  bool lambda_pending = false;
  for (std::size_t i = line.first; i < line.last; ++i) {
    const auto& t = toks[i];
    if (t.kind == Tok::Name && t.text == "lambda" && depth == 0) lambda_pending = true;
    if (t.kind != Tok::Op) continue;
    if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
    if (t.text == ")" || t.text == "]" || t.text == "}") --depth;
    if (t.text == ":" && depth == 0) {
      if (lambda_pending) {
        lambda_pending = false;
        continue;
      }
      return i;
    }
  }
  return line.last;
}

bool opens_compound(const Token& first) {
  static const std::unordered_set<std::string_view> k = {
      "def", "class", "if", "elif", "else", "for", "while", "try", "except", "finally",
      "with", "async", "match", "case"};
  return first.kind == Tok::Name && k.count(first.text);
}

void structural_checks(const std::vector<Token>& toks, const std::vector<Line>& lines,
                       std::vector<std::string>& diags) {
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto& line = lines[n];
    const auto& first = toks[line.first];
    std::size_t colon = header_colon(toks, line);
    bool block_header = opens_compound(first) && colon + 1 == line.last;
    if (opens_compound(first) && colon == line.last && first.text != "match" &&
        first.text != "case" && first.text != "async")
      diags.push_back("line " + std::to_string(first.line) + ": expected ':'");
    int next_depth = n + 1 < lines.size() ? lines[n + 1].depth : 0;
    if (block_header && next_depth <= line.depth)
      diags.push_back("line " + std::to_string(first.line) + ": expected an indented block");
    if (!block_header && n + 1 < lines.size() && next_depth > line.depth)
      diags.push_back("line " + std::to_string(toks[lines[n + 1].first].line) +
                      ": unexpected indent");
    if (is_name(first, "def") || (is_name(first, "async") && line.first + 1 < line.last &&
                                  is_name(toks[line.first + 1], "def"))) {
      std::size_t d = is_name(first, "async") ? line.first + 1 : line.first;
      if (d + 2 >= line.last || toks[d + 1].kind != Tok::Name || !is_op(toks[d + 2], "("))
        diags.push_back("line " + std::to_string(first.line) + ": malformed def");
    }
    if (is_name(first, "class") &&
        (line.first + 1 >= line.last || toks[line.first + 1].kind != Tok::Name))
      diags.push_back("line " + std::to_string(first.line) + ": malformed class");
  }
}

Analysis analyze(std::string_view content, const std::vector<Token>& toks,
                 const std::vector<Line>& lines, const std::string& path,
                 const std::string& module, bool is_package) {
  Analysis a;
  std::vector<Scope> scopes;
  std::vector<std::string> pending_decorators;
  std::map<std::string, int> seen_ids;

  auto close_scopes = [&](int depth) {
    while (!scopes.empty() && scopes.back().header_depth >= depth) {
      auto& s = scopes.back();
      if (s.kind == Scope::Kind::Function) {
        auto& f = a.functions[s.record];
        f.span.end = s.last_token_end;
        f.end_line = s.last_line;
      } else {
        a.classes[s.record].span.end = s.last_token_end;
      }
      scopes.pop_back();
    }
  };
  auto current_qualified = [&]() { return scopes.empty() ? module : scopes.back().qualified; };
  auto innermost_function = [&]() -> FunctionRecord* {
    for (auto it = scopes.rbegin(); it != scopes.rend(); ++it)
      if (it->kind == Scope::Kind::Function) return &a.functions[it->record];
    return nullptr;
  };
  auto unique_id = [&](const std::string& base) {
    int n = ++seen_ids[base];
    return n == 1 ? base : base + "#" + std::to_string(n);
  };

  for (const auto& line : lines) {
    close_scopes(line.depth);
    for (auto& s : scopes) {
      s.last_token_end = toks[line.last - 1].end;
      s.last_line = toks[line.last - 1].line;
    }
    const auto& first = toks[line.first];
    if (!scopes.empty() && line.depth == scopes.back().header_depth + 1) {
      auto& owner = scopes.back();
      if (owner.kind == Scope::Kind::Function && owner.statements == 0 &&
          first.kind == Tok::String && line.last == line.first + 1)
        a.functions[owner.record].doc = string_literal_value(first.text);
      ++owner.statements;
    }
    if (is_op(first, "@")) {
      pending_decorators.emplace_back(
          content.substr(first.begin, toks[line.last - 1].end - first.begin));
      continue;
    }
    if (is_name(first, "import") || is_name(first, "from"))
      collect_imports(toks, line, module, is_package, a.imports);

    std::size_t def_at = line.last;
    if (is_name(first, "def")) def_at = line.first;
    if (is_name(first, "async") && line.first + 1 < line.last && is_name(toks[line.first + 1], "def"))
      def_at = line.first + 1;
    std::size_t colon = header_colon(toks, line);

    if (def_at < line.last && def_at + 2 < line.last && toks[def_at + 1].kind == Tok::Name &&
        is_op(toks[def_at + 2], "(") && colon < line.last) {
      std::size_t close = match_close(toks, def_at + 2, line.last);
      FunctionRecord f;
      f.name = std::string(toks[def_at + 1].text);
      f.parent = current_qualified();
      f.id = unique_id(f.parent + "." + f.name);
      f.path = path;
      f.span.begin = first.begin;
      f.span.end = toks[line.last - 1].end;
      f.start_line = first.line;
      f.end_line = toks[line.last - 1].line;
      f.column = first.col;
      if (close < line.last) f.params = parse_params(toks, def_at + 2, close);
      f.decorators = std::move(pending_decorators);
      pending_decorators.clear();
      if (!scopes.empty() && scopes.back().kind == Scope::Kind::Class)
        f.class_name = scopes.back().qualified;
      // Calls in defaults/annotations/decorators run in the enclosing scope.
      if (auto* outer = innermost_function(); outer && close < line.last)
        collect_calls(toks, def_at + 2, close + 1, outer->calls);
      std::size_t index = a.functions.size();
      if (colon + 1 < line.last) {
        collect_calls(toks, colon, line.last, f.calls);
        a.functions.push_back(std::move(f));
      } else {
        a.functions.push_back(std::move(f));
        scopes.push_back({Scope::Kind::Function, a.functions[index].id, line.depth, index,
                          toks[line.last - 1].end, toks[line.last - 1].line});
      }
      continue;
    }
    if (is_name(first, "class") && line.first + 1 < line.last &&
        toks[line.first + 1].kind == Tok::Name && colon < line.last) {
      ClassRecord c;
      c.name = std::string(toks[line.first + 1].text);
      c.id = unique_id(current_qualified() + "." + c.name);
      c.span = {first.begin, toks[line.last - 1].end};
      pending_decorators.clear();
      std::size_t index = a.classes.size();
      a.classes.push_back(std::move(c));
      if (colon + 1 == line.last)
        scopes.push_back({Scope::Kind::Class, a.classes[index].id, line.depth, index,
                          toks[line.last - 1].end, toks[line.last - 1].line});
      continue;
    }
    pending_decorators.clear();

    if (auto* f = innermost_function()) collect_calls(toks, line.first, line.last, f->calls);
  }
  close_scopes(-1);

  for (auto& f : a.functions)
    f.body = std::string(content.substr(f.span.begin, f.span.end - f.span.begin));
  std::sort(a.functions.begin(), a.functions.end(),
            [](const FunctionRecord& x, const FunctionRecord& y) {
              return x.span.begin < y.span.begin;
            });
  return a;
}

}  // namespace

std::vector<std::string> FunctionRecord::signature() const {
  std::vector<std::string> names;
  names.reserve(params.size());
  for (auto& p : params) names.push_back(p.name);
  return names;
}

const FunctionRecord* SourceUnit::find(std::string_view id) const {
  for (auto& f : functions)
    if (f.id == id) return &f;
  return nullptr;
}

std::string module_name_for(std::string_view path) {
  std::string p(path);
  std::replace(p.begin(), p.end(), '\\', '/');
  while (p.rfind("./", 0) == 0) p.erase(0, 2);
  if (p.size() > 3 && p.compare(p.size() - 3, 3, ".py") == 0) p.resize(p.size() - 3);
  std::replace(p.begin(), p.end(), '/', '.');
  const std::string init = "__init__";
  if (p == init) return p;
  if (p.size() > init.size() + 1 && p.compare(p.size() - init.size() - 1, init.size() + 1,
                                              "." + init) == 0)
    p.resize(p.size() - init.size() - 1);
  return p;
}

std::vector<std::string> check_syntax(std::string_view text) {
  std::vector<std::string> diags;
  Tokenizer tz(text);
  auto toks = tz.run(diags);
  if (!diags.empty()) return diags;
  auto lines = split_logical_lines(toks);
  structural_checks(toks, lines, diags);
  return diags;
}

SourceUnit parse_unit(std::string path, std::string content) {
  if (!util::is_valid_utf8(content))
    throw Error(ErrorCode::UndecodableFile, path + " is not UTF-8 text");
  SourceUnit unit;
  unit.module = module_name_for(path);
  bool is_package = path.size() >= 11 && path.compare(path.size() - 11, 11, "__init__.py") == 0;
  unit.path = std::move(path);
  unit.content = std::move(content);

  Tokenizer tz(unit.content);
  auto toks = tz.run(unit.diagnostics);
  if (!unit.diagnostics.empty()) return unit;
  auto lines = split_logical_lines(toks);
  structural_checks(toks, lines, unit.diagnostics);
  if (!unit.diagnostics.empty()) return unit;

  auto a = analyze(unit.content, toks, lines, unit.path, unit.module, is_package);
  unit.functions = std::move(a.functions);
  unit.classes = std::move(a.classes);
  unit.imports = std::move(a.imports);
  return unit;
}

std::optional<FunctionRecord> parse_function_definition(std::string_view text) {
  std::string src = util::dedent(text);
  if (!util::is_valid_utf8(src)) return std::nullopt;
  SourceUnit unit;
  try {
    unit = parse_unit("__candidate__.py", src + "\n");
  } catch (const Error&) {
    return std::nullopt;
  }
  if (!unit.syntax_ok()) return std::nullopt;
  std::vector<const FunctionRecord*> top;
  for (auto& f : unit.functions)
    if (f.parent == unit.module) top.push_back(&f);
  if (top.size() != 1 || !unit.classes.empty()) return std::nullopt;
  // Nothing but decorators/comments may sit outside the def.
  std::vector<std::string> diags;
  Tokenizer tz(src);
  auto toks = tz.run(diags);
  for (const auto& t : toks) {
    if (t.kind == Tok::Newline || t.kind == Tok::Indent || t.kind == Tok::Dedent ||
        t.kind == Tok::End)
      continue;
    if (top.front()->span.begin <= t.begin && t.end <= top.front()->span.end) continue;
    bool in_decorator = false;
    for (auto& d : top.front()->decorators) {
      auto pos = src.find(d);
      if (pos != std::string::npos && pos <= t.begin && t.end <= pos + d.size()) in_decorator = true;
    }
    if (!in_decorator) return std::nullopt;
  }
  return *top.front();
}

}  // namespace peace
