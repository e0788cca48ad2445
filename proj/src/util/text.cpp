#include "peace/util/text.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <unordered_set>

namespace peace::util {

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines, bool trailing_newline) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += lines[i];
    if (i + 1 < lines.size() || trailing_newline) out += '\n';
  }
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    if (c == 0) return false;
    int extra = 0;
    if (c < 0x80) {
      extra = 0;
    } else if ((c & 0xE0) == 0xC0) {
      if (c < 0xC2) return false;
      extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
    } else if ((c & 0xF8) == 0xF0 && c <= 0xF4) {
      extra = 3;
    } else {
      return false;
    }
    if (i + static_cast<std::size_t>(extra) >= s.size()) return false;
    for (int k = 1; k <= extra; ++k)
      if ((static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]) & 0xC0) != 0x80)
        return false;
    i += static_cast<std::size_t>(extra) + 1;
  }
  return true;
}

namespace {

std::size_t leading_ws(std::string_view line) {
  std::size_t n = 0;
  while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
  return n;
}

bool blank(std::string_view line) { return trim(line).empty(); }

}  // namespace

std::string dedent(std::string_view text) {
  auto lines = split_lines(text);
  std::size_t common = std::numeric_limits<std::size_t>::max();
  for (auto& l : lines)
    if (!blank(l)) common = std::min(common, leading_ws(l));
  if (common == std::numeric_limits<std::size_t>::max()) common = 0;
  for (auto& l : lines) l = blank(l) ? std::string() : l.substr(common);
  while (!lines.empty() && lines.front().empty()) lines.erase(lines.begin());
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return join_lines(lines, false);
}

std::string reindent(std::string_view text, std::size_t column) {
  auto lines = split_lines(dedent(text));
  std::string pad(column, ' ');
  for (std::size_t i = 1; i < lines.size(); ++i)
    if (!lines[i].empty()) lines[i] = pad + lines[i];
  return join_lines(lines, false);
}

std::string normalize_code(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : dedent(text)) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

namespace {

// Position of the next ``` that starts a line (after optional indentation).
std::size_t find_fence(std::string_view text, std::size_t from) {
  for (auto pos = text.find("```", from); pos != std::string_view::npos; pos = text.find("```", pos + 3)) {
    auto line_start = text.rfind('\n', pos == 0 ? 0 : pos - 1);
    line_start = (line_start == std::string_view::npos || pos == 0) ? 0 : line_start + 1;
    if (text.substr(line_start, pos - line_start).find_first_not_of(" \t") == std::string_view::npos) return pos;
  }
  return std::string_view::npos;
}

}  // namespace

std::vector<std::string> fenced_blocks(std::string_view text) {
  std::vector<std::string> out;
  std::size_t from = 0;
  while (true) {
    auto open = find_fence(text, from);
    if (open == std::string_view::npos) break;
    auto body_start = text.find('\n', open);
    if (body_start == std::string_view::npos) break;
    ++body_start;
    auto close = find_fence(text, body_start);
    if (close == std::string_view::npos) break;
    auto body = text.substr(body_start, close - body_start);
    while (!body.empty() && std::string_view("\n\r \t").find(body.back()) != std::string_view::npos) body.remove_suffix(1);
    out.emplace_back(body);
    from = close + 3;
  }
  return out;
}

Fenced first_fenced_block(std::string_view text) {
  auto blocks = fenced_blocks(text);
  if (blocks.empty()) return {};
  return {true, std::move(blocks.front())};
}

std::vector<std::string> identifiers(std::string_view code) {
  static const std::unordered_set<std::string_view> kKeywords = {
      "False", "None",  "True",   "and",   "as",     "assert", "async",  "await",
      "break", "class", "continue", "def", "del",    "elif",   "else",   "except",
      "finally", "for", "from",   "global", "if",    "import", "in",     "is",
      "lambda", "nonlocal", "not", "or",   "pass",   "raise",  "return", "try",
      "while", "with",  "yield",  "self"};
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < code.size()) {
    auto c = static_cast<unsigned char>(code[i]);
    if (std::isalpha(c) || c == '_') {
      std::size_t j = i + 1;
      while (j < code.size() &&
             (std::isalnum(static_cast<unsigned char>(code[j])) || code[j] == '_'))
        ++j;
      auto word = code.substr(i, j - i);
      if (!kKeywords.count(word)) out.emplace_back(word);
      i = j;
    } else if (std::isdigit(c)) {
      while (i < code.size() &&
             (std::isalnum(static_cast<unsigned char>(code[i])) || code[i] == '_' ||
              code[i] == '.'))
        ++i;
    } else {
      ++i;
    }
  }
  return out;
}

}  // namespace peace::util
