#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace peace::util {

// Splits on '\n'; a trailing newline does not produce an empty last element.
std::vector<std::string> split_lines(std::string_view text);
std::string join_lines(const std::vector<std::string>& lines, bool trailing_newline);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool is_valid_utf8(std::string_view s);

// Removes the common leading whitespace of all non-blank lines.
std::string dedent(std::string_view text);

// Dedents, then indents every line after the first by `column` spaces. The
// result is suitable for splicing at a `def` that starts at `column`.
std::string reindent(std::string_view text, std::size_t column);

// Whitespace-insensitive form used for comparing code bodies.
std::string normalize_code(std::string_view text);

// First ```-fenced block in the text (any info string); found=false when
// there is none. Fences count only at the start of a line, so an inline
// mention of ``` in prose is ignored.
struct Fenced {
  bool found = false;
  std::string body;
};
Fenced first_fenced_block(std::string_view text);
// Bodies of all fenced blocks, in order.
std::vector<std::string> fenced_blocks(std::string_view text);

// Identifier tokens ([A-Za-z_][A-Za-z0-9_]*) with Python keywords removed.
std::vector<std::string> identifiers(std::string_view code);

}  // namespace peace::util
