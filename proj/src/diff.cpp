#include "peace/diff.hpp"

#include <algorithm>
#include <stdexcept>

#include "peace/error.hpp"

namespace peace {

namespace {

struct Tok {
  std::string text;
  bool no_newline = false;
  bool operator==(const Tok&) const = default;
};

std::vector<Tok> tokenize(std::string_view text) {
  std::vector<Tok> out;
  std::size_t i = 0;
  while (i < text.size()) {
    auto nl = text.find('\n', i);
    if (nl == std::string_view::npos) {
      out.push_back({std::string(text.substr(i)), true});
      break;
    }
    out.push_back({std::string(text.substr(i, nl - i)), false});
    i = nl + 1;
  }
  return out;
}

std::string render(const std::vector<Tok>& toks) {
  std::string out;
  for (auto& t : toks) {
    out += t.text;
    if (!t.no_newline) out += '\n';
  }
  return out;
}

std::string strip_prefix(std::string p, char side) {
  auto tab = p.find('\t');
  if (tab != std::string::npos) p.erase(tab);
  if (p.size() >= 2 && p.front() == '"' && p.back() == '"') p = p.substr(1, p.size() - 2);
  if (p == "/dev/null") return {};
  if (p.size() > 2 && p[0] == side && p[1] == '/') p.erase(0, 2);
  return p;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

// "-12,3" / "+4" -> (start, count)
std::pair<std::size_t, std::size_t> parse_range(std::string_view r) {
  r.remove_prefix(1);
  auto comma = r.find(',');
  std::size_t start = std::stoul(std::string(r.substr(0, comma)));
  std::size_t count = comma == std::string_view::npos ? 1 : std::stoul(std::string(r.substr(comma + 1)));
  return {start, count};
}

struct Edit {
  char op;
  std::size_t ai;
  std::size_t bi;
};

// Myers O(ND) shortest edit script.
std::vector<Edit> myers(const std::vector<Tok>& a, const std::vector<Tok>& b) {
  std::size_t prefix = 0;
  while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
  std::size_t suffix = 0;
  while (suffix < a.size() - prefix && suffix < b.size() - prefix &&
         a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix])
    ++suffix;
  const long n = static_cast<long>(a.size() - prefix - suffix);
  const long m = static_cast<long>(b.size() - prefix - suffix);
  auto A = [&](long i) -> const Tok& { return a[prefix + static_cast<std::size_t>(i)]; };
  auto B = [&](long j) -> const Tok& { return b[prefix + static_cast<std::size_t>(j)]; };

  std::vector<Edit> mid;
  if (n > 0 || m > 0) {
    const long max = n + m;
    std::vector<long> v(static_cast<std::size_t>(2 * max + 2), 0);
    auto V = [&](long k) -> long& { return v[static_cast<std::size_t>(k + max)]; };
    std::vector<std::vector<long>> trace;
    long found_d = -1;
    for (long d = 0; d <= max && found_d < 0; ++d) {
      trace.emplace_back(v.begin() + (max - d), v.begin() + (max + d + 1));
      for (long k = -d; k <= d; k += 2) {
        long x = (k == -d || (k != d && V(k - 1) < V(k + 1))) ? V(k + 1) : V(k - 1) + 1;
        long y = x - k;
        while (x < n && y < m && A(x) == B(y)) ++x, ++y;
        V(k) = x;
        if (x >= n && y >= m) {
          found_d = d;
          break;
        }
      }
    }
    long x = n, y = m;
    std::vector<Edit> rev;
    for (long d = found_d; d > 0; --d) {
      const auto& tv = trace[static_cast<std::size_t>(d)];
      auto T = [&](long k) { return tv[static_cast<std::size_t>(k + d)]; };
      long k = x - y;
      long prev_k = (k == -d || (k != d && T(k - 1) < T(k + 1))) ? k + 1 : k - 1;
      long prev_x = T(prev_k);
      long prev_y = prev_x - prev_k;
      while (x > prev_x && y > prev_y) {
        --x, --y;
        rev.push_back({'=', static_cast<std::size_t>(x), static_cast<std::size_t>(y)});
      }
      if (x == prev_x) {
        --y;
        rev.push_back({'+', static_cast<std::size_t>(x), static_cast<std::size_t>(y)});
      } else {
        --x;
        rev.push_back({'-', static_cast<std::size_t>(x), static_cast<std::size_t>(y)});
      }
    }
    while (x > 0 && y > 0) {
      --x, --y;
      rev.push_back({'=', static_cast<std::size_t>(x), static_cast<std::size_t>(y)});
    }
    mid.assign(rev.rbegin(), rev.rend());
  }

  std::vector<Edit> out;
  for (std::size_t i = 0; i < prefix; ++i) out.push_back({'=', i, i});
  for (auto e : mid) out.push_back({e.op, e.ai + prefix, e.bi + prefix});
  for (std::size_t i = 0; i < suffix; ++i)
    out.push_back({'=', a.size() - suffix + i, b.size() - suffix + i});
  return out;
}

}  // namespace

std::size_t FileDiff::added() const {
  std::size_t n = 0;
  for (auto& h : hunks)
    for (auto& l : h.lines) n += l.op == '+';
  return n;
}

std::size_t FileDiff::removed() const {
  std::size_t n = 0;
  for (auto& h : hunks)
    for (auto& l : h.lines) n += l.op == '-';
  return n;
}

std::vector<FileDiff> parse_unified_diff(std::string_view text) {
  auto lines = tokenize(text);
  std::vector<FileDiff> files;
  FileDiff* cur = nullptr;
  bool git_header = false;  // current file opened by "diff --git"
  bool seen_minus = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& l = lines[i].text;
    if (starts_with(l, "diff --git ")) {
      files.emplace_back();
      cur = &files.back();
      git_header = true;
      seen_minus = false;
      std::string rest = l.substr(11);
      auto mid = rest.size() / 2;
      if (rest.size() % 2 == 1 && rest[mid] == ' ' && rest.substr(2, mid - 2) == rest.substr(mid + 3)) {
        cur->old_path = strip_prefix(rest.substr(0, mid), 'a');
        cur->new_path = strip_prefix(rest.substr(mid + 1), 'b');
      } else if (auto b = rest.find(" b/"); b != std::string::npos) {
        cur->old_path = strip_prefix(rest.substr(0, b), 'a');
        cur->new_path = strip_prefix(rest.substr(b + 1), 'b');
      }
    } else if (starts_with(l, "new file mode") && cur) {
      cur->old_path.clear();
    } else if (starts_with(l, "deleted file mode") && cur) {
      cur->new_path.clear();
    } else if (starts_with(l, "rename from ") && cur) {
      cur->old_path = l.substr(12);
    } else if (starts_with(l, "rename to ") && cur) {
      cur->new_path = l.substr(10);
    } else if (starts_with(l, "Binary files ") || starts_with(l, "GIT binary patch")) {
      if (cur) cur->binary = true;
    } else if (starts_with(l, "--- ") && i + 1 < lines.size() && starts_with(lines[i + 1].text, "+++ ")) {
      if (!cur || !git_header || seen_minus || !cur->hunks.empty()) {
        files.emplace_back();
        cur = &files.back();
        git_header = false;
      }
      seen_minus = true;
      cur->old_path = strip_prefix(l.substr(4), 'a');
      cur->new_path = strip_prefix(lines[i + 1].text.substr(4), 'b');
      ++i;
    } else if (starts_with(l, "@@ ")) {
      if (!cur) throw std::invalid_argument("hunk before any file header");
      auto end = l.find(" @@", 3);
      if (end == std::string::npos) throw std::invalid_argument("malformed hunk header: " + l);
      auto ranges = l.substr(3, end - 3);
      auto space = ranges.find(' ');
      if (space == std::string::npos || ranges[0] != '-' || ranges[space + 1] != '+')
        throw std::invalid_argument("malformed hunk header: " + l);
      Hunk h;
      std::tie(h.old_start, h.old_count) = parse_range(ranges.substr(0, space));
      std::tie(h.new_start, h.new_count) = parse_range(ranges.substr(space + 1));
      std::size_t old_seen = 0, new_seen = 0;
      while ((old_seen < h.old_count || new_seen < h.new_count) && i + 1 < lines.size()) {
        const auto& body = lines[++i].text;
        char op = body.empty() ? ' ' : body[0];
        if (op == '\\') {
          if (!h.lines.empty()) h.lines.back().no_newline = true;
          continue;
        }
        if (op != ' ' && op != '+' && op != '-') throw std::invalid_argument("malformed hunk line: " + body);
        h.lines.push_back({op, body.empty() ? std::string() : body.substr(1), false});
        if (op != '+') ++old_seen;
        if (op != '-') ++new_seen;
      }
      if (old_seen != h.old_count || new_seen != h.new_count)
        throw std::invalid_argument("hunk shorter than its header: " + l);
      if (i + 1 < lines.size() && starts_with(lines[i + 1].text, "\\")) {
        h.lines.back().no_newline = true;
        ++i;
      }
      cur->hunks.push_back(std::move(h));
    }
  }
  return files;
}

std::string format_file_diff(const FileDiff& d) {
  std::string out;
  std::string a = d.old_path.empty() ? "/dev/null" : "a/" + d.old_path;
  std::string b = d.new_path.empty() ? "/dev/null" : "b/" + d.new_path;
  out += "--- " + a + "\n+++ " + b + "\n";
  for (auto& h : d.hunks) {
    out += "@@ -" + std::to_string(h.old_start) + "," + std::to_string(h.old_count) + " +" +
           std::to_string(h.new_start) + "," + std::to_string(h.new_count) + " @@\n";
    for (auto& l : h.lines) {
      out += l.op;
      out += l.text;
      out += '\n';
      if (l.no_newline) out += "\\ No newline at end of file\n";
    }
  }
  return out;
}

std::string apply_file_diff(std::string_view original, const FileDiff& diff) {
  if (diff.binary) throw Error(ErrorCode::PatchApplyFailure, "binary diff for " + diff.path());
  auto orig = tokenize(original);
  std::vector<Tok> out;
  std::size_t cursor = 0;
  long offset = 0;
  for (auto& h : diff.hunks) {
    std::vector<std::string> expected;
    for (auto& l : h.lines)
      if (l.op != '+') expected.push_back(l.text);
    long stated = static_cast<long>(h.old_count == 0 ? h.old_start : h.old_start - 1);
    long want = stated + offset;
    long lo = static_cast<long>(cursor);
    long hi = static_cast<long>(orig.size()) - static_cast<long>(expected.size());
    auto matches = [&](long p) {
      if (p < lo || p > hi) return false;
      for (std::size_t k = 0; k < expected.size(); ++k)
        if (orig[static_cast<std::size_t>(p) + k].text != expected[k]) return false;
      return true;
    };
    long found = -1;
    for (long delta = 0; found < 0 && (want - delta >= lo || want + delta <= hi); ++delta) {
      if (matches(want - delta)) found = want - delta;
      else if (delta && matches(want + delta)) found = want + delta;
    }
    if (found < 0)
      throw Error(ErrorCode::PatchApplyFailure,
                  "hunk @@ -" + std::to_string(h.old_start) + " does not match " + diff.path());
    for (std::size_t k = cursor; k < static_cast<std::size_t>(found); ++k) out.push_back(orig[k]);
    std::size_t p = static_cast<std::size_t>(found);
    for (auto& l : h.lines) {
      if (l.op == ' ') {
        out.push_back({orig[p].text, l.no_newline || orig[p].no_newline});
        ++p;
      } else if (l.op == '-') {
        ++p;
      } else {
        out.push_back({l.text, l.no_newline});
      }
    }
    cursor = p;
    offset = found - stated;
  }
  for (std::size_t k = cursor; k < orig.size(); ++k) out.push_back(orig[k]);
  // Only the final line may lack a newline.
  for (std::size_t k = 0; k + 1 < out.size(); ++k) out[k].no_newline = false;
  return render(out);
}

FileDiff diff_texts(const std::string& old_path, const std::string& new_path, std::string_view old_text,
                    std::string_view new_text, std::size_t context) {
  FileDiff d;
  d.old_path = old_path;
  d.new_path = new_path;
  auto a = tokenize(old_text);
  auto b = tokenize(new_text);
  auto edits = myers(a, b);

  std::vector<std::size_t> changes;
  for (std::size_t i = 0; i < edits.size(); ++i)
    if (edits[i].op != '=') changes.push_back(i);
  std::size_t c = 0;
  while (c < changes.size()) {
    std::size_t first = changes[c];
    std::size_t last = first;
    while (c + 1 < changes.size() && changes[c + 1] - last <= 2 * context + 1) last = changes[++c];
    ++c;
    std::size_t begin = first >= context ? first - context : 0;
    std::size_t end = std::min(edits.size(), last + context + 1);
    Hunk h;
    h.old_start = edits[begin].ai + 1;
    h.new_start = edits[begin].bi + 1;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& e = edits[i];
      if (e.op == '+') {
        h.lines.push_back({'+', b[e.bi].text, b[e.bi].no_newline});
        ++h.new_count;
      } else if (e.op == '-') {
        h.lines.push_back({'-', a[e.ai].text, a[e.ai].no_newline});
        ++h.old_count;
      } else {
        h.lines.push_back({' ', a[e.ai].text, a[e.ai].no_newline});
        ++h.old_count;
        ++h.new_count;
      }
    }
    if (h.old_count == 0) --h.old_start;
    if (h.new_count == 0) --h.new_start;
    d.hunks.push_back(std::move(h));
  }
  return d;
}

std::string unified_diff(const std::string& old_path, const std::string& new_path, std::string_view old_text,
                         std::string_view new_text, std::size_t context) {
  auto d = diff_texts(old_path, new_path, old_text, new_text, context);
  if (d.hunks.empty()) return {};
  return format_file_diff(d);
}

}  // namespace peace
