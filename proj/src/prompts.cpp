#include "peace/prompts.hpp"

#include <stdexcept>

#include "peace/util/files.hpp"

namespace peace {

namespace generated {
extern const std::map<std::string, std::string>& prompt_templates();
}

namespace {

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

const PromptLibrary& PromptLibrary::builtin() {
  static const PromptLibrary lib = [] {
    PromptLibrary l;
    for (auto& [name, text] : generated::prompt_templates()) {
      if (name == "VERSION")
        l.version_ = strip_trailing_newlines(text);
      else
        l.templates_[name] = strip_trailing_newlines(text);
    }
    return l;
  }();
  return lib;
}

void PromptLibrary::load_overrides(const std::filesystem::path& dir) {
  for (auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    templates_[entry.path().stem().string()] = strip_trailing_newlines(util::read_file(entry.path()));
  }
  if (std::filesystem::exists(dir / "VERSION"))
    version_ = strip_trailing_newlines(util::read_file(dir / "VERSION"));
}

const std::string& PromptLibrary::raw(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw std::invalid_argument("unknown prompt template: " + name);
  return it->second;
}

std::string PromptLibrary::render(const std::string& name, const PromptVars& vars) const {
  return substitute(raw(name), vars);
}

std::string substitute(const std::string& tmpl, const PromptVars& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    auto open = tmpl.find("{{", i);
    if (open == std::string::npos) {
      out.append(tmpl, i);
      break;
    }
    auto close = tmpl.find("}}", open + 2);
    if (close == std::string::npos) {
      out.append(tmpl, i);
      break;
    }
    out.append(tmpl, i, open - i);
    auto key = tmpl.substr(open + 2, close - open - 2);
    auto it = vars.find(key);
    if (it == vars.end()) throw std::invalid_argument("no value for placeholder {{" + key + "}}");
    out += it->second;
    i = close + 2;
  }
  return out;
}

}  // namespace peace
