#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace peace {

using PromptVars = std::map<std::string, std::string>;

// Named prompt templates with {{var}} placeholders. The built-in set is
// compiled from prompts/*.txt; a directory of same-named files can override
// individual templates.
class PromptLibrary {
 public:
  static const PromptLibrary& builtin();

  void load_overrides(const std::filesystem::path& dir);
  bool has(const std::string& name) const { return templates_.count(name) > 0; }
  const std::string& raw(const std::string& name) const;
  const std::string& version() const { return version_; }

  // Throws std::invalid_argument for an unknown template or a placeholder
  // without a value.
  std::string render(const std::string& name, const PromptVars& vars) const;

 private:
  std::map<std::string, std::string> templates_;
  std::string version_;
};

std::string substitute(const std::string& tmpl, const PromptVars& vars);

}  // namespace peace
