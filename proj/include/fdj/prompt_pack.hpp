#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace fdj {

// Named prompt templates for the featurization generator. The compiled-in
// defaults can be overridden per template by pointing `load_dir` at a
// directory of <name>.txt files; slots use the {name} convention of
// replace_slots.
class PromptPack {
 public:
  static PromptPack builtin();
  // Builtin templates overridden by any *.txt files found in `dir`.
  static PromptPack load_dir(const std::filesystem::path& dir);

  bool has(const std::string& name) const { return prompts_.count(name) != 0; }
  const std::string& get(const std::string& name) const;  // throws out_of_range
  std::string render(const std::string& name,
                     const std::map<std::string, std::string>& slots) const;

 private:
  std::map<std::string, std::string> prompts_;
};

}  // namespace fdj
