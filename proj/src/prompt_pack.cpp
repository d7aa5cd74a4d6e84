#include "fdj/prompt_pack.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "fdj/core.hpp"

namespace fdj {

namespace {

struct BuiltinPrompt {
  const char* name;
  const char* text;
};

const BuiltinPrompt kBuiltinPrompts[] = {
#include "prompts_data.inc"
};

}  // namespace

PromptPack PromptPack::builtin() {
  PromptPack pack;
  for (const auto& p : kBuiltinPrompts) {
    pack.prompts_.emplace(p.name, p.text);
  }
  return pack;
}

PromptPack PromptPack::load_dir(const std::filesystem::path& dir) {
  PromptPack pack = builtin();
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("prompt directory not found: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") {
      continue;
    }
    std::ifstream in(entry.path());
    if (!in) throw DataError("cannot read prompt file: " + entry.path().string());
    std::ostringstream buf;
    buf << in.rdbuf();
    pack.prompts_[entry.path().stem().string()] = buf.str();
  }
  return pack;
}

const std::string& PromptPack::get(const std::string& name) const {
  auto it = prompts_.find(name);
  if (it == prompts_.end()) {
    throw std::out_of_range("unknown prompt template: " + name);
  }
  return it->second;
}

std::string PromptPack::render(
    const std::string& name,
    const std::map<std::string, std::string>& slots) const {
  return replace_slots(get(name), slots);
}

}  // namespace fdj
