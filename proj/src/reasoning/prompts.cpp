#include <algorithm>

#include "common/jsonl.hpp"
#include "egoqa/errors.hpp"
#include "egoqa/reasoning.hpp"

namespace egoqa {

namespace detail {
const std::map<std::string, std::string>& builtin_prompt_files();
}

namespace {

constexpr std::string_view kOpen = "{{";
constexpr std::string_view kClose = "}}";
constexpr std::string_view kExemplarSuffix = ".exemplars.txt";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string render_exemplars(const std::vector<Exemplar>& exemplars) {
  if (exemplars.empty()) return {};
  std::string out = "\nExamples:\n";
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    out += "\nExample " + std::to_string(i + 1) + "\nInput: " + exemplars[i].input + "\nOutput: " +
           exemplars[i].output + "\n";
  }
  return out;
}

}  // namespace

std::vector<std::string> PromptTemplate::slots() const {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = instruction.find(kOpen, pos)) != std::string::npos) {
    const auto end = instruction.find(kClose, pos + kOpen.size());
    if (end == std::string::npos) throw TemplateError("template " + name + ": unterminated slot");
    auto slot = instruction.substr(pos + kOpen.size(), end - pos - kOpen.size());
    if (std::find(out.begin(), out.end(), slot) == out.end()) out.push_back(std::move(slot));
    pos = end + kClose.size();
  }
  return out;
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = instruction.find(kOpen, pos);
    if (open == std::string::npos) {
      out.append(instruction, pos);
      break;
    }
    const auto close = instruction.find(kClose, open + kOpen.size());
    if (close == std::string::npos) throw TemplateError("template " + name + ": unterminated slot");
    out.append(instruction, pos, open - pos);
    const auto slot = instruction.substr(open + kOpen.size(), close - open - kOpen.size());
    if (slot == "exemplars") {
      out += render_exemplars(exemplars);
    } else {
      auto it = values.find(slot);
      if (it == values.end()) throw TemplateError("template " + name + ": slot {{" + slot + "}} unfilled");
      out += it->second;
    }
    pos = close + kClose.size();
  }
  // Empty exemplar slots leave trailing blank lines behind.
  while (!out.empty() && (out.back() == '\n' || out.back() == ' ')) out.pop_back();
  return out;
}

std::vector<Exemplar> parse_exemplars(std::string_view text) {
  std::vector<Exemplar> out;
  std::vector<std::string> blocks(1);
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    if (trim(line) == "---") {
      blocks.emplace_back();
    } else {
      blocks.back().append(line).push_back('\n');
    }
    pos = nl + 1;
  }
  for (const auto& b : blocks) {
    if (trim(b).empty()) continue;
    const auto in = b.find("Input:");
    const auto outp = b.find("Output:");
    if (in == std::string::npos || outp == std::string::npos || outp < in)
      throw TemplateError("exemplar block needs 'Input:' followed by 'Output:'");
    out.push_back({trim(std::string_view(b).substr(in + 6, outp - in - 6)), trim(std::string_view(b).substr(outp + 7))});
  }
  return out;
}

PromptLibrary PromptLibrary::from_files(const std::map<std::string, std::string>& files) {
  PromptLibrary lib;
  for (const auto& [file, text] : files) {
    if (file.ends_with(kExemplarSuffix)) continue;
    if (!file.ends_with(".txt")) continue;
    PromptTemplate t;
    t.name = file.substr(0, file.size() - 4);
    t.instruction = text;
    if (auto it = files.find(t.name + std::string(kExemplarSuffix)); it != files.end())
      t.exemplars = parse_exemplars(it->second);
    lib.templates_[t.name] = std::move(t);
  }
  return lib;
}

const PromptLibrary& PromptLibrary::builtin() {
  static const PromptLibrary lib = from_files(detail::builtin_prompt_files());
  return lib;
}

PromptLibrary PromptLibrary::from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("prompt directory not found: " + dir.string());
  auto files = detail::builtin_prompt_files();
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    files[entry.path().filename().string()] = detail::read_file(entry.path());
  }
  return from_files(files);
}

const PromptTemplate& PromptLibrary::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw TemplateError("no prompt template named " + name);
  return it->second;
}

PromptLibrary PromptLibrary::zero_shot() const {
  PromptLibrary lib = *this;
  for (auto& [name, t] : lib.templates_) t.exemplars.clear();
  return lib;
}

}  // namespace egoqa
