#include <algorithm>
#include <fstream>

#include "egoqa/errors.hpp"
#include "egoqa/gateway.hpp"

namespace egoqa {

ScriptedProvider::ScriptedProvider(std::map<std::string, std::string> script) : script_(std::move(script)) {
  if (script_.empty()) throw InputError("scripted provider needs at least one entry");
}

ScriptedProvider ScriptedProvider::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open script " + path);
  try {
    const auto j = nlohmann::json::parse(in);
    return ScriptedProvider(j.get<std::map<std::string, std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad script " + path + ": " + e.what());
  }
}

ChatResponse ScriptedProvider::send(const ChatRequest& request) {
  request.validate();
  const auto fp = request_fingerprint(request);
  if (auto it = script_.find(fp); it != script_.end()) {
    ChatResponse r;
    r.text = it->second;
    return r;
  }
  // Rank known keys by number of differing hex digits.
  std::vector<std::pair<int, std::string>> near;
  for (const auto& [key, _] : script_) {
    int diff = static_cast<int>(std::max(key.size(), fp.size()) - std::min(key.size(), fp.size()));
    for (std::size_t i = 0; i < std::min(key.size(), fp.size()); ++i) diff += key[i] != fp[i];
    near.emplace_back(diff, key);
  }
  std::sort(near.begin(), near.end());
  std::string msg = "no scripted response for fingerprint " + fp + " (tag '" + request.request_tag +
                    "'); nearest known:";
  for (std::size_t i = 0; i < std::min<std::size_t>(3, near.size()); ++i) msg += " " + near[i].second;
  throw ScriptedMissError(msg);
}

std::unique_ptr<ModelProvider> scripted_provider(std::map<std::string, std::string> script) {
  return std::make_unique<ScriptedProvider>(std::move(script));
}

}  // namespace egoqa
