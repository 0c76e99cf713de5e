#include "egoqa/request_tag.hpp"

#include <sstream>

namespace egoqa {

RequestTag RequestTag::parse(const std::string& tag) {
  RequestTag t;
  std::stringstream ss(tag);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      t.fields.emplace_back(item, "");
    } else {
      t.fields.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
  }
  return t;
}

std::string RequestTag::str() const {
  std::string out;
  for (const auto& [k, v] : fields) {
    if (!out.empty()) out.push_back(';');
    out += k;
    if (!v.empty()) out += "=" + v;
  }
  return out;
}

RequestTag& RequestTag::set(std::string key, std::string value) {
  for (auto& [k, v] : fields) {
    if (k == key) {
      v = std::move(value);
      return *this;
    }
  }
  fields.emplace_back(std::move(key), std::move(value));
  return *this;
}

std::optional<std::string> RequestTag::get(const std::string& key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return v;
  }
  return std::nullopt;
}

}  // namespace egoqa
