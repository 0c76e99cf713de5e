#pragma once

#include <utility>
#include <vector>
#include <optional>
#include <string>

namespace egoqa {

// Structured request tag, serialized as "key=value;key=value;flag". The
// reasoning stages write these so traces and test oracles can tell which
// question, object, and frames a chat request is about.
//
//   pairwise:   q=<id>;obj=<id>;cur=<frame>;ref=<frame>
//   final:      q=<id>;obj=<id>;cur=<frame>;ref=final[;run=<i>]
//   caption:    q=<id>;obj=<id>;frame=<frame>;caption
struct RequestTag {
  // Insertion order is kept; flags have an empty value.
  std::vector<std::pair<std::string, std::string>> fields;

  static RequestTag parse(const std::string& tag);
  std::string str() const;

  RequestTag& set(std::string key, std::string value = {});
  std::optional<std::string> get(const std::string& key) const;
  bool has(const std::string& key) const { return get(key).has_value(); }
};

}  // namespace egoqa
