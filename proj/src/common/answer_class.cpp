#include "egoqa/answer_class.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "egoqa/errors.hpp"

namespace egoqa {

ClassTaxonomy::ClassTaxonomy(std::vector<ClassSpec> classes) : classes_(std::move(classes)) {
  std::set<std::string> seen;
  for (auto& spec : classes_) {
    if (spec.label.is_unparsed()) throw ConfigError("taxonomy may not define the unparsed label");
    if (!seen.insert(spec.label.token()).second)
      throw ConfigError("duplicate taxonomy class: " + spec.label.token());
    for (auto& kw : spec.keywords) {
      std::transform(kw.begin(), kw.end(), kw.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    }
  }
}

const ClassTaxonomy& ClassTaxonomy::defaults() {
  static const ClassTaxonomy kDefaults({
      {AnswerClass::disappeared(), "It has disappeared.", {"disappeared", "no longer there", "is gone"}},
      {AnswerClass::never_there(), "It was never there.", {"never there", "was never", "never existed"}},
      {AnswerClass::always_there(),
       "It has always been here.",
       {"always been", "always here", "always there", "still there", "still here"}},
  });
  return kDefaults;
}

ClassTaxonomy ClassTaxonomy::from_json(const nlohmann::json& j) {
  std::vector<ClassSpec> specs;
  try {
    for (const auto& c : j.at("classes")) {
      ClassSpec spec;
      spec.label = AnswerClass(c.at("token").get<std::string>());
      spec.canonical_text = c.at("canonical").get<std::string>();
      spec.keywords = c.at("keywords").get<std::vector<std::string>>();
      specs.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad taxonomy: ") + e.what());
  }
  if (specs.empty()) throw ConfigError("taxonomy defines no classes");
  return ClassTaxonomy(std::move(specs));
}

nlohmann::json ClassTaxonomy::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : classes_) {
    arr.push_back({{"token", c.label.token()}, {"canonical", c.canonical_text}, {"keywords", c.keywords}});
  }
  return {{"classes", arr}};
}

std::optional<AnswerClass> ClassTaxonomy::from_token(std::string_view token) const {
  for (const auto& c : classes_) {
    if (c.label.token() == token) return c.label;
  }
  return std::nullopt;
}

std::optional<std::size_t> ClassTaxonomy::index_of(const AnswerClass& cls) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].label == cls) return i;
  }
  return std::nullopt;
}

const std::string& ClassTaxonomy::canonical_text(const AnswerClass& cls) const {
  static const std::string kEmpty;
  const auto i = index_of(cls);
  return i ? classes_[*i].canonical_text : kEmpty;
}

}  // namespace egoqa
