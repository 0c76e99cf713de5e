#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace egoqa {

// Object-state answer label. Held as a token rather than an enum so that new
// change types can be added through a taxonomy file; the three built-in
// ground-truth classes and the prediction-only Unparsed label have helpers.
class AnswerClass {
 public:
  AnswerClass() : token_(kUnparsed) {}
  explicit AnswerClass(std::string token) : token_(std::move(token)) {}

  static AnswerClass disappeared() { return AnswerClass("disappeared"); }
  static AnswerClass never_there() { return AnswerClass("never_there"); }
  static AnswerClass always_there() { return AnswerClass("always_there"); }
  static AnswerClass unparsed() { return AnswerClass(kUnparsed); }

  const std::string& token() const { return token_; }
  bool is_unparsed() const { return token_ == kUnparsed; }

  auto operator<=>(const AnswerClass&) const = default;

 private:
  static constexpr const char* kUnparsed = "unparsed";
  std::string token_;
};

struct ClassSpec {
  AnswerClass label;
  std::string canonical_text;         // e.g. "It has disappeared."
  std::vector<std::string> keywords;  // lowercase, matched as substrings
};

// Ordered class list with keyword map. Order is the keyword priority used by
// the answer parser and the row order of confusion matrices.
class ClassTaxonomy {
 public:
  ClassTaxonomy() = default;
  explicit ClassTaxonomy(std::vector<ClassSpec> classes);

  // Disappeared, NeverThere, AlwaysThere with the default keyword lists.
  static const ClassTaxonomy& defaults();

  // {"classes": [{"token": ..., "canonical": ..., "keywords": [...]}, ...]}
  static ClassTaxonomy from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  const std::vector<ClassSpec>& classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }

  std::optional<AnswerClass> from_token(std::string_view token) const;
  // Index of a ground-truth class, nullopt for Unparsed or unknown tokens.
  std::optional<std::size_t> index_of(const AnswerClass& c) const;
  const std::string& canonical_text(const AnswerClass& c) const;

 private:
  std::vector<ClassSpec> classes_;
};

}  // namespace egoqa
