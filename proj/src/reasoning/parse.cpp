#include <cctype>
#include <regex>

#include "egoqa/errors.hpp"
#include "egoqa/reasoning.hpp"

namespace egoqa {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    auto t = trim(cur);
    if (!t.empty()) out.push_back(std::move(t));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      flush();
      continue;
    }
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      // Keep runs like "?!" or "..." and closing quotes with their sentence.
      while (i + 1 < text.size() &&
             (text[i + 1] == '.' || text[i + 1] == '!' || text[i + 1] == '?' || text[i + 1] == '"' ||
              text[i + 1] == '\'')) {
        cur.push_back(text[++i]);
      }
      flush();
    }
  }
  flush();
  return out;
}

ParsedAnswer parse_answer(std::string_view text, const ClassTaxonomy& taxonomy) {
  ParsedAnswer out;
  const auto sentences = split_sentences(text);
  if (sentences.empty()) return out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto low = lower_ascii(sentences[i]);
    for (const auto& spec : taxonomy.classes()) {
      for (const auto& kw : spec.keywords) {
        if (low.find(kw) == std::string::npos) continue;
        out.label = spec.label;
        out.judgment_clause = sentences[i];
        std::string rest;
        for (std::size_t j = 0; j < sentences.size(); ++j) {
          if (j == i) continue;
          if (!rest.empty()) rest += ' ';
          rest += sentences[j];
        }
        out.explanation = std::move(rest);
        return out;
      }
    }
  }
  out.judgment_clause = sentences.front();
  std::string rest;
  for (std::size_t j = 1; j < sentences.size(); ++j) {
    if (!rest.empty()) rest += ' ';
    rest += sentences[j];
  }
  out.explanation = std::move(rest);
  return out;
}

std::vector<QaPair> parse_qa_pairs(std::string_view text, std::size_t expected, const ClassTaxonomy& taxonomy) {
  static const std::regex item(R"(^\s*[*_]*\s*(\d+)[.)]\s*(.*?)\s*[*_]*\s*$)");
  static const std::regex answer(R"(^\s*[*_]*\s*Answer\s*:\s*[*_]*\s*(.*?)\s*[*_]*\s*$)", std::regex::icase);

  std::vector<QaPair> out;
  std::optional<QaPair> pending;
  std::size_t pos = 0;
  const std::string s(text);
  while (pos <= s.size()) {
    auto nl = s.find('\n', pos);
    if (nl == std::string::npos) nl = s.size();
    const std::string line = s.substr(pos, nl - pos);
    pos = nl + 1;
    std::smatch m;
    if (std::regex_match(line, m, answer)) {
      if (!pending) throw FormatError("answer line without a preceding question: " + trim(line), std::string(text));
      pending->answer = m[1].str();
      pending->label = parse_answer(pending->answer, taxonomy).label;
      out.push_back(std::move(*pending));
      pending.reset();
    } else if (std::regex_match(line, m, item)) {
      if (pending) throw FormatError("question without an answer: " + pending->question, std::string(text));
      pending = QaPair{m[2].str(), {}, {}};
    }
  }
  if (pending) throw FormatError("question without an answer: " + pending->question, std::string(text));
  if (out.size() != expected) {
    throw FormatError("expected " + std::to_string(expected) + " question-answer pairs, found " +
                          std::to_string(out.size()),
                      std::string(text));
  }
  return out;
}

}  // namespace egoqa
