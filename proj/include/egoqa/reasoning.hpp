#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "egoqa/answer_class.hpp"
#include "egoqa/embedding.hpp"
#include "egoqa/gateway.hpp"
#include "egoqa/request_tag.hpp"
#include "egoqa/retrieval.hpp"
#include "egoqa/trajectory.hpp"

namespace egoqa {

// ------------------------------------------------------------------ prompts

struct Exemplar {
  std::string input;
  std::string output;
};

// Instruction text with {{slot}} placeholders plus few-shot exemplars. The
// reserved slot {{exemplars}} is filled from the exemplar list (empty list =
// zero-shot).
struct PromptTemplate {
  std::string name;
  std::string instruction;
  std::vector<Exemplar> exemplars;

  // Slot names in order of first appearance, {{exemplars}} included.
  std::vector<std::string> slots() const;
  // Throws TemplateError if a slot is left unfilled.
  std::string render(const std::map<std::string, std::string>& values) const;
};

// Exemplar file: blocks separated by a line "---", each "Input: ..." then
// "Output: ...". Blank file = no exemplars.
std::vector<Exemplar> parse_exemplars(std::string_view text);

// Named templates. Built-ins are compiled from data/prompts; a directory of
// <name>.txt / <name>.exemplars.txt files overrides them file by file.
class PromptLibrary {
 public:
  static const PromptLibrary& builtin();
  static PromptLibrary from_directory(const std::filesystem::path& dir);

  // Throws TemplateError for unknown names.
  const PromptTemplate& get(const std::string& name) const;
  bool has(const std::string& name) const { return templates_.contains(name); }
  // Drops every exemplar (the zero-shot variant).
  PromptLibrary zero_shot() const;

 private:
  static PromptLibrary from_files(const std::map<std::string, std::string>& files);
  std::map<std::string, PromptTemplate> templates_;
};

// ------------------------------------------------------------------ parsing

struct ParsedAnswer {
  AnswerClass label;
  std::string judgment_clause;  // sentence carrying the class keyword
  std::string explanation;      // the rest of the text, trimmed
};

// First sentence containing any class keyword decides the class, keywords
// checked in taxonomy order. No keyword: (Unparsed, first sentence).
ParsedAnswer parse_answer(std::string_view text, const ClassTaxonomy& taxonomy = ClassTaxonomy::defaults());

// Sentence split on '.', '!', '?' and newlines; terminators stay attached.
std::vector<std::string> split_sentences(std::string_view text);

// ------------------------------------------------------------------ reasoning

struct IntermediateAnswer {
  std::string frame_id;
  double frame_timestamp = 0.0;
  AnswerClass predicted_class;
  std::string judgment_clause;
  std::string explanation;
  std::string raw_text;
  double latency_s = 0.0;

  friend bool operator==(const IntermediateAnswer&, const IntermediateAnswer&) = default;
};

// One CoT-SC sample.
struct SampledRun {
  int index = 0;
  std::vector<std::string> frame_order;
  AnswerClass predicted_class;
  std::string raw_text;
  std::string error;  // nonempty if the call failed
  double latency_s = 0.0;

  friend bool operator==(const SampledRun&, const SampledRun&) = default;
};

struct FinalAnswer {
  AnswerClass predicted_class;
  std::string judgment_clause;
  std::string explanation;
  bool consistent = false;
  // The reconciler's own class disagreed with the enforced consensus.
  bool class_overridden = false;
  // Zero retrieved frames; answered from the current frame alone.
  bool single_image_fallback = false;
  std::string raw_text;
  std::string prompt_text;  // text parts of the final request
  std::vector<IntermediateAnswer> intermediates;
  std::vector<SampledRun> runs;
  double latency_s = 0.0;  // all reasoning calls, summed

  friend bool operator==(const FinalAnswer&, const FinalAnswer&) = default;
};

// Everything a reasoning step needs besides its inputs.
struct ReasoningContext {
  ModelProvider& provider;
  const PromptLibrary& prompts = PromptLibrary::builtin();
  const ClassTaxonomy& taxonomy = ClassTaxonomy::defaults();
  ModelSettings settings{};
  std::size_t parallelism = 4;
};

// q=<id>;obj=<id>;cur=<frame>; obj is omitted when the question has none.
RequestTag question_tag(const Question& question);

// One call comparing a retrieved frame with the current frame. Provider
// failures are rethrown as FrameGatewayError naming the retrieved frame.
IntermediateAnswer pairwise_reason(const Frame& current, const Frame& retrieved, const Question& question,
                                   const ReasoningContext& ctx);

// intermediates must be sorted by frame timestamp (InputError otherwise) and
// aligned with retrieved. When every intermediate has the same parsed class,
// that class is final whatever the reconciler says.
FinalAnswer reconcile(std::span<const IntermediateAnswer> intermediates, std::span<const Frame> retrieved,
                      const Frame& current, const Question& question, const ReasoningContext& ctx);

struct CotScOptions {
  int samples = 3;
  double temperature = 0.7;
  std::uint64_t seed = 0;
};

// Majority vote over independently shuffled single-prompt runs. Unparsed runs
// do not vote unless every run is Unparsed. Ties go to the class of the
// lowest-index tied run.
FinalAnswer cot_sc(const Frame& current, std::span<const Frame> retrieved, const Question& question,
                   const ReasoningContext& ctx, const CotScOptions& options = {});

// One prompt with the current frame and all retrieved frames, no pairwise stage.
FinalAnswer single_pass(const Frame& current, std::span<const Frame> retrieved, const Question& question,
                        const ReasoningContext& ctx);

// Text-only answer from captions (the caption-retrieval baseline).
FinalAnswer caption_answer(const std::string& current_caption, std::span<const std::string> captions,
                           const Frame& current, const Question& question, const ReasoningContext& ctx);

// Zero retrieved frames: judge from the current frame alone.
FinalAnswer single_image_answer(const Frame& current, const Question& question, const ReasoningContext& ctx);

// Pairwise stage over all retrieved frames, then reconciliation.
FinalAnswer objchangevr_reason(const Frame& current, std::span<const Frame> retrieved, const Question& question,
                               const ReasoningContext& ctx);

// ------------------------------------------------------------------ pipeline

enum class RetrievalMethod { Hierarchical, Viewpoint, ImageEmbed, CaptionEmbed };
enum class ReasoningMethod { ObjChangeVR, CotSc, SinglePass };

std::string_view to_string(RetrievalMethod m);
std::string_view to_string(ReasoningMethod m);
// ConfigError on unknown names.
RetrievalMethod parse_retrieval_method(std::string_view name);
ReasoningMethod parse_reasoning_method(std::string_view name);

struct PipelineConfig {
  RetrievalMethod retrieval = RetrievalMethod::Hierarchical;
  ReasoningMethod reasoning = ReasoningMethod::ObjChangeVR;
  RetrievalConfig retrieval_config{};
  CotScOptions cot_sc{};
  // Caption retrieval answers from text only, so it requires SinglePass.
  void validate() const;
};

struct PhaseLatency {
  double retrieval_s = 0.0;
  double captioning_s = 0.0;
  double reasoning_s = 0.0;
  double total_s = 0.0;

  friend bool operator==(const PhaseLatency&, const PhaseLatency&) = default;
};

struct QuestionTrace {
  Question question;
  std::string retrieval_method;
  std::string reasoning_method;
  RetrievalResult retrieval;
  std::vector<std::string> captions;  // caption retrieval only
  FinalAnswer answer;
  PhaseLatency latency;
  std::string error;  // nonempty when the question failed

  bool failed() const { return !error.empty(); }
  friend bool operator==(const QuestionTrace&, const QuestionTrace&) = default;
};

// Optional collaborators for the embedding and caption methods.
struct PipelineServices {
  EmbeddingProvider* embeddings = nullptr;
  FrameCaptioner* captioner = nullptr;
  Clock* clock = nullptr;  // phase timing; system clock when null
};

// Retrieves over frames strictly before the current frame, then reasons.
// Throws on failure; see run_question for the recording variant.
QuestionTrace answer_question(const Question& question, const FrameHistory& history,
                              const PipelineConfig& config, const ReasoningContext& ctx,
                              const PipelineServices& services = {});

// As answer_question, but a gateway or input failure is recorded in the trace
// instead of thrown.
QuestionTrace run_question(const Question& question, const FrameHistory& history, const PipelineConfig& config,
                           const ReasoningContext& ctx, const PipelineServices& services = {});

nlohmann::ordered_json trace_to_json(const QuestionTrace& trace);
QuestionTrace trace_from_json(const nlohmann::json& j, const ClassTaxonomy& taxonomy = ClassTaxonomy::defaults());
void write_trace_line(const QuestionTrace& trace, std::ostream& out);
// DatasetError on a corrupt record (with line number).
std::vector<QuestionTrace> load_traces(const std::filesystem::path& path,
                                       const ClassTaxonomy& taxonomy = ClassTaxonomy::defaults());

// ------------------------------------------------------------------ QA generation

struct QaPair {
  std::string question;
  std::string answer;
  AnswerClass label;
};

// Numbered "N. <question>" followed by "Answer: <answer>". Throws FormatError
// (carrying the raw text) unless exactly `expected` pairs are found.
std::vector<QaPair> parse_qa_pairs(std::string_view text, std::size_t expected = 10,
                                   const ClassTaxonomy& taxonomy = ClassTaxonomy::defaults());

// Sends the generation instruction with the previous and current frame.
std::vector<QaPair> generate_qa_pairs(const Frame& previous, const Frame& current, const ReasoningContext& ctx);

}  // namespace egoqa
