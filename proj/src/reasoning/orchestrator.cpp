#include <algorithm>
#include <cstdio>
#include <map>

#include "common/parallel.hpp"
#include "egoqa/errors.hpp"
#include "egoqa/reasoning.hpp"
#include "egoqa/rng.hpp"

namespace egoqa {

namespace {

std::string seconds(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

std::string one_line(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == '\n' || c == '\r' || c == '\t' || c == ' ') {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

ContentPart image_part(const Frame& f) {
  if (f.image.empty()) throw InputError("frame " + f.id + " has no image");
  auto bytes = f.image.load();
  if (!bytes || bytes->empty()) throw InputError("frame " + f.id + " has an empty image");
  return ContentPart::make_image(std::move(bytes), f.image.mime());
}

std::string frame_label(const Frame& f) { return "frame " + f.id + " at t=" + seconds(f.timestamp) + " s"; }

// "1. frame f0003 at t=3.00 s" lines, in the given order.
std::string frame_list(std::span<const Frame> frames) {
  std::string out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". " + frame_label(frames[i]);
  }
  return out;
}

// Prompt text, then the current image, then each retrieved image with a label.
ChatRequest multimodal_request(const ReasoningContext& ctx, std::string prompt, const Frame& current,
                               std::span<const Frame> retrieved, std::string tag, double temperature) {
  ChatMessage msg;
  msg.parts.push_back(ContentPart::make_text(std::move(prompt)));
  msg.parts.push_back(ContentPart::make_text("Current picture (" + frame_label(current) + "):"));
  msg.parts.push_back(image_part(current));
  for (std::size_t i = 0; i < retrieved.size(); ++i) {
    msg.parts.push_back(ContentPart::make_text("Retrieved picture " + std::to_string(i + 1) + " (" +
                                               frame_label(retrieved[i]) + "):"));
    msg.parts.push_back(image_part(retrieved[i]));
  }
  ChatRequest req;
  req.model_id = ctx.settings.model_id;
  req.messages.push_back(std::move(msg));
  req.temperature = temperature;
  req.max_tokens = ctx.settings.max_tokens;
  req.request_tag = std::move(tag);
  return req;
}

std::string final_tag(const Question& q) { return question_tag(q).set("ref", "final").str(); }

FinalAnswer from_single_call(const ChatRequest& req, const ReasoningContext& ctx) {
  const auto resp = ctx.provider.send(req);
  const auto parsed = parse_answer(resp.text, ctx.taxonomy);
  FinalAnswer out;
  out.predicted_class = parsed.label;
  out.judgment_clause = parsed.judgment_clause;
  out.explanation = parsed.explanation;
  out.consistent = true;  // no intermediates to disagree
  out.raw_text = resp.text;
  out.prompt_text = req.joined_text();
  out.latency_s = resp.latency_s;
  return out;
}

}  // namespace

RequestTag question_tag(const Question& question) {
  RequestTag tag;
  tag.set("q", question.id);
  if (!question.object_id.empty()) tag.set("obj", question.object_id);
  tag.set("cur", question.current_frame_id);
  return tag;
}

IntermediateAnswer pairwise_reason(const Frame& current, const Frame& retrieved, const Question& question,
                                   const ReasoningContext& ctx) {
  const auto prompt = ctx.prompts.get("pairwise").render({{"question", question.text}});
  ChatMessage msg;
  msg.parts.push_back(ContentPart::make_text(prompt));
  msg.parts.push_back(ContentPart::make_text("Retrieved picture (" + frame_label(retrieved) + "):"));
  msg.parts.push_back(image_part(retrieved));
  msg.parts.push_back(ContentPart::make_text("Current picture (" + frame_label(current) + "):"));
  msg.parts.push_back(image_part(current));
  ChatRequest req;
  req.model_id = ctx.settings.model_id;
  req.messages.push_back(std::move(msg));
  req.temperature = ctx.settings.temperature;
  req.max_tokens = ctx.settings.max_tokens;
  req.request_tag = question_tag(question).set("ref", retrieved.id).str();

  ChatResponse resp;
  try {
    resp = ctx.provider.send(req);
  } catch (const FrameGatewayError&) {
    throw;
  } catch (const GatewayError& e) {
    throw FrameGatewayError(retrieved.id, e.what());
  }
  const auto parsed = parse_answer(resp.text, ctx.taxonomy);
  IntermediateAnswer out;
  out.frame_id = retrieved.id;
  out.frame_timestamp = retrieved.timestamp;
  out.predicted_class = parsed.label;
  out.judgment_clause = parsed.judgment_clause;
  out.explanation = parsed.explanation;
  out.raw_text = resp.text;
  out.latency_s = resp.latency_s;
  return out;
}

FinalAnswer reconcile(std::span<const IntermediateAnswer> intermediates, std::span<const Frame> retrieved,
                      const Frame& current, const Question& question, const ReasoningContext& ctx) {
  if (intermediates.empty()) throw InputError("reconcile: no intermediate answers");
  if (intermediates.size() != retrieved.size())
    throw InputError("reconcile: intermediates and retrieved frames differ in length");
  for (std::size_t i = 0; i < intermediates.size(); ++i) {
    if (intermediates[i].frame_id != retrieved[i].id)
      throw InputError("reconcile: intermediate " + std::to_string(i) + " is not about frame " + retrieved[i].id);
    if (i > 0 && !(intermediates[i - 1].frame_timestamp < intermediates[i].frame_timestamp))
      throw InputError("reconcile: intermediates must be in ascending timestamp order");
  }

  const AnswerClass first = intermediates.front().predicted_class;
  const bool consistent = !first.is_unparsed() &&
                          std::all_of(intermediates.begin(), intermediates.end(),
                                      [&](const IntermediateAnswer& a) { return a.predicted_class == first; });

  std::string answers;
  for (std::size_t i = 0; i < intermediates.size(); ++i) {
    if (i) answers += '\n';
    answers += std::to_string(i + 1) + ". " + one_line(intermediates[i].raw_text);
  }
  const auto prompt = ctx.prompts.get("reconcile").render({{"question", question.text},
                                                           {"count", std::to_string(retrieved.size())},
                                                           {"frames", frame_list(retrieved)},
                                                           {"answers", answers}});
  const auto req = multimodal_request(ctx, prompt, current, retrieved, final_tag(question), ctx.settings.temperature);
  FinalAnswer out = from_single_call(req, ctx);
  out.consistent = consistent;
  if (consistent && out.predicted_class != first) {
    // The consensus stands; the reconciler's text is kept for the trace.
    out.class_overridden = true;
    out.predicted_class = first;
    out.judgment_clause = ctx.taxonomy.canonical_text(first);
  }
  out.intermediates.assign(intermediates.begin(), intermediates.end());
  for (const auto& a : intermediates) out.latency_s += a.latency_s;
  return out;
}

FinalAnswer single_image_answer(const Frame& current, const Question& question, const ReasoningContext& ctx) {
  const auto prompt = ctx.prompts.get("single_image").render({{"question", question.text}});
  const auto req = multimodal_request(ctx, prompt, current, {}, final_tag(question), ctx.settings.temperature);
  FinalAnswer out = from_single_call(req, ctx);
  out.single_image_fallback = true;
  return out;
}

FinalAnswer objchangevr_reason(const Frame& current, std::span<const Frame> retrieved, const Question& question,
                               const ReasoningContext& ctx) {
  if (retrieved.empty()) return single_image_answer(current, question, ctx);
  std::vector<IntermediateAnswer> answers(retrieved.size());
  detail::parallel_for(retrieved.size(), ctx.parallelism,
                       [&](std::size_t i) { answers[i] = pairwise_reason(current, retrieved[i], question, ctx); });
  // Completion order is irrelevant: results are indexed, then put in time order.
  std::vector<std::size_t> order(retrieved.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return retrieved[a].timestamp < retrieved[b].timestamp;
  });
  std::vector<IntermediateAnswer> sorted_answers;
  std::vector<Frame> sorted_frames;
  for (auto i : order) {
    sorted_answers.push_back(answers[i]);
    sorted_frames.push_back(retrieved[i]);
  }
  return reconcile(sorted_answers, sorted_frames, current, question, ctx);
}

FinalAnswer single_pass(const Frame& current, std::span<const Frame> retrieved, const Question& question,
                        const ReasoningContext& ctx) {
  if (retrieved.empty()) return single_image_answer(current, question, ctx);
  const auto prompt = ctx.prompts.get("single_pass").render(
      {{"question", question.text}, {"count", std::to_string(retrieved.size())}, {"frames", frame_list(retrieved)}});
  return from_single_call(
      multimodal_request(ctx, prompt, current, retrieved, final_tag(question), ctx.settings.temperature), ctx);
}

FinalAnswer cot_sc(const Frame& current, std::span<const Frame> retrieved, const Question& question,
                   const ReasoningContext& ctx, const CotScOptions& options) {
  if (options.samples < 1) throw InputError("cot_sc: samples must be >= 1");
  if (retrieved.empty()) return single_image_answer(current, question, ctx);

  const auto samples = static_cast<std::size_t>(options.samples);
  std::vector<SampledRun> runs(samples);
  std::vector<std::string> prompts(samples);
  const auto question_seed = derive_seed(options.seed, "cot_sc:" + question.id);
  detail::parallel_for(samples, ctx.parallelism, [&](std::size_t i) {
    std::vector<Frame> frames(retrieved.begin(), retrieved.end());
    Rng rng(derive_seed(question_seed, static_cast<std::uint64_t>(i)));
    rng.shuffle(frames.begin(), frames.end());
    auto& run = runs[i];
    run.index = static_cast<int>(i);
    for (const auto& f : frames) run.frame_order.push_back(f.id);
    const auto prompt = ctx.prompts.get("cot_sc").render(
        {{"question", question.text}, {"count", std::to_string(frames.size())}, {"frames", frame_list(frames)}});
    auto req = multimodal_request(ctx, prompt, current, frames,
                                  final_tag(question) + ";run=" + std::to_string(i), options.temperature);
    prompts[i] = req.joined_text();
    try {
      const auto resp = ctx.provider.send(req);
      run.raw_text = resp.text;
      run.latency_s = resp.latency_s;
      run.predicted_class = parse_answer(resp.text, ctx.taxonomy).label;
    } catch (const GatewayError& e) {
      run.error = e.what();
    }
  });

  // Vote over successful runs; Unparsed only wins when nothing else was said.
  std::map<AnswerClass, std::size_t> votes;
  std::size_t ok = 0;
  for (const auto& r : runs) {
    if (!r.error.empty()) continue;
    ++ok;
    if (!r.predicted_class.is_unparsed()) ++votes[r.predicted_class];
  }
  if (ok == 0) throw GatewayError("cot_sc: all " + std::to_string(samples) + " runs failed; first: " + runs[0].error);

  std::size_t best = 0;
  for (const auto& [c, n] : votes) best = std::max(best, n);
  const SampledRun* winner = nullptr;
  for (const auto& r : runs) {
    if (!r.error.empty()) continue;
    const auto it = votes.find(r.predicted_class);
    const bool wins = votes.empty() || (it != votes.end() && it->second == best);
    if (wins) {
      winner = &r;
      break;
    }
  }

  const auto parsed = parse_answer(winner->raw_text, ctx.taxonomy);
  FinalAnswer out;
  out.predicted_class = winner->predicted_class;
  out.judgment_clause = parsed.judgment_clause;
  out.explanation = parsed.explanation;
  out.raw_text = winner->raw_text;
  out.prompt_text = prompts[static_cast<std::size_t>(winner->index)];
  out.consistent = ok == samples && votes.size() == 1 && votes.begin()->second == samples;
  out.runs = std::move(runs);
  for (const auto& r : out.runs) out.latency_s += r.latency_s;
  return out;
}

FinalAnswer caption_answer(const std::string& current_caption, std::span<const std::string> captions,
                           const Frame& current, const Question& question, const ReasoningContext& ctx) {
  (void)current;
  std::string listed;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    if (i) listed += '\n';
    listed += std::to_string(i + 1) + ". " + one_line(captions[i]);
  }
  const auto prompt = ctx.prompts.get("caption_answer").render({{"question", question.text},
                                                                {"current_caption", one_line(current_caption)},
                                                                {"count", std::to_string(captions.size())},
                                                                {"captions", listed.empty() ? "(none)" : listed}});
  ChatRequest req;
  req.model_id = ctx.settings.model_id;
  req.messages.push_back(ChatMessage{Role::User, {ContentPart::make_text(prompt)}});
  req.temperature = ctx.settings.temperature;
  req.max_tokens = ctx.settings.max_tokens;
  req.request_tag = final_tag(question);
  auto out = from_single_call(req, ctx);
  out.single_image_fallback = captions.empty();
  return out;
}

// ------------------------------------------------------------------ pipeline

std::string_view to_string(RetrievalMethod m) {
  switch (m) {
    case RetrievalMethod::Hierarchical: return "hierarchical";
    case RetrievalMethod::Viewpoint: return "viewpoint";
    case RetrievalMethod::ImageEmbed: return "image_embed";
    case RetrievalMethod::CaptionEmbed: return "caption_embed";
  }
  return "?";
}

std::string_view to_string(ReasoningMethod m) {
  switch (m) {
    case ReasoningMethod::ObjChangeVR: return "objchangevr";
    case ReasoningMethod::CotSc: return "cot_sc";
    case ReasoningMethod::SinglePass: return "single_pass";
  }
  return "?";
}

RetrievalMethod parse_retrieval_method(std::string_view name) {
  for (auto m : {RetrievalMethod::Hierarchical, RetrievalMethod::Viewpoint, RetrievalMethod::ImageEmbed,
                 RetrievalMethod::CaptionEmbed}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown retrieval method '" + std::string(name) +
                    "' (expected hierarchical, viewpoint, image_embed or caption_embed)");
}

ReasoningMethod parse_reasoning_method(std::string_view name) {
  for (auto m : {ReasoningMethod::ObjChangeVR, ReasoningMethod::CotSc, ReasoningMethod::SinglePass}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown reasoning method '" + std::string(name) +
                    "' (expected objchangevr, cot_sc or single_pass)");
}

void PipelineConfig::validate() const {
  retrieval_config.validate();
  if (retrieval == RetrievalMethod::CaptionEmbed && reasoning != ReasoningMethod::SinglePass)
    throw ConfigError("caption_embed retrieval answers from text and needs --reasoning single_pass");
  if (cot_sc.samples < 1) throw ConfigError("cot_sc samples must be >= 1");
  if (!(cot_sc.temperature >= 0.0)) throw ConfigError("cot_sc temperature must be >= 0");
}

QuestionTrace answer_question(const Question& question, const FrameHistory& history, const PipelineConfig& config,
                              const ReasoningContext& ctx, const PipelineServices& services) {
  config.validate();
  SystemClock system_clock;
  Clock& clock = services.clock ? *services.clock : system_clock;

  QuestionTrace trace;
  trace.question = question;
  trace.retrieval_method = std::string(to_string(config.retrieval));
  trace.reasoning_method = std::string(to_string(config.reasoning));

  const Frame* current = history.find(question.current_frame_id);
  if (current == nullptr) throw ReferenceError("question " + question.id + ": unknown frame " + question.current_frame_id);
  const FrameHistory past = history_before(history, current->timestamp);
  const std::size_t k = config.retrieval_config.k;
  const ParallelOptions par{ctx.parallelism};
  const std::string caption_prefix = question_tag(question).str() + ";";

  const double t_start = clock.now();
  std::string current_caption;
  switch (config.retrieval) {
    case RetrievalMethod::Hierarchical:
      trace.retrieval = hierarchical_retrieve(past, *current, config.retrieval_config);
      break;
    case RetrievalMethod::Viewpoint:
      trace.retrieval =
          viewpoint_retrieve(past, *current, k, config.retrieval_config.w_p, config.retrieval_config.w_o);
      break;
    case RetrievalMethod::ImageEmbed:
      if (services.embeddings == nullptr) throw ConfigError("image_embed retrieval needs an embedding provider");
      trace.retrieval = embedding_retrieve_image(past, *current, k, *services.embeddings, par);
      break;
    case RetrievalMethod::CaptionEmbed: {
      if (services.embeddings == nullptr || services.captioner == nullptr)
        throw ConfigError("caption_embed retrieval needs an embedding provider and a captioner");
      // Caption everything up front so captioning is timed as its own phase.
      detail::parallel_for(past.size(), ctx.parallelism,
                           [&](std::size_t i) { services.captioner->caption(past[i], caption_prefix); });
      current_caption = services.captioner->caption(*current, caption_prefix);
      const double t_captioned = clock.now();
      trace.latency.captioning_s = t_captioned - t_start;
      auto cr = embedding_retrieve_caption(past, question, k, *services.embeddings, *services.captioner, par,
                                           caption_prefix);
      trace.retrieval = std::move(cr.frames);
      trace.captions = std::move(cr.captions);
      break;
    }
  }
  const double t_retrieved = clock.now();
  trace.latency.retrieval_s = t_retrieved - t_start - trace.latency.captioning_s;

  std::vector<Frame> frames;
  for (const auto& id : trace.retrieval.selected) frames.push_back(*past.find(id));

  if (config.retrieval == RetrievalMethod::CaptionEmbed) {
    trace.answer = caption_answer(current_caption, trace.captions, *current, question, ctx);
  } else {
    switch (config.reasoning) {
      case ReasoningMethod::ObjChangeVR: trace.answer = objchangevr_reason(*current, frames, question, ctx); break;
      case ReasoningMethod::CotSc: trace.answer = cot_sc(*current, frames, question, ctx, config.cot_sc); break;
      case ReasoningMethod::SinglePass: trace.answer = single_pass(*current, frames, question, ctx); break;
    }
  }
  const double t_end = clock.now();
  trace.latency.reasoning_s = t_end - t_retrieved;
  trace.latency.total_s = t_end - t_start;
  return trace;
}

QuestionTrace run_question(const Question& question, const FrameHistory& history, const PipelineConfig& config,
                           const ReasoningContext& ctx, const PipelineServices& services) {
  try {
    return answer_question(question, history, config, ctx, services);
  } catch (const ConfigError&) {
    throw;  // affects every question alike
  } catch (const Error& e) {
    QuestionTrace trace;
    trace.question = question;
    trace.retrieval_method = std::string(to_string(config.retrieval));
    trace.reasoning_method = std::string(to_string(config.reasoning));
    trace.error = e.what();
    return trace;
  }
}

}  // namespace egoqa
