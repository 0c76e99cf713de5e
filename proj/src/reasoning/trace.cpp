#include "common/jsonl.hpp"
#include "egoqa/errors.hpp"
#include "egoqa/reasoning.hpp"

namespace egoqa {

using ojson = nlohmann::ordered_json;

namespace {

ojson intermediate_json(const IntermediateAnswer& a) {
  ojson j;
  j["frame_id"] = a.frame_id;
  j["frame_timestamp"] = a.frame_timestamp;
  j["class"] = a.predicted_class.token();
  j["judgment"] = a.judgment_clause;
  j["explanation"] = a.explanation;
  j["raw_text"] = a.raw_text;
  j["latency_s"] = a.latency_s;
  return j;
}

ojson run_json(const SampledRun& r) {
  ojson j;
  j["index"] = r.index;
  j["frame_order"] = r.frame_order;
  j["class"] = r.predicted_class.token();
  j["raw_text"] = r.raw_text;
  j["error"] = r.error;
  j["latency_s"] = r.latency_s;
  return j;
}

AnswerClass class_from(const nlohmann::json& j, const ClassTaxonomy& taxonomy) {
  const auto token = j.get<std::string>();
  if (token == AnswerClass::unparsed().token()) return AnswerClass::unparsed();
  auto c = taxonomy.from_token(token);
  if (!c) throw DatasetError("unknown class '" + token + "'");
  return *c;
}

}  // namespace

ojson trace_to_json(const QuestionTrace& t) {
  ojson j;
  j["question_id"] = t.question.id;
  j["question"] = t.question.text;
  j["current_frame_id"] = t.question.current_frame_id;
  j["object_id"] = t.question.object_id;
  j["gt_class"] = t.question.ground_truth_class.token();
  j["gt_text"] = t.question.ground_truth_text;
  j["retrieval_method"] = t.retrieval_method;
  j["reasoning_method"] = t.reasoning_method;

  ojson r;
  r["selected"] = t.retrieval.selected;
  r["stage_sizes"] = {{"k_p", t.retrieval.stage_sizes.k_p},
                      {"k_o", t.retrieval.stage_sizes.k_o},
                      {"k", t.retrieval.stage_sizes.k}};
  ojson diags = ojson::array();
  for (const auto& d : t.retrieval.diagnostics) {
    diags.push_back({{"frame_id", d.frame_id},
                     {"t", d.timestamp},
                     {"d_pos", d.position_distance},
                     {"d_ornt", d.orientation_distance},
                     {"score", d.score},
                     {"stage", d.stage}});
  }
  r["diagnostics"] = std::move(diags);
  j["retrieval"] = std::move(r);
  j["captions"] = t.captions;

  ojson inter = ojson::array();
  for (const auto& a : t.answer.intermediates) inter.push_back(intermediate_json(a));
  j["intermediates"] = std::move(inter);
  ojson runs = ojson::array();
  for (const auto& run : t.answer.runs) runs.push_back(run_json(run));
  j["runs"] = std::move(runs);

  ojson f;
  f["class"] = t.answer.predicted_class.token();
  f["judgment"] = t.answer.judgment_clause;
  f["explanation"] = t.answer.explanation;
  f["consistent"] = t.answer.consistent;
  f["class_overridden"] = t.answer.class_overridden;
  f["single_image_fallback"] = t.answer.single_image_fallback;
  f["raw_text"] = t.answer.raw_text;
  f["prompt"] = t.answer.prompt_text;
  f["latency_s"] = t.answer.latency_s;
  j["final"] = std::move(f);

  j["latency"] = {{"retrieval_s", t.latency.retrieval_s},
                  {"captioning_s", t.latency.captioning_s},
                  {"reasoning_s", t.latency.reasoning_s},
                  {"total_s", t.latency.total_s}};
  j["error"] = t.error;
  return j;
}

QuestionTrace trace_from_json(const nlohmann::json& j, const ClassTaxonomy& taxonomy) {
  QuestionTrace t;
  try {
    t.question.id = j.at("question_id").get<std::string>();
    t.question.text = j.at("question").get<std::string>();
    t.question.current_frame_id = j.at("current_frame_id").get<std::string>();
    t.question.object_id = j.value("object_id", "");
    t.question.ground_truth_class = class_from(j.at("gt_class"), taxonomy);
    if (t.question.ground_truth_class.is_unparsed()) throw DatasetError("ground truth class cannot be unparsed");
    t.question.ground_truth_text = j.at("gt_text").get<std::string>();
    t.retrieval_method = j.at("retrieval_method").get<std::string>();
    t.reasoning_method = j.at("reasoning_method").get<std::string>();
    t.error = j.value("error", "");

    const auto& r = j.at("retrieval");
    t.retrieval.selected = r.at("selected").get<std::vector<std::string>>();
    const auto& ss = r.at("stage_sizes");
    t.retrieval.stage_sizes = {ss.at("k_p").get<std::size_t>(), ss.at("k_o").get<std::size_t>(),
                               ss.at("k").get<std::size_t>()};
    for (const auto& d : r.at("diagnostics")) {
      t.retrieval.diagnostics.push_back({d.at("frame_id").get<std::string>(), d.at("t").get<double>(),
                                         d.at("d_pos").get<double>(), d.at("d_ornt").get<double>(),
                                         d.at("score").get<double>(), d.at("stage").get<int>()});
    }
    t.captions = j.value("captions", std::vector<std::string>{});

    for (const auto& a : j.at("intermediates")) {
      IntermediateAnswer ia;
      ia.frame_id = a.at("frame_id").get<std::string>();
      ia.frame_timestamp = a.at("frame_timestamp").get<double>();
      ia.predicted_class = class_from(a.at("class"), taxonomy);
      ia.judgment_clause = a.at("judgment").get<std::string>();
      ia.explanation = a.at("explanation").get<std::string>();
      ia.raw_text = a.at("raw_text").get<std::string>();
      ia.latency_s = a.at("latency_s").get<double>();
      t.answer.intermediates.push_back(std::move(ia));
    }
    for (const auto& r2 : j.value("runs", nlohmann::json::array())) {
      SampledRun run;
      run.index = r2.at("index").get<int>();
      run.frame_order = r2.at("frame_order").get<std::vector<std::string>>();
      run.predicted_class = class_from(r2.at("class"), taxonomy);
      run.raw_text = r2.at("raw_text").get<std::string>();
      run.error = r2.at("error").get<std::string>();
      run.latency_s = r2.at("latency_s").get<double>();
      t.answer.runs.push_back(std::move(run));
    }

    const auto& f = j.at("final");
    t.answer.predicted_class = class_from(f.at("class"), taxonomy);
    t.answer.judgment_clause = f.at("judgment").get<std::string>();
    t.answer.explanation = f.at("explanation").get<std::string>();
    t.answer.consistent = f.at("consistent").get<bool>();
    t.answer.class_overridden = f.at("class_overridden").get<bool>();
    t.answer.single_image_fallback = f.at("single_image_fallback").get<bool>();
    t.answer.raw_text = f.at("raw_text").get<std::string>();
    t.answer.prompt_text = f.value("prompt", "");
    t.answer.latency_s = f.at("latency_s").get<double>();

    const auto& l = j.at("latency");
    t.latency = {l.at("retrieval_s").get<double>(), l.at("captioning_s").get<double>(),
                 l.at("reasoning_s").get<double>(), l.at("total_s").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("bad trace record: ") + e.what());
  }
  return t;
}

void write_trace_line(const QuestionTrace& trace, std::ostream& out) { out << trace_to_json(trace).dump() << '\n'; }

std::vector<QuestionTrace> load_traces(const std::filesystem::path& path, const ClassTaxonomy& taxonomy) {
  std::vector<QuestionTrace> out;
  try {
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line) {
      try {
        out.push_back(trace_from_json(j, taxonomy));
      } catch (const DatasetError& e) {
        throw DatasetError(path.string() + ":" + std::to_string(line) + ": " + e.what());
      }
    });
  } catch (const ParseError& e) {
    throw DatasetError(e.what());
  }
  return out;
}

}  // namespace egoqa
