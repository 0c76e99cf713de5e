#include <doctest.h>

#include <fstream>
#include <sstream>

#include "egoqa/embedding.hpp"
#include "egoqa/errors.hpp"
#include "egoqa/reasoning.hpp"
#include "support.hpp"

using namespace egoqa;
using namespace egoqa::testing;

namespace {

// Each now() call advances one second.
class TickingClock final : public Clock {
 public:
  double now() override { return t_ += 1.0; }
  void sleep(double s) override { t_ += s; }

 private:
  double t_ = 0.0;
};

std::string truthful(const RequestTag& t) {
  if (t.has("caption")) return "A desk seen from frame " + *t.get("frame") + ".";
  return "The mug is gone now. It has disappeared.";
}

struct World {
  Rng rng{31};
  FrameHistory history = random_history(rng, 40);
  Question question = make_question("q1", "f0030", AnswerClass::disappeared(), "mug");
};

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("every method answers and only looks at the past") {
    World w;
    HashEmbeddingProvider stub;
    const std::vector<std::pair<RetrievalMethod, ReasoningMethod>> methods = {
        {RetrievalMethod::Hierarchical, ReasoningMethod::ObjChangeVR},
        {RetrievalMethod::Hierarchical, ReasoningMethod::CotSc},
        {RetrievalMethod::Hierarchical, ReasoningMethod::SinglePass},
        {RetrievalMethod::Viewpoint, ReasoningMethod::ObjChangeVR},
        {RetrievalMethod::ImageEmbed, ReasoningMethod::ObjChangeVR},
        {RetrievalMethod::CaptionEmbed, ReasoningMethod::SinglePass}};
    for (const auto& [r, m] : methods) {
      TagProvider p(truthful);
      FrameCaptioner captioner(p, ModelSettings{}, "Describe.");
      PipelineConfig cfg;
      cfg.retrieval = r;
      cfg.reasoning = m;
      VirtualClock clock;
      const auto t = answer_question(w.question, w.history, cfg, ReasoningContext{p}, {&stub, &captioner, &clock});
      CAPTURE(to_string(r));
      CAPTURE(to_string(m));
      CHECK(t.answer.predicted_class == AnswerClass::disappeared());
      CHECK(t.retrieval.selected.size() == 3);
      for (const auto& id : t.retrieval.selected) CHECK(id < std::string("f0030"));
      CHECK(t.retrieval.diagnostics.size() == 30);
      CHECK(t.latency == PhaseLatency{});
      CHECK(t.retrieval_method == to_string(r));
      if (r == RetrievalMethod::CaptionEmbed) {
        CHECK(t.captions.size() == 3);
        // 30 past frames plus the current one, each captioned once.
        CHECK(captioner.calls_made() == 31);
      }
    }
  }

  TEST_CASE("phases are timed separately") {
    World w;
    TagProvider p(truthful);
    TickingClock clock;
    const auto t = answer_question(w.question, w.history, PipelineConfig{}, ReasoningContext{p}, {nullptr, nullptr, &clock});
    CHECK(t.latency.retrieval_s == 1.0);
    CHECK(t.latency.captioning_s == 0.0);
    CHECK(t.latency.reasoning_s == 1.0);
    CHECK(t.latency.total_s == 2.0);

    HashEmbeddingProvider stub;
    FrameCaptioner captioner(p, ModelSettings{}, "Describe.");
    PipelineConfig cap;
    cap.retrieval = RetrievalMethod::CaptionEmbed;
    cap.reasoning = ReasoningMethod::SinglePass;
    TickingClock clock2;
    const auto c = answer_question(w.question, w.history, cap, ReasoningContext{p}, {&stub, &captioner, &clock2});
    CHECK(c.latency.captioning_s == 1.0);
    CHECK(c.latency.retrieval_s == 1.0);
    CHECK(c.latency.reasoning_s == 1.0);
    CHECK(c.latency.total_s == 3.0);
  }

  TEST_CASE("first question has no past and falls back to one picture") {
    World w;
    TagProvider p(truthful);
    const auto q = make_question("q0", "f0000", AnswerClass::never_there());
    const auto t = answer_question(q, w.history, PipelineConfig{}, ReasoningContext{p});
    CHECK(t.retrieval.selected.empty());
    CHECK(t.answer.single_image_fallback);
  }

  TEST_CASE("failures are recorded per question, configuration errors are not") {
    World w;
    TagProvider down([](const RequestTag&) -> std::string { throw TransportError("503 forever", "", 3); });
    const auto t = run_question(w.question, w.history, PipelineConfig{}, ReasoningContext{down});
    CHECK(t.failed());
    CHECK(t.error.find("503 forever") != std::string::npos);

    TagProvider p(truthful);
    const auto missing = run_question(make_question("qx", "nope", AnswerClass::disappeared()), w.history,
                                      PipelineConfig{}, ReasoningContext{p});
    CHECK(missing.failed());

    PipelineConfig img;
    img.retrieval = RetrievalMethod::ImageEmbed;
    CHECK_THROWS_AS(run_question(w.question, w.history, img, ReasoningContext{p}), ConfigError);
  }

  TEST_CASE("traces round-trip through JSON lines") {
    World w;
    TagProvider p(truthful);
    PipelineConfig cot;
    cot.reasoning = ReasoningMethod::CotSc;
    std::vector<QuestionTrace> traces = {
        answer_question(w.question, w.history, PipelineConfig{}, ReasoningContext{p}),
        answer_question(w.question, w.history, cot, ReasoningContext{p}),
        run_question(make_question("qx", "nope", AnswerClass::always_there()), w.history, PipelineConfig{},
                     ReasoningContext{p})};
    TempDir dir("trace");
    {
      std::ofstream out(dir.path() / "trace.jsonl");
      for (const auto& t : traces) write_trace_line(t, out);
    }
    const auto back = load_traces(dir.path() / "trace.jsonl");
    REQUIRE(back.size() == traces.size());
    for (std::size_t i = 0; i < traces.size(); ++i) CHECK(back[i] == traces[i]);
    const auto j = trace_to_json(traces[0]);
    CHECK(j.begin().key() == "question_id");
    CHECK(j["final"].contains("prompt"));
  }

  TEST_CASE("corrupt trace files name the line") {
    TempDir dir("badtrace");
    std::ofstream(dir.path() / "t.jsonl") << "{\"question_id\":\"q\"}\n";
    try {
      load_traces(dir.path() / "t.jsonl");
      FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
      CHECK(std::string(e.what()).find(":1") != std::string::npos);
    }
  }
}
