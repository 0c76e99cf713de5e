#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "egoqa/errors.hpp"
#include "egoqa/reasoning.hpp"
#include "support.hpp"

using namespace egoqa;
using namespace egoqa::testing;

namespace {

const auto D = AnswerClass::disappeared();
const auto N = AnswerClass::never_there();
const auto A = AnswerClass::always_there();

std::string text_of(const AnswerClass& c) { return ClassTaxonomy::defaults().canonical_text(c); }

struct Scene {
  Frame current = make_frame("f0050", 50, {0, 0, 0});
  std::vector<Frame> retrieved = {make_frame("f0001", 1, {1, 0, 0}), make_frame("f0002", 2, {0, 1, 0}),
                                  make_frame("f0003", 3, {0, 0, 1})};
  Question question = make_question("q7", "f0050", AnswerClass::disappeared(), "mug");
};

std::string read_all(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("reasoning") {
  TEST_CASE("parse_answer picks the first sentence with a class keyword") {
    auto p = parse_answer("It has disappeared.");
    CHECK(p.label == D);
    CHECK(p.judgment_clause == "It has disappeared.");
    CHECK(p.explanation.empty());
    p = parse_answer("The first picture shows a mug on the desk. So it has disappeared. Nothing else changed.");
    CHECK(p.label == D);
    CHECK(p.judgment_clause == "So it has disappeared.");
    CHECK(p.explanation == "The first picture shows a mug on the desk. Nothing else changed.");
    CHECK(parse_answer("It was never there.").label == N);
    CHECK(parse_answer("It has always been here.").label == A);
    CHECK(parse_answer("IT IS STILL THERE!").label == A);
  }

  TEST_CASE("parse_answer is total") {
    for (const char* s : {"", "   ", "\n\n", "I cannot tell.", "???", "\xff\xfe", "It... maybe"}) {
      const auto p = parse_answer(s);
      CHECK((p.label == D || p.label == N || p.label == A || p.label.is_unparsed()));
    }
    const auto p = parse_answer("I cannot tell. The view is blocked.");
    CHECK(p.label.is_unparsed());
    CHECK(p.judgment_clause == "I cannot tell.");
    CHECK(p.explanation == "The view is blocked.");
  }

  TEST_CASE("keyword priority follows taxonomy order within a sentence") {
    // Both keywords in one sentence: the earlier class in the taxonomy wins.
    CHECK(parse_answer("It was never there, so it has not disappeared.").label == D);
    // Separate sentences: the earlier sentence wins.
    CHECK(parse_answer("It was never there. It has disappeared.").label == N);
  }

  TEST_CASE("sentence splitting keeps terminators and quotes") {
    CHECK(split_sentences("A. B? C!") == std::vector<std::string>{"A.", "B?", "C!"});
    CHECK(split_sentences("He said \"gone.\" Then left") == std::vector<std::string>{"He said \"gone.\"", "Then left"});
    CHECK(split_sentences("line one\nline two") == std::vector<std::string>{"line one", "line two"});
    CHECK(split_sentences("Wait...!? ok") == std::vector<std::string>{"Wait...!?", "ok"});
  }

  TEST_CASE("templates render slots and exemplars") {
    PromptTemplate t{"t", "Q: {{question}}\n{{exemplars}}", {{"in1", "out1"}}};
    CHECK(t.slots() == std::vector<std::string>{"question", "exemplars"});
    const auto s = t.render({{"question", "Was it here?"}});
    CHECK(s.find("Q: Was it here?") == 0);
    CHECK(s.find("Input: in1\nOutput: out1") != std::string::npos);
    CHECK_THROWS_AS(t.render({}), TemplateError);
    PromptTemplate bad{"b", "oops {{question", {}};
    CHECK_THROWS_AS(bad.render({{"question", "x"}}), TemplateError);
  }

  TEST_CASE("exemplar files") {
    const auto ex = parse_exemplars("Input: a\nOutput: b\n---\nInput: c\nmore c\nOutput: d\n");
    REQUIRE(ex.size() == 2);
    CHECK(ex[0].input == "a");
    CHECK(ex[1].input == "c\nmore c");
    CHECK(ex[1].output == "d");
    CHECK(parse_exemplars("").empty());
    CHECK_THROWS_AS(parse_exemplars("Output: x\n"), TemplateError);
  }

  TEST_CASE("built-in library has every template and a zero-shot variant") {
    const auto& lib = PromptLibrary::builtin();
    for (const char* name : {"pairwise", "reconcile", "single_pass", "cot_sc", "single_image", "caption",
                             "caption_answer", "generate_qa"})
      CHECK(lib.has(name));
    CHECK(lib.get("pairwise").exemplars.size() == 2);
    CHECK(lib.zero_shot().get("pairwise").exemplars.empty());
    CHECK_THROWS_AS(lib.get("nope"), TemplateError);
    const auto zero = lib.zero_shot().get("reconcile").render(
        {{"question", "q"}, {"count", "1"}, {"frames", "f"}, {"answers", "a"}});
    CHECK(zero.find("Example 1") == std::string::npos);
    // The QA generation instruction is used as published.
    CHECK(lib.get("generate_qa").instruction.find("4 disappearing objects") != std::string::npos);
  }

  TEST_CASE("prompt directories override single files") {
    TempDir dir("prompts");
    std::ofstream(dir.path() / "pairwise.txt") << "Custom: {{question}}\n";
    const auto lib = PromptLibrary::from_directory(dir.path());
    CHECK(lib.get("pairwise").render({{"question", "x"}}) == "Custom: x");
    CHECK(lib.get("pairwise").exemplars.size() == 2);  // exemplar file not overridden
    CHECK(lib.get("reconcile").instruction == PromptLibrary::builtin().get("reconcile").instruction);
    CHECK_THROWS_AS(PromptLibrary::from_directory(dir.path() / "missing"), ConfigError);
  }

  TEST_CASE("pairwise request puts the retrieved picture first") {
    Scene s;
    TagProvider p([](const RequestTag&) { return std::string("The mug is on the desk in both. It has always been here."); });
    const auto r = pairwise_reason(s.current, s.retrieved[1], s.question, ReasoningContext{p});
    CHECK(r.frame_id == "f0002");
    CHECK(r.predicted_class == A);
    CHECK(r.judgment_clause == "It has always been here.");
    const auto req = p.requests().at(0);
    CHECK(req.request_tag == "q=q7;obj=mug;cur=f0050;ref=f0002");
    CHECK(req.image_count() == 2);
    const auto& parts = req.messages.at(0).parts;
    CHECK(parts.at(1).text == "Retrieved picture (frame f0002 at t=2.00 s):");
    CHECK(*parts.at(2).image == "img:f0002");
    CHECK(*parts.at(4).image == "img:f0050");
    CHECK(parts.at(0).text.find(s.question.text) != std::string::npos);
  }

  TEST_CASE("pairwise failures name the frame") {
    Scene s;
    TagProvider p([](const RequestTag&) -> std::string { throw TransportError("down", "", 3); });
    try {
      pairwise_reason(s.current, s.retrieved[0], s.question, ReasoningContext{p});
      FAIL("expected FrameGatewayError");
    } catch (const FrameGatewayError& e) {
      CHECK(e.frame_id() == "f0001");
    }
  }

  TEST_CASE("agreeing intermediates override the reconciler") {
    Scene s;
    TagProvider p([](const RequestTag& t) {
      return t.get("ref") == "final" ? std::string("It was never there. I see no mug.") : text_of(D);
    });
    ReasoningContext ctx{p};
    const auto out = objchangevr_reason(s.current, s.retrieved, s.question, ctx);
    CHECK(out.predicted_class == D);
    CHECK(out.consistent);
    CHECK(out.class_overridden);
    CHECK(out.judgment_clause == text_of(D));
    CHECK(out.raw_text == "It was never there. I see no mug.");
    CHECK(out.intermediates.size() == 3);
  }

  TEST_CASE("disagreeing intermediates defer to the reconciler") {
    Scene s;
    const std::map<std::string, AnswerClass> by_frame = {{"f0001", D}, {"f0002", D}, {"f0003", N}};
    for (const auto& final_class : {D, N, A}) {
      TagProvider p([&](const RequestTag& t) {
        const auto ref = *t.get("ref");
        return ref == "final" ? text_of(final_class) : text_of(by_frame.at(ref));
      });
      const auto out = objchangevr_reason(s.current, s.retrieved, s.question, ReasoningContext{p});
      CHECK(out.predicted_class == final_class);
      CHECK_FALSE(out.consistent);
      CHECK_FALSE(out.class_overridden);
    }
  }

  TEST_CASE("unparsed intermediates are never a consensus") {
    Scene s;
    TagProvider p([](const RequestTag& t) {
      return t.get("ref") == "final" ? text_of(A) : std::string("I cannot tell.");
    });
    const auto out = objchangevr_reason(s.current, s.retrieved, s.question, ReasoningContext{p});
    CHECK_FALSE(out.consistent);
    CHECK(out.predicted_class == A);
  }

  TEST_CASE("reconciliation prompt lists frames and answers in time order") {
    Scene s;
    TagProvider p([](const RequestTag& t) {
      return t.get("ref") == "final" ? text_of(D) : "Answer for " + *t.get("ref") + ". " + text_of(D);
    });
    objchangevr_reason(s.current, s.retrieved, s.question, ReasoningContext{p});
    std::string final_text;
    for (const auto& r : p.requests())
      if (RequestTag::parse(r.request_tag).get("ref") == "final") final_text = r.joined_text();
    const auto a = final_text.find("1. frame f0001 at t=1.00 s");
    const auto b = final_text.find("2. frame f0002 at t=2.00 s");
    const auto c = final_text.find("3. frame f0003 at t=3.00 s");
    CHECK(a != std::string::npos);
    CHECK(a < b);
    CHECK(b < c);
    CHECK(final_text.find("Answer for f0002") != std::string::npos);
  }

  TEST_CASE("reconcile checks its inputs") {
    Scene s;
    TagProvider p([](const RequestTag&) { return text_of(D); });
    ReasoningContext ctx{p};
    std::vector<IntermediateAnswer> ims;
    for (const auto& f : s.retrieved) ims.push_back(pairwise_reason(s.current, f, s.question, ctx));
    CHECK_NOTHROW(reconcile(ims, s.retrieved, s.current, s.question, ctx));
    std::swap(ims[0], ims[1]);
    std::vector<Frame> swapped = {s.retrieved[1], s.retrieved[0], s.retrieved[2]};
    CHECK_THROWS_AS(reconcile(ims, swapped, s.current, s.question, ctx), InputError);
    CHECK_THROWS_AS(reconcile(ims, s.retrieved, s.current, s.question, ctx), InputError);
    CHECK_THROWS_AS(reconcile({}, {}, s.current, s.question, ctx), InputError);
  }

  TEST_CASE("no retrieved frames falls back to the current picture") {
    Scene s;
    TagProvider p([](const RequestTag&) { return text_of(N); });
    const auto out = objchangevr_reason(s.current, {}, s.question, ReasoningContext{p});
    CHECK(out.single_image_fallback);
    CHECK(out.predicted_class == N);
    CHECK(p.requests().size() == 1);
    CHECK(p.requests()[0].image_count() == 1);
  }

  TEST_CASE("cot-sc votes, breaks ties by lowest run and ignores unparsed runs") {
    Scene s;
    auto run = [&](std::vector<std::string> texts, CotScOptions opt = {}) {
      TagProvider p([texts](const RequestTag& t) { return texts.at(std::stoul(*t.get("run"))); });
      return cot_sc(s.current, s.retrieved, s.question, ReasoningContext{p}, opt);
    };
    CHECK(run({text_of(D), text_of(D), text_of(N)}).predicted_class == D);
    CHECK(run({text_of(N), text_of(D), text_of(D)}).predicted_class == D);
    CHECK(run({text_of(A), text_of(D), text_of(N)}).predicted_class == A);
    CHECK(run({"No idea.", "Hard to say.", text_of(N)}).predicted_class == N);
    CHECK(run({"No idea.", "Hard to say.", "Unclear."}).predicted_class.is_unparsed());
    const auto all = run({text_of(A), text_of(A), text_of(A)});
    CHECK(all.consistent);
    CHECK(all.runs.size() == 3);
    CotScOptions five;
    five.samples = 5;
    CHECK(run({text_of(N), text_of(D), text_of(D), text_of(N), text_of(A)}, five).predicted_class == N);
  }

  TEST_CASE("cot-sc shuffles frame order per run from the seed") {
    Scene s;
    for (int i = 4; i < 12; ++i) s.retrieved.push_back(make_frame("f000" + std::to_string(i), i, {0, 0, 0}));
    TagProvider p([](const RequestTag&) { return text_of(D); });
    CotScOptions opt;
    opt.seed = 5;
    const auto a = cot_sc(s.current, s.retrieved, s.question, ReasoningContext{p}, opt);
    const auto b = cot_sc(s.current, s.retrieved, s.question, ReasoningContext{p}, opt);
    std::set<std::vector<std::string>> orders;
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
      CHECK(a.runs[i].frame_order == b.runs[i].frame_order);
      orders.insert(a.runs[i].frame_order);
    }
    CHECK(orders.size() > 1);
    for (const auto& r : p.requests()) CHECK(r.temperature == doctest::Approx(0.7));
  }

  TEST_CASE("cot-sc survives partial failure and reports total failure") {
    Scene s;
    TagProvider some([](const RequestTag& t) -> std::string {
      if (*t.get("run") == "0") throw TransportError("down", "", 3);
      return text_of(N);
    });
    const auto out = cot_sc(s.current, s.retrieved, s.question, ReasoningContext{some});
    CHECK(out.predicted_class == N);
    CHECK_FALSE(out.consistent);
    CHECK_FALSE(out.runs[0].error.empty());
    TagProvider none([](const RequestTag&) -> std::string { throw TransportError("down", "", 3); });
    CHECK_THROWS_AS(cot_sc(s.current, s.retrieved, s.question, ReasoningContext{none}), GatewayError);
  }

  TEST_CASE("single pass sends every picture in one request") {
    Scene s;
    TagProvider p([](const RequestTag&) { return text_of(A); });
    const auto out = single_pass(s.current, s.retrieved, s.question, ReasoningContext{p});
    CHECK(out.predicted_class == A);
    CHECK(out.consistent);
    REQUIRE(p.requests().size() == 1);
    CHECK(p.requests()[0].image_count() == 4);
    CHECK(p.requests()[0].request_tag == "q=q7;obj=mug;cur=f0050;ref=final");
  }

  TEST_CASE("caption answers are text only") {
    Scene s;
    TagProvider p([](const RequestTag&) { return text_of(D); });
    const std::vector<std::string> caps = {"a desk with a mug", "a shelf\nwith books"};
    const auto out = caption_answer("an empty desk", caps, s.current, s.question, ReasoningContext{p});
    CHECK(out.predicted_class == D);
    CHECK(p.requests()[0].image_count() == 0);
    CHECK(out.prompt_text.find("2. a shelf with books") != std::string::npos);
    CHECK(out.prompt_text.find("an empty desk") != std::string::npos);
  }

  TEST_CASE("qa pairs parse from numbered questions and answer lines") {
    const auto pairs = parse_qa_pairs(read_all(fixture_path("generateqa_example.txt")));
    REQUIRE(pairs.size() == 10);
    CHECK(pairs[0].question == "Was there a round wire plant decoration near the left wall in the past?");
    CHECK(pairs[0].label == D);
    CHECK(pairs[4].label == A);
    CHECK(pairs[9].label == N);
    CHECK(pairs[9].answer == "It was never there.");
  }

  TEST_CASE("qa parsing tolerates markdown and rejects malformed output") {
    const std::string md = "**1. Was the lamp here?**\n*Answer: It has always been here.*\n2) Was a cup here?\nanswer: It was never there.\n";
    const auto pairs = parse_qa_pairs(md, 2);
    CHECK(pairs[0].question == "Was the lamp here?");
    CHECK(pairs[1].label == N);
    CHECK_THROWS_AS(parse_qa_pairs(md, 10), FormatError);
    CHECK_THROWS_AS(parse_qa_pairs("1. Q?\n2. Q2?\nAnswer: It was never there.\n", 2), FormatError);
    try {
      parse_qa_pairs("Answer: hi\n", 1);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.raw_text() == "Answer: hi\n");
    }
  }

  TEST_CASE("qa generation sends both pictures with the instruction") {
    const auto example = read_all(fixture_path("generateqa_example.txt"));
    TagProvider p([&](const RequestTag&) { return example; });
    const auto prev = make_frame("f0001", 1, {0, 0, 0}), cur = make_frame("f0009", 9, {0, 0, 0});
    const auto pairs = generate_qa_pairs(prev, cur, ReasoningContext{p});
    CHECK(pairs.size() == 10);
    const auto req = p.requests().at(0);
    CHECK(req.image_count() == 2);
    CHECK(req.max_tokens >= 1024);
    CHECK(req.joined_text().find(PromptLibrary::builtin().get("generate_qa").instruction.substr(0, 40)) !=
          std::string::npos);
  }

  TEST_CASE("method names") {
    CHECK(parse_retrieval_method("viewpoint") == RetrievalMethod::Viewpoint);
    CHECK(to_string(RetrievalMethod::CaptionEmbed) == "caption_embed");
    CHECK(parse_reasoning_method("cot_sc") == ReasoningMethod::CotSc);
    CHECK_THROWS_AS(parse_retrieval_method("clip"), ConfigError);
    CHECK_THROWS_AS(parse_reasoning_method(""), ConfigError);
    PipelineConfig c;
    c.retrieval = RetrievalMethod::CaptionEmbed;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.reasoning = ReasoningMethod::SinglePass;
    CHECK_NOTHROW(c.validate());
  }
}
