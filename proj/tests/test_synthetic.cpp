#include <doctest.h>

#include <cmath>
#include <numeric>

#include "egoqa/errors.hpp"
#include "egoqa/eval.hpp"
#include "egoqa/reasoning.hpp"
#include "egoqa/synthetic.hpp"
#include "support.hpp"

using namespace egoqa;
using namespace egoqa::testing;

namespace {

Pose pose_at(Eigen::Vector3d p, double yaw_deg) {
  Pose pose;
  pose.position = p;
  pose.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw_deg * M_PI / 180.0, Eigen::Vector3d::UnitY()));
  return pose;
}

SyntheticWorld tiny_world() {
  SyntheticWorld w;
  w.duration = 10.0;
  w.bounds = {{0, 0, 0}, {5, 5, 5}};
  SceneObject gone{"gone", "red mug", {0, 0, 2}, 5.0, true};
  SceneObject ghost{"ghost", "snow globe", {0, 0, 2}, std::nullopt, false};
  SceneObject stays{"stays", "stapler", {0, 0, 3}, std::nullopt, true};
  w.objects = {gone, ghost, stays};
  return w;
}

std::string ask(ModelProvider& p, const std::string& tag) {
  ChatRequest r;
  r.request_tag = tag;
  return p.send(r).text;
}

}  // namespace

TEST_SUITE("synthetic") {
  TEST_CASE("world generation") {
    const auto w = generate_world(7, 10, 4, 60.0);
    CHECK(w == generate_world(7, 10, 4, 60.0));
    CHECK_FALSE(w == generate_world(8, 10, 4, 60.0));
    REQUIRE(w.objects.size() == 15);
    int real = 0, vanish = 0;
    for (const auto& o : w.objects) {
      CHECK(w.bounds.contains(o.position));
      if (!o.exists) {
        CHECK_FALSE(o.disappearance_time.has_value());
        continue;
      }
      ++real;
      if (o.disappearance_time) {
        ++vanish;
        CHECK(*o.disappearance_time >= 0.42 * 60.0);
        CHECK(*o.disappearance_time <= 0.48 * 60.0);
      }
    }
    CHECK(real == 10);
    CHECK(vanish == 4);
    CHECK(SyntheticWorld::from_json(w.to_json()) == w);
    CHECK_THROWS_AS(generate_world(1, 3, 4), InputError);
    CHECK_THROWS_AS(generate_world(1, 3, 1, 0.0), InputError);
    CHECK_THROWS_AS(SyntheticWorld::from_json(nlohmann::json::object()), InputError);
  }

  TEST_CASE("visibility cone, range and time") {
    const auto w = tiny_world();
    VisibilityModel m;
    const auto ahead = pose_at({0, 0, 0}, 0.0);
    CHECK(visible_objects(w, ahead, m, 1.0) == std::set<std::string>{"gone", "stays"});
    CHECK(visible_objects(w, ahead, m, 5.0) == std::set<std::string>{"stays"});
    CHECK(visible_objects(w, pose_at({0, 0, 0}, 180.0), m, 1.0).empty());
    // 44 degrees off axis is inside a 45 degree half angle, 46 is not.
    CHECK(visible_objects(w, pose_at({0, 0, 0}, 44.0), m, 1.0).size() == 2);
    CHECK(visible_objects(w, pose_at({0, 0, 0}, 46.0), m, 1.0).empty());
    m.max_range = 2.5;
    CHECK(visible_objects(w, ahead, m, 1.0) == std::set<std::string>{"gone"});
    m.fov_half_angle_deg = 90.0;
    CHECK_THROWS_AS(m.validate(), InputError);
  }

  TEST_CASE("ground truth rules") {
    const auto w = tiny_world();
    CHECK(ground_truth_answer(w, "gone", 4.0).label == AnswerClass::always_there());
    CHECK(ground_truth_answer(w, "gone", 5.0).label == AnswerClass::always_there());
    CHECK(ground_truth_answer(w, "gone", 5.5).label == AnswerClass::disappeared());
    CHECK(ground_truth_answer(w, "ghost", 9.0).label == AnswerClass::never_there());
    CHECK(ground_truth_answer(w, "stays", 9.0).text == kAlwaysText);
    CHECK_THROWS_AS(ground_truth_answer(w, "nobody", 1.0), InputError);
  }

  TEST_CASE("trajectory covers every real object before the midpoint") {
    for (std::uint64_t seed : {1u, 2u, 3u, 99u}) {
      const auto w = generate_world(seed, 10, 4);
      const auto t = generate_trajectory(w, seed, 60.0);
      CHECK(t.frames.size() == 60);
      CHECK(t.poses.size() == 300);
      CHECK(t.attempts >= 1);
      CHECK(t.attempts <= 100);
      std::set<std::string> seen;
      for (std::size_t i = 0; i < t.frames.size(); ++i) {
        const auto& f = t.frames[i];
        if (i > 0) CHECK(f.timestamp > t.frames[i - 1].timestamp);
        CHECK(std::abs(f.pose.orientation.norm() - 1.0) < 1e-9);
        if (f.timestamp < 30.0) {
          const auto v = visible_objects(w, f.pose, VisibilityModel{}, f.timestamp);
          seen.insert(v.begin(), v.end());
        }
      }
      for (const auto& o : w.objects)
        if (o.exists) CHECK_MESSAGE(seen.contains(o.id), o.id);
    }
  }

  TEST_CASE("apportion") {
    CHECK(apportion({4, 3, 3}, 10) == std::vector<int>{4, 3, 3});
    CHECK(apportion({4, 3, 3}, 20) == std::vector<int>{8, 6, 6});
    CHECK(apportion({4, 3, 3}, 0) == std::vector<int>{0, 0, 0});
    for (int n : {1, 5, 7, 11, 13}) {
      const std::vector<int> w = {4, 3, 3};
      const auto a = apportion(w, n);
      CHECK(std::accumulate(a.begin(), a.end(), 0) == n);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double exact = n * w[i] / 10.0;
        CHECK(a[i] >= static_cast<int>(std::floor(exact)));
        CHECK(a[i] <= static_cast<int>(std::ceil(exact)));
      }
    }
  }

  TEST_CASE("questions follow the class ratio and the world") {
    const auto fx = generate_fixture(11);
    REQUIRE(fx.questions.size() == 10);
    std::map<AnswerClass, int> counts;
    for (const auto& q : fx.questions) {
      counts[q.ground_truth_class] += 1;
      const auto* cur = fx.trajectory.frames.find(q.current_frame_id);
      REQUIRE(cur != nullptr);
      CHECK(cur->timestamp >= 30.0);
      const auto gt = ground_truth_answer(fx.world, q.object_id, cur->timestamp);
      CHECK(gt.label == q.ground_truth_class);
      CHECK(gt.text == q.ground_truth_text);
    }
    CHECK(counts[AnswerClass::disappeared()] == 4);
    CHECK(counts[AnswerClass::always_there()] == 3);
    CHECK(counts[AnswerClass::never_there()] == 3);
    CHECK(generate_fixture(11).questions == fx.questions);
  }

  TEST_CASE("placeholder images list visible ids") {
    const auto img = render_placeholder("f0001", {"obj_01", "obj_03"});
    CHECK(img.rfind("P6", 0) == 0);
    CHECK(img.find("obj_01") != std::string::npos);
    CHECK(img.find("obj_03") != std::string::npos);
    CHECK(render_placeholder("f0001", {}) != render_placeholder("f0002", {}));
  }

  TEST_CASE("oracle answers by rule") {
    const auto w = tiny_world();
    std::vector<Frame> frames = {make_frame("f0", 1.0, {0, 0, 0}), make_frame("f3", 2.0, {0, 0, 0}, yaw_pitch(M_PI, 0)),
                                 make_frame("f1", 4.0, {0, 0, 0}), make_frame("f2", 8.0, {0, 0, 0})};
    GeometricOracleProvider oracle(w, FrameHistory(frames));
    CHECK(ask(oracle, "q=a;obj=gone;cur=f2;ref=f0").find("has disappeared") != std::string::npos);
    // Not visible from the retrieved frame: nothing to compare against.
    CHECK(ask(oracle, "q=a;obj=gone;cur=f2;ref=f3").find("never there") != std::string::npos);
    // Not yet gone at the current frame.
    CHECK(ask(oracle, "q=a;obj=gone;cur=f1;ref=f0").find("always been here") != std::string::npos);
    CHECK(ask(oracle, "q=a;obj=ghost;cur=f2;ref=f0").find("never there") != std::string::npos);
    CHECK(ask(oracle, "q=a;obj=stays;cur=f2;ref=f3").find("always been here") != std::string::npos);
    CHECK(ask(oracle, "q=a;obj=gone;cur=f2;ref=final").rfind(kDisappearedText, 0) == 0);
    CHECK(ask(oracle, "q=a;obj=stays;cur=f2;ref=final;run=1").rfind(kAlwaysText, 0) == 0);
    CHECK(ask(oracle, "q=a;obj=gone;cur=f2;frame=f0;caption").find("red mug") != std::string::npos);

    CHECK_THROWS_AS(ask(oracle, ""), OracleContractError);
    CHECK_THROWS_AS(ask(oracle, "q=a;cur=f2;ref=f0"), OracleContractError);
    CHECK_THROWS_AS(ask(oracle, "q=a;obj=gone;ref=f0"), OracleContractError);
    CHECK_THROWS_AS(ask(oracle, "q=a;obj=nobody;cur=f2;ref=f0"), OracleContractError);
    CHECK_THROWS_AS(ask(oracle, "q=a;obj=gone;cur=f9;ref=f0"), OracleContractError);
    CHECK_THROWS_AS(ask(oracle, "q=a;obj=gone;cur=f2;ref=f9"), OracleContractError);
  }

  TEST_CASE("oracle closure over several worlds") {
    for (std::uint64_t seed : {2u, 5u, 8u}) {
      const auto fx = generate_fixture(seed);
      GeometricOracleProvider oracle(fx.world, fx.trajectory.frames);
      VirtualClock clock;
      std::vector<QuestionTrace> traces;
      for (const auto& q : fx.questions)
        traces.push_back(answer_question(q, fx.trajectory.frames, PipelineConfig{}, ReasoningContext{oracle},
                                         {nullptr, nullptr, &clock}));
      const auto r = evaluate(traces);
      CAPTURE(seed);
      CHECK(r.em_at_tau == 1.0);
      CHECK(r.macro_f1 == 1.0);
    }
  }

  TEST_CASE("fixtures round-trip through disk") {
    const auto fx = generate_fixture(3, 40.0, 6, 2);
    TempDir dir("fixture");
    write_fixture(fx, dir.path());
    const auto frames = load_trajectory(dir.path() / "poses.jsonl", dir.path() / "frames.jsonl", dir.path() / "images");
    REQUIRE(frames.size() == fx.trajectory.frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      CHECK(frames[i].id == fx.trajectory.frames[i].id);
      CHECK(frames[i].timestamp == fx.trajectory.frames[i].timestamp);
      CHECK((frames[i].pose.position - fx.trajectory.frames[i].pose.position).norm() < 1e-12);
      CHECK(*frames[i].image.load() == *fx.trajectory.frames[i].image.load());
    }
    CHECK(load_pose_track(dir.path() / "poses.jsonl").size() == fx.trajectory.poses.size());
    CHECK(load_questions(dir.path() / "questions.jsonl", frames) == fx.questions);
    CHECK(SyntheticWorld::load(dir.path() / "world.json") == fx.world);
  }
}
