#include <doctest.h>

#include <sstream>

#include "egoqa/embedding.hpp"
#include "egoqa/errors.hpp"
#include "egoqa/retrieval.hpp"
#include "reference.hpp"
#include "support.hpp"

using namespace egoqa;
using namespace egoqa::testing;

TEST_SUITE("retrieval") {
  TEST_CASE("hierarchical retrieval matches the full-sort reference") {
    Rng rng(101);
    for (int trial = 0; trial < 60; ++trial) {
      const auto h = random_history(rng, rng.below(120), trial % 2 == 0);
      const auto cur = make_frame("cur", 500, {rng.uniform(0, 3), 0, rng.uniform(0, 3)}, random_unit_quaternion(rng));
      RetrievalConfig c;
      c.k = 1 + rng.below(8);
      const auto r = hierarchical_retrieve(h, cur, c);
      CHECK(r.selected == reference::hierarchical(h, cur, c));
      const auto cut = reference::cutoffs(c.k, h.size(), c);
      CHECK(r.stage_sizes.k_p == cut.k_p);
      CHECK(r.stage_sizes.k_o == cut.k_o);
      CHECK(r.stage_sizes.k == r.selected.size());
      CHECK(r.diagnostics.size() == h.size());
    }
  }

  TEST_CASE("hierarchical stages nest and the selection is chronological") {
    Rng rng(102);
    const auto h = random_history(rng, 150);
    const auto cur = make_frame("cur", 500, {5, 5, 5});
    const auto r = hierarchical_retrieve(h, cur, RetrievalConfig{});
    std::size_t s1 = 0, s2 = 0, s3 = 0;
    for (const auto& d : r.diagnostics) {
      s1 += d.stage >= 1;
      s2 += d.stage >= 2;
      s3 += d.stage >= 3;
    }
    CHECK(s1 == 30);
    CHECK(s2 == 7);
    CHECK(s3 == 3);
    REQUIRE(r.selected.size() == 3);
    CHECK(r.selected[0] < r.selected[1]);
    CHECK(r.selected[1] < r.selected[2]);
    // Every stage-2 frame is at least as close in orientation as any rejected stage-1 frame.
    double worst_kept = 0, best_dropped = 10;
    for (const auto& d : r.diagnostics) {
      if (d.stage >= 2) worst_kept = std::max(worst_kept, d.orientation_distance);
      if (d.stage == 1) best_dropped = std::min(best_dropped, d.orientation_distance);
    }
    CHECK(worst_kept <= best_dropped);
  }

  TEST_CASE("ties break by timestamp") {
    std::vector<Frame> frames;
    for (int i = 0; i < 10; ++i) frames.push_back(make_frame("f" + std::to_string(i), i, {1, 0, 0}));
    const FrameHistory h(frames);
    RetrievalConfig c;
    c.k = 2;
    c.min_o = 3;
    c.min_p = 4;
    const auto r = hierarchical_retrieve(h, make_frame("cur", 20, {0, 0, 0}), c);
    CHECK(r.selected == std::vector<std::string>{"f0", "f1"});
    const auto v = viewpoint_retrieve(h, make_frame("cur", 20, {0, 0, 0}), 3, 1, 1);
    CHECK(v.selected == std::vector<std::string>{"f0", "f1", "f2"});
  }

  TEST_CASE("small and empty histories") {
    const auto cur = make_frame("cur", 20, {0, 0, 0});
    CHECK(hierarchical_retrieve(FrameHistory{}, cur, RetrievalConfig{}).selected.empty());
    const FrameHistory one({make_frame("a", 0, {0, 0, 0})});
    CHECK(hierarchical_retrieve(one, cur, RetrievalConfig{}).selected == std::vector<std::string>{"a"});
    CHECK(viewpoint_retrieve(FrameHistory{}, cur, 3, 1, 1).selected.empty());
  }

  TEST_CASE("current frame may not be in the searched history") {
    const FrameHistory h({make_frame("a", 0, {0, 0, 0}), make_frame("cur", 1, {0, 0, 0})});
    CHECK_THROWS_AS(hierarchical_retrieve(h, h[1], RetrievalConfig{}), InputError);
    CHECK_THROWS_AS(viewpoint_retrieve(h, h[1], 3, 1, 1), InputError);
  }

  TEST_CASE("viewpoint retrieval matches the reference for several weightings") {
    Rng rng(103);
    for (int trial = 0; trial < 40; ++trial) {
      const auto h = random_history(rng, rng.below(100), trial % 2 == 1);
      const auto cur = make_frame("cur", 500, {1, 0, 1}, random_unit_quaternion(rng));
      const double wp = trial % 4 == 0 ? 0.0 : rng.uniform(0, 2), wo = trial % 4 == 1 ? 0.0 : rng.uniform(0, 2);
      const std::size_t k = 1 + rng.below(6);
      CHECK(viewpoint_retrieve(h, cur, k, wp, wo).selected == reference::viewpoint(h, cur, k, wp, wo));
    }
  }

  TEST_CASE("image embedding retrieval matches the reference") {
    Rng rng(104);
    HashEmbeddingProvider stub;
    for (int trial = 0; trial < 30; ++trial) {
      const auto h = random_history(rng, rng.below(80), trial % 2 == 0);
      const auto cur = make_frame("cur", 500, {0, 0, 0}, Eigen::Quaterniond::Identity(),
                                  "bytes-" + std::to_string(rng.below(5)));
      const std::size_t k = 1 + rng.below(5);
      CHECK(embedding_retrieve_image(h, cur, k, stub).selected == reference::image_embedding(h, cur, k, stub));
    }
  }

  TEST_CASE("diagnostics serialize one line per frame") {
    Rng rng(105);
    const auto h = random_history(rng, 9);
    const auto r = hierarchical_retrieve(h, make_frame("cur", 50, {0, 0, 0}), RetrievalConfig{});
    std::ostringstream out;
    write_retrieval_diagnostics(r, out);
    std::istringstream in(out.str());
    std::string line;
    int n = 0, selected = 0;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("d_pos"));
      selected += j["stage"] == 3;
      ++n;
    }
    CHECK(n == 9);
    CHECK(selected == 3);
  }
}
