#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "egoqa/gateway.hpp"
#include "egoqa/request_tag.hpp"
#include "egoqa/rng.hpp"
#include "egoqa/trajectory.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines a _res macro that
// collides with Eigen parameter names.
#include <httplib.h>

namespace egoqa::testing {

inline const char* kDisappearedText = "It has disappeared.";
inline const char* kNeverText = "It was never there.";
inline const char* kAlwaysText = "It has always been here.";

// Answers from the parsed request tag. Keeps every tag it saw.
class TagProvider final : public ModelProvider {
 public:
  using Fn = std::function<std::string(const RequestTag&)>;
  explicit TagProvider(Fn fn) : fn_(std::move(fn)) {}

  ChatResponse send(const ChatRequest& request) override {
    const auto tag = RequestTag::parse(request.request_tag);
    {
      std::lock_guard lock(mu_);
      tags_.push_back(request.request_tag);
      requests_.push_back(request);
    }
    ChatResponse r;
    r.text = fn_(tag);
    return r;
  }
  std::vector<std::string> tags() const {
    std::lock_guard lock(mu_);
    return tags_;
  }
  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  Fn fn_;
  mutable std::mutex mu_;
  std::vector<std::string> tags_;
  std::vector<ChatRequest> requests_;
};

inline Eigen::Quaterniond yaw_pitch(double yaw, double pitch) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
                            Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()));
}

inline Eigen::Quaterniond random_unit_quaternion(Rng& rng) {
  // Marsaglia-style: normalized 4-d Gaussian via Box-Muller.
  double v[4];
  for (double& x : v) {
    const double u1 = std::max(rng.uniform(), 1e-300);
    const double u2 = rng.uniform();
    x = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  Eigen::Quaterniond q(v[0], v[1], v[2], v[3]);
  q.normalize();
  return q;
}

inline Frame make_frame(std::string id, double t, Eigen::Vector3d pos,
                        Eigen::Quaterniond q = Eigen::Quaterniond::Identity(), std::string bytes = {}) {
  Frame f;
  f.id = std::move(id);
  f.timestamp = t;
  f.pose.position = pos;
  f.pose.orientation = q;
  f.pose.timestamp = t;
  f.image = ImageRef::from_bytes(bytes.empty() ? "img:" + f.id : std::move(bytes), "image/png");
  return f;
}

// n frames at 1 s spacing, positions in a 10 m cube, random orientations.
// Coarse grids make ties likely when `coarse` is set.
inline FrameHistory random_history(Rng& rng, std::size_t n, bool coarse = false) {
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Vector3d p(rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10));
    Eigen::Quaterniond q = random_unit_quaternion(rng);
    if (coarse) {
      p = Eigen::Vector3d(static_cast<double>(rng.below(3)), 0.0, static_cast<double>(rng.below(3)));
      q = yaw_pitch(static_cast<double>(rng.below(4)) * M_PI / 2.0, 0.0);
    }
    char id[32];
    std::snprintf(id, sizeof id, "f%04zu", i);
    frames.push_back(make_frame(id, static_cast<double>(i), p, q,
                                "bytes-" + std::to_string(rng.below(coarse ? 5 : 1000000))));
  }
  return FrameHistory(std::move(frames));
}

inline Question make_question(std::string id, std::string current, AnswerClass gt, std::string object = "obj") {
  Question q;
  q.id = std::move(id);
  q.text = "Was the " + object + " here before?";
  q.current_frame_id = std::move(current);
  q.ground_truth_class = gt;
  q.ground_truth_text = ClassTaxonomy::defaults().canonical_text(gt);
  q.object_id = std::move(object);
  return q;
}

// Fresh scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("egoqa_test_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// httplib server on an ephemeral localhost port, stopped on destruction.
class MockServer {
 public:
  MockServer() = default;
  httplib::Server& server() { return server_; }
  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

inline std::string fixture_path(const std::string& name) { return std::string(EGOQA_TEST_FIXTURES) + "/" + name; }

}  // namespace egoqa::testing
