#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "egoqa/gateway.hpp"
#include "egoqa/trajectory.hpp"

namespace egoqa {

struct SceneObject {
  std::string id;
  std::string name;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::optional<double> disappearance_time;  // absent = persists
  bool exists = true;                        // false = distractor, never placed

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Box {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
  bool contains(const Eigen::Vector3d& p) const;
  friend bool operator==(const Box&, const Box&) = default;
};

struct SyntheticWorld {
  std::vector<SceneObject> objects;
  Box bounds;
  std::uint64_t seed = 0;
  double duration = 60.0;

  const SceneObject* find(const std::string& id) const;
  nlohmann::json to_json() const;
  static SyntheticWorld from_json(const nlohmann::json& j);
  static SyntheticWorld load(const std::filesystem::path& path);

  friend bool operator==(const SyntheticWorld&, const SyntheticWorld&) = default;
};

// Field-of-view cone around the camera forward axis plus a range limit.
// Occlusion is not modelled.
struct VisibilityModel {
  double fov_half_angle_deg = 45.0;
  double max_range = 10.0;
  void validate() const;
};

// Desk-scale room with n_objects real objects (n_disappear of which vanish
// shortly before the trajectory midpoint) and ceil(n_objects / 2) distractors.
SyntheticWorld generate_world(std::uint64_t seed, int n_objects, int n_disappear, double duration = 60.0);

struct TrajectoryOptions {
  double frame_rate = 1.0;
  double pose_rate = 5.0;
  double lateral_offset = 0.6;       // return leg, meters
  double heading_offset_deg = 12.0;  // return leg vs outbound at matched path position
  // Outbound yaw is yaw_center + yaw_slope * (x - room center), so views of
  // the same stretch of desk share an orientation. yaw_jitter is drawn per
  // attempt.
  double yaw_center_deg = 32.0;
  double yaw_slope_deg_per_m = 6.0;
  double yaw_jitter_deg = 3.0;
  VisibilityModel visibility;
};

struct SyntheticTrajectory {
  FrameHistory frames;     // frame_rate, inline placeholder images
  std::vector<Pose> poses;  // pose_rate
  int attempts = 1;         // generation attempts until coverage held
};

// Out-and-back walk past the objects. The return leg is offset laterally and
// in heading. Retries (at most 100) until every real object is visible in at
// least one frame before the midpoint.
SyntheticTrajectory generate_trajectory(const SyntheticWorld& world, std::uint64_t seed, double duration,
                                        const TrajectoryOptions& options = {});

// Ids of objects visible from pose at time t.
std::set<std::string> visible_objects(const SyntheticWorld& world, const Pose& pose, const VisibilityModel& model,
                                      double t);

struct GroundTruth {
  AnswerClass label;
  std::string text;
};

GroundTruth ground_truth_answer(const SyntheticWorld& world, const std::string& object_id, double query_time);

struct ClassRatio {
  int disappeared = 4;
  int always_there = 3;
  int never_there = 3;
};

// Questions anchored on return-leg frames, with class counts proportional to
// ratio. Objects are reused with rephrased questions when a class is short.
std::vector<Question> generate_questions(const SyntheticWorld& world, const SyntheticTrajectory& trajectory,
                                         ClassRatio ratio, std::uint64_t seed, int n_questions = 10);

// Largest-remainder apportionment of n over the ratio.
std::vector<int> apportion(const std::vector<int>& weights, int n);

// Placeholder image: 16x16 flat-color binary PPM whose header comment lists
// the visible object ids.
std::string render_placeholder(const std::string& frame_id, const std::set<std::string>& visible);

struct Fixture {
  SyntheticWorld world;
  SyntheticTrajectory trajectory;
  std::vector<Question> questions;
};

// All fixture randomness derives from seed.
Fixture generate_fixture(std::uint64_t seed, double duration = 60.0, int n_objects = 10, int n_disappear = 4);

// Writes poses.jsonl, frames.jsonl, images/, questions.jsonl and world.json.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

// Answers chat requests from exact visibility in a synthetic world; see
// RequestTag for the tag contract. Pairwise requests compare the retrieved
// frame with the world state at the current frame; final requests answer
// with the true class.
class GeometricOracleProvider final : public ModelProvider {
 public:
  GeometricOracleProvider(SyntheticWorld world, FrameHistory frames, VisibilityModel model = {});
  ChatResponse send(const ChatRequest& request) override;

 private:
  const Frame& frame(const std::string& id) const;

  SyntheticWorld world_;
  FrameHistory frames_;
  VisibilityModel model_;
};

std::unique_ptr<ModelProvider> geometric_oracle_provider(SyntheticWorld world, FrameHistory frames,
                                                         VisibilityModel model = {});

}  // namespace egoqa
