#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "../common/jsonl.hpp"
#include "egoqa/errors.hpp"
#include "egoqa/rng.hpp"
#include "egoqa/synthetic.hpp"

namespace egoqa {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg = kPi / 180.0;
constexpr int kMaxAttempts = 100;

// Walking path geometry, meters.
constexpr double kPathStartX = 0.5;
constexpr double kPathEndX = 7.5;
constexpr double kOutboundZ = 1.0;
constexpr double kEyeHeight = 1.5;
constexpr double kPitchDown = 10.0 * kDeg;

Eigen::Quaterniond heading(double yaw) {
  // Y-up, +Z forward: yaw about +Y, then a slight downward tilt about +X.
  return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
                            Eigen::AngleAxisd(kPitchDown, Eigen::Vector3d::UnitX()));
}

constexpr double kRoomCenterX = 4.0;

struct PathParams {
  double yaw_center = 0.0;  // radians
};

Pose pose_at(double t, double duration, const PathParams& pp, const TrajectoryOptions& opt) {
  const double half = duration / 2.0;
  const bool outbound = t <= half;
  // Outbound time at the same path position.
  const double t_match = outbound ? t : duration - t;
  const double s = t_match / half;
  const double x = kPathStartX + (kPathEndX - kPathStartX) * s;
  // The return leg turns back by the offset, so its views line up with
  // outbound views taken a little earlier along the path.
  const double yaw = pp.yaw_center + opt.yaw_slope_deg_per_m * kDeg * (x - kRoomCenterX) -
                     (outbound ? 0.0 : opt.heading_offset_deg * kDeg);
  Pose p;
  p.timestamp = t;
  p.position = {x, kEyeHeight, outbound ? kOutboundZ : kOutboundZ - opt.lateral_offset};
  p.orientation = heading(yaw);
  return p;
}

std::string frame_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "f%04d", i);
  return buf;
}

}  // namespace

std::string render_placeholder(const std::string& frame_id, const std::set<std::string>& visible) {
  std::string label;
  for (const auto& id : visible) label += (label.empty() ? "" : ",") + id;
  const auto h = mix64(derive_seed(0, frame_id));
  const unsigned char rgb[3] = {static_cast<unsigned char>(h), static_cast<unsigned char>(h >> 8),
                                static_cast<unsigned char>(h >> 16)};
  std::string out = "P6\n# egoqa frame " + frame_id + " visible: " + label + "\n16 16\n255\n";
  for (int i = 0; i < 16 * 16; ++i) out.append(reinterpret_cast<const char*>(rgb), 3);
  return out;
}

SyntheticTrajectory generate_trajectory(const SyntheticWorld& world, std::uint64_t seed, double duration,
                                        const TrajectoryOptions& options) {
  if (!(duration > 0.0)) throw InputError("generate_trajectory: duration must be > 0");
  if (!(options.frame_rate > 0.0) || !(options.pose_rate > 0.0))
    throw InputError("generate_trajectory: rates must be > 0");
  options.visibility.validate();

  const int n_poses = static_cast<int>(std::llround(duration * options.pose_rate));
  const int n_frames = static_cast<int>(std::llround(duration * options.frame_rate));
  const double half = duration / 2.0;

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(derive_seed(derive_seed(seed, "trajectory"), static_cast<std::uint64_t>(attempt)));
    PathParams pp;
    pp.yaw_center = (options.yaw_center_deg + rng.uniform(-1.0, 1.0) * options.yaw_jitter_deg) * kDeg;

    SyntheticTrajectory traj;
    traj.attempts = attempt + 1;
    traj.poses.reserve(static_cast<std::size_t>(n_poses));
    for (int i = 0; i < n_poses; ++i) {
      traj.poses.push_back(pose_at(static_cast<double>(i) / options.pose_rate, duration, pp, options));
    }

    std::vector<Frame> frames;
    std::set<std::string> seen_before_midpoint;
    for (int j = 0; j < n_frames; ++j) {
      const double t = static_cast<double>(j) / options.frame_rate;
      Frame f;
      f.id = frame_id(j);
      f.timestamp = t;
      f.pose = traj.poses[nearest_pose_index(traj.poses, t)];
      const auto visible = visible_objects(world, f.pose, options.visibility, t);
      if (t < half) seen_before_midpoint.insert(visible.begin(), visible.end());
      f.image = ImageRef::from_bytes(render_placeholder(f.id, visible), "image/x-portable-pixmap");
      frames.push_back(std::move(f));
    }
    traj.frames = FrameHistory(std::move(frames));

    const bool covered = std::all_of(world.objects.begin(), world.objects.end(), [&](const SceneObject& o) {
      return !o.exists || seen_before_midpoint.contains(o.id);
    });
    if (covered) return traj;
  }
  throw InputError("generate_trajectory: could not cover every object within " + std::to_string(kMaxAttempts) +
                   " attempts");
}

std::vector<int> apportion(const std::vector<int>& weights, int n) {
  const long total = std::accumulate(weights.begin(), weights.end(), 0L);
  if (total <= 0) throw InputError("ratio must have a positive total");
  std::vector<int> counts(weights.size());
  std::vector<std::pair<long, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0) throw InputError("ratio entries must be >= 0");
    const long num = static_cast<long>(weights[i]) * n;
    counts[i] = static_cast<int>(num / total);
    assigned += counts[i];
    remainders.emplace_back(-(num % total), i);  // larger remainder first, then lower index
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) counts[remainders[r].second] += 1;
  return counts;
}

namespace {

std::string spatial_anchor(const Eigen::Vector3d& p) {
  if (p.x() < 2.8) return "the left wall";
  if (p.x() > 5.2) return "the right wall";
  return "the window";
}

std::string phrase(const SceneObject& o, int variant) {
  const auto anchor = spatial_anchor(o.position);
  switch (variant % 3) {
    case 0: return "Was there a " + o.name + " near " + anchor + "?";
    case 1: return "Did a " + o.name + " exist near " + anchor + " in the past?";
    default: return "Was a " + o.name + " ever placed near " + anchor + " before?";
  }
}

}  // namespace

std::vector<Question> generate_questions(const SyntheticWorld& world, const SyntheticTrajectory& trajectory,
                                         ClassRatio ratio, std::uint64_t seed, int n_questions) {
  if (n_questions < 0) throw InputError("generate_questions: n_questions must be >= 0");
  const auto& frames = trajectory.frames;
  if (frames.empty()) throw InputError("generate_questions: empty trajectory");
  const double duration = frames[frames.size() - 1].timestamp + (frames.size() > 1 ? frames[1].timestamp - frames[0].timestamp : 1.0);
  const double half = duration / 2.0;

  // Current frame for an object: the return-leg frame whose camera passes
  // closest to it along the path; later frame on ties.
  auto anchor_frame = [&](const SceneObject& o) -> const Frame& {
    const Frame* best = nullptr;
    double best_d = 0.0;
    for (const auto& f : frames) {
      if (f.timestamp <= half) continue;
      if (o.disappearance_time && !(*o.disappearance_time < f.timestamp)) continue;
      const double d = std::abs(f.pose.position.x() - o.position.x());
      if (best == nullptr || d <= best_d) {
        best = &f;
        best_d = d;
      }
    }
    if (best == nullptr) throw InputError("generate_questions: no return-leg frame for " + o.id);
    return *best;
  };

  std::vector<const SceneObject*> pools[3];
  for (const auto& o : world.objects) {
    if (!o.exists) {
      pools[2].push_back(&o);
    } else if (o.disappearance_time) {
      pools[0].push_back(&o);
    } else {
      pools[1].push_back(&o);
    }
  }
  const auto counts = apportion({ratio.disappeared, ratio.always_there, ratio.never_there}, n_questions);
  const char* class_names[3] = {"disappeared", "always_there", "never_there"};
  for (int c = 0; c < 3; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0 && pools[c].empty())
      throw InputError(std::string("generate_questions: no objects available for class ") + class_names[c]);
  }

  Rng rng(derive_seed(seed, "questions"));
  std::vector<Question> out;
  int qn = 0;
  for (int c = 0; c < 3; ++c) {
    auto pool = pools[c];
    rng.shuffle(pool.begin(), pool.end());
    for (int i = 0; i < counts[static_cast<std::size_t>(c)]; ++i) {
      const auto idx = static_cast<std::size_t>(i) % pool.size();
      const SceneObject& o = *pool[idx];
      const Frame& cur = anchor_frame(o);
      const auto gt = ground_truth_answer(world, o.id, cur.timestamp);
      Question q;
      char id[16];
      std::snprintf(id, sizeof id, "q%03d", qn++);
      q.id = id;
      q.text = phrase(o, static_cast<int>(static_cast<std::size_t>(i) / pool.size()));
      q.current_frame_id = cur.id;
      q.ground_truth_class = gt.label;
      q.ground_truth_text = gt.text;
      q.object_id = o.id;
      out.push_back(std::move(q));
    }
  }
  return out;
}

Fixture generate_fixture(std::uint64_t seed, double duration, int n_objects, int n_disappear) {
  Fixture fx;
  fx.world = generate_world(derive_seed(seed, "world"), n_objects, n_disappear, duration);
  fx.trajectory = generate_trajectory(fx.world, derive_seed(seed, "trajectory"), duration);
  fx.questions = generate_questions(fx.world, fx.trajectory, ClassRatio{}, derive_seed(seed, "questions"));
  return fx;
}

void write_fixture(const Fixture& fixture, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  write_pose_track(fixture.trajectory.poses, dir / "poses.jsonl");
  write_frame_index(fixture.trajectory.frames, dir / "frames.jsonl", dir / "images");
  write_questions(fixture.questions, dir / "questions.jsonl");
  auto out = detail::open_for_write(dir / "world.json");
  out << fixture.world.to_json().dump(2) << '\n';
}

}  // namespace egoqa
