#include <algorithm>
#include <cmath>
#include <fstream>

#include "egoqa/errors.hpp"
#include "egoqa/retrieval.hpp"
#include "egoqa/rng.hpp"
#include "egoqa/synthetic.hpp"

namespace egoqa {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Real objects first, distractors drawn from the tail so names never collide.
const std::vector<std::string> kNames = {
    "red mug",         "stapler",          "potted cactus",   "desk lamp",        "blue notebook",
    "coffee thermos",  "pencil cup",       "wire plant stand", "framed photo",    "table clock",
    "yellow sticky pad", "headphones",     "water bottle",    "paper tray",       "glass vase",
    "small speaker",   "tape dispenser",   "ceramic bowl",    "calculator",       "wooden box",
    "green plant",     "book stack",       "phone stand",     "candle jar",       "snow globe",
    "toy robot",       "pen holder",       "desk fan",        "picture frame",    "bird figurine",
    "coat hook",       "hanging lantern",  "letter opener",   "magnifying glass", "globe",
    "chess board",     "tea kettle",       "umbrella",        "sun hat",          "ring binder",
};

Eigen::Vector3d vec_from_json(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

nlohmann::json vec_to_json(const Eigen::Vector3d& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

}  // namespace

bool Box::contains(const Eigen::Vector3d& p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

const SceneObject* SyntheticWorld::find(const std::string& id) const {
  auto it = std::find_if(objects.begin(), objects.end(), [&](const SceneObject& o) { return o.id == id; });
  return it == objects.end() ? nullptr : &*it;
}

nlohmann::json SyntheticWorld::to_json() const {
  nlohmann::ordered_json objs = nlohmann::ordered_json::array();
  for (const auto& o : objects) {
    nlohmann::ordered_json r;
    r["id"] = o.id;
    r["name"] = o.name;
    r["position"] = vec_to_json(o.position);
    r["disappearance_time"] = o.disappearance_time ? nlohmann::json(*o.disappearance_time) : nlohmann::json();
    r["exists"] = o.exists;
    objs.push_back(std::move(r));
  }
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["duration"] = duration;
  j["bounds"] = {{"min", vec_to_json(bounds.min)}, {"max", vec_to_json(bounds.max)}};
  j["objects"] = std::move(objs);
  return nlohmann::json::parse(j.dump());
}

SyntheticWorld SyntheticWorld::from_json(const nlohmann::json& j) {
  SyntheticWorld w;
  try {
    w.seed = j.at("seed").get<std::uint64_t>();
    w.duration = j.at("duration").get<double>();
    w.bounds.min = vec_from_json(j.at("bounds").at("min"));
    w.bounds.max = vec_from_json(j.at("bounds").at("max"));
    for (const auto& r : j.at("objects")) {
      SceneObject o;
      o.id = r.at("id").get<std::string>();
      o.name = r.at("name").get<std::string>();
      o.position = vec_from_json(r.at("position"));
      if (r.contains("disappearance_time") && !r["disappearance_time"].is_null())
        o.disappearance_time = r["disappearance_time"].get<double>();
      o.exists = r.at("exists").get<bool>();
      w.objects.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad world description: ") + e.what());
  }
  return w;
}

SyntheticWorld SyntheticWorld::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("bad world file " + path.string() + ": " + e.what());
  }
}

void VisibilityModel::validate() const {
  if (!(fov_half_angle_deg > 0.0 && fov_half_angle_deg < 90.0))
    throw InputError("visibility: fov_half_angle must be in (0, 90) degrees");
  if (!(max_range > 0.0)) throw InputError("visibility: max_range must be > 0");
}

SyntheticWorld generate_world(std::uint64_t seed, int n_objects, int n_disappear, double duration) {
  if (n_objects < 0 || n_disappear < 0 || n_disappear > n_objects)
    throw InputError("generate_world: need 0 <= n_disappear <= n_objects");
  if (!(duration > 0.0)) throw InputError("generate_world: duration must be > 0");
  const int n_distractors = (n_objects + 1) / 2;
  if (static_cast<std::size_t>(n_objects + n_distractors) > kNames.size())
    throw InputError("generate_world: at most " + std::to_string(kNames.size() * 2 / 3) + " objects supported");

  SyntheticWorld world;
  world.seed = seed;
  world.duration = duration;
  world.bounds = {{0.0, 0.0, 0.0}, {8.0, 3.0, 5.0}};

  Rng rng(derive_seed(seed, "world"));
  std::vector<std::string> names = kNames;
  rng.shuffle(names.begin(), names.end());

  // Objects sit on a long desk/shelf band in front of the walking path.
  std::vector<Eigen::Vector3d> placed;
  auto place = [&] {
    for (int tries = 0;; ++tries) {
      Eigen::Vector3d p(rng.uniform(1.0, 7.0), rng.uniform(0.7, 1.3), rng.uniform(3.0, 4.2));
      const bool clear = std::all_of(placed.begin(), placed.end(),
                                     [&](const Eigen::Vector3d& q) { return (p - q).norm() >= 0.35; });
      if (clear || tries > 200) {
        placed.push_back(p);
        return p;
      }
    }
  };

  std::vector<int> vanish(static_cast<std::size_t>(n_objects), 0);
  std::fill(vanish.begin(), vanish.begin() + n_disappear, 1);
  rng.shuffle(vanish.begin(), vanish.end());

  char id[32];
  for (int i = 0; i < n_objects; ++i) {
    SceneObject o;
    std::snprintf(id, sizeof id, "obj_%02d", i);
    o.id = id;
    o.name = names[static_cast<std::size_t>(i)];
    o.position = place();
    // Vanishing happens between the outbound pass and the return pass.
    if (vanish[static_cast<std::size_t>(i)]) o.disappearance_time = duration * rng.uniform(0.42, 0.48);
    world.objects.push_back(std::move(o));
  }
  for (int i = 0; i < n_distractors; ++i) {
    SceneObject o;
    std::snprintf(id, sizeof id, "ghost_%02d", i);
    o.id = id;
    o.name = names[static_cast<std::size_t>(n_objects + i)];
    o.position = place();
    o.exists = false;
    world.objects.push_back(std::move(o));
  }
  return world;
}

std::set<std::string> visible_objects(const SyntheticWorld& world, const Pose& pose, const VisibilityModel& model,
                                      double t) {
  const Eigen::Vector3d forward = pose.orientation * Eigen::Vector3d::UnitZ();
  const double cos_limit = std::cos(model.fov_half_angle_deg * kPi / 180.0);
  std::set<std::string> out;
  for (const auto& o : world.objects) {
    if (!o.exists) continue;
    if (o.disappearance_time && !(t < *o.disappearance_time)) continue;
    const Eigen::Vector3d d = o.position - pose.position;
    const double dist = d.norm();
    if (dist > model.max_range) continue;
    if (dist > 0.0 && forward.dot(d) / dist < cos_limit) {
      // Recheck with the angle itself so the boundary is not lost to rounding.
      const double angle = std::acos(std::clamp(forward.dot(d) / dist, -1.0, 1.0));
      if (angle > model.fov_half_angle_deg * kPi / 180.0) continue;
    }
    out.insert(o.id);
  }
  return out;
}

GroundTruth ground_truth_answer(const SyntheticWorld& world, const std::string& object_id, double query_time) {
  const auto* o = world.find(object_id);
  if (o == nullptr) throw InputError("unknown object id " + object_id);
  if (!o->exists) return {AnswerClass::never_there(), "It was never there."};
  if (o->disappearance_time && *o->disappearance_time < query_time)
    return {AnswerClass::disappeared(), "It has disappeared."};
  return {AnswerClass::always_there(), "It has always been here."};
}

}  // namespace egoqa
