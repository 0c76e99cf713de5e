#include "egoqa/errors.hpp"
#include "egoqa/request_tag.hpp"
#include "egoqa/synthetic.hpp"

namespace egoqa {

namespace {

std::string required(const RequestTag& tag, const std::string& key, const std::string& raw) {
  auto v = tag.get(key);
  if (!v || v->empty()) throw OracleContractError("oracle: request tag '" + raw + "' lacks " + key);
  return *v;
}

std::string list_names(const SyntheticWorld& world, const std::set<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    const auto* o = world.find(id);
    if (o == nullptr) continue;
    if (!out.empty()) out += ", ";
    out += o->name;
  }
  return out.empty() ? "nothing in particular" : out;
}

}  // namespace

GeometricOracleProvider::GeometricOracleProvider(SyntheticWorld world, FrameHistory frames, VisibilityModel model)
    : world_(std::move(world)), frames_(std::move(frames)), model_(model) {
  model_.validate();
}

const Frame& GeometricOracleProvider::frame(const std::string& id) const {
  const auto* f = frames_.find(id);
  if (f == nullptr) throw OracleContractError("oracle: unknown frame " + id);
  return *f;
}

ChatResponse GeometricOracleProvider::send(const ChatRequest& request) {
  const auto& raw = request.request_tag;
  if (raw.empty()) throw OracleContractError("oracle: untagged request");
  const auto tag = RequestTag::parse(raw);

  ChatResponse resp;
  if (tag.has("caption")) {
    const Frame& f = frame(required(tag, "frame", raw));
    resp.text = "A view showing: " + list_names(world_, visible_objects(world_, f.pose, model_, f.timestamp)) + ".";
    return resp;
  }

  const auto* obj = world_.find(required(tag, "obj", raw));
  if (obj == nullptr) throw OracleContractError("oracle: unknown object in tag '" + raw + "'");
  const Frame& cur = frame(required(tag, "cur", raw));
  const std::string ref = required(tag, "ref", raw);

  if (ref == "final") {
    const auto gt = ground_truth_answer(world_, obj->id, cur.timestamp);
    resp.text = gt.text + " Because the geometry of the scene settles where the " + obj->name + " was.";
    return resp;
  }

  // Rule order: never placed, never removed, then what the retrieved frame shows.
  const Frame& past = frame(ref);
  const bool seen = visible_objects(world_, past.pose, model_, past.timestamp).contains(obj->id);
  if (!obj->exists) {
    resp.text = "In the retrieved picture, there is no " + obj->name + ". So it was never there.";
  } else if (!obj->disappearance_time || !(*obj->disappearance_time < cur.timestamp)) {
    resp.text = "In the retrieved picture, the " + obj->name +
                " is in the same spot as now. So it has always been here.";
  } else if (seen) {
    resp.text = "In the retrieved picture, the " + obj->name +
                " is visible. In the current picture, it cannot be seen. So it has disappeared.";
  } else {
    resp.text = "In the retrieved picture, there is no " + obj->name + ". So it was never there.";
  }
  return resp;
}

std::unique_ptr<ModelProvider> geometric_oracle_provider(SyntheticWorld world, FrameHistory frames,
                                                         VisibilityModel model) {
  return std::make_unique<GeometricOracleProvider>(std::move(world), std::move(frames), model);
}

}  // namespace egoqa
