#include "egoqa/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "../common/jsonl.hpp"
#include "egoqa/errors.hpp"

namespace egoqa {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- ImageRef

ImageRef ImageRef::from_file(fs::path path) {
  ImageRef ref;
  ref.mime_ = mime_for_path(path);
  ref.path_ = std::move(path);
  return ref;
}

ImageRef ImageRef::from_bytes(std::string bytes, std::string mime) {
  ImageRef ref;
  ref.bytes_ = std::make_shared<const std::string>(std::move(bytes));
  ref.mime_ = std::move(mime);
  return ref;
}

std::shared_ptr<const std::string> ImageRef::load() const {
  if (bytes_) return bytes_;
  if (path_.empty()) throw InputError("image reference is empty");
  return std::make_shared<const std::string>(detail::read_file(path_));
}

bool operator==(const ImageRef& a, const ImageRef& b) {
  if (a.path_ != b.path_ || a.mime_ != b.mime_) return false;
  if (static_cast<bool>(a.bytes_) != static_cast<bool>(b.bytes_)) return false;
  return !a.bytes_ || *a.bytes_ == *b.bytes_;
}

std::string mime_for_path(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".ppm") return "image/x-portable-pixmap";
  return "application/octet-stream";
}

// ----------------------------------------------------------- FrameHistory

FrameHistory::FrameHistory(std::vector<Frame> frames) : frames_(std::move(frames)) {
  std::set<std::string_view> ids;
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    if (i > 0 && !(frames_[i].timestamp > frames_[i - 1].timestamp)) {
      throw OrderingError("frame " + frames_[i].id + " at t=" + std::to_string(frames_[i].timestamp) +
                          " does not follow t=" + std::to_string(frames_[i - 1].timestamp));
    }
    if (!ids.insert(frames_[i].id).second) throw InputError("duplicate frame id " + frames_[i].id);
  }
}

const Frame* FrameHistory::find(std::string_view id) const {
  auto it = std::find_if(frames_.begin(), frames_.end(), [&](const Frame& f) { return f.id == id; });
  return it == frames_.end() ? nullptr : &*it;
}

FrameHistory history_before(const FrameHistory& history, double t) {
  std::vector<Frame> kept;
  for (const auto& f : history) {
    if (f.timestamp < t) kept.push_back(f);
  }
  return FrameHistory(std::move(kept));
}

// ---------------------------------------------------------------- loading

std::vector<Pose> load_pose_track(const fs::path& pose_path) {
  std::vector<Pose> poses;
  detail::for_each_jsonl(pose_path, [&](const json& r, std::size_t line) {
    Pose p;
    p.timestamp = r.at("t").get<double>();
    p.position = {r.at("x").get<double>(), r.at("y").get<double>(), r.at("z").get<double>()};
    Eigen::Quaterniond q(r.at("qw").get<double>(), r.at("qx").get<double>(), r.at("qy").get<double>(),
                         r.at("qz").get<double>());
    const double norm = q.norm();
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > kMaxQuaternionNormError) {
      throw ParseError(pose_path.string(), line, "corrupt quaternion (norm " + std::to_string(norm) + ")");
    }
    if (!std::isfinite(p.timestamp) || p.timestamp < 0.0)
      throw ParseError(pose_path.string(), line, "timestamp must be a finite value >= 0");
    // Already-unit quaternions are kept bit-exact so that re-ingesting written
    // files reproduces the same values.
    if (std::abs(norm - 1.0) > 1e-12) q.normalize();
    p.orientation = q;
    if (!poses.empty() && !(p.timestamp > poses.back().timestamp)) {
      throw OrderingError(pose_path.string() + ":" + std::to_string(line) + ": pose timestamps not increasing");
    }
    poses.push_back(p);
  });
  return poses;
}

std::size_t nearest_pose_index(std::span<const Pose> poses, double t) {
  auto it = std::lower_bound(poses.begin(), poses.end(), t,
                             [](const Pose& p, double v) { return p.timestamp < v; });
  if (it == poses.begin()) return 0;
  if (it == poses.end()) return poses.size() - 1;
  const auto hi = static_cast<std::size_t>(it - poses.begin());
  const auto lo = hi - 1;
  // Equal gaps resolve to the earlier sample.
  return (t - poses[lo].timestamp) <= (poses[hi].timestamp - t) ? lo : hi;
}

FrameHistory load_trajectory(const fs::path& pose_path, const fs::path& frame_index_path,
                             const fs::path& image_dir) {
  const auto poses = load_pose_track(pose_path);
  std::vector<Frame> frames;
  detail::for_each_jsonl(frame_index_path, [&](const json& r, std::size_t line) {
    Frame f;
    f.id = r.at("frame_id").is_string() ? r.at("frame_id").get<std::string>() : r.at("frame_id").dump();
    f.timestamp = r.at("t").get<double>();
    const auto image_file = r.at("image_file").get<std::string>();
    if (f.id.empty()) throw ParseError(frame_index_path.string(), line, "empty frame_id");
    if (!std::isfinite(f.timestamp) || f.timestamp < 0.0)
      throw ParseError(frame_index_path.string(), line, "timestamp must be a finite value >= 0");
    const auto image_path = image_dir / image_file;
    if (!fs::is_regular_file(image_path))
      throw InputError(frame_index_path.string() + ":" + std::to_string(line) + ": missing image " +
                       image_path.string());
    if (!frames.empty() && !(f.timestamp > frames.back().timestamp)) {
      throw OrderingError(frame_index_path.string() + ":" + std::to_string(line) + ": frame " + f.id +
                          " is not after the previous frame");
    }
    if (poses.empty()) throw AssociationError("frame " + f.id + ": pose track is empty");
    const auto& pose = poses[nearest_pose_index(poses, f.timestamp)];
    if (std::abs(pose.timestamp - f.timestamp) > kMaxAssociationGap + 1e-9) {
      throw AssociationError("frame " + f.id + " at t=" + std::to_string(f.timestamp) +
                             " has no pose sample within " + std::to_string(kMaxAssociationGap) + " s");
    }
    f.pose = pose;
    f.image = ImageRef::from_file(image_path);
    frames.push_back(std::move(f));
  });
  return FrameHistory(std::move(frames));
}

// ---------------------------------------------------------------- writing

void write_pose_track(std::span<const Pose> poses, const fs::path& pose_path) {
  auto out = detail::open_for_write(pose_path);
  for (const auto& p : poses) {
    // ordered_json keeps the documented field order on disk.
    nlohmann::ordered_json r;
    r["t"] = p.timestamp;
    r["x"] = p.position.x();
    r["y"] = p.position.y();
    r["z"] = p.position.z();
    r["qw"] = p.orientation.w();
    r["qx"] = p.orientation.x();
    r["qy"] = p.orientation.y();
    r["qz"] = p.orientation.z();
    out << r.dump() << '\n';
  }
}

void write_trajectory(const FrameHistory& history, const fs::path& pose_path,
                      const fs::path& frame_index_path, const fs::path& image_dir) {
  std::vector<Pose> poses;
  for (const auto& f : history) {
    // Several frames may share one pose sample.
    if (poses.empty() || !(poses.back() == f.pose)) poses.push_back(f.pose);
  }
  write_pose_track(poses, pose_path);

  write_frame_index(history, frame_index_path, image_dir);
}

std::string extension_for_mime(const std::string& mime) {
  if (mime == "image/png") return ".png";
  if (mime == "image/jpeg") return ".jpg";
  if (mime == "image/webp") return ".webp";
  if (mime == "image/gif") return ".gif";
  if (mime == "image/bmp") return ".bmp";
  if (mime == "image/x-portable-pixmap") return ".ppm";
  return ".bin";
}

void write_frame_index(const FrameHistory& history, const fs::path& frame_index_path, const fs::path& image_dir) {
  fs::create_directories(image_dir);
  auto out = detail::open_for_write(frame_index_path);
  for (const auto& f : history) {
    std::string image_file;
    if (f.image.is_inline()) {
      image_file = f.id + extension_for_mime(f.image.mime());
      auto img = detail::open_for_write(image_dir / image_file);
      const auto bytes = f.image.load();
      img.write(bytes->data(), static_cast<std::streamsize>(bytes->size()));
    } else {
      image_file = fs::relative(f.image.path(), image_dir).generic_string();
    }
    nlohmann::ordered_json r;
    r["frame_id"] = f.id;
    r["t"] = f.timestamp;
    r["image_file"] = image_file;
    out << r.dump() << '\n';
  }
}

std::vector<Question> load_questions(const fs::path& path, const FrameHistory& history,
                                     const ClassTaxonomy& taxonomy) {
  std::vector<Question> questions;
  std::set<std::string> ids;
  detail::for_each_jsonl(path, [&](const json& r, std::size_t line) {
    Question q;
    q.id = r.at("id").is_string() ? r.at("id").get<std::string>() : r.at("id").dump();
    q.text = r.at("question").get<std::string>();
    q.current_frame_id = r.at("current_frame_id").is_string() ? r.at("current_frame_id").get<std::string>()
                                                              : r.at("current_frame_id").dump();
    const auto token = r.at("gt_class").get<std::string>();
    q.ground_truth_text = r.at("gt_text").get<std::string>();
    if (r.contains("object_id")) q.object_id = r.at("object_id").get<std::string>();

    const auto where = path.string() + ":" + std::to_string(line) + ": ";
    const auto cls = taxonomy.from_token(token);
    if (!cls) throw SchemaError(where + "unknown gt_class '" + token + "'");
    q.ground_truth_class = *cls;
    if (q.ground_truth_text.empty()) throw SchemaError(where + "gt_text is empty");
    if (!history.contains(q.current_frame_id))
      throw ReferenceError(where + "current_frame_id '" + q.current_frame_id + "' not in trajectory");
    if (!ids.insert(q.id).second) throw SchemaError(where + "duplicate question id " + q.id);
    questions.push_back(std::move(q));
  });
  return questions;
}

void write_questions(std::span<const Question> questions, const fs::path& path) {
  auto out = detail::open_for_write(path);
  for (const auto& q : questions) {
    nlohmann::ordered_json r;
    r["id"] = q.id;
    r["question"] = q.text;
    r["current_frame_id"] = q.current_frame_id;
    r["gt_class"] = q.ground_truth_class.token();
    r["gt_text"] = q.ground_truth_text;
    if (!q.object_id.empty()) r["object_id"] = q.object_id;
    out << r.dump() << '\n';
  }
}

}  // namespace egoqa
