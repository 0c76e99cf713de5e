#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "egoqa/answer_class.hpp"

namespace egoqa {

// Camera pose: position in meters, unit quaternion (w, x, y, z), seconds since
// trajectory start.
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  double timestamp = 0.0;

  friend bool operator==(const Pose& a, const Pose& b) {
    return a.position == b.position && a.orientation.coeffs() == b.orientation.coeffs() &&
           a.timestamp == b.timestamp;
  }
};

// Reference to an image payload. The bytes are opaque to the library: they are
// hashed and forwarded to model backends, never decoded.
class ImageRef {
 public:
  ImageRef() = default;
  static ImageRef from_file(std::filesystem::path path);
  static ImageRef from_bytes(std::string bytes, std::string mime);

  bool empty() const { return path_.empty() && !bytes_; }
  const std::filesystem::path& path() const { return path_; }
  const std::string& mime() const { return mime_; }
  bool is_inline() const { return static_cast<bool>(bytes_); }

  // Inline bytes, or the file contents read on demand.
  std::shared_ptr<const std::string> load() const;

  friend bool operator==(const ImageRef& a, const ImageRef& b);

 private:
  std::filesystem::path path_;
  std::string mime_;
  std::shared_ptr<const std::string> bytes_;
};

std::string mime_for_path(const std::filesystem::path& p);

struct Frame {
  std::string id;
  double timestamp = 0.0;
  ImageRef image;
  Pose pose;

  friend bool operator==(const Frame&, const Frame&) = default;
};

// Chronologically ordered frames with unique ids. Immutable once built.
class FrameHistory {
 public:
  FrameHistory() = default;
  // Throws OrderingError on non-increasing timestamps, InputError on duplicate ids.
  explicit FrameHistory(std::vector<Frame> frames);

  std::span<const Frame> frames() const { return frames_; }
  std::size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  const Frame& operator[](std::size_t i) const { return frames_[i]; }
  auto begin() const { return frames_.begin(); }
  auto end() const { return frames_.end(); }

  const Frame* find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  friend bool operator==(const FrameHistory&, const FrameHistory&) = default;

 private:
  std::vector<Frame> frames_;
};

// Frames with timestamp strictly less than t, order preserved.
FrameHistory history_before(const FrameHistory& history, double t);

struct Question {
  std::string id;
  std::string text;
  std::string current_frame_id;
  AnswerClass ground_truth_class;
  std::string ground_truth_text;
  // Optional; lets test oracles map a question to a synthetic object.
  std::string object_id;

  friend bool operator==(const Question&, const Question&) = default;
};

// Maximum |frame t - pose t| accepted when binding frames to pose samples.
inline constexpr double kMaxAssociationGap = 0.2;
// Quaternions whose norm is further than this from 1 are rejected as corrupt.
inline constexpr double kMaxQuaternionNormError = 1e-3;

// Pose track: one JSON object per line with t, x, y, z, qw, qx, qy, qz.
std::vector<Pose> load_pose_track(const std::filesystem::path& pose_path);

// Index of the pose sample nearest to t; ties go to the earlier sample.
// poses must be sorted by timestamp and nonempty.
std::size_t nearest_pose_index(std::span<const Pose> poses, double t);

// Binds each 1 Hz frame from the frame index to its nearest pose sample.
FrameHistory load_trajectory(const std::filesystem::path& pose_path,
                             const std::filesystem::path& frame_index_path,
                             const std::filesystem::path& image_dir);

// Writes the frames' bound poses and the frame index. File-backed images are
// referenced relative to image_dir; inline images are written into it.
void write_trajectory(const FrameHistory& history, const std::filesystem::path& pose_path,
                      const std::filesystem::path& frame_index_path,
                      const std::filesystem::path& image_dir);

void write_pose_track(std::span<const Pose> poses, const std::filesystem::path& pose_path);

// Frame index only; see write_trajectory for how images are referenced.
void write_frame_index(const FrameHistory& history, const std::filesystem::path& frame_index_path,
                       const std::filesystem::path& image_dir);

// File extension conventionally used for a mime type (".png", ".ppm", ".bin").
std::string extension_for_mime(const std::string& mime);

std::vector<Question> load_questions(const std::filesystem::path& path, const FrameHistory& history,
                                     const ClassTaxonomy& taxonomy = ClassTaxonomy::defaults());

void write_questions(std::span<const Question> questions, const std::filesystem::path& path);

}  // namespace egoqa
