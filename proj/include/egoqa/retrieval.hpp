#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "egoqa/trajectory.hpp"

namespace egoqa {

// Euclidean distance between camera positions, meters.
double position_distance(const Pose& a, const Pose& b);

// Geodesic angle between two unit quaternions, radians in [0, pi]. q and -q
// are the same rotation and have distance 0.
double orientation_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);
double orientation_distance(const Pose& a, const Pose& b);

// dot(u, v) / (|u| |v|). Throws DegenerateInputError on a zero vector and
// InputError on a dimension mismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct RetrievalConfig {
  std::size_t k = 3;  // final frame budget
  double alpha = 2.0;  // orientation-set growth per unit of k
  double beta = 2.0;   // position-set growth per unit of k_o
  std::size_t min_o = 7;
  std::size_t cap_o = 30;
  std::size_t min_p = 30;
  std::size_t cap_p = 80;
  // Viewpoint-retrieval weights.
  double w_p = 1.0;
  double w_o = 1.0;

  void validate() const;
};

struct Cutoffs {
  std::size_t k_p = 0;
  std::size_t k_o = 0;
  friend bool operator==(const Cutoffs&, const Cutoffs&) = default;
};

// k_o = min(|H|, cap_o, max(min_o, ceil(alpha k)))
// k_p = min(|H|, cap_p, max(min_p, ceil(beta k_o)))
Cutoffs compute_cutoffs(std::size_t k, std::size_t history_size, const RetrievalConfig& config);

// Survival depth of a history frame: 0 = considered only, 1 = passed the
// position stage, 2 = passed orientation, 3 = selected. Single-stage methods
// use 0 and 3.
struct FrameDiagnostics {
  std::string frame_id;
  double timestamp = 0.0;
  double position_distance = 0.0;
  double orientation_distance = 0.0;
  double score = 0.0;  // method-specific ranking score
  int stage = 0;

  friend bool operator==(const FrameDiagnostics&, const FrameDiagnostics&) = default;
};

struct StageSizes {
  std::size_t k_p = 0;
  std::size_t k_o = 0;
  std::size_t k = 0;
  friend bool operator==(const StageSizes&, const StageSizes&) = default;
};

struct RetrievalResult {
  std::vector<std::string> selected;  // chronological
  StageSizes stage_sizes;
  std::vector<FrameDiagnostics> diagnostics;  // one per history frame, history order

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

// Position filter to k_p, orientation filter to k_o, then the k earliest.
// Ties at any cut are broken by earlier timestamp, then by frame id.
RetrievalResult hierarchical_retrieve(const FrameHistory& history, const Frame& current,
                                      const RetrievalConfig& config);

// Ranks by w_p * d_pos + w_o * d_ornt (meters + radians, unscaled) and keeps
// the k lowest, returned chronologically.
RetrievalResult viewpoint_retrieve(const FrameHistory& history, const Frame& current, std::size_t k,
                                   double w_p, double w_o);

// One JSON line per history frame: frame id, d_pos, d_ornt, score, stage.
void write_retrieval_diagnostics(const RetrievalResult& result, std::ostream& out);

namespace detail {
// Rejects queries whose current frame is part of the searched history.
void require_not_in_history(const FrameHistory& history, const Frame& current);
// Keeps the n best of scored frames (lower score first, ties by timestamp then
// id) and returns them chronologically.
std::vector<std::size_t> best_n_chronological(const FrameHistory& history, std::span<const double> scores,
                                              std::size_t n, bool higher_is_better);
}  // namespace detail

}  // namespace egoqa
