#include <algorithm>
#include <cmath>

#include "egoqa/errors.hpp"
#include "egoqa/retrieval.hpp"

namespace egoqa {

double position_distance(const Pose& a, const Pose& b) { return (a.position - b.position).norm(); }

double orientation_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  // 2 acos(|<a,b>|), evaluated as 2 atan2(|vec(a* b)|, |<a,b>|) which is the
  // same angle without the precision loss of acos near 1.
  const Eigen::Quaterniond rel = a.conjugate() * b;
  const double c = std::abs(a.coeffs().dot(b.coeffs()));
  const double s = rel.vec().norm();
  return 2.0 * std::atan2(s, c);
}

double orientation_distance(const Pose& a, const Pose& b) {
  return orientation_distance(a.orientation, b.orientation);
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw InputError("cosine_similarity: dimension mismatch " + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw DegenerateInputError("cosine_similarity: zero-norm vector");
  const double c = dot / (std::sqrt(uu) * std::sqrt(vv));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace egoqa
