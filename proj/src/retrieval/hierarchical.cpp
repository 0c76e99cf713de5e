#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "egoqa/errors.hpp"
#include "egoqa/retrieval.hpp"

namespace egoqa {

void RetrievalConfig::validate() const {
  if (k < 1) throw ConfigError("retrieval: k must be >= 1");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("retrieval: alpha and beta must be > 0");
  if (min_o < 1 || min_p < 1) throw ConfigError("retrieval: min_o and min_p must be >= 1");
  if (min_o > cap_o) throw ConfigError("retrieval: min_o > cap_o");
  if (min_p > cap_p) throw ConfigError("retrieval: min_p > cap_p");
  if (w_p < 0.0 || w_o < 0.0) throw ConfigError("retrieval: weights must be nonnegative");
}

Cutoffs compute_cutoffs(std::size_t k, std::size_t history_size, const RetrievalConfig& config) {
  const auto scaled = [](double factor, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(factor * static_cast<double>(n)));
  };
  Cutoffs c;
  c.k_o = std::min({history_size, config.cap_o, std::max(config.min_o, scaled(config.alpha, k))});
  c.k_p = std::min({history_size, config.cap_p, std::max(config.min_p, scaled(config.beta, c.k_o))});
  return c;
}

namespace detail {

void require_not_in_history(const FrameHistory& history, const Frame& current) {
  if (history.contains(current.id)) {
    throw InputError("current frame " + current.id + " must not be part of the searched history");
  }
}

std::vector<std::size_t> best_n_chronological(const FrameHistory& history, std::span<const double> scores,
                                              std::size_t n, bool higher_is_better) {
  std::vector<std::size_t> idx(history.size());
  std::iota(idx.begin(), idx.end(), 0);
  n = std::min(n, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b])
                        return higher_is_better ? scores[a] > scores[b] : scores[a] < scores[b];
                      if (history[a].timestamp != history[b].timestamp)
                        return history[a].timestamp < history[b].timestamp;
                      return history[a].id < history[b].id;
                    });
  idx.resize(n);
  std::sort(idx.begin(), idx.end());  // history order is chronological
  return idx;
}

}  // namespace detail

namespace {

// Keeps the n members of `pool` with the smallest key; ties by timestamp, id.
void keep_smallest(std::vector<std::size_t>& pool, std::size_t n, const FrameHistory& history,
                   const std::vector<double>& key) {
  n = std::min(n, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n), pool.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (key[a] != key[b]) return key[a] < key[b];
                      if (history[a].timestamp != history[b].timestamp)
                        return history[a].timestamp < history[b].timestamp;
                      return history[a].id < history[b].id;
                    });
  pool.resize(n);
}

}  // namespace

RetrievalResult hierarchical_retrieve(const FrameHistory& history, const Frame& current,
                                      const RetrievalConfig& config) {
  config.validate();
  detail::require_not_in_history(history, current);

  const std::size_t n = history.size();
  const Cutoffs cut = compute_cutoffs(config.k, n, config);

  std::vector<double> d_pos(n), d_ornt(n);
  RetrievalResult result;
  result.diagnostics.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d_pos[i] = position_distance(history[i].pose, current.pose);
    d_ornt[i] = orientation_distance(history[i].pose, current.pose);
    result.diagnostics[i] = {history[i].id, history[i].timestamp, d_pos[i], d_ornt[i], d_pos[i], 0};
  }

  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  keep_smallest(pool, cut.k_p, history, d_pos);
  for (auto i : pool) result.diagnostics[i].stage = 1;

  keep_smallest(pool, cut.k_o, history, d_ornt);
  for (auto i : pool) result.diagnostics[i].stage = 2;

  // Timestamps are strictly increasing, so the earliest frames are the
  // smallest indices.
  std::sort(pool.begin(), pool.end());
  pool.resize(std::min(config.k, pool.size()));
  for (auto i : pool) {
    result.diagnostics[i].stage = 3;
    result.selected.push_back(history[i].id);
  }
  result.stage_sizes = {cut.k_p, cut.k_o, pool.size()};
  return result;
}

RetrievalResult viewpoint_retrieve(const FrameHistory& history, const Frame& current, std::size_t k,
                                   double w_p, double w_o) {
  if (k < 1) throw InputError("viewpoint_retrieve: k must be >= 1");
  detail::require_not_in_history(history, current);
  const std::size_t n = history.size();
  std::vector<double> score(n);
  RetrievalResult result;
  result.diagnostics.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = position_distance(history[i].pose, current.pose);
    const double dq = orientation_distance(history[i].pose, current.pose);
    score[i] = w_p * dp + w_o * dq;
    result.diagnostics[i] = {history[i].id, history[i].timestamp, dp, dq, score[i], 0};
  }
  for (auto i : detail::best_n_chronological(history, score, k, /*higher_is_better=*/false)) {
    result.diagnostics[i].stage = 3;
    result.selected.push_back(history[i].id);
  }
  result.stage_sizes = {n, n, result.selected.size()};
  return result;
}

void write_retrieval_diagnostics(const RetrievalResult& result, std::ostream& out) {
  for (const auto& d : result.diagnostics) {
    nlohmann::ordered_json r;
    r["frame_id"] = d.frame_id;
    r["t"] = d.timestamp;
    r["d_pos"] = d.position_distance;
    r["d_ornt"] = d.orientation_distance;
    r["score"] = d.score;
    r["stage"] = d.stage;
    out << r.dump() << '\n';
  }
}

}  // namespace egoqa
