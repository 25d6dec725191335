#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "alnid/errors.hpp"

namespace alnid {

struct Stats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  // population (divide by N)
};

/// Streaming min/max/mean/variance accumulator (Welford update).
class StatsAccumulator {
 public:
  void add(double value) {
    ++n_;
    if (value < min_) min_ = value;
    if (value > max_) max_ = value;
    const double delta = value - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (value - mean_);
  }

  std::size_t count() const noexcept { return n_; }

  Stats finish() const {
    if (n_ == 0) throw Error("stats: empty input");
    const double variance = m2_ / static_cast<double>(n_);
    return Stats{min_, max_, mean_, std::sqrt(variance < 0.0 ? 0.0 : variance)};
  }

 private:
  std::size_t n_ = 0;
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline Stats column_stats(std::span<const double> values) {
  StatsAccumulator acc;
  for (double v : values) acc.add(v);
  return acc.finish();
}

/// Between-class variance over within-class variance of one attribute.
/// `groups[i]` assigns values[i] to a group in [0, n_groups). Degenerate
/// cases: zero within-class variance with nonzero between-class variance
/// yields +infinity; an attribute identical everywhere yields 0.
inline double fisher_ratio(std::span<const double> values, std::span<const int> groups,
                           int n_groups) {
  if (values.size() != groups.size()) throw DimensionError("fisher_ratio: length mismatch");
  if (values.empty()) throw Error("fisher_ratio: empty input");
  std::vector<std::size_t> count(static_cast<std::size_t>(n_groups), 0);
  std::vector<double> mean(static_cast<std::size_t>(n_groups), 0.0);
  std::vector<double> m2(static_cast<std::size_t>(n_groups), 0.0);
  double grand_mean = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int g = groups[i];
    if (g < 0 || g >= n_groups) throw Error("fisher_ratio: group id out of range");
    auto gi = static_cast<std::size_t>(g);
    ++count[gi];
    const double delta = values[i] - mean[gi];
    mean[gi] += delta / static_cast<double>(count[gi]);
    m2[gi] += delta * (values[i] - mean[gi]);
    grand_mean += (values[i] - grand_mean) / static_cast<double>(i + 1);
  }
  const auto n = static_cast<double>(values.size());
  double between = 0.0;
  double within = 0.0;
  for (int g = 0; g < n_groups; ++g) {
    auto gi = static_cast<std::size_t>(g);
    if (count[gi] == 0) continue;
    const double w = static_cast<double>(count[gi]) / n;
    between += w * (mean[gi] - grand_mean) * (mean[gi] - grand_mean);
    within += m2[gi] / n;
  }
  if (within <= 0.0) return between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return between / within;
}

}  // namespace alnid
