#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include "alnid/dtree.hpp"
#include "alnid/errors.hpp"
#include "alnid/kdd.hpp"
#include "alnid/stats.hpp"

namespace alnid {

/// An instance re-expressed in the learned attribute space: per attribute,
/// the number of times the trained tree tests that attribute on the
/// instance's root-to-leaf path. Class and category carry over unchanged.
struct LearnedInstance {
  std::array<std::int32_t, kdd::kNumAttributes> features;
  std::uint8_t class_id;
  kdd::Category category;
};

/// Per-attribute test counts along the descent path; works for any tree
/// width (generic form of the relearning step).
inline std::vector<std::int32_t> relearn_features(const tree::DecisionTree& t,
                                                  std::span<const double> x) {
  std::vector<std::int32_t> counts(t.width(), 0);
  for (const auto& step : t.trace_path(x)) ++counts[static_cast<std::size_t>(step.attribute)];
  return counts;
}

inline LearnedInstance relearn_instance(const tree::DecisionTree& t,
                                        const kdd::EncodedInstance& inst) {
  if (t.width() != kdd::kNumAttributes)
    throw DimensionError("relearn: tree width " + std::to_string(t.width()) +
                         " does not match the 12-attribute schema");
  LearnedInstance out{};
  out.class_id = inst.class_id;
  out.category = inst.category;
  for (const auto& step : t.trace_path(inst.features))
    ++out.features[static_cast<std::size_t>(step.attribute)];
  return out;
}

/// Element-wise relearning; order preserved. `threads` > 1 splits the work
/// into contiguous chunks; results are identical to the sequential run.
inline std::vector<LearnedInstance> relearn_dataset(const tree::DecisionTree& t,
                                                    std::span<const kdd::EncodedInstance> data,
                                                    unsigned threads = 1) {
  std::vector<LearnedInstance> out(data.size());
  if (data.empty()) return out;
  if (t.width() != kdd::kNumAttributes)
    throw DimensionError("relearn: tree width does not match the 12-attribute schema");

  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = relearn_instance(t, data[i]);
  };
  if (threads <= 1 || data.size() < 2 * threads) {
    run(0, data.size());
    return out;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (data.size() + threads - 1) / threads;
  for (unsigned w = 0; w < threads; ++w) {
    const std::size_t begin = w * chunk;
    if (begin >= data.size()) break;
    pool.emplace_back(run, begin, std::min(begin + chunk, data.size()));
  }
  for (auto& th : pool) th.join();
  return out;
}

/// Population statistics of one learned attribute.
inline Stats learned_stats(std::span<const LearnedInstance> data, std::size_t attribute) {
  if (attribute >= kdd::kNumAttributes) throw Error("learned_stats: index out of range");
  if (data.empty()) throw Error("learned_stats: empty dataset");
  StatsAccumulator acc;
  for (const auto& inst : data) acc.add(inst.features[attribute]);
  return acc.finish();
}

// ---------------------------------------------------------------------------
// Class-separability report
// ---------------------------------------------------------------------------

inline constexpr int kOriginalHistogramBins = 20;

/// Per-attribute comparison of class separability before and after
/// relearning, with per-category histograms for plotting. Original values
/// are min-max normalized before the Fisher ratio; learned values are used
/// raw (they are small integers already).
struct AttributeSeparability {
  std::string attribute;
  double fisher_original;
  double fisher_learned;
  // histogram_original[c][b]: category c, bin b over the normalized range
  std::array<std::vector<std::int64_t>, kdd::kNumCategories> histogram_original;
  // histogram_learned[c][v]: category c, learned value v
  std::array<std::vector<std::int64_t>, kdd::kNumCategories> histogram_learned;
};

struct SeparabilityReport {
  std::vector<AttributeSeparability> attributes;  // one entry per attribute
  std::size_t instances = 0;
};

inline SeparabilityReport separability_report(std::span<const kdd::EncodedInstance> original,
                                              std::span<const LearnedInstance> learned) {
  if (original.size() != learned.size())
    throw DimensionError("separability: datasets have different lengths");
  if (original.empty()) throw Error("separability: empty dataset");
  const std::size_t n = original.size();

  std::vector<int> groups(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (original[i].class_id != learned[i].class_id)
      throw Error("separability: datasets are not aligned");
    groups[i] = static_cast<int>(original[i].category);
  }

  SeparabilityReport report;
  report.instances = n;
  std::vector<double> orig(n);
  std::vector<double> lrn(n);
  for (std::size_t a = 0; a < kdd::kNumAttributes; ++a) {
    double lo = original[0].features[a];
    double hi = lo;
    std::int32_t max_learned = 0;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, original[i].features[a]);
      hi = std::max(hi, original[i].features[a]);
      max_learned = std::max(max_learned, learned[i].features[a]);
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < n; ++i) {
      orig[i] = range > 0.0 ? (original[i].features[a] - lo) / range : 0.0;
      lrn[i] = learned[i].features[a];
    }

    AttributeSeparability entry;
    entry.attribute = std::string(kdd::kAttributeNames[a]);
    entry.fisher_original =
        fisher_ratio(orig, groups, static_cast<int>(kdd::kNumCategories));
    entry.fisher_learned = fisher_ratio(lrn, groups, static_cast<int>(kdd::kNumCategories));
    for (auto& h : entry.histogram_original)
      h.assign(kOriginalHistogramBins, 0);
    for (auto& h : entry.histogram_learned)
      h.assign(static_cast<std::size_t>(max_learned) + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(groups[i]);
      auto bin = static_cast<std::size_t>(orig[i] * kOriginalHistogramBins);
      if (bin >= kOriginalHistogramBins) bin = kOriginalHistogramBins - 1;
      ++entry.histogram_original[c][bin];
      ++entry.histogram_learned[c][static_cast<std::size_t>(learned[i].features[a])];
    }
    report.attributes.push_back(std::move(entry));
  }
  return report;
}

}  // namespace alnid
