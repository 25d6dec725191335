#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "alnid/errors.hpp"
#include "alnid/text.hpp"

namespace alnid::tree {

/// Gains at or below this are treated as zero (no usable split).
inline constexpr double kGainEpsilon = 1e-12;

// ---------------------------------------------------------------------------
// Example set
// ---------------------------------------------------------------------------

/// Row-major feature table with integer class labels.
struct Examples {
  std::size_t width = 0;
  int n_classes = 0;  // 0 -> inferred as 1 + max(label)
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }

  double at(std::size_t row, std::size_t col) const { return features[row * width + col]; }

  std::span<const double> row(std::size_t r) const {
    return {features.data() + r * width, width};
  }

  void add_row(std::span<const double> x, int label) {
    if (x.size() != width) throw DimensionError("examples: row width mismatch");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  int resolved_n_classes() const {
    if (n_classes > 0) return n_classes;
    int m = -1;
    for (int l : labels) m = std::max(m, l);
    return m + 1;
  }
};

// ---------------------------------------------------------------------------
// Entropy and splits
// ---------------------------------------------------------------------------

namespace detail {

inline double entropy_bits(std::span<const std::int64_t> counts, std::int64_t total) {
  double h = 0.0;
  const auto n = static_cast<double>(total);
  for (std::int64_t c : counts) {
    if (c <= 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace detail

/// Shannon entropy in bits of a class-count histogram.
inline double class_info(std::span<const std::int64_t> histogram) {
  std::int64_t total = 0;
  for (std::int64_t c : histogram) {
    if (c < 0) throw Error("class_info: negative count");
    total += c;
  }
  if (total == 0) throw Error("class_info: empty histogram");
  return detail::entropy_bits(histogram, total);
}

/// Midpoint between two consecutive distinct values; collapses onto `lo`
/// when no representable value lies strictly between them.
inline double split_midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) * 0.5;
  return (mid > lo && mid < hi) ? mid : lo;
}

/// Weighted average of the class entropies of the two sides of the binary
/// split `attribute <= threshold`.
inline double split_entropy(const Examples& ex, int attribute, double threshold) {
  if (ex.size() == 0) throw Error("split_entropy: empty examples");
  if (attribute < 0 || static_cast<std::size_t>(attribute) >= ex.width)
    throw Error("split_entropy: attribute index out of range");
  const int k = ex.resolved_n_classes();
  std::vector<std::int64_t> left(static_cast<std::size_t>(k), 0);
  std::vector<std::int64_t> right(static_cast<std::size_t>(k), 0);
  std::int64_t n_left = 0;
  std::int64_t n_right = 0;
  for (std::size_t r = 0; r < ex.size(); ++r) {
    const auto label = static_cast<std::size_t>(ex.labels[r]);
    if (ex.at(r, static_cast<std::size_t>(attribute)) <= threshold) {
      ++left[label];
      ++n_left;
    } else {
      ++right[label];
      ++n_right;
    }
  }
  const auto n = static_cast<double>(ex.size());
  double e = 0.0;
  if (n_left > 0) e += (static_cast<double>(n_left) / n) * detail::entropy_bits(left, n_left);
  if (n_right > 0)
    e += (static_cast<double>(n_right) / n) * detail::entropy_bits(right, n_right);
  return e;
}

struct SplitCandidate {
  int attribute = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

namespace detail {

struct SplitScratch {
  std::vector<std::pair<double, int>> order;  // (value, label)
  std::vector<std::int64_t> left;
  std::vector<std::int64_t> right;
  std::vector<std::int64_t> total;
};

/// Maximum-gain candidate over a row subset. Candidates are iterated in
/// ascending (attribute, threshold) order and accepted only on strictly
/// greater gain, so ties resolve to the lowest attribute, then the lowest
/// threshold.
inline std::optional<SplitCandidate> best_split_rows(const Examples& ex,
                                                     std::span<const std::uint32_t> rows,
                                                     std::span<const int> attributes,
                                                     SplitScratch& scratch) {
  const auto k = static_cast<std::size_t>(ex.resolved_n_classes());
  scratch.total.assign(k, 0);
  for (auto r : rows) ++scratch.total[static_cast<std::size_t>(ex.labels[r])];
  const auto n64 = static_cast<std::int64_t>(rows.size());
  const auto n = static_cast<double>(rows.size());
  const double h_total = entropy_bits(scratch.total, n64);

  std::optional<SplitCandidate> best;
  for (int attribute : attributes) {
    auto& order = scratch.order;
    order.clear();
    order.reserve(rows.size());
    for (auto r : rows)
      order.emplace_back(ex.at(r, static_cast<std::size_t>(attribute)), ex.labels[r]);
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (order.front().first == order.back().first) continue;  // constant attribute

    scratch.left.assign(k, 0);
    scratch.right = scratch.total;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const auto label = static_cast<std::size_t>(order[i].second);
      ++scratch.left[label];
      --scratch.right[label];
      if (order[i + 1].first <= order[i].first) continue;
      const auto n_left = static_cast<std::int64_t>(i + 1);
      const std::int64_t n_right = n64 - n_left;
      const double e = (static_cast<double>(n_left) / n) * entropy_bits(scratch.left, n_left) +
                       (static_cast<double>(n_right) / n) * entropy_bits(scratch.right, n_right);
      const double gain = h_total - e;
      if (gain <= kGainEpsilon) continue;
      if (!best || gain > best->gain)
        best = SplitCandidate{attribute, split_midpoint(order[i].first, order[i + 1].first),
                              gain};
    }
  }
  return best;
}

}  // namespace detail

/// Maximum-gain binary split over the whole example set, or nullopt when no
/// candidate has positive gain. `attributes` restricts the search; empty
/// means all.
inline std::optional<SplitCandidate> best_split(const Examples& ex,
                                                std::span<const int> attributes = {}) {
  if (ex.size() == 0) throw Error("best_split: empty examples");
  std::vector<std::uint32_t> rows(ex.size());
  for (std::uint32_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::vector<int> all;
  if (attributes.empty()) {
    all.resize(ex.width);
    for (std::size_t a = 0; a < ex.width; ++a) all[a] = static_cast<int>(a);
    attributes = all;
  }
  detail::SplitScratch scratch;
  return detail::best_split_rows(ex, rows, attributes, scratch);
}

// ---------------------------------------------------------------------------
// Tree
// ---------------------------------------------------------------------------

struct Params {
  std::size_t min_leaf_size = 2;
  std::size_t max_depth = 0;  // 0 -> unlimited
};

struct Node {
  std::int32_t attribute = -1;  // -1 -> leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::vector<std::int64_t> histogram;  // leaves only
  std::int32_t predicted = -1;          // leaves only

  bool is_leaf() const noexcept { return attribute < 0; }
};

struct PathStep {
  int attribute;
  double threshold;
  bool went_left;
};

class DecisionTree;
DecisionTree build_tree(const Examples& ex, const Params& params);

class DecisionTree {
 public:
  DecisionTree() = default;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept { return leaf_count_; }
  std::size_t internal_count() const noexcept { return nodes_.size() - leaf_count_; }
  std::size_t depth() const noexcept { return depth_; }
  std::size_t width() const noexcept { return width_; }
  int n_classes() const noexcept { return n_classes_; }
  const Params& params() const noexcept { return params_; }
  std::span<const Node> nodes() const noexcept { return nodes_; }
  const Node& root() const { return nodes_.at(0); }

  /// Attribute tested at the root, or -1 for a single-leaf tree.
  int root_attribute() const { return nodes_.empty() ? -1 : nodes_[0].attribute; }

  /// Class of the leaf reached by threshold descent; values equal to a
  /// threshold go left.
  int predict(std::span<const double> x) const {
    return nodes_[descend(x)].predicted;
  }

  /// The exact sequence of internal-node tests on the way to the leaf.
  std::vector<PathStep> trace_path(std::span<const double> x) const {
    check_width(x);
    std::vector<PathStep> path;
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const Node& node = nodes_[i];
      const bool left = x[static_cast<std::size_t>(node.attribute)] <= node.threshold;
      path.push_back({node.attribute, node.threshold, left});
      i = static_cast<std::size_t>(left ? node.left : node.right);
    }
    return path;
  }

  /// Index of the leaf node reached by descent.
  std::size_t descend(std::span<const double> x) const {
    check_width(x);
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const Node& node = nodes_[i];
      i = static_cast<std::size_t>(
          x[static_cast<std::size_t>(node.attribute)] <= node.threshold ? node.left
                                                                        : node.right);
    }
    return i;
  }

  nlohmann::json to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const Node& n : nodes_) {
      if (n.is_leaf()) {
        nodes.push_back({{"histogram", n.histogram}, {"predicted", n.predicted}});
      } else {
        nodes.push_back({{"attribute", n.attribute},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right}});
      }
    }
    return nlohmann::json{{"format", "alnid-tree"},
                          {"version", 1},
                          {"width", width_},
                          {"n_classes", n_classes_},
                          {"min_leaf_size", params_.min_leaf_size},
                          {"max_depth", params_.max_depth},
                          {"nodes", std::move(nodes)}};
  }

  static DecisionTree from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "alnid-tree")
      throw Error("tree load: not a tree document");
    if (j.value("version", 0) != 1)
      throw Error("tree load: unsupported version");
    DecisionTree t;
    t.width_ = j.at("width").get<std::size_t>();
    t.n_classes_ = j.at("n_classes").get<int>();
    t.params_.min_leaf_size = j.at("min_leaf_size").get<std::size_t>();
    t.params_.max_depth = j.at("max_depth").get<std::size_t>();
    const auto& nodes = j.at("nodes");
    if (!nodes.is_array() || nodes.empty()) throw Error("tree load: missing nodes");
    const auto count = static_cast<std::int64_t>(nodes.size());
    for (std::int64_t i = 0; i < count; ++i) {
      const auto& nj = nodes[static_cast<std::size_t>(i)];
      Node n;
      if (nj.contains("attribute")) {
        n.attribute = nj.at("attribute").get<std::int32_t>();
        n.threshold = nj.at("threshold").get<double>();
        n.left = nj.at("left").get<std::int32_t>();
        n.right = nj.at("right").get<std::int32_t>();
        if (n.attribute < 0 || static_cast<std::size_t>(n.attribute) >= t.width_)
          throw Error("tree load: attribute index out of range");
        if (!std::isfinite(n.threshold)) throw Error("tree load: non-finite threshold");
        if (n.left <= i || n.right <= i || n.left >= count || n.right >= count)
          throw Error("tree load: child index out of range");
      } else {
        n.histogram = nj.at("histogram").get<std::vector<std::int64_t>>();
        n.predicted = nj.at("predicted").get<std::int32_t>();
        if (n.histogram.empty()) throw Error("tree load: empty leaf histogram");
        if (n.predicted < 0 || n.predicted >= t.n_classes_)
          throw Error("tree load: predicted class out of range");
      }
      t.nodes_.push_back(std::move(n));
    }
    // every node except the root must be referenced exactly once
    std::vector<int> refs(t.nodes_.size(), 0);
    for (const Node& n : t.nodes_) {
      if (n.is_leaf()) continue;
      ++refs[static_cast<std::size_t>(n.left)];
      ++refs[static_cast<std::size_t>(n.right)];
    }
    for (std::size_t i = 1; i < refs.size(); ++i)
      if (refs[i] != 1) throw Error("tree load: nodes do not form a tree");
    if (refs[0] != 0) throw Error("tree load: root is referenced as a child");
    t.recompute_summary();
    return t;
  }

 private:
  void check_width(std::span<const double> x) const {
    if (x.size() != width_)
      throw DimensionError("tree: instance has " + std::to_string(x.size()) +
                           " features, expected " + std::to_string(width_));
  }

  void recompute_summary() {
    leaf_count_ = 0;
    depth_ = 0;
    std::vector<std::size_t> node_depth(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.is_leaf()) {
        ++leaf_count_;
        depth_ = std::max(depth_, node_depth[i]);
      } else {
        node_depth[static_cast<std::size_t>(n.left)] = node_depth[i] + 1;
        node_depth[static_cast<std::size_t>(n.right)] = node_depth[i] + 1;
      }
    }
  }

  std::vector<Node> nodes_;
  Params params_;
  std::size_t width_ = 0;
  int n_classes_ = 0;
  std::size_t leaf_count_ = 0;
  std::size_t depth_ = 0;

  friend DecisionTree build_tree(const Examples& ex, const Params& params);
};

/// Recursive information-gain growth with binary midpoint thresholds.
/// A node becomes a leaf when it is pure, smaller than the minimum leaf
/// size, at the depth limit, or when no candidate has positive gain (which
/// can leave an impure leaf on gain-deadlocked data such as a balanced XOR
/// pattern). Attributes stay available for re-testing at deeper nodes.
inline DecisionTree build_tree(const Examples& ex, const Params& params) {
  if (ex.size() == 0) throw Error("build_tree: empty examples");
  if (ex.width == 0) throw Error("build_tree: examples have no attributes");
  const int k = ex.resolved_n_classes();

  DecisionTree t;
  t.params_ = params;
  t.width_ = ex.width;
  t.n_classes_ = k;

  std::vector<int> attributes(ex.width);
  for (std::size_t a = 0; a < ex.width; ++a) attributes[a] = static_cast<int>(a);
  detail::SplitScratch scratch;

  struct Work {
    std::vector<std::uint32_t> rows;
    std::size_t depth;
    std::int32_t parent;  // -1 for root
    bool is_left;
  };
  std::vector<Work> stack;
  {
    std::vector<std::uint32_t> rows(ex.size());
    for (std::uint32_t i = 0; i < rows.size(); ++i) rows[i] = i;
    stack.push_back({std::move(rows), 0, -1, false});
  }

  while (!stack.empty()) {
    Work work = std::move(stack.back());
    stack.pop_back();

    const auto index = static_cast<std::int32_t>(t.nodes_.size());
    if (work.parent >= 0) {
      Node& p = t.nodes_[static_cast<std::size_t>(work.parent)];
      (work.is_left ? p.left : p.right) = index;
    }

    std::vector<std::int64_t> hist(static_cast<std::size_t>(k), 0);
    for (auto r : work.rows) ++hist[static_cast<std::size_t>(ex.labels[r])];
    const bool pure =
        std::count_if(hist.begin(), hist.end(), [](std::int64_t c) { return c > 0; }) == 1;

    std::optional<SplitCandidate> split;
    const bool depth_capped = params.max_depth > 0 && work.depth >= params.max_depth;
    if (!pure && !depth_capped && work.rows.size() >= params.min_leaf_size)
      split = detail::best_split_rows(ex, work.rows, attributes, scratch);

    if (!split) {
      Node leaf;
      leaf.histogram = std::move(hist);
      std::int64_t best_count = -1;
      for (std::size_t c = 0; c < leaf.histogram.size(); ++c) {
        if (leaf.histogram[c] > best_count) {
          best_count = leaf.histogram[c];
          leaf.predicted = static_cast<std::int32_t>(c);
        }
      }
      t.nodes_.push_back(std::move(leaf));
      ++t.leaf_count_;
      t.depth_ = std::max(t.depth_, work.depth);
      continue;
    }

    Node node;
    node.attribute = split->attribute;
    node.threshold = split->threshold;
    t.nodes_.push_back(std::move(node));

    std::vector<std::uint32_t> left_rows;
    std::vector<std::uint32_t> right_rows;
    for (auto r : work.rows) {
      if (ex.at(r, static_cast<std::size_t>(split->attribute)) <= split->threshold)
        left_rows.push_back(r);
      else
        right_rows.push_back(r);
    }
    work.rows.clear();
    work.rows.shrink_to_fit();
    // right pushed first so the left subtree is laid out immediately after
    // its parent
    stack.push_back({std::move(right_rows), work.depth + 1, index, false});
    stack.push_back({std::move(left_rows), work.depth + 1, index, true});
  }
  return t;
}

/// Fraction of examples whose predicted class equals their label.
inline double accuracy(const DecisionTree& t, const Examples& ex) {
  if (ex.size() == 0) throw Error("accuracy: empty examples");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ex.size(); ++r)
    if (t.predict(ex.row(r)) == ex.labels[r]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ex.size());
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

enum class Comparator { kLessEq, kGreater };

struct Condition {
  int attribute;
  Comparator cmp;
  double threshold;
};

struct Rule {
  std::vector<Condition> conditions;  // root-to-leaf order
  int consequent;
};

/// One rule per leaf, leaves in left-to-right order. The rule set is
/// mutually exclusive and exhaustive over the feature space.
inline std::vector<Rule> extract_rules(const DecisionTree& t) {
  std::vector<Rule> rules;
  struct Frame {
    std::size_t node;
    std::size_t depth;   // conditions on the path to this node
    Condition incoming;  // condition that leads here (valid when depth > 0)
  };
  std::vector<Frame> stack{{0, 0, Condition{-1, Comparator::kLessEq, 0.0}}};
  std::vector<Condition> path;
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    path.resize(f.depth);
    if (f.depth > 0) path[f.depth - 1] = f.incoming;
    const Node& n = t.nodes()[f.node];
    if (n.is_leaf()) {
      rules.push_back({path, n.predicted});
      continue;
    }
    // right pushed first so the left branch is emitted first
    stack.push_back({static_cast<std::size_t>(n.right), f.depth + 1,
                     Condition{n.attribute, Comparator::kGreater, n.threshold}});
    stack.push_back({static_cast<std::size_t>(n.left), f.depth + 1,
                     Condition{n.attribute, Comparator::kLessEq, n.threshold}});
  }
  return rules;
}

inline bool rule_matches(const Rule& rule, std::span<const double> x) {
  for (const Condition& c : rule.conditions) {
    const double v = x[static_cast<std::size_t>(c.attribute)];
    if (c.cmp == Comparator::kLessEq ? !(v <= c.threshold) : !(v > c.threshold))
      return false;
  }
  return true;
}

/// Shortest round-trip representation, always with a decimal point
/// ("1.0", "2.5").
inline std::string threshold_to_string(double v) {
  std::string s = to_string_shortest(v);
  if (s.find_first_of(".einf") == std::string::npos) s += ".0";
  return s;
}

inline std::string rule_to_string(
    const Rule& rule, const std::function<std::string(int)>& class_name,
    const std::function<std::string(int)>& attribute_name = nullptr) {
  std::string out = "IF ";
  if (rule.conditions.empty()) {
    out += "TRUE";
  } else {
    for (std::size_t i = 0; i < rule.conditions.size(); ++i) {
      const Condition& c = rule.conditions[i];
      if (i) out += " AND ";
      out += attribute_name ? attribute_name(c.attribute)
                            : "a" + std::to_string(c.attribute);
      out += c.cmp == Comparator::kLessEq ? " <= " : " > ";
      out += threshold_to_string(c.threshold);
    }
  }
  out += " THEN ";
  out += class_name(rule.consequent);
  return out;
}

}  // namespace alnid::tree
