#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "alnid/errors.hpp"
#include "alnid/matrix.hpp"

namespace alnid::zsl {

using linalg::Matrix;

// ---------------------------------------------------------------------------
// Attribute signatures
// ---------------------------------------------------------------------------

/// Per-group attribute signatures in [0,1]: rows are attributes, columns are
/// groups (classes or categories). Column j is the per-group mean of the
/// input features, min-max normalized per attribute row across groups;
/// attribute rows constant across groups map to 0.5. The per-row mean range
/// is kept so query vectors can be scaled the same way.
struct SignatureMatrix {
  Matrix values;                   // a x z
  std::vector<std::string> labels; // z column labels, sorted
  std::vector<double> row_min;     // group-mean minimum per attribute
  std::vector<double> row_max;     // group-mean maximum per attribute
};

/// `features[i]` is one instance's attribute vector, `group_of[i]` its group
/// key. `groups` fixes the column set explicitly (every listed group must
/// be populated); when empty, the groups found in the data are used.
inline SignatureMatrix build_signature_matrix(const std::vector<std::vector<double>>& features,
                                              const std::vector<std::string>& group_of,
                                              std::vector<std::string> groups = {}) {
  if (features.size() != group_of.size())
    throw DimensionError("signatures: feature/group lengths differ");
  if (features.empty()) throw Error("signatures: empty input");
  const std::size_t a = features.front().size();
  for (const auto& f : features)
    if (f.size() != a) throw DimensionError("signatures: ragged feature rows");

  if (groups.empty()) {
    std::set<std::string> found(group_of.begin(), group_of.end());
    groups.assign(found.begin(), found.end());
  } else {
    std::sort(groups.begin(), groups.end());
  }
  std::map<std::string, std::size_t> column;
  for (std::size_t j = 0; j < groups.size(); ++j) column[groups[j]] = j;

  const std::size_t z = groups.size();
  Matrix means(a, z);
  std::vector<std::int64_t> count(z, 0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto it = column.find(group_of[i]);
    if (it == column.end())
      throw Error("signatures: instance group '" + group_of[i] + "' not in the group set");
    const std::size_t j = it->second;
    ++count[j];
    for (std::size_t r = 0; r < a; ++r)
      means(r, j) += (features[i][r] - means(r, j)) / static_cast<double>(count[j]);
  }
  for (std::size_t j = 0; j < z; ++j)
    if (count[j] == 0) throw Error("signatures: empty group '" + groups[j] + "'");

  SignatureMatrix sig;
  sig.labels = std::move(groups);
  sig.values = Matrix(a, z);
  sig.row_min.resize(a);
  sig.row_max.resize(a);
  for (std::size_t r = 0; r < a; ++r) {
    double lo = means(r, 0);
    double hi = means(r, 0);
    for (std::size_t j = 1; j < z; ++j) {
      lo = std::min(lo, means(r, j));
      hi = std::max(hi, means(r, j));
    }
    sig.row_min[r] = lo;
    sig.row_max[r] = hi;
    for (std::size_t j = 0; j < z; ++j)
      sig.values(r, j) = hi > lo ? (means(r, j) - lo) / (hi - lo) : 0.5;
  }
  return sig;
}

/// Scale a query vector with the signature's per-attribute group-mean range
/// (degenerate rows map to 0.5, matching the signature convention).
inline std::vector<double> normalize_like(const SignatureMatrix& sig,
                                          std::span<const double> x) {
  if (x.size() != sig.row_min.size())
    throw DimensionError("signatures: query vector width mismatch");
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double range = sig.row_max[r] - sig.row_min[r];
    out[r] = range > 0.0 ? (x[r] - sig.row_min[r]) / range : 0.5;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form embedding (ridge-regularized bilinear map)
// ---------------------------------------------------------------------------

/// The learned map V (features x attributes) with its regularizer weights.
/// V is the closed-form minimizer, i.e. it satisfies
/// (X X^T + gamma I) V (S S^T + lambda I) = X Y S^T.
struct EszslModel {
  Matrix v;  // d x a
  double gamma = 1.0;
  double lambda = 1.0;
  std::vector<std::string> class_labels;  // training column labels (may be empty)
  double relative_residual = 0.0;         // at train time
};

/// X is d x m (one instance per column), Y is m x z in {-1,+1} with exactly
/// one +1 per row, S is a x z.
inline EszslModel train_eszsl(const Matrix& x, const Matrix& y, const Matrix& s,
                              double gamma, double lambda,
                              std::vector<std::string> class_labels = {}) {
  const std::size_t m = x.cols();
  const std::size_t z = s.cols();
  if (y.rows() != m || y.cols() != z)
    throw DimensionError("train: Y must be m x z");
  if (gamma <= 0.0 || lambda <= 0.0)
    throw Error("train: gamma and lambda must be positive");
  if (!class_labels.empty() && class_labels.size() != z)
    throw DimensionError("train: one label per signature column required");
  for (std::size_t i = 0; i < m; ++i) {
    int plus = 0;
    for (std::size_t j = 0; j < z; ++j) {
      const double v = y(i, j);
      if (v != 1.0 && v != -1.0)
        throw Error("train: Y entries must be -1 or +1");
      if (v == 1.0) ++plus;
    }
    if (plus != 1) throw Error("train: each Y row must have exactly one +1");
  }

  const Matrix xt = linalg::transpose(x);
  const Matrix st = linalg::transpose(s);
  const Matrix gram = linalg::add_scaled_identity(linalg::matmul(x, xt), gamma);   // d x d
  const Matrix sgram = linalg::add_scaled_identity(linalg::matmul(s, st), lambda); // a x a
  const Matrix rhs = linalg::matmul(linalg::matmul(x, y), st);                     // d x a

  // two solves instead of two explicit inverses
  const Matrix w = linalg::solve(gram, rhs);
  Matrix v = linalg::transpose(linalg::solve(sgram, linalg::transpose(w)));

  if (!v.all_finite()) throw Error("train: non-finite result");

  EszslModel model;
  model.gamma = gamma;
  model.lambda = lambda;
  model.class_labels = std::move(class_labels);
  const double c_norm = linalg::frobenius_norm(rhs);
  const Matrix residual =
      linalg::subtract(linalg::matmul(linalg::matmul(gram, v), sgram), rhs);
  model.relative_residual =
      c_norm > 0.0 ? linalg::frobenius_norm(residual) / c_norm : linalg::frobenius_norm(residual);
  model.v = std::move(v);
  return model;
}

/// Compatibility scores x^T V S' for every column of S'.
inline std::vector<double> eszsl_scores(const EszslModel& model, std::span<const double> x,
                                        const Matrix& s_prime) {
  const std::size_t d = model.v.rows();
  const std::size_t a = model.v.cols();
  if (x.size() != d) throw DimensionError("predict: query vector width mismatch");
  if (s_prime.rows() != a) throw DimensionError("predict: signature row count mismatch");
  std::vector<double> xv(a, 0.0);
  for (std::size_t j = 0; j < a; ++j)
    for (std::size_t i = 0; i < d; ++i) xv[j] += x[i] * model.v(i, j);
  std::vector<double> scores(s_prime.cols(), 0.0);
  for (std::size_t c = 0; c < s_prime.cols(); ++c)
    for (std::size_t j = 0; j < a; ++j) scores[c] += xv[j] * s_prime(j, c);
  return scores;
}

/// Index of the signature column maximizing x^T V S'_i; first column wins
/// ties.
inline std::size_t predict_eszsl(const EszslModel& model, std::span<const double> x,
                                 const Matrix& s_prime) {
  if (s_prime.cols() == 0) throw Error("predict: no signature columns");
  const std::vector<double> scores = eszsl_scores(model, x, s_prime);
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  return best;
}

// ---------------------------------------------------------------------------
// k-nearest-neighbour inference
// ---------------------------------------------------------------------------

namespace detail {

/// Majority vote over the k nearest candidates; vote ties go to the tied
/// label with the nearest single member, then to the lowest candidate index.
inline int knn_vote(std::vector<std::pair<double, std::size_t>>& by_distance,
                    std::span<const int> labels, int k) {
  std::sort(by_distance.begin(), by_distance.end());
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), by_distance.size());
  std::map<int, int> votes;
  for (std::size_t i = 0; i < kk; ++i) ++votes[labels[by_distance[i].second]];
  int best_votes = 0;
  for (const auto& [label, v] : votes) best_votes = std::max(best_votes, v);
  for (std::size_t i = 0; i < kk; ++i) {  // nearest member of a top-vote label
    const int label = labels[by_distance[i].second];
    if (votes[label] == best_votes) return label;
  }
  return labels[by_distance.front().second];
}

inline double squared_distance(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - q[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

/// Classify against the signature columns under Euclidean distance; the
/// query is scaled with the signature's own normalization. Returns the
/// winning column index.
inline std::size_t knn_predict(std::span<const double> x, const SignatureMatrix& sig, int k) {
  if (k < 1) throw Error("knn: k must be at least 1");
  const std::size_t z = sig.values.cols();
  if (z == 0) throw Error("knn: empty signatures");
  const std::vector<double> q = normalize_like(sig, x);
  std::vector<std::pair<double, std::size_t>> by_distance(z);
  for (std::size_t c = 0; c < z; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < q.size(); ++r) {
      const double d = q[r] - sig.values(r, c);
      s += d * d;
    }
    by_distance[c] = {s, c};
  }
  std::vector<int> labels(z);
  for (std::size_t c = 0; c < z; ++c) labels[c] = static_cast<int>(c);
  return static_cast<std::size_t>(detail::knn_vote(by_distance, labels, k));
}

/// Instance-level variant: classify against labeled reference points (rows
/// of `points`). Returns the winning label.
inline int knn_predict_points(std::span<const double> x, const Matrix& points,
                              std::span<const int> labels, int k) {
  if (k < 1) throw Error("knn: k must be at least 1");
  if (points.rows() == 0) throw Error("knn: empty reference set");
  if (labels.size() != points.rows())
    throw DimensionError("knn: one label per reference point required");
  if (x.size() != points.cols()) throw DimensionError("knn: query vector width mismatch");
  std::vector<std::pair<double, std::size_t>> by_distance(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < points.cols(); ++j) {
      const double d = x[j] - points(i, j);
      s += d * d;
    }
    by_distance[i] = {s, i};
  }
  return detail::knn_vote(by_distance, labels, k);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  std::vector<std::string> labels;                   // row/column order
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::vector<std::int64_t> truth_counts;            // row sums
  std::vector<double> per_class_accuracy;            // 0 when the class is absent
  double overall_accuracy = 0.0;
};

/// Confusion matrix and accuracies. `labels` fixes the matrix order; when
/// empty, the sorted set of truth labels is used and any prediction outside
/// it is an error.
inline EvalResult evaluate(std::span<const std::string> predictions,
                           std::span<const std::string> truths,
                           std::vector<std::string> labels = {}) {
  if (predictions.size() != truths.size())
    throw DimensionError("evaluate: prediction/truth lengths differ");
  if (truths.empty()) throw Error("evaluate: nothing to evaluate");
  if (labels.empty()) {
    std::set<std::string> found(truths.begin(), truths.end());
    labels.assign(found.begin(), found.end());
  } else {
    std::sort(labels.begin(), labels.end());
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = i;

  EvalResult result;
  result.labels = std::move(labels);
  result.confusion.assign(result.labels.size(),
                          std::vector<std::int64_t>(result.labels.size(), 0));
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    auto t = index.find(truths[i]);
    if (t == index.end()) throw Error("evaluate: truth label '" + truths[i] + "' not in label set");
    auto p = index.find(predictions[i]);
    if (p == index.end())
      throw Error("evaluate: prediction label '" + predictions[i] + "' not in label set");
    ++result.confusion[t->second][p->second];
    if (t->second == p->second) ++hits;
  }
  result.truth_counts.resize(result.labels.size());
  result.per_class_accuracy.resize(result.labels.size());
  for (std::size_t r = 0; r < result.labels.size(); ++r) {
    std::int64_t row = 0;
    for (auto v : result.confusion[r]) row += v;
    result.truth_counts[r] = row;
    result.per_class_accuracy[r] =
        row > 0 ? static_cast<double>(result.confusion[r][r]) / static_cast<double>(row) : 0.0;
  }
  result.overall_accuracy = static_cast<double>(hits) / static_cast<double>(truths.size());
  return result;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

inline nlohmann::json signature_to_json(const SignatureMatrix& sig) {
  return nlohmann::json{{"values", matrix_to_json(sig.values)},
                        {"labels", sig.labels},
                        {"row_min", sig.row_min},
                        {"row_max", sig.row_max}};
}

inline SignatureMatrix signature_from_json(const nlohmann::json& j) {
  SignatureMatrix sig;
  sig.values = matrix_from_json(j.at("values"));
  sig.labels = j.at("labels").get<std::vector<std::string>>();
  sig.row_min = j.at("row_min").get<std::vector<double>>();
  sig.row_max = j.at("row_max").get<std::vector<double>>();
  if (sig.labels.size() != sig.values.cols() || sig.row_min.size() != sig.values.rows() ||
      sig.row_max.size() != sig.values.rows())
    throw Error("signature load: inconsistent shapes");
  return sig;
}

inline nlohmann::json model_to_json(const EszslModel& model) {
  return nlohmann::json{{"format", "alnid-eszsl"},
                        {"version", 1},
                        {"gamma", model.gamma},
                        {"lambda", model.lambda},
                        {"class_labels", model.class_labels},
                        {"relative_residual", model.relative_residual},
                        {"v", matrix_to_json(model.v)}};
}

inline EszslModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "alnid-eszsl")
    throw Error("model load: not a model document");
  if (j.value("version", 0) != 1) throw Error("model load: unsupported version");
  EszslModel model;
  model.gamma = j.at("gamma").get<double>();
  model.lambda = j.at("lambda").get<double>();
  model.class_labels = j.at("class_labels").get<std::vector<std::string>>();
  model.relative_residual = j.at("relative_residual").get<double>();
  model.v = matrix_from_json(j.at("v"));
  return model;
}

}  // namespace alnid::zsl
