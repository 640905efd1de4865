#pragma once

// Reconstruction error, k-means clustering of coefficient columns, optimal label
// alignment, accuracy and normalized mutual information.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "error.hpp"
#include "seed.hpp"
#include "types.hpp"

namespace robnmf {

/// ||V_clean - WH||_F / ||V_clean||_F
inline double rre(const Matrix& v_clean, const FactorPair& f) {
  check_conformable(v_clean, f);
  const double denom = v_clean.norm();
  if (denom == 0.0) throw UndefinedMetricError("relative reconstruction error of an all-zero matrix");
  return (v_clean - f.W * f.H).norm() / denom;
}

inline double rre(const DataMatrix& v_clean, const FactorPair& f) { return rre(v_clean.values, f); }

// ---------------------------------------------------------------------------
// Contingency table

/// Counts of (true label, predicted label) pairs. Labels of either side are mapped to
/// dense indices in ascending order.
struct ContingencyTable {
  Eigen::MatrixXi counts;  // rows: true classes, cols: predicted clusters
  std::vector<int> true_labels;
  std::vector<int> pred_labels;

  ContingencyTable(const Labels& truth, const Labels& pred) {
    if (truth.size() != pred.size()) {
      throw DimensionError("label sequences differ in length: " + std::to_string(truth.size()) + " vs " +
                           std::to_string(pred.size()));
    }
    const auto dense = [](const Labels& l, std::vector<int>& uniq) {
      uniq = l;
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      std::vector<int> out(l.size());
      for (std::size_t i = 0; i < l.size(); ++i)
        out[i] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), l[i]) - uniq.begin());
      return out;
    };
    const auto t = dense(truth, true_labels);
    const auto p = dense(pred, pred_labels);
    counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(true_labels.size()),
                                   static_cast<Eigen::Index>(pred_labels.size()));
    for (std::size_t i = 0; i < t.size(); ++i) ++counts(t[i], p[i]);
  }

  int total() const { return counts.sum(); }
  Eigen::VectorXi row_marginals() const { return counts.rowwise().sum(); }
  Eigen::RowVectorXi col_marginals() const { return counts.colwise().sum(); }
};

// ---------------------------------------------------------------------------
// Hungarian assignment (square, minimization), O(n^3) potentials formulation.
// Returns assignment[row] = column.

inline std::vector<int> hungarian_min(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw DimensionError("hungarian: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) assignment[p[j] - 1] = j - 1;
  return assignment;
}

/// Relabel `pred` by the one-to-one cluster-to-class matching that maximizes agreement
/// with `truth`. Clusters left unmatched (more clusters than classes) get fresh labels
/// that never occur in `truth`.
inline Labels align_labels(const Labels& truth, const Labels& pred) {
  const ContingencyTable table(truth, pred);
  const Eigen::Index kt = table.counts.rows();
  const Eigen::Index kp = table.counts.cols();
  const Eigen::Index n = std::max(kt, kp);
  Matrix cost = Matrix::Zero(n, n);
  cost.topLeftCorner(kt, kp) = -table.counts.cast<double>();

  const auto match = hungarian_min(cost);  // row = true class, value = predicted cluster
  std::vector<int> cluster_to_label(static_cast<std::size_t>(kp), 0);
  int fresh = table.true_labels.empty() ? 0 : table.true_labels.back() + 1;
  std::vector<char> assigned(static_cast<std::size_t>(kp), 0);
  for (Eigen::Index t = 0; t < kt; ++t) {
    const int c = match[static_cast<std::size_t>(t)];
    if (c < kp) {
      cluster_to_label[static_cast<std::size_t>(c)] = table.true_labels[static_cast<std::size_t>(t)];
      assigned[static_cast<std::size_t>(c)] = 1;
    }
  }
  for (Eigen::Index c = 0; c < kp; ++c)
    if (!assigned[static_cast<std::size_t>(c)]) cluster_to_label[static_cast<std::size_t>(c)] = fresh++;

  Labels out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto c = std::lower_bound(table.pred_labels.begin(), table.pred_labels.end(), pred[i]) -
                   table.pred_labels.begin();
    out[i] = cluster_to_label[static_cast<std::size_t>(c)];
  }
  return out;
}

/// Fraction of positions where the two sequences agree.
inline double accuracy(const Labels& truth, const Labels& aligned_pred) {
  if (truth.size() != aligned_pred.size()) throw DimensionError("accuracy: label sequences differ in length");
  if (truth.empty()) throw UndefinedMetricError("accuracy of an empty labeling");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == aligned_pred[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// 2 I(Y, Y') / (H(Y) + H(Y')), natural logarithms, 0 log 0 = 0.
inline double nmi(const Labels& truth, const Labels& pred) {
  if (truth.empty()) throw DimensionError("nmi: empty labeling");
  const ContingencyTable table(truth, pred);
  const double n = table.total();
  const auto entropy = [n](const auto& marginals) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < marginals.size(); ++i) {
      const double q = marginals(i) / n;
      if (q > 0.0) h -= q * std::log(q);
    }
    return h;
  };
  const Eigen::VectorXi rows = table.row_marginals();
  const Eigen::RowVectorXi cols = table.col_marginals();
  const double ht = entropy(rows);
  const double hp = entropy(cols);

  double mi = 0.0;
  for (Eigen::Index i = 0; i < table.counts.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.counts.cols(); ++j) {
      const double c = table.counts(i, j);
      if (c > 0.0) mi += (c / n) * std::log(c * n / (static_cast<double>(rows(i)) * cols(j)));
    }
  }
  // Both partitions trivial: identical up to relabeling.
  if (ht + hp == 0.0) return 1.0;
  return std::clamp(2.0 * mi / (ht + hp), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// k-means over the columns of a coefficient matrix

struct KMeansParams {
  int restarts = 10;
  int max_iterations = 300;
};

struct ClusterAssignment {
  Labels labels;
  int k = 0;
  /// Within-cluster sum of squares of the returned partition.
  double wcss = 0.0;
  /// WCSS after each Lloyd iteration of the winning restart.
  std::vector<double> wcss_trace;
  int restart = 0;
};

namespace detail {

inline double sq_dist(const Matrix& points, Eigen::Index i, const Matrix& centers, Eigen::Index c) {
  return (points.col(i) - centers.col(c)).squaredNorm();
}

inline ClusterAssignment kmeans_once(const Matrix& points, int k, int max_iterations, std::uint64_t seed) {
  const Eigen::Index n = points.cols();
  Rng rng(seed);

  // k-means++ seeding.
  Matrix centers(points.rows(), k);
  centers.col(0) = points.col(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Vector nearest(n);
  for (Eigen::Index i = 0; i < n; ++i) nearest(i) = sq_dist(points, i, centers, 0);
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double target = uniform_unit(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += nearest(i);
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    centers.col(c) = points.col(pick);
    for (Eigen::Index i = 0; i < n; ++i) nearest(i) = std::min(nearest(i), sq_dist(points, i, centers, c));
  }

  ClusterAssignment out;
  out.k = k;
  out.labels.assign(static_cast<std::size_t>(n), -1);
  Vector dist(n);

  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(points, i, centers, 0);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(points, i, centers, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed |= out.labels[static_cast<std::size_t>(i)] != best;
      out.labels[static_cast<std::size_t>(i)] = best;
      dist(i) = best_d;
    }

    // Empty clusters take the point farthest from its centroid.
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int l : out.labels) ++sizes[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (sizes[static_cast<std::size_t>(out.labels[static_cast<std::size_t>(i)])] < 2) continue;
        if (far < 0 || dist(i) > dist(far)) far = i;
      }
      if (far < 0) break;
      --sizes[static_cast<std::size_t>(out.labels[static_cast<std::size_t>(far)])];
      out.labels[static_cast<std::size_t>(far)] = c;
      sizes[static_cast<std::size_t>(c)] = 1;
      dist(far) = 0.0;
      changed = true;
    }

    centers.setZero();
    for (Eigen::Index i = 0; i < n; ++i) centers.col(out.labels[static_cast<std::size_t>(i)]) += points.col(i);
    for (int c = 0; c < k; ++c)
      if (sizes[static_cast<std::size_t>(c)] > 0) centers.col(c) /= sizes[static_cast<std::size_t>(c)];

    double wcss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) wcss += sq_dist(points, i, centers, out.labels[static_cast<std::size_t>(i)]);
    out.wcss_trace.push_back(wcss);
    out.wcss = wcss;
    if (!changed) break;
  }
  return out;
}

}  // namespace detail

/// k-means on the columns of `h` (k-means++ seeding, best of `restarts` by WCSS,
/// ties broken by the lower restart index).
inline ClusterAssignment cluster_coefficients(const Matrix& h, int k, std::uint64_t seed,
                                              const KMeansParams& params = {}) {
  if (k < 1) throw DimensionError("cluster count must be >= 1");
  if (k > h.cols()) {
    throw DimensionError("cluster count " + std::to_string(k) + " exceeds " + std::to_string(h.cols()) + " points");
  }
  if (params.restarts < 1 || params.max_iterations < 1) throw ConfigError("k-means restarts and iterations must be >= 1");
  ClusterAssignment best;
  for (int r = 0; r < params.restarts; ++r) {
    ClusterAssignment cur = detail::kmeans_once(h, k, params.max_iterations, derive_seed(seed, static_cast<std::uint64_t>(r)));
    cur.restart = r;
    if (r == 0 || cur.wcss < best.wcss) best = std::move(cur);
  }
  return best;
}

}  // namespace robnmf
