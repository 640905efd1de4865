#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace robnmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

/// Non-negative data matrix V (pixels x images) with one class label per column.
struct DataMatrix {
  Matrix values;
  Labels labels;

  DataMatrix() = default;
  DataMatrix(Matrix v, Labels l) : values(std::move(v)), labels(std::move(l)) { validate(); }

  Eigen::Index n_pixels() const noexcept { return values.rows(); }
  Eigen::Index n_images() const noexcept { return values.cols(); }

  void validate() const {
    if (values.rows() < 1 || values.cols() < 1) throw DimensionError("data matrix must be non-empty");
    if (static_cast<Eigen::Index>(labels.size()) != values.cols())
      throw DimensionError("label count " + std::to_string(labels.size()) + " != column count " +
                           std::to_string(values.cols()));
    if (!values.allFinite()) throw NumericError("data matrix has non-finite entries");
    if ((values.array() < 0.0).any()) throw DimensionError("data matrix has negative entries");
  }

  /// Number of distinct labels.
  int n_classes() const {
    Labels sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    return static_cast<int>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  }
};

/// Factors W (pixels x r) and H (r x images).
struct FactorPair {
  Matrix W;
  Matrix H;

  Eigen::Index rank() const noexcept { return W.cols(); }
  Matrix product() const { return W * H; }
};

inline void check_conformable(const Matrix& v, const FactorPair& f) {
  if (f.W.cols() != f.H.rows() || f.W.rows() != v.rows() || f.H.cols() != v.cols()) {
    throw DimensionError("factors " + std::to_string(f.W.rows()) + "x" + std::to_string(f.W.cols()) +
                         " * " + std::to_string(f.H.rows()) + "x" + std::to_string(f.H.cols()) +
                         " do not conform to data " + std::to_string(v.rows()) + "x" +
                         std::to_string(v.cols()));
  }
}

enum class Algorithm { standard, hcnmf, l21 };

inline std::string_view to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::standard: return "standard";
    case Algorithm::hcnmf: return "hcnmf";
    case Algorithm::l21: return "l21";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "standard" || s == "nmf") return Algorithm::standard;
  if (s == "hcnmf") return Algorithm::hcnmf;
  if (s == "l21" || s == "l21nmf" || s == "l2,1") return Algorithm::l21;
  throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

struct StoppingRule {
  int max_iterations = 5000;
  double relative_objective_tolerance = 1e-6;
  double epsilon_guard = 1e-12;

  void validate() const {
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (!(relative_objective_tolerance >= 0.0)) throw ConfigError("tolerance must be >= 0");
    if (!(epsilon_guard > 0.0)) throw ConfigError("epsilon guard must be > 0");
  }

  /// Iteration caps used when nothing else is configured.
  static StoppingRule defaults_for(Algorithm a) {
    StoppingRule s;
    switch (a) {
      case Algorithm::standard: s.max_iterations = 5000; break;
      case Algorithm::hcnmf: s.max_iterations = 3000; break;
      case Algorithm::l21: s.max_iterations = 1000; break;
    }
    return s;
  }
};

/// Per-iteration record of a factorization run. Deltas are max-abs elementwise changes.
struct ConvergenceTrace {
  std::vector<double> objective;
  std::vector<double> w_delta;
  std::vector<double> h_delta;
  double initial_objective = 0.0;
  int iterations_run = 0;
  bool converged = false;
  /// Set when the run aborted on a numeric error.
  std::optional<std::string> error;
};

}  // namespace robnmf
