#pragma once

// Standard (Frobenius) NMF, hypersurface-cost NMF and L2,1-NMF as single update
// steps, plus a shared run loop. All routines work on the raw pixel scale.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "error.hpp"
#include "seed.hpp"
#include "types.hpp"

namespace robnmf {

/// W and H filled with i.i.d. uniform (0, 1] draws; W first, column-major.
inline FactorPair init_factors(const Matrix& v, Eigen::Index rank, std::uint64_t seed) {
  const Eigen::Index limit = std::min(v.rows(), v.cols());
  if (rank < 1 || rank > limit) {
    throw DimensionError("rank " + std::to_string(rank) + " outside [1, " + std::to_string(limit) + "]");
  }
  Rng rng(seed);
  FactorPair f{Matrix(v.rows(), rank), Matrix(rank, v.cols())};
  for (Eigen::Index i = 0; i < f.W.size(); ++i) f.W.data()[i] = uniform_open_closed(rng);
  for (Eigen::Index i = 0; i < f.H.size(); ++i) f.H.data()[i] = uniform_open_closed(rng);
  return f;
}

inline FactorPair init_factors(const DataMatrix& v, Eigen::Index rank, std::uint64_t seed) {
  return init_factors(v.values, rank, seed);
}

inline Matrix residual(const Matrix& v, const FactorPair& f) {
  check_conformable(v, f);
  return v - f.W * f.H;
}

// ---------------------------------------------------------------------------
// Objectives

/// ||V - WH||_F^2
inline double frobenius_objective(const Matrix& v, const FactorPair& f) {
  return residual(v, f).squaredNorm();
}

/// sum_ij sqrt(1 + R_ij^2) - 1, R = V - WH. Written as R^2 / (sqrt(1+R^2) + 1) to
/// avoid cancellation for small residuals.
inline double hypersurface_cost(const Matrix& v, const FactorPair& f) {
  const Eigen::ArrayXXd r2 = residual(v, f).array().square();
  return (r2 / ((1.0 + r2).sqrt() + 1.0)).sum();
}

/// Sum over data columns of the Euclidean norm of the residual column.
inline double l21_objective(const Matrix& v, const FactorPair& f) {
  return residual(v, f).colwise().norm().sum();
}

// ---------------------------------------------------------------------------
// Standard NMF

/// One Lee-Seung multiplicative update: W first, then H against the refreshed W.
inline FactorPair standard_nmf_step(const Matrix& v, const FactorPair& f, double guard = 1e-12) {
  check_conformable(v, f);
  FactorPair out;
  const Matrix hht = f.H * f.H.transpose();
  out.W = f.W.array() * (v * f.H.transpose()).array() / ((f.W * hht).array() + guard);
  const Matrix wtw = out.W.transpose() * out.W;
  out.H = f.H.array() * (out.W.transpose() * v).array() / ((wtw * f.H).array() + guard);
  return out;
}

// ---------------------------------------------------------------------------
// Hypersurface cost NMF

struct Gradient {
  Matrix W;
  Matrix H;
};

/// Exact gradient of hypersurface_cost: dW = -Psi H^T, dH = -W^T Psi with Psi = R / sqrt(1 + R^2).
inline Gradient hypersurface_gradient(const Matrix& v, const FactorPair& f) {
  const Eigen::ArrayXXd r = residual(v, f).array();
  const Matrix psi = (r / (1.0 + r.square()).sqrt()).matrix();
  return {-psi * f.H.transpose(), -f.W.transpose() * psi};
}

struct ArmijoParams {
  double initial_step = 1.0;
  double shrink = 0.5;
  /// Sufficient-decrease fraction; the classic rule uses 1/2.
  double c = 0.5;
  int max_backtracks = 30;
  /// Clamp trial points at zero before evaluating them.
  bool project = true;
};

struct ArmijoResult {
  double step = 0.0;
  double f_start = 0.0;
  double f_trial = 0.0;
  double grad_sq_norm = 0.0;
  int backtracks = 0;

  bool accepted() const noexcept { return step > 0.0; }
};

/// Backtracking line search along -gradient. Returns the largest step in
/// {s, s*shrink, ..., s*shrink^max_backtracks} with
///   f(P[x - a g]) - f(x) <= -c a |g|^2,
/// or step 0 if none qualifies.
template <class Objective>
ArmijoResult armijo_step_size(Objective&& objective, const Matrix& point, const Matrix& gradient,
                              const ArmijoParams& params = {}) {
  if (!(params.shrink > 0.0 && params.shrink < 1.0)) throw ConfigError("armijo shrink must be in (0,1)");
  if (params.max_backtracks < 0) throw ConfigError("armijo max_backtracks must be >= 0");

  ArmijoResult res;
  res.f_start = objective(point);
  if (!std::isfinite(res.f_start)) throw NumericError("objective is not finite at the line-search start");
  res.grad_sq_norm = gradient.squaredNorm();

  double alpha = params.initial_step;
  Matrix trial;
  for (int m = 0; m <= params.max_backtracks; ++m, alpha *= params.shrink) {
    trial = point - alpha * gradient;
    if (params.project) trial = trial.cwiseMax(0.0);
    const double ft = objective(trial);
    if (std::isfinite(ft) && ft - res.f_start <= -params.c * alpha * res.grad_sq_norm) {
      res.step = alpha;
      res.f_trial = ft;
      res.backtracks = m;
      return res;
    }
  }
  res.f_trial = res.f_start;
  res.backtracks = params.max_backtracks;
  return res;
}

/// Zero the gradient components that push an entry already at zero further down;
/// those coordinates cannot move under projection.
inline Matrix free_gradient(const Matrix& x, const Matrix& g) {
  return ((x.array() <= 0.0) && (g.array() > 0.0)).select(0.0, g);
}

/// Line-search record of one hcnmf_step, one entry per variable block.
struct HcnmfStepLog {
  ArmijoResult w;
  ArmijoResult h;
};

/// Projected gradient step with Armijo step sizes on W, then on H with the refreshed W.
inline FactorPair hcnmf_step(const Matrix& v, const FactorPair& f, const ArmijoParams& params = {},
                             HcnmfStepLog* log = nullptr) {
  check_conformable(v, f);
  FactorPair out = f;

  {
    const Eigen::ArrayXXd r = (v - out.W * out.H).array();
    const Matrix psi = (r / (1.0 + r.square()).sqrt()).matrix();
    const Matrix grad = free_gradient(out.W, -psi * out.H.transpose());
    const auto cost = [&](const Matrix& w) { return hypersurface_cost(v, FactorPair{w, out.H}); };
    const ArmijoResult res = armijo_step_size(cost, out.W, grad, params);
    if (res.accepted()) out.W = (out.W - res.step * grad).cwiseMax(0.0);
    if (log) log->w = res;
  }
  {
    const Eigen::ArrayXXd r = (v - out.W * out.H).array();
    const Matrix psi = (r / (1.0 + r.square()).sqrt()).matrix();
    const Matrix grad = free_gradient(out.H, -out.W.transpose() * psi);
    const auto cost = [&](const Matrix& h) { return hypersurface_cost(v, FactorPair{out.W, h}); };
    const ArmijoResult res = armijo_step_size(cost, out.H, grad, params);
    if (res.accepted()) out.H = (out.H - res.step * grad).cwiseMax(0.0);
    if (log) log->h = res;
  }
  return out;
}

// ---------------------------------------------------------------------------
// L2,1-NMF

/// Diagonal of D: 1 / max(||residual column i||, guard).
inline Vector l21_weights(const Matrix& v, const FactorPair& f, double guard = 1e-12) {
  const Eigen::RowVectorXd norms = residual(v, f).colwise().norm();
  return norms.transpose().cwiseMax(guard).cwiseInverse();
}

/// Reweighted multiplicative update. D is computed once from the incoming pair and used
/// for both the W and the H update.
inline FactorPair l21_nmf_step(const Matrix& v, const FactorPair& f, double guard = 1e-12) {
  const Vector d = l21_weights(v, f, guard);
  const auto dd = d.asDiagonal();

  FactorPair out;
  const Matrix hd = f.H * dd;  // H D
  out.W = f.W.array() * (v * hd.transpose()).array() /
          ((f.W * (f.H * hd.transpose())).array() + guard);
  const Matrix wtw = out.W.transpose() * out.W;
  out.H = f.H.array() * ((out.W.transpose() * v) * dd).array() / ((wtw * hd).array() + guard);
  return out;
}

// ---------------------------------------------------------------------------
// Run loop

inline double objective_for(Algorithm a, const Matrix& v, const FactorPair& f) {
  switch (a) {
    case Algorithm::standard: return frobenius_objective(v, f);
    case Algorithm::hcnmf: return hypersurface_cost(v, f);
    case Algorithm::l21: return l21_objective(v, f);
  }
  return 0.0;
}

struct FactorizationResult {
  FactorPair factors;
  ConvergenceTrace trace;
};

/// Called after every iteration with the 1-based iteration number; return false to stop.
using IterationObserver = std::function<bool(int iteration, const FactorPair&, const ConvergenceTrace&)>;

struct RunOptions {
  ArmijoParams armijo{};
  IterationObserver observer{};
};

inline FactorizationResult run_factorization(const Matrix& v, Algorithm algorithm, Eigen::Index rank,
                                             const StoppingRule& stop, std::uint64_t seed,
                                             const RunOptions& options = {}) {
  stop.validate();
  FactorizationResult res{init_factors(v, rank, seed), {}};
  ConvergenceTrace& trace = res.trace;
  FactorPair& f = res.factors;

  double prev = objective_for(algorithm, v, f);
  trace.initial_objective = prev;
  if (!std::isfinite(prev)) {
    trace.error = "non-finite objective at initialization";
    return res;
  }

  for (int it = 1; it <= stop.max_iterations; ++it) {
    FactorPair next;
    try {
      switch (algorithm) {
        case Algorithm::standard: next = standard_nmf_step(v, f, stop.epsilon_guard); break;
        case Algorithm::hcnmf: next = hcnmf_step(v, f, options.armijo); break;
        case Algorithm::l21: next = l21_nmf_step(v, f, stop.epsilon_guard); break;
      }
    } catch (const NumericError& e) {
      trace.error = e.what();
      return res;
    }
    const double obj = objective_for(algorithm, v, next);
    if (!std::isfinite(obj)) {
      trace.error = "non-finite objective at iteration " + std::to_string(it);
      return res;
    }
    trace.w_delta.push_back((next.W - f.W).cwiseAbs().maxCoeff());
    trace.h_delta.push_back((next.H - f.H).cwiseAbs().maxCoeff());
    trace.objective.push_back(obj);
    trace.iterations_run = it;
    f = std::move(next);

    const double rel = std::abs(obj - prev) / std::max(prev, stop.epsilon_guard);
    prev = obj;
    const bool done = rel <= stop.relative_objective_tolerance;
    if (options.observer && !options.observer(it, f, trace)) break;
    if (done) {
      trace.converged = true;
      break;
    }
  }
  return res;
}

inline FactorizationResult run_factorization(const DataMatrix& v, Algorithm algorithm, Eigen::Index rank,
                                             const StoppingRule& stop, std::uint64_t seed,
                                             const RunOptions& options = {}) {
  return run_factorization(v.values, algorithm, rank, stop, seed, options);
}

}  // namespace robnmf
