// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exit status is non-zero if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "robnmf/robnmf.hpp"
#include "test_util.hpp"

using namespace robnmf;
using robnmf::testing::random_matrix;
using robnmf::testing::TempDir;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome = Outcome::pass;
  std::string detail;
};

Verdict check(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double x, int prec = 3) {
  std::ostringstream os;
  os << std::setprecision(prec) << x;
  return os.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// V 20x30 uniform [0, 255].
Matrix descent_instance(std::uint64_t i) { return random_matrix(20, 30, derive_seed(1000, i), 0.0, 255.0); }

template <class Step, class Objective>
double worst_relative_increase(const Matrix& v, FactorPair f, int steps, Step&& step, Objective&& obj,
                               bool& nonneg) {
  double worst = -std::numeric_limits<double>::infinity();
  double prev = obj(v, f);
  for (int t = 0; t < steps; ++t) {
    f = step(v, f);
    nonneg = nonneg && (f.W.array() >= 0).all() && (f.H.array() >= 0).all();
    const double cur = obj(v, f);
    worst = std::max(worst, (cur - prev) / prev);
    prev = cur;
  }
  return worst;
}

// 1
Verdict monotone_standard() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = -1;
  bool nonneg = true;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const Matrix v = descent_instance(i);
    worst = std::max(worst, worst_relative_increase(
                                v, init_factors(v, 4, i), 500,
                                [](const Matrix& a, const FactorPair& f) { return standard_nmf_step(a, f); },
                                [](const Matrix& a, const FactorPair& f) { return frobenius_objective(a, f); }, nonneg));
  }
  const double secs = seconds_since(t0);
  return check(worst <= 1e-9 && nonneg && secs < 10.0,
               "max relative increase " + num(worst) + " (limit 1e-9), non-negative " + (nonneg ? "yes" : "no") +
                   ", " + num(secs) + " s (limit 10)");
}

// 2
Verdict monotone_l21() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = -1;
  bool nonneg = true;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const Matrix v = descent_instance(i);
    worst = std::max(worst, worst_relative_increase(
                                v, init_factors(v, 4, i), 300,
                                [](const Matrix& a, const FactorPair& f) { return l21_nmf_step(a, f); },
                                [](const Matrix& a, const FactorPair& f) { return l21_objective(a, f); }, nonneg));
  }
  const double secs = seconds_since(t0);
  return check(worst <= 1e-8 && nonneg && secs < 10.0,
               "max relative increase " + num(worst) + " (limit 1e-8), non-negative " + (nonneg ? "yes" : "no") +
                   ", " + num(secs) + " s (limit 10)");
}

// 3
Verdict hcnmf_certificates() {
  const auto t0 = std::chrono::steady_clock::now();
  long accepted = 0, violations = 0, increases = 0, stalled = 0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const Matrix v = descent_instance(i);
    FactorPair f = init_factors(v, 4, i);
    double prev = hypersurface_cost(v, f);
    for (int t = 0; t < 100; ++t) {
      HcnmfStepLog log;
      f = hcnmf_step(v, f, {}, &log);
      for (const ArmijoResult* r : {&log.w, &log.h}) {
        if (!r->accepted()) {
          ++stalled;
          continue;
        }
        ++accepted;
        violations += !(r->f_trial - r->f_start <= -0.5 * r->step * r->grad_sq_norm);
      }
      const double cur = hypersurface_cost(v, f);
      increases += cur > prev;
      prev = cur;
    }
  }
  const double secs = seconds_since(t0);
  return check(violations == 0 && increases == 0 && accepted > 0 && secs < 20.0,
               std::to_string(accepted) + " accepted steps, " + std::to_string(violations) +
                   " Armijo violations, " + std::to_string(increases) + " cost increases, " + std::to_string(stalled) +
                   " stalled blocks, " + num(secs) + " s (limit 20)");
}

// 4
Verdict gradient_oracle() {
  const double h = 1e-5;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    Rng rng(derive_seed(4000, i));
    const Eigen::Index rows = 2 + static_cast<Eigen::Index>(uniform_index(rng, 5));  // 2..6
    const Eigen::Index cols = 2 + static_cast<Eigen::Index>(uniform_index(rng, 4));  // 2..5
    const Eigen::Index rank = 1 + static_cast<Eigen::Index>(uniform_index(rng, std::min(rows, cols)));
    const Matrix v = random_matrix(rows, cols, derive_seed(4001, i), 0.0, 5.0);
    const FactorPair f = init_factors(v, rank, i);
    const Gradient g = hypersurface_gradient(v, f);
    for (int block = 0; block < 2; ++block) {
      const Matrix& an = block == 0 ? g.W : g.H;
      Matrix fd(an.rows(), an.cols());
      for (Eigen::Index k = 0; k < an.size(); ++k) {
        FactorPair plus = f, minus = f;
        (block == 0 ? plus.W : plus.H).data()[k] += h;
        (block == 0 ? minus.W : minus.H).data()[k] -= h;
        fd.data()[k] = (hypersurface_cost(v, plus) - hypersurface_cost(v, minus)) / (2 * h);
      }
      const double scale = std::max(an.cwiseAbs().maxCoeff(), 1e-300);
      worst = std::max(worst, (fd - an).cwiseAbs().maxCoeff() / scale);
    }
  }
  return check(worst < 1e-5, "max relative error " + num(worst) + " (limit 1e-5) over 20 instances <= 6x5");
}

// 5
Verdict planted_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const DataMatrix v = planted_data(30, 40, 3, 0);
  bool ok = true;
  std::string detail;
  for (Algorithm a : {Algorithm::standard, Algorithm::l21, Algorithm::hcnmf}) {
    StoppingRule stop = StoppingRule::defaults_for(a);
    stop.max_iterations = 100000;  // stop on the tolerance, not the cap
    const auto res = run_factorization(v, a, 3, stop, derive_seed(0, 99));
    const double limit = a == Algorithm::hcnmf ? 1e-2 : 1e-3;
    const double e = rre(v, res.factors);
    ok = ok && e < limit && res.trace.converged;
    detail += std::string(to_string(a)) + " RRE " + num(e) + (e < limit ? " < " : " >= ") + num(limit) + " after " +
              std::to_string(res.trace.iterations_run) + (res.trace.converged ? " its (converged); " : " its (cap); ");
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  return check(ok, detail + num(secs) + " s (limit 60)");
}

// 6
Verdict alignment_oracle() {
  Rng rng(6006);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int kt = 1 + static_cast<int>(uniform_index(rng, 6));
    const int kp = 1 + static_cast<int>(uniform_index(rng, 6));
    const std::size_t n = 1 + uniform_index(rng, 30);
    Labels truth(n), pred(n);
    for (auto& x : truth) x = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(kt)));
    for (auto& x : pred) x = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(kp)));

    const int m = std::max(kt, kp);
    std::vector<std::vector<int>> counts(m, std::vector<int>(m, 0));
    for (std::size_t i = 0; i < n; ++i) ++counts[pred[i]][truth[i]];
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    int best = 0;
    do {
      int s = 0;
      for (int c = 0; c < m; ++c) s += counts[c][perm[c]];
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));

    const Labels aligned = align_labels(truth, pred);
    int got = 0;
    for (std::size_t i = 0; i < n; ++i) got += aligned[i] == truth[i];
    mismatches += got != best;
  }
  return check(mismatches == 0, std::to_string(mismatches) + " of 100 cases differ from the exhaustive optimum");
}

// 7
Verdict metric_identities() {
  const Labels y{0, 0, 1, 1, 1, 2, 3, 3};
  const Labels constant(y.size(), 5);
  const Labels pred{2, 2, 0, 1, 0, 3, 1, 1};
  Labels renamed = pred;
  for (auto& x : renamed) x = (x * 3 + 1) % 4 + 7;  // bijection on {0..3}
  const FactorPair f{random_matrix(9, 3, 1, 0.1, 1.0), random_matrix(3, 7, 2, 0.1, 1.0)};
  const Matrix v = f.W * f.H;

  const bool nmi_self = nmi(y, y) == 1.0;
  const bool nmi_const = nmi(y, constant) == 0.0;
  const bool acc_perm = accuracy(y, align_labels(y, pred)) == accuracy(y, align_labels(y, renamed));
  const bool rre_zero = rre(v, f) == 0.0;
  return check(nmi_self && nmi_const && acc_perm && rre_zero,
               std::string("NMI(Y,Y)=1 ") + (nmi_self ? "ok" : "FAIL") + ", NMI(Y,const)=0 " +
                   (nmi_const ? "ok" : "FAIL") + ", accuracy permutation-invariant " + (acc_perm ? "ok" : "FAIL") +
                   ", RRE(exact)=0 " + (rre_zero ? "ok" : "FAIL"));
}

// 8
Verdict noise_exactness() {
  const Matrix clean = Matrix::Constant(37, 30, 128.0);
  bool ok = true;
  std::string detail;
  for (double p : {0.05, 0.10, 0.20}) {
    const Matrix dirty = apply_salt_pepper(clean, p, derive_seed(8, static_cast<std::uint64_t>(p * 100)));
    const long k = std::lround(std::floor(p * 1110 + 0.5));
    const long changed = (dirty.array() != clean.array()).count();
    const long salt = (dirty.array() == 255.0).count();
    const long pepper = (dirty.array() == 0.0).count();
    const bool good = changed == k && salt == (k + 1) / 2 && pepper == k / 2;
    ok = ok && good;
    detail += "S&P " + num(p) + ": " + std::to_string(changed) + "/" + std::to_string(k) + " px, " +
              std::to_string(salt) + " salt; ";
  }
  for (int b : {10, 12, 14}) {
    for (std::uint64_t s = 0; s < 50; ++s) {
      Matrix img = random_matrix(37, 30, s, 0.0, 254.0);
      const Matrix before = img;
      const BlockPlacement at = block_inplace(img, b, s);
      const bool inside = at.row >= 0 && at.col >= 0 && at.row + b <= 37 && at.col + b <= 30;
      const Matrix region = img.block(at.row, at.col, b, b);
      Matrix outside = img;
      outside.block(at.row, at.col, b, b) = before.block(at.row, at.col, b, b);
      ok = ok && inside && (region.array() == 255.0).all() && outside == before &&
           (img.array() != before.array()).count() == b * b;
    }
  }
  const double fraction = 100.0 * (apply_block(clean, 10, 1).array() != clean.array()).count() / 1110.0;
  ok = ok && std::abs(fraction - 100.0 * 100.0 / 1110.0) < 1e-12 && std::round(fraction) == 9.0;
  detail += "blocks 10/12/14 single in-bounds region; block-10 area " + num(fraction, 4) + "% (~9%)";
  return check(ok, detail);
}

// 9
Verdict grid_determinism() {
  TempDir dir("accept_det");
  SyntheticSpec spec;
  spec.subjects = 4;
  spec.per_subject = 6;
  spec.shape = {20, 16};
  write_synthetic_corpus(dir.path() / "corpus", spec);

  RunConfig cfg;
  cfg.dataset = dir.path() / "corpus";
  cfg.repeats = 2;
  for (auto& [a, s] : cfg.stopping) s.max_iterations = 60;
  cfg.kmeans.restarts = 3;
  const Corpus corpus = load_dataset(cfg);

  std::vector<std::string> csv;
  for (bool timing : {false, false, true, true}) {
    cfg.timing = timing;
    cfg.out = dir.path() / ("run" + std::to_string(csv.size()));
    run_grid(cfg, corpus);
    csv.push_back(slurp(cfg.out / "metrics.csv"));
  }
  const auto strip_seconds = [](const std::string& text) {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
    return out;
  };
  const bool bytes = csv[0] == csv[1];
  const bool timed = strip_seconds(csv[2]) == strip_seconds(csv[0]) && strip_seconds(csv[3]) == strip_seconds(csv[0]);
  return check(bytes && timed && !csv[0].empty(),
               std::string("metrics.csv byte-identical across runs (timing off): ") + (bytes ? "yes" : "no") +
                   "; identical apart from wall-clock seconds (timing on): " + (timed ? "yes" : "no") + "; " +
                   std::to_string(std::count(csv[0].begin(), csv[0].end(), '\n') - 1) + " rows");
}

// 10
Verdict orl_reference() {
  const char* env = std::getenv("ROBNMF_ORL_DIR");
  const std::filesystem::path root = env ? env : "data/orl";
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    return {Outcome::skip, "ORL corpus not found (set ROBNMF_ORL_DIR to the directory holding s1..s40)"};
  }
  TempDir dir("accept_orl");
  RunConfig cfg;
  apply_setting(cfg, "dataset", root.string());
  apply_setting(cfg, "preset", "orl");
  cfg.algorithms = {Algorithm::standard};
  cfg.noise = {NoiseSpec::clean(), NoiseSpec::salt_pepper(0.10), NoiseSpec::salt_pepper(0.20), NoiseSpec::block(14)};
  cfg.rank = 40;
  cfg.repeats = 5;
  cfg.fraction = 0.9;
  cfg.stopping[Algorithm::standard].max_iterations = 5000;
  cfg.out = dir.path();
  const Corpus corpus = load_dataset(cfg);
  const MetricsReport r = run_grid(cfg, corpus);
  const auto acc = [&](const char* n) { return 100 * r.find(Algorithm::standard, n)->acc.mean; };
  const double clean_acc = acc("clean");
  const double clean_rre = 100 * r.find(Algorithm::standard, "clean")->rre.mean;
  const bool band = std::abs(clean_acc - 71.56) <= 8.0 && std::abs(clean_rre - 12.59) <= 2.0;
  const bool trend = clean_acc > acc("salt_pepper:0.1") && acc("salt_pepper:0.1") > acc("salt_pepper:0.2") &&
                     acc("salt_pepper:0.2") > acc("block:14");
  return check(band && trend && !r.any_failed(),
               "clean ACC " + num(clean_acc, 4) + "% (71.56 +/- 8), RRE " + num(clean_rre, 4) +
                   "% (12.59 +/- 2); ACC clean > S&P10 > S&P20 > block14: " + num(clean_acc, 4) + " > " +
                   num(acc("salt_pepper:0.1"), 4) + " > " + num(acc("salt_pepper:0.2"), 4) + " > " +
                   num(acc("block:14"), 4) + (trend ? " holds" : " violated"));
}

// 11
Verdict study_shape() {
  TempDir dir("accept_study");
  SyntheticSpec spec;
  spec.subjects = 5;
  spec.per_subject = 8;
  spec.shape = {24, 20};
  write_synthetic_corpus(dir.path() / "corpus", spec);
  RunConfig cfg;
  cfg.dataset = dir.path() / "corpus";
  cfg.fraction = 0.9;
  cfg.kmeans.restarts = 3;
  const Corpus corpus = load_dataset(cfg);
  const std::vector<int> checkpoints{100, 500, 1000, 2000};
  const auto rows = iteration_study(cfg, corpus, Algorithm::l21, NoiseSpec::salt_pepper(0.20), checkpoints);
  bool time_up = true, delta_down = true;
  std::string detail = "w_delta";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail += " " + num(rows[i].w_delta);
    if (i == 0) continue;
    time_up = time_up && rows[i].minutes > rows[i - 1].minutes;
    delta_down = delta_down && rows[i].w_delta <= rows[i - 1].w_delta;
  }
  return check(rows.size() == checkpoints.size() && time_up && delta_down,
               detail + " at steps 100/500/1000/2000; cumulative time strictly increasing: " + (time_up ? "yes" : "no") +
                   ", w_delta non-increasing: " + (delta_down ? "yes" : "no"));
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {"1  monotone descent, standard NMF", monotone_standard},
      {"2  monotone descent, L2,1-NMF", monotone_l21},
      {"3  HCNMF Armijo certificates", hcnmf_certificates},
      {"4  hypersurface gradient vs finite differences", gradient_oracle},
      {"5  planted rank-3 recovery", planted_recovery},
      {"6  label alignment vs exhaustive permutations", alignment_oracle},
      {"7  metric identities", metric_identities},
      {"8  noise exactness", noise_exactness},
      {"9  grid determinism", grid_determinism},
      {"10 ORL reference band and trend", orl_reference},
      {"11 iteration-study shape", study_shape},
  };

  int failed = 0, skipped = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIP";
    failed += v.outcome == Outcome::fail;
    skipped += v.outcome == Outcome::skip;
    std::cout << "[" << tag << "] " << c.name << ": " << v.detail << std::endl;
  }
  std::cout << criteria.size() - failed - skipped << " passed, " << failed << " failed, " << skipped << " skipped\n";
  return failed == 0 ? 0 : 1;
}
