#pragma once

// Benchmark protocol: noise grid x algorithm grid x repeated subsamples, with
// metric tables, convergence traces and reconstructed-image dumps.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dataset.hpp"
#include "error.hpp"
#include "factorization.hpp"
#include "matrix_io.hpp"
#include "metrics.hpp"
#include "noise.hpp"
#include "seed.hpp"
#include "types.hpp"

namespace robnmf {

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
  std::filesystem::path dataset;
  LabelRule layout = LabelRule::parent_dir;
  std::string pattern = "*.pgm";
  std::optional<ImageShape> resize;

  std::vector<Algorithm> algorithms{Algorithm::standard, Algorithm::hcnmf, Algorithm::l21};
  std::vector<NoiseSpec> noise{NoiseSpec::clean(),           NoiseSpec::block(10),
                               NoiseSpec::block(12),         NoiseSpec::block(14),
                               NoiseSpec::salt_pepper(0.05), NoiseSpec::salt_pepper(0.10),
                               NoiseSpec::salt_pepper(0.20)};
  std::optional<int> rank;
  std::map<Algorithm, StoppingRule> stopping{{Algorithm::standard, StoppingRule::defaults_for(Algorithm::standard)},
                                             {Algorithm::hcnmf, StoppingRule::defaults_for(Algorithm::hcnmf)},
                                             {Algorithm::l21, StoppingRule::defaults_for(Algorithm::l21)}};
  ArmijoParams armijo{};
  KMeansParams kmeans{};

  int repeats = 5;
  double fraction = 0.9;
  bool stratified = false;
  std::uint64_t seed = 0;

  // Execution only; these do not change results and are excluded from the hash.
  int workers = 1;
  std::filesystem::path out = "results";
  bool dump_recon = false;
  bool timing = true;

  const StoppingRule& stop_for(Algorithm a) const { return stopping.at(a); }

  void validate() const {
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
    if (algorithms.empty()) throw ConfigError("no algorithms selected");
    if (noise.empty()) throw ConfigError("no noise settings selected");
    if (rank && *rank < 1) throw ConfigError("rank must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (resize && (resize->height < 1 || resize->width < 1)) throw ConfigError("resize target must be positive");
    for (const auto& [a, s] : stopping) s.validate();
  }

  /// Every result-affecting setting in a fixed order.
  std::string canonical() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "dataset=" << dataset.generic_string() << '\n'
       << "layout=" << to_string(layout) << '\n'
       << "pattern=" << pattern << '\n';
    if (resize) os << "height=" << resize->height << "\nwidth=" << resize->width << '\n';
    os << "algorithms=";
    for (std::size_t i = 0; i < algorithms.size(); ++i) os << (i ? "," : "") << to_string(algorithms[i]);
    os << "\nnoise=";
    for (std::size_t i = 0; i < noise.size(); ++i) os << (i ? "," : "") << noise_label(noise[i]);
    os << "\nrank=" << (rank ? std::to_string(*rank) : "auto") << '\n';
    for (const auto& [a, s] : stopping) {
      os << "stop." << to_string(a) << '=' << s.max_iterations << ',' << s.relative_objective_tolerance << ','
         << s.epsilon_guard << '\n';
    }
    os << "armijo=" << armijo.initial_step << ',' << armijo.shrink << ',' << armijo.c << ',' << armijo.max_backtracks
       << '\n'
       << "kmeans=" << kmeans.restarts << ',' << kmeans.max_iterations << '\n'
       << "repeats=" << repeats << "\nfraction=" << fraction << "\nstratified=" << stratified
       << "\nseed=" << seed << '\n';
    return os.str();
  }

  std::string hash() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(canonical());
    return os.str();
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    auto part = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!part.empty()) out.push_back(std::move(part));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T x{};
  is >> x;
  if (!is || !(is >> std::ws).eof()) throw ConfigError("bad value for '" + key + "': '" + value + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "off" || value == "no") return false;
  throw ConfigError("bad boolean for '" + key + "': '" + value + "'");
}

/// "N" applies to every algorithm; "standard=N,hcnmf=M" targets individual ones.
template <class Apply>
void per_algorithm(const std::string& key, const std::string& value, Apply&& apply) {
  if (value.find('=') == std::string::npos) {
    for (Algorithm a : {Algorithm::standard, Algorithm::hcnmf, Algorithm::l21}) apply(a, value);
    return;
  }
  for (const auto& item : split(value, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("bad value for '" + key + "': '" + item + "'");
    apply(parse_algorithm(trim(item.substr(0, eq))), trim(item.substr(eq + 1)));
  }
}

}  // namespace detail

/// Apply one `key = value` setting. Keys use underscores; dashes are accepted too.
inline void apply_setting(RunConfig& cfg, std::string key, const std::string& raw) {
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string value = detail::trim(raw);
  using detail::parse_number;

  if (key == "dataset") {
    cfg.dataset = value;
  } else if (key == "layout") {
    cfg.layout = parse_label_rule(value);
  } else if (key == "pattern") {
    cfg.pattern = value;
  } else if (key == "height" || key == "width") {
    if (!cfg.resize) cfg.resize = ImageShape{};
    (key == "height" ? cfg.resize->height : cfg.resize->width) = parse_number<Eigen::Index>(key, value);
  } else if (key == "preset") {
    if (value == "orl") {
      cfg.layout = LabelRule::parent_dir;
      cfg.resize = ImageShape{37, 30};
    } else if (value == "yaleb") {
      cfg.layout = LabelRule::filename_prefix;
      cfg.resize = ImageShape{48, 42};
    } else {
      throw ConfigError("unknown preset '" + value + "' (expected orl or yaleb)");
    }
  } else if (key == "algorithms") {
    cfg.algorithms.clear();
    for (const auto& a : detail::split(value, ',')) cfg.algorithms.push_back(parse_algorithm(a));
  } else if (key == "noise") {
    cfg.noise.clear();
    for (const auto& n : detail::split(value, ',')) cfg.noise.push_back(parse_noise(n));
  } else if (key == "rank") {
    if (value == "auto") {
      cfg.rank.reset();
    } else {
      cfg.rank = parse_number<int>(key, value);
    }
  } else if (key == "max_iters") {
    detail::per_algorithm(key, value, [&](Algorithm a, const std::string& v) {
      cfg.stopping[a].max_iterations = parse_number<int>(key, v);
    });
  } else if (key == "tol") {
    detail::per_algorithm(key, value, [&](Algorithm a, const std::string& v) {
      cfg.stopping[a].relative_objective_tolerance = v == "inf" ? std::numeric_limits<double>::infinity()
                                                                : parse_number<double>(key, v);
    });
  } else if (key == "guard") {
    detail::per_algorithm(key, value, [&](Algorithm a, const std::string& v) {
      cfg.stopping[a].epsilon_guard = parse_number<double>(key, v);
    });
  } else if (key == "armijo_step") {
    cfg.armijo.initial_step = parse_number<double>(key, value);
  } else if (key == "armijo_shrink") {
    cfg.armijo.shrink = parse_number<double>(key, value);
  } else if (key == "armijo_backtracks") {
    cfg.armijo.max_backtracks = parse_number<int>(key, value);
  } else if (key == "kmeans_restarts") {
    cfg.kmeans.restarts = parse_number<int>(key, value);
  } else if (key == "kmeans_max_iters") {
    cfg.kmeans.max_iterations = parse_number<int>(key, value);
  } else if (key == "repeats") {
    cfg.repeats = parse_number<int>(key, value);
  } else if (key == "fraction") {
    cfg.fraction = parse_number<double>(key, value);
  } else if (key == "stratified") {
    cfg.stratified = detail::parse_bool(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "workers") {
    cfg.workers = parse_number<int>(key, value);
  } else if (key == "out") {
    cfg.out = value;
  } else if (key == "dump_recon") {
    cfg.dump_recon = detail::parse_bool(key, value);
  } else if (key == "timing") {
    cfg.timing = detail::parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

/// Flat `key = value` lines; '#' starts a comment.
inline void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& source = "<config>") {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(cfg, detail::trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const Error& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

inline Corpus load_dataset(const RunConfig& cfg) {
  CorpusLayout layout;
  layout.root = cfg.dataset;
  layout.label_rule = cfg.layout;
  layout.pattern = cfg.pattern;
  layout.target = cfg.resize;
  return load_corpus(layout);
}

// ---------------------------------------------------------------------------
// Seeds. Each stream gets its own tag so that changing one setting never
// reshuffles another stream; none depends on the algorithm.

namespace seed_tag {
inline constexpr std::uint64_t subsample = 0x5355425341ULL;
inline constexpr std::uint64_t noise = 0x4e4f495345ULL;
inline constexpr std::uint64_t init = 0x494e4954ULL;
inline constexpr std::uint64_t kmeans = 0x4b4d45414e53ULL;
}  // namespace seed_tag

struct CellSeeds {
  std::uint64_t subsample;
  std::uint64_t noise;
  std::uint64_t init;
  std::uint64_t kmeans;
};

inline CellSeeds cell_seeds(std::uint64_t master, const NoiseSpec& noise, int repeat) {
  const auto r = static_cast<std::uint64_t>(repeat);
  const std::uint64_t cell = fnv1a(noise_label(noise));
  return {derive_seed(master, seed_tag::subsample, r), derive_seed(master, seed_tag::noise, r, cell),
          derive_seed(master, seed_tag::init, r, cell), derive_seed(master, seed_tag::kmeans, r, cell)};
}

/// Clean subsample and its corrupted copy for one (noise, repeat) cell.
struct PreparedData {
  DataMatrix clean;
  DataMatrix corrupted;
  CellSeeds seeds;
};

inline PreparedData prepare_cell_data(const DataMatrix& v_clean, ImageShape shape, const NoiseSpec& noise,
                                      const RunConfig& cfg, int repeat) {
  PreparedData d;
  d.seeds = cell_seeds(cfg.seed, noise, repeat);
  d.clean = cfg.fraction >= 1.0 ? v_clean : subsample(v_clean, cfg.fraction, d.seeds.subsample, cfg.stratified);
  NoiseSpec seeded = noise;
  seeded.seed = d.seeds.noise;
  d.corrupted = corrupt_dataset(d.clean, seeded, shape);
  return d;
}

// ---------------------------------------------------------------------------
// Cells

struct CellMetrics {
  double rre = 0.0;
  double acc = 0.0;
  double nmi = 0.0;
};

/// RRE against clean data, then k-means on H, Hungarian alignment, accuracy and NMI.
inline CellMetrics evaluate(const DataMatrix& clean, const FactorPair& f, std::uint64_t kmeans_seed,
                            const KMeansParams& kmeans) {
  CellMetrics m;
  m.rre = rre(clean, f);
  const int k = clean.n_classes();
  const ClusterAssignment clusters = cluster_coefficients(f.H, k, kmeans_seed, kmeans);
  m.acc = accuracy(clean.labels, align_labels(clean.labels, clusters.labels));
  m.nmi = nmi(clean.labels, clusters.labels);
  return m;
}

struct CellResult {
  Algorithm algorithm = Algorithm::standard;
  NoiseSpec noise;
  int repeat = 0;
  CellMetrics metrics;
  int iterations = 0;
  bool converged = false;
  double seconds = 0.0;
  ConvergenceTrace trace;
  std::optional<std::string> error;
  /// Present when requested (reconstruction dumps, factor export).
  std::optional<FactorPair> factors;

  bool failed() const noexcept { return error.has_value(); }
};

inline std::string cell_name(Algorithm a, const NoiseSpec& noise, int repeat) {
  std::string label = noise_label(noise);
  std::replace(label.begin(), label.end(), ':', '-');
  return std::string(to_string(a)) + "_" + label + "_r" + std::to_string(repeat);
}

inline Eigen::Index effective_rank(const RunConfig& cfg, const DataMatrix& data) {
  return cfg.rank ? *cfg.rank : data.n_classes();
}

inline CellResult run_cell(const DataMatrix& v_clean, ImageShape shape, const NoiseSpec& noise, Algorithm algorithm,
                           const RunConfig& cfg, int repeat, bool keep_factors = false) {
  CellResult cell;
  cell.algorithm = algorithm;
  cell.noise = noise;
  cell.repeat = repeat;
  try {
    const PreparedData data = prepare_cell_data(v_clean, shape, noise, cfg, repeat);
    RunOptions opts;
    opts.armijo = cfg.armijo;

    const auto t0 = std::chrono::steady_clock::now();
    FactorizationResult run = run_factorization(data.corrupted, algorithm, effective_rank(cfg, data.clean),
                                                cfg.stop_for(algorithm), data.seeds.init, opts);
    const auto t1 = std::chrono::steady_clock::now();

    cell.seconds = cfg.timing ? std::chrono::duration<double>(t1 - t0).count() : 0.0;
    cell.iterations = run.trace.iterations_run;
    cell.converged = run.trace.converged;
    cell.error = run.trace.error;
    if (!cell.error) cell.metrics = evaluate(data.clean, run.factors, data.seeds.kmeans, cfg.kmeans);
    cell.trace = std::move(run.trace);
    if (keep_factors) cell.factors = std::move(run.factors);
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

// ---------------------------------------------------------------------------
// Aggregation

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return {std::nan(""), std::nan("")};
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.std += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(xs.size()));
  return s;
}

struct CellSummary {
  Algorithm algorithm = Algorithm::standard;
  NoiseSpec noise;
  Summary rre, acc, nmi;
  double mean_iterations = 0.0;
  int converged = 0;
  int runs = 0;
  int failed = 0;
  double mean_seconds = 0.0;
};

struct MetricsReport {
  std::string config_hash;
  std::vector<CellResult> runs;       // ordered (algorithm, noise, repeat)
  std::vector<CellSummary> summaries;  // ordered (algorithm, noise)

  bool any_failed() const {
    return std::any_of(runs.begin(), runs.end(), [](const CellResult& c) { return c.failed(); });
  }

  const CellSummary* find(Algorithm a, const std::string& noise) const {
    for (const auto& s : summaries)
      if (s.algorithm == a && noise_label(s.noise) == noise) return &s;
    return nullptr;
  }
};

inline std::vector<CellSummary> summarize_cells(const RunConfig& cfg, const std::vector<CellResult>& runs) {
  std::vector<CellSummary> out;
  for (Algorithm a : cfg.algorithms) {
    for (const NoiseSpec& n : cfg.noise) {
      CellSummary s;
      s.algorithm = a;
      s.noise = n;
      std::vector<double> rre, acc, nmi;
      double iters = 0.0, secs = 0.0;
      for (const auto& r : runs) {
        if (r.algorithm != a || noise_label(r.noise) != noise_label(n)) continue;
        ++s.runs;
        if (r.failed()) {
          ++s.failed;
          continue;
        }
        rre.push_back(r.metrics.rre);
        acc.push_back(r.metrics.acc);
        nmi.push_back(r.metrics.nmi);
        iters += r.iterations;
        secs += r.seconds;
        s.converged += r.converged;
      }
      s.rre = summarize(rre);
      s.acc = summarize(acc);
      s.nmi = summarize(nmi);
      const auto ok = static_cast<double>(rre.size());
      s.mean_iterations = ok > 0 ? iters / ok : 0.0;
      s.mean_seconds = ok > 0 ? secs / ok : 0.0;
      out.push_back(s);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output files

inline void write_trace_csv(const std::filesystem::path& path, const ConvergenceTrace& t) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << std::setprecision(17) << "iter,objective,w_delta,h_delta\n";
  out << 0 << ',' << t.initial_objective << ",,\n";
  for (std::size_t i = 0; i < t.objective.size(); ++i)
    out << i + 1 << ',' << t.objective[i] << ',' << t.w_delta[i] << ',' << t.h_delta[i] << '\n';
}

inline void write_metrics_csv(std::ostream& out, const std::vector<CellResult>& runs) {
  out << std::setprecision(17) << "algorithm,noise_kind,noise_param,repeat,rre,acc,nmi,iters,converged,seconds\n";
  for (const auto& r : runs) {
    out << to_string(r.algorithm) << ',' << to_string(r.noise.kind) << ',' << r.noise.param() << ',' << r.repeat
        << ',';
    if (r.failed()) {
      out << "nan,nan,nan";
    } else {
      out << r.metrics.rre << ',' << r.metrics.acc << ',' << r.metrics.nmi;
    }
    out << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ',' << r.seconds << '\n';
  }
}

namespace detail {

inline std::string fixed(double x, int digits) {
  if (!std::isfinite(x)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

/// "71.56(0.026)": mean in percent, population std as a fraction.
inline std::string mean_std(const Summary& s) { return fixed(100.0 * s.mean, 2) + "(" + fixed(s.std, 3) + ")"; }

}  // namespace detail

inline void write_report_md(std::ostream& out, const RunConfig& cfg, const MetricsReport& report) {
  out << "# NMF robustness benchmark\n\n"
      << "config hash: `" << report.config_hash << "`  \n"
      << "repeats: " << cfg.repeats << ", subsample fraction: " << cfg.fraction << ", seed: " << cfg.seed << "\n\n"
      << "## Relative reconstruction error %, accuracy %, NMI % (std)\n\n| Noise |";
  for (const char* metric : {"RRE", "ACC", "NMI"})
    for (Algorithm a : cfg.algorithms) out << ' ' << metric << ' ' << to_string(a) << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < 3 * cfg.algorithms.size(); ++i) out << "---|";
  out << '\n';
  for (const NoiseSpec& n : cfg.noise) {
    out << "| " << noise_label(n) << " |";
    for (int metric = 0; metric < 3; ++metric) {
      for (Algorithm a : cfg.algorithms) {
        const CellSummary* s = report.find(a, noise_label(n));
        const Summary& m = metric == 0 ? s->rre : metric == 1 ? s->acc : s->nmi;
        out << ' ' << detail::mean_std(m) << " |";
      }
    }
    out << '\n';
  }

  out << "\n## Runs\n\nconfig hash: `" << report.config_hash << "`\n\n"
      << "| Algorithm | Noise | Mean iterations | Converged | Failed | Minutes per run |\n"
      << "|---|---|---|---|---|---|\n";
  for (const auto& s : report.summaries) {
    out << "| " << to_string(s.algorithm) << " | " << noise_label(s.noise) << " | " << detail::fixed(s.mean_iterations, 1)
        << " | " << s.converged << '/' << s.runs << " | " << s.failed << " | "
        << detail::fixed(s.mean_seconds / 60.0, 2) << " |\n";
  }

  bool header = false;
  for (const auto& r : report.runs) {
    if (!r.failed()) continue;
    if (!header) out << "\n## Failed runs\n\n";
    header = true;
    out << "- " << cell_name(r.algorithm, r.noise, r.repeat) << ": " << *r.error << '\n';
  }
}

inline void dump_reconstruction(const std::filesystem::path& dir, const FactorPair& f, ImageShape shape) {
  std::filesystem::create_directories(dir);
  const Matrix wh = f.W * f.H;
  for (Eigen::Index c = 0; c < wh.cols(); ++c) {
    std::ostringstream name;
    name << std::setw(5) << std::setfill('0') << c << ".pgm";
    write_pgm(dir / name.str(), unflatten(wh.col(c), shape));
  }
}

// ---------------------------------------------------------------------------
// Grid

/// Run fn(i) for i in [0, n) on up to `workers` threads. Results must be keyed by i.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

/// Execute every (algorithm, noise, repeat) cell and write metrics.csv, report.md,
/// traces/ and optionally recon/ under cfg.out.
inline MetricsReport run_grid(const RunConfig& cfg, const Corpus& corpus) {
  cfg.validate();
  namespace fs = std::filesystem;

  struct Task {
    Algorithm algorithm;
    NoiseSpec noise;
    int repeat;
  };
  std::vector<Task> tasks;
  for (Algorithm a : cfg.algorithms)
    for (const NoiseSpec& n : cfg.noise)
      for (int r = 0; r < cfg.repeats; ++r) tasks.push_back({a, n, r});

  fs::create_directories(cfg.out / "traces");
  MetricsReport report;
  report.config_hash = cfg.hash();
  report.runs.resize(tasks.size());

  std::mutex io_errors_mu;
  std::vector<std::string> io_errors;
  parallel_for(tasks.size(), cfg.workers, [&](std::size_t i) {
    const Task& t = tasks[i];
    CellResult cell = run_cell(corpus.data, corpus.shape, t.noise, t.algorithm, cfg, t.repeat, cfg.dump_recon);
    const std::string name = cell_name(t.algorithm, t.noise, t.repeat);
    try {
      write_trace_csv(cfg.out / "traces" / (name + ".csv"), cell.trace);
      if (cell.factors) dump_reconstruction(cfg.out / "recon" / name, *cell.factors, corpus.shape);
    } catch (const std::exception& e) {
      std::lock_guard lock(io_errors_mu);
      io_errors.push_back(e.what());
    }
    cell.factors.reset();
    report.runs[i] = std::move(cell);
  });
  if (!io_errors.empty()) throw Error(io_errors.front());

  report.summaries = summarize_cells(cfg, report.runs);

  std::ofstream csv(cfg.out / "metrics.csv");
  write_metrics_csv(csv, report.runs);
  std::ofstream md(cfg.out / "report.md");
  write_report_md(md, cfg, report);
  if (!csv || !md) throw Error((cfg.out / "metrics.csv").string() + ": write failed");
  return report;
}

// ---------------------------------------------------------------------------
// Iteration study

struct StudyRow {
  int step = 0;
  double w_delta = 0.0;
  double h_delta = 0.0;
  double minutes = 0.0;  // cumulative factorization time
  CellMetrics metrics;
};

/// One factorization (repeat 0 data and seeds) evaluated at each checkpoint without restarting.
/// The tolerance is ignored so the run reaches the last checkpoint unless the objective
/// stops changing exactly; later checkpoints then report the stationary factors.
inline std::vector<StudyRow> iteration_study(const RunConfig& cfg, const Corpus& corpus, Algorithm algorithm,
                                             const NoiseSpec& noise, const std::vector<int>& checkpoints) {
  cfg.validate();
  if (checkpoints.empty()) throw ConfigError("iteration study needs at least one checkpoint");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 1 || (i > 0 && checkpoints[i] <= checkpoints[i - 1]))
      throw ConfigError("checkpoints must be positive and strictly increasing");
  }

  const PreparedData data = prepare_cell_data(corpus.data, corpus.shape, noise, cfg, 0);
  StoppingRule stop = cfg.stop_for(algorithm);
  stop.max_iterations = checkpoints.back();
  stop.relative_objective_tolerance = 0.0;

  using clock = std::chrono::steady_clock;
  std::vector<StudyRow> rows;
  clock::duration training{};
  auto resumed = clock::now();
  std::size_t next = 0;

  const auto record = [&](int step, const FactorPair& f, double wd, double hd) {
    StudyRow row;
    row.step = step;
    row.w_delta = wd;
    row.h_delta = hd;
    row.minutes = std::chrono::duration<double>(training).count() / 60.0;
    row.metrics = evaluate(data.clean, f, data.seeds.kmeans, cfg.kmeans);
    rows.push_back(row);
  };

  RunOptions opts;
  opts.armijo = cfg.armijo;
  opts.observer = [&](int it, const FactorPair& f, const ConvergenceTrace& t) {
    if (next < checkpoints.size() && it == checkpoints[next]) {
      training += clock::now() - resumed;
      record(it, f, t.w_delta.back(), t.h_delta.back());
      ++next;
      resumed = clock::now();
    }
    return next < checkpoints.size();
  };
  FactorizationResult run = run_factorization(data.corrupted, algorithm, effective_rank(cfg, data.clean), stop,
                                              data.seeds.init, opts);
  if (run.trace.error) throw NumericError(*run.trace.error);
  if (next < checkpoints.size()) training += clock::now() - resumed;
  for (; next < checkpoints.size(); ++next) {
    // Stationary: later rows only add the remaining clock time.
    record(checkpoints[next], run.factors, 0.0, 0.0);
  }
  return rows;
}

inline void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
  out << std::setprecision(17) << "step,w_delta,h_delta,minutes,rre,acc,nmi\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.w_delta << ',' << r.h_delta << ',' << r.minutes << ',' << r.metrics.rre << ','
        << r.metrics.acc << ',' << r.metrics.nmi << '\n';
  }
}

inline void write_study_md(std::ostream& out, const std::string& config_hash, const std::vector<StudyRow>& rows) {
  out << "# Iteration impact\n\nconfig hash: `" << config_hash << "`\n\n"
      << "| Step | Update diff of W | Update diff of H | Training time (mins) | RRE % | Accuracy % | NMI % |\n"
      << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.step << " | " << detail::fixed(r.w_delta, 4) << " | " << detail::fixed(r.h_delta, 4) << " | "
        << detail::fixed(r.minutes, 2) << " | " << detail::fixed(100 * r.metrics.rre, 1) << " | "
        << detail::fixed(100 * r.metrics.acc, 1) << " | " << detail::fixed(100 * r.metrics.nmi, 1) << " |\n";
  }
}

}  // namespace robnmf
