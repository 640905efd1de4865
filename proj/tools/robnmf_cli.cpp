// robnmf: benchmark CLI for standard, hypersurface-cost and L2,1 NMF on noisy image corpora.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "robnmf/robnmf.hpp"

namespace fs = std::filesystem;
using namespace robnmf;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kDatasetError = 2, kFailedCell = 3 };

/// Options shared by every experiment subcommand; each maps to a config key.
struct CommonOptions {
  std::string config_file;
  std::vector<std::pair<std::string, CLI::Option*>> flags;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "flat key = value config file")->check(CLI::ExistingFile);
    const std::vector<std::pair<std::string, std::string>> keys = {
        {"dataset", "corpus root directory"},
        {"layout", "label rule: parent-dir | filename-prefix"},
        {"preset", "orl (37x30, parent-dir) | yaleb (48x42, filename-prefix)"},
        {"pattern", "file name glob (default *.pgm)"},
        {"height", "resize target height"},
        {"width", "resize target width"},
        {"algorithms", "comma list of standard, hcnmf, l21"},
        {"noise", "comma list: clean, sp:0.05, block:10, ..."},
        {"rank", "factor rank (default: number of subjects)"},
        {"max-iters", "iteration cap, N or standard=N,hcnmf=M,l21=K"},
        {"tol", "relative objective tolerance, same syntax as --max-iters"},
        {"repeats", "repeats per cell"},
        {"fraction", "subsample fraction in (0, 1]"},
        {"seed", "master seed"},
        {"workers", "parallel cells"},
        {"out", "output directory"},
        {"dump-recon", "write reconstructed images (true/false)"},
        {"timing", "record wall-clock seconds (true/false)"},
        {"kmeans-restarts", "k-means restarts"},
    };
    for (const auto& [key, help] : keys) flags.emplace_back(key, app->add_option("--" + key, values[key], help));
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    for (const auto& [key, opt] : flags)
      if (opt->count() > 0) apply_setting(cfg, key, values.at(key));
    cfg.validate();
    return cfg;
  }
};

Corpus load_or_throw(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("no dataset given (--dataset or dataset = ...)");
  return load_dataset(cfg);
}

int cmd_grid(const RunConfig& cfg) {
  const Corpus corpus = load_or_throw(cfg);
  std::cerr << "loaded " << corpus.data.n_images() << " images of " << corpus.shape.height << "x"
            << corpus.shape.width << ", " << corpus.subjects.size() << " subjects\n";
  const MetricsReport report = run_grid(cfg, corpus);
  std::cout << "wrote " << (cfg.out / "metrics.csv").string() << " and " << (cfg.out / "report.md").string()
            << " (" << report.runs.size() << " runs, config " << report.config_hash << ")\n";
  return report.any_failed() ? kFailedCell : kOk;
}

int cmd_study(const RunConfig& cfg, const std::string& checkpoints_text) {
  std::vector<int> checkpoints;
  for (const auto& s : detail::split(checkpoints_text, ',')) checkpoints.push_back(detail::parse_number<int>("checkpoints", s));
  const Corpus corpus = load_or_throw(cfg);
  const auto rows = iteration_study(cfg, corpus, cfg.algorithms.front(), cfg.noise.front(), checkpoints);
  fs::create_directories(cfg.out);
  std::ofstream csv(cfg.out / "study.csv");
  write_study_csv(csv, rows);
  std::ofstream md(cfg.out / "study.md");
  write_study_md(md, cfg.hash(), rows);
  write_study_md(std::cout, cfg.hash(), rows);
  return kOk;
}

int cmd_corrupt(const RunConfig& cfg) {
  const Corpus corpus = load_or_throw(cfg);
  for (const NoiseSpec& n : cfg.noise) {
    NoiseSpec seeded = n;
    seeded.seed = cell_seeds(cfg.seed, n, 0).noise;
    const DataMatrix dirty = corrupt_dataset(corpus.data, seeded, corpus.shape);
    std::string label = noise_label(n);
    std::replace(label.begin(), label.end(), ':', '-');
    const fs::path dir = cfg.out / "corrupt" / label;
    fs::create_directories(dir);
    for (Eigen::Index c = 0; c < dirty.n_images(); ++c) {
      const auto& file = corpus.files[static_cast<std::size_t>(c)];
      const std::string name = corpus.subjects[static_cast<std::size_t>(dirty.labels[static_cast<std::size_t>(c)])] +
                               "_" + file.stem().string() + ".pgm";
      write_pgm(dir / name, unflatten(dirty.values.col(c), corpus.shape));
    }
    std::cout << label << ": " << dirty.n_images() << " images -> " << dir.string() << '\n';
  }
  return kOk;
}

int cmd_factorize(const RunConfig& cfg) {
  const Corpus corpus = load_or_throw(cfg);
  const Algorithm a = cfg.algorithms.front();
  const NoiseSpec& n = cfg.noise.front();
  CellResult cell = run_cell(corpus.data, corpus.shape, n, a, cfg, 0, true);
  fs::create_directories(cfg.out);
  write_trace_csv(cfg.out / "trace.csv", cell.trace);
  if (cell.failed()) {
    std::cerr << "factorization failed: " << *cell.error << '\n';
    return kFailedCell;
  }
  write_matrix_csv(cfg.out / "W.csv", cell.factors->W);
  write_matrix_csv(cfg.out / "H.csv", cell.factors->H);
  if (cfg.dump_recon) dump_reconstruction(cfg.out / "recon", *cell.factors, corpus.shape);
  std::cout << to_string(a) << " on " << noise_label(n) << ": iterations " << cell.iterations
            << (cell.converged ? " (converged)" : " (cap reached)") << ", RRE " << detail::fixed(100 * cell.metrics.rre, 2)
            << "%, ACC " << detail::fixed(100 * cell.metrics.acc, 2) << "%, NMI "
            << detail::fixed(100 * cell.metrics.nmi, 2) << "%\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robustness benchmark for standard, HCNMF and L2,1 non-negative matrix factorization"};
  app.require_subcommand(1);

  CommonOptions grid_opts, study_opts, corrupt_opts, factorize_opts;
  auto* grid = app.add_subcommand("grid", "noise x algorithm x repeat grid with metric tables");
  grid_opts.attach(grid);
  auto* study = app.add_subcommand("study", "metrics at iteration checkpoints of a single run");
  study_opts.attach(study);
  std::string checkpoints = "1000,5000,10000,20000";
  study->add_option("--checkpoints", checkpoints, "strictly increasing iteration list");
  auto* corrupt = app.add_subcommand("corrupt", "write corrupted copies of the corpus as PGM");
  corrupt_opts.attach(corrupt);
  auto* factorize = app.add_subcommand("factorize", "single factorization, exports W, H and trace");
  factorize_opts.attach(factorize);

  SyntheticSpec synth_spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a small synthetic PGM corpus");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--subjects", synth_spec.subjects);
  synth->add_option("--per-subject", synth_spec.per_subject);
  synth->add_option("--height", synth_spec.shape.height);
  synth->add_option("--width", synth_spec.shape.width);
  synth->add_option("--seed", synth_spec.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  RunConfig cfg;
  try {
    if (*grid) cfg = grid_opts.resolve();
    if (*study) cfg = study_opts.resolve();
    if (*corrupt) cfg = corrupt_opts.resolve();
    if (*factorize) cfg = factorize_opts.resolve();
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (*grid) return cmd_grid(cfg);
    if (*study) return cmd_study(cfg, checkpoints);
    if (*corrupt) return cmd_corrupt(cfg);
    if (*factorize) return cmd_factorize(cfg);
    if (*synth) {
      write_synthetic_corpus(synth_out, synth_spec);
      std::cout << "wrote " << synth_spec.subjects * synth_spec.per_subject << " images to " << synth_out << '\n';
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParseError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kDatasetError;
  } catch (const DimensionError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kDatasetError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailedCell;
  }
  return kOk;
}
