#pragma once

// Small synthetic corpora with planted structure, for demos and tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "dataset.hpp"
#include "seed.hpp"
#include "types.hpp"

namespace robnmf {

struct SyntheticSpec {
  int subjects = 4;
  int per_subject = 6;
  ImageShape shape{12, 10};
  /// Relative per-image brightness jitter.
  double jitter = 0.15;
  std::uint64_t seed = 1;
};

/// Each subject is a distinct pair of Gaussian blobs on a dark background; every image of
/// the subject is that prototype with random brightness and a little pixel noise.
inline Image synthetic_image(const SyntheticSpec& spec, int subject, int index) {
  Rng proto(derive_seed(spec.seed, 0x50524f54ULL, static_cast<std::uint64_t>(subject)));
  const double h = static_cast<double>(spec.shape.height);
  const double w = static_cast<double>(spec.shape.width);
  double cy[2], cx[2];
  for (int b = 0; b < 2; ++b) {
    cy[b] = uniform_unit(proto) * h;
    cx[b] = uniform_unit(proto) * w;
  }
  const double radius = 0.18 * std::min(h, w) + 1.0;

  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(index)));
  const double gain = 1.0 - spec.jitter * uniform_unit(rng);
  Image img(spec.shape.height, spec.shape.width);
  for (Eigen::Index c = 0; c < img.cols(); ++c) {
    for (Eigen::Index r = 0; r < img.rows(); ++r) {
      double x = 20.0;
      for (int b = 0; b < 2; ++b) {
        const double d2 = (r - cy[b]) * (r - cy[b]) + (c - cx[b]) * (c - cx[b]);
        x += 200.0 * std::exp(-d2 / (2.0 * radius * radius));
      }
      x = gain * x + 4.0 * (uniform_unit(rng) - 0.5);
      img(r, c) = std::clamp(static_cast<int>(std::lround(x)), 0, 255);
    }
  }
  return img;
}

/// Writes root/s<k>/<i>.pgm, a parent-dir layout.
inline void write_synthetic_corpus(const std::filesystem::path& root, const SyntheticSpec& spec) {
  for (int s = 0; s < spec.subjects; ++s) {
    const auto dir = root / ("s" + std::to_string(s + 1));
    std::filesystem::create_directories(dir);
    for (int i = 0; i < spec.per_subject; ++i) write_pgm(dir / (std::to_string(i + 1) + ".pgm"), synthetic_image(spec, s, i));
  }
}

/// V = W* H* with W*, H* uniform (0, 1]; labels all zero.
inline DataMatrix planted_data(Eigen::Index rows, Eigen::Index cols, Eigen::Index rank, std::uint64_t seed,
                               FactorPair* truth = nullptr) {
  Rng rng(seed);
  FactorPair f{Matrix(rows, rank), Matrix(rank, cols)};
  for (Eigen::Index i = 0; i < f.W.size(); ++i) f.W.data()[i] = uniform_open_closed(rng);
  for (Eigen::Index i = 0; i < f.H.size(); ++i) f.H.data()[i] = uniform_open_closed(rng);
  if (truth) *truth = f;
  return DataMatrix(f.W * f.H, Labels(static_cast<std::size_t>(cols), 0));
}

}  // namespace robnmf
