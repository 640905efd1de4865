#pragma once

// Seeded salt-and-pepper and block-occlusion corruption of greyscale images.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "seed.hpp"
#include "types.hpp"

namespace robnmf {

inline constexpr double kSalt = 255.0;
inline constexpr double kPepper = 0.0;

struct ImageShape {
  Eigen::Index height = 0;
  Eigen::Index width = 0;

  Eigen::Index pixels() const noexcept { return height * width; }
  bool operator==(const ImageShape&) const = default;
};

enum class NoiseKind { clean, salt_pepper, block };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::clean;
  double p = 0.0;  // salt_pepper fraction
  int b = 0;       // block side
  std::uint64_t seed = 0;

  static NoiseSpec clean() { return {}; }
  static NoiseSpec salt_pepper(double p, std::uint64_t seed = 0) { return {NoiseKind::salt_pepper, p, 0, seed}; }
  static NoiseSpec block(int b, std::uint64_t seed = 0) { return {NoiseKind::block, 0.0, b, seed}; }

  double param() const noexcept {
    switch (kind) {
      case NoiseKind::salt_pepper: return p;
      case NoiseKind::block: return b;
      default: return 0.0;
    }
  }
};

inline std::string_view to_string(NoiseKind k) noexcept {
  switch (k) {
    case NoiseKind::clean: return "clean";
    case NoiseKind::salt_pepper: return "salt_pepper";
    case NoiseKind::block: return "block";
  }
  return "?";
}

/// "clean", "salt_pepper:0.05", "block:10". Seed is not part of the label.
inline std::string noise_label(const NoiseSpec& s) {
  std::ostringstream os;
  os << to_string(s.kind);
  if (s.kind == NoiseKind::salt_pepper) os << ':' << s.p;
  if (s.kind == NoiseKind::block) os << ':' << s.b;
  return os.str();
}

/// Accepts the labels produced by noise_label plus the short forms "sp:P" and "sp:P%".
inline NoiseSpec parse_noise(std::string_view text) {
  const auto colon = text.find(':');
  const std::string kind(text.substr(0, colon));
  const std::string arg = colon == std::string_view::npos ? "" : std::string(text.substr(colon + 1));
  auto number = [&](bool percent_ok) {
    std::string a = arg;
    bool percent = false;
    if (percent_ok && !a.empty() && a.back() == '%') {
      percent = true;
      a.pop_back();
    }
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(a, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (a.empty() || used != a.size()) throw ConfigError("bad noise parameter in '" + std::string(text) + "'");
    return percent ? x / 100.0 : x;
  };

  if (kind == "clean") {
    if (!arg.empty()) throw ConfigError("clean noise takes no parameter");
    return NoiseSpec::clean();
  }
  if (kind == "salt_pepper" || kind == "sp") {
    const double p = number(true);
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("salt-pepper fraction must lie in [0,1]");
    return NoiseSpec::salt_pepper(p);
  }
  if (kind == "block") {
    const double b = number(false);
    if (b < 1 || b != std::floor(b)) throw ConfigError("block side must be a positive integer");
    return NoiseSpec::block(static_cast<int>(b));
  }
  throw ConfigError("unknown noise kind '" + kind + "'");
}

/// Exactly round(p * n) distinct pixels are hit; the first ceil(k/2) become salt, the rest pepper.
/// Returns the linear (column-major) indices of the corrupted pixels.
template <class Derived>
std::vector<Eigen::Index> salt_pepper_inplace(Eigen::DenseBase<Derived>& image, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw DimensionError("salt-pepper fraction must lie in [0,1]");
  const Eigen::Index rows = image.rows();
  const Eigen::Index n = image.size();
  const auto k = static_cast<Eigen::Index>(std::floor(p * static_cast<double>(n) + 0.5));

  // Partial Fisher-Yates: the first k slots become a uniform sample without replacement.
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(seed);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(k));

  const Eigen::Index salt = (k + 1) / 2;
  using Scalar = typename Derived::Scalar;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index pos = idx[i];
    image.derived()(pos % rows, pos / rows) = static_cast<Scalar>(i < salt ? kSalt : kPepper);
  }
  return idx;
}

struct BlockPlacement {
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  Eigen::Index side = 0;
};

/// One b x b block of 255 with its top-left corner uniform over all in-bounds positions.
template <class Derived>
BlockPlacement block_inplace(Eigen::DenseBase<Derived>& image, int b, std::uint64_t seed) {
  if (b < 1 || b > image.rows() || b > image.cols()) {
    throw DimensionError("block side " + std::to_string(b) + " does not fit a " + std::to_string(image.rows()) +
                         "x" + std::to_string(image.cols()) + " image");
  }
  Rng rng(seed);
  BlockPlacement at;
  at.side = b;
  at.row = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(image.rows() - b + 1)));
  at.col = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(image.cols() - b + 1)));
  image.derived().block(at.row, at.col, b, b).setConstant(static_cast<typename Derived::Scalar>(kSalt));
  return at;
}

template <class Derived>
typename Derived::PlainObject apply_salt_pepper(const Eigen::DenseBase<Derived>& image, double p,
                                                std::uint64_t seed) {
  typename Derived::PlainObject out = image;
  salt_pepper_inplace(out, p, seed);
  return out;
}

template <class Derived>
typename Derived::PlainObject apply_block(const Eigen::DenseBase<Derived>& image, int b, std::uint64_t seed) {
  typename Derived::PlainObject out = image;
  block_inplace(out, b, seed);
  return out;
}

/// Per-image seed; depends only on the dataset seed and the column index.
inline std::uint64_t image_seed(std::uint64_t dataset_seed, Eigen::Index column) {
  return derive_seed(dataset_seed, static_cast<std::uint64_t>(column));
}

/// Corrupt every column independently, viewing it as a column-major height x width image.
inline DataMatrix corrupt_dataset(const DataMatrix& v, const NoiseSpec& spec, ImageShape shape) {
  if (shape.pixels() != v.n_pixels()) {
    throw DimensionError("image shape " + std::to_string(shape.height) + "x" + std::to_string(shape.width) +
                         " does not match " + std::to_string(v.n_pixels()) + " pixels per column");
  }
  DataMatrix out = v;
  if (spec.kind == NoiseKind::clean) return out;
  for (Eigen::Index c = 0; c < out.n_images(); ++c) {
    Eigen::Map<Matrix> img(out.values.col(c).data(), shape.height, shape.width);
    const auto seed = image_seed(spec.seed, c);
    if (spec.kind == NoiseKind::salt_pepper) {
      salt_pepper_inplace(img, spec.p, seed);
    } else {
      block_inplace(img, spec.b, seed);
    }
  }
  return out;
}

}  // namespace robnmf
