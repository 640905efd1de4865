#pragma once

// PGM I/O, box-filter downsampling, corpus loading and column subsampling.

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fnmatch.h>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "noise.hpp"
#include "seed.hpp"
#include "types.hpp"

namespace robnmf {

/// Greyscale image, height x width, integer pixel values.
using Image = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// PGM

namespace detail {

class PgmHeaderReader {
 public:
  PgmHeaderReader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) fail(field, "value too large");
      ++pos_;
    }
    if (pos_ == start) fail(field, "expected an unsigned integer");
    return value;
  }

  [[noreturn]] void fail(const char* field, const std::string& what) const {
    throw ParseError(source_ + ": PGM " + field + ": " + what);
  }

  std::size_t pos_ = 0;
  std::string_view bytes_;
  std::string source_;
};

}  // namespace detail

/// Parse a P2 (ASCII) or P5 (binary) greymap with maxval <= 255.
inline Image parse_pgm(std::string_view bytes, const std::string& source = "<memory>") {
  detail::PgmHeaderReader rd(bytes, source);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5')) {
    rd.fail("magic", "expected P2 or P5");
  }
  const bool binary = bytes[1] == '5';
  rd.pos_ = 2;
  if (rd.pos_ < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[rd.pos_])) && bytes[rd.pos_] != '#')
    rd.fail("magic", "expected whitespace after magic number");
  const long width = rd.read_uint("width");
  const long height = rd.read_uint("height");
  const long maxval = rd.read_uint("maxval");
  if (width < 1) rd.fail("width", "must be >= 1");
  if (height < 1) rd.fail("height", "must be >= 1");
  if (maxval < 1 || maxval > 255) rd.fail("maxval", "must lie in [1, 255]");

  Image img(height, width);
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (binary) {
    // Exactly one whitespace byte separates maxval from the raster.
    if (rd.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[rd.pos_])))
      rd.fail("raster", "missing separator after maxval");
    ++rd.pos_;
    if (bytes.size() - rd.pos_ < n)
      rd.fail("raster", "truncated: expected " + std::to_string(n) + " bytes, got " +
                            std::to_string(bytes.size() - rd.pos_));
    for (std::size_t i = 0; i < n; ++i) {
      const int px = static_cast<unsigned char>(bytes[rd.pos_ + i]);
      if (px > maxval) rd.fail("raster", "pixel exceeds maxval");
      img(static_cast<Eigen::Index>(i / width), static_cast<Eigen::Index>(i % width)) = px;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      rd.skip_space_and_comments();
      if (rd.pos_ >= bytes.size())
        rd.fail("raster", "truncated: expected " + std::to_string(n) + " pixels, got " + std::to_string(i));
      const long px = rd.read_uint("raster");
      if (px > maxval) rd.fail("raster", "pixel exceeds maxval");
      img(static_cast<Eigen::Index>(i / width), static_cast<Eigen::Index>(i % width)) = static_cast<int>(px);
    }
  }
  return img;
}

inline Image load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_pgm(bytes, path.string());
}

/// Binary P5, maxval 255. Values are clamped to [0, 255].
inline void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string() + ": cannot open for writing");
  out << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  std::string raster;
  raster.reserve(static_cast<std::size_t>(img.size()));
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) raster.push_back(static_cast<char>(std::clamp(img(r, c), 0, 255)));
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw ParseError(path.string() + ": write failed");
}

// ---------------------------------------------------------------------------
// Resize

namespace detail {

/// target x source weights; row t holds the overlap of source cells with output cell t,
/// normalized to sum to one.
inline Matrix box_weights(Eigen::Index source, Eigen::Index target) {
  Matrix w = Matrix::Zero(target, source);
  const double scale = static_cast<double>(source) / static_cast<double>(target);
  for (Eigen::Index t = 0; t < target; ++t) {
    const double lo = t * scale;
    const double hi = (t + 1) * scale;
    for (auto s = static_cast<Eigen::Index>(std::floor(lo)); s < source && s < hi; ++s) {
      const double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
      if (overlap > 0.0) w(t, s) = overlap;
    }
    w.row(t) /= w.row(t).sum();
  }
  return w;
}

}  // namespace detail

/// Area-averaging downsample; output rounded to nearest and clamped to [0, 255].
inline Image resize_box(const Image& img, Eigen::Index target_h, Eigen::Index target_w) {
  if (target_h < 1 || target_w < 1) throw DimensionError("resize target must be at least 1x1");
  if (target_h > img.rows() || target_w > img.cols()) {
    throw UnsupportedError("resize_box only downsamples: " + std::to_string(img.rows()) + "x" +
                           std::to_string(img.cols()) + " -> " + std::to_string(target_h) + "x" +
                           std::to_string(target_w));
  }
  if (target_h == img.rows() && target_w == img.cols()) return img;
  const Matrix ry = detail::box_weights(img.rows(), target_h);
  const Matrix rx = detail::box_weights(img.cols(), target_w);
  const Matrix out = ry * img.cast<double>() * rx.transpose();
  // Snap values within rounding noise of an integer before rounding half up.
  return out.unaryExpr([](double x) {
              const double snapped = std::abs(x - std::round(x)) < 1e-9 ? std::round(x) : x;
              return std::clamp(static_cast<int>(std::floor(snapped + 0.5)), 0, 255);
            })
      .eval();
}

// ---------------------------------------------------------------------------
// Column <-> image

inline Vector flatten(const Image& img) {
  return Eigen::Map<const Image>(img.data(), img.size(), 1).cast<double>();
}

/// Column-major reshape of a pixel column back to an image, rounded and clamped.
inline Image unflatten(const Eigen::Ref<const Vector>& column, ImageShape shape) {
  if (column.size() != shape.pixels()) throw DimensionError("column length does not match image shape");
  Image img(shape.height, shape.width);
  for (Eigen::Index i = 0; i < column.size(); ++i) {
    const double x = column(i);
    img.data()[i] = std::isfinite(x) ? std::clamp(static_cast<int>(std::lround(std::clamp(x, 0.0, 255.0))), 0, 255) : 0;
  }
  return img;
}

// ---------------------------------------------------------------------------
// Corpus

enum class LabelRule { parent_dir, filename_prefix };

inline LabelRule parse_label_rule(std::string_view s) {
  if (s == "parent-dir" || s == "parent_dir") return LabelRule::parent_dir;
  if (s == "filename-prefix" || s == "filename_prefix") return LabelRule::filename_prefix;
  throw ConfigError("unknown layout '" + std::string(s) + "' (expected parent-dir or filename-prefix)");
}

inline std::string_view to_string(LabelRule r) noexcept {
  return r == LabelRule::parent_dir ? "parent-dir" : "filename-prefix";
}

struct CorpusLayout {
  std::filesystem::path root;
  LabelRule label_rule = LabelRule::parent_dir;
  /// fnmatch pattern applied to file names.
  std::string pattern = "*.pgm";
  /// Resize target; empty keeps the source shape.
  std::optional<ImageShape> target;
  /// Separator ending the subject token for LabelRule::filename_prefix.
  char prefix_separator = '_';
};

struct Corpus {
  DataMatrix data;
  ImageShape shape;
  std::vector<std::string> subjects;  // subject name per dense label
  std::vector<std::filesystem::path> files;
};

/// Orders strings with embedded digit runs compared numerically ("s2" < "s10").
inline bool natural_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i]));
    const bool db = std::isdigit(static_cast<unsigned char>(b[j]));
    if (da && db) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      auto na = a.substr(i, ie - i), nb = b.substr(j, je - j);
      while (na.size() > 1 && na[0] == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb[0] == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

inline std::string subject_of(const std::filesystem::path& file, const CorpusLayout& layout) {
  if (layout.label_rule == LabelRule::parent_dir) return file.parent_path().filename().string();
  const std::string name = file.filename().string();
  const auto cut = name.find(layout.prefix_separator);
  return cut == std::string::npos ? file.stem().string() : name.substr(0, cut);
}

/// Walk `layout.root`, decode every matching PGM, resize, and stack as columns sorted by
/// (subject, file name). Labels are dense in subject order.
inline Corpus load_corpus(const CorpusLayout& layout) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(layout.root, ec)) throw ParseError(layout.root.string() + ": not a directory");

  struct Entry {
    std::string subject;
    std::string name;
    fs::path path;
  };
  std::vector<Entry> entries;
  for (fs::recursive_directory_iterator it(layout.root, ec), end; !ec && it != end; it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    const std::string name = it->path().filename().string();
    if (::fnmatch(layout.pattern.c_str(), name.c_str(), 0) != 0) continue;
    entries.push_back({subject_of(it->path(), layout), name, it->path()});
  }
  if (ec) throw ParseError(layout.root.string() + ": " + ec.message());
  if (entries.empty()) throw ParseError(layout.root.string() + ": no files match '" + layout.pattern + "'");

  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.subject != b.subject) return natural_less(a.subject, b.subject);
    if (a.name != b.name) return natural_less(a.name, b.name);
    return a.path < b.path;
  });

  Corpus corpus;
  std::map<std::string, int> label_of;
  std::optional<ImageShape> source_shape;
  Matrix values;
  Labels labels;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Image img = load_pgm(entries[i].path);
    const ImageShape s{img.rows(), img.cols()};
    if (!source_shape) {
      source_shape = s;
      corpus.shape = layout.target.value_or(s);
      values.resize(corpus.shape.pixels(), static_cast<Eigen::Index>(entries.size()));
    } else if (!(s == *source_shape)) {
      throw DimensionError(entries[i].path.string() + ": shape " + std::to_string(s.height) + "x" +
                           std::to_string(s.width) + " differs from " + std::to_string(source_shape->height) + "x" +
                           std::to_string(source_shape->width));
    }
    if (layout.target) img = resize_box(img, layout.target->height, layout.target->width);
    values.col(static_cast<Eigen::Index>(i)) = flatten(img);

    auto [pos, inserted] = label_of.try_emplace(entries[i].subject, static_cast<int>(corpus.subjects.size()));
    if (inserted) corpus.subjects.push_back(entries[i].subject);
    labels.push_back(pos->second);
    corpus.files.push_back(entries[i].path);
  }
  corpus.data = DataMatrix(std::move(values), std::move(labels));
  return corpus;
}

/// Keep round(fraction * n) columns chosen uniformly without replacement, in original order.
/// With `stratified`, each label keeps round(fraction * class size) of its columns instead.
inline std::vector<Eigen::Index> subsample_indices(const Labels& labels, double fraction, std::uint64_t seed,
                                                   bool stratified = false) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DimensionError("subsample fraction must lie in (0, 1]");
  Rng rng(seed);
  const auto pick = [&](std::vector<Eigen::Index> pool) {
    const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pool.size()) + 0.5));
    for (std::size_t i = 0; i < keep; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(keep);
    return pool;
  };

  std::vector<Eigen::Index> chosen;
  if (!stratified) {
    std::vector<Eigen::Index> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
    chosen = pick(std::move(all));
  } else {
    std::map<int, std::vector<Eigen::Index>> by_label;
    for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(static_cast<Eigen::Index>(i));
    for (auto& [label, members] : by_label) {
      auto part = pick(std::move(members));
      chosen.insert(chosen.end(), part.begin(), part.end());
    }
  }
  if (chosen.empty()) throw DimensionError("subsample keeps no columns");
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

inline DataMatrix select_columns(const DataMatrix& v, const std::vector<Eigen::Index>& cols) {
  Matrix values(v.n_pixels(), static_cast<Eigen::Index>(cols.size()));
  Labels labels(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    values.col(static_cast<Eigen::Index>(i)) = v.values.col(cols[i]);
    labels[i] = v.labels[static_cast<std::size_t>(cols[i])];
  }
  return DataMatrix(std::move(values), std::move(labels));
}

inline DataMatrix subsample(const DataMatrix& v, double fraction, std::uint64_t seed, bool stratified = false) {
  return select_columns(v, subsample_indices(v.labels, fraction, seed, stratified));
}

}  // namespace robnmf
