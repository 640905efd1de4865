#include <gtest/gtest.h>

#include <set>

#include "robnmf/noise.hpp"
#include "test_util.hpp"

using namespace robnmf;
using robnmf::testing::random_matrix;

namespace {

Matrix grey(Eigen::Index h, Eigen::Index w, double value = 100.0) { return Matrix::Constant(h, w, value); }

struct Diff {
  int changed = 0;
  int salt = 0;
  int pepper = 0;
};

Diff diff(const Matrix& clean, const Matrix& dirty) {
  Diff d;
  for (Eigen::Index i = 0; i < clean.size(); ++i) {
    if (clean.data()[i] == dirty.data()[i]) continue;
    ++d.changed;
    d.salt += dirty.data()[i] == 255.0;
    d.pepper += dirty.data()[i] == 0.0;
  }
  return d;
}

}  // namespace

TEST(SaltPepper, ZeroFractionIsIdentity) {
  const Matrix img = random_matrix(37, 30, 1, 1.0, 254.0);
  EXPECT_EQ(apply_salt_pepper(img, 0.0, 5), img);
}

TEST(SaltPepper, FullCorruption) {
  const Matrix img = grey(7, 5);
  const Matrix out = apply_salt_pepper(img, 1.0, 3);
  const Diff d = diff(img, out);
  EXPECT_EQ(d.changed, 35);
  EXPECT_EQ(d.salt, 18);  // ceil(35 / 2)
  EXPECT_EQ(d.pepper, 17);
}

TEST(SaltPepper, OrlGridFivePercent) {
  // round(0.05 * 1110) = round(55.5) = 56 -> 28 salt, 28 pepper.
  const Matrix img = grey(37, 30);
  const Diff d = diff(img, apply_salt_pepper(img, 0.05, 42));
  EXPECT_EQ(d.changed, 56);
  EXPECT_EQ(d.salt, 28);
  EXPECT_EQ(d.pepper, 28);
}

TEST(SaltPepper, CountsAcrossFractionsAndSeeds) {
  const Matrix img = grey(37, 30);
  for (double p : {0.05, 0.10, 0.20, 0.33, 0.5}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto k = static_cast<int>(std::floor(p * 1110 + 0.5));
      const Diff d = diff(img, apply_salt_pepper(img, p, seed));
      ASSERT_EQ(d.changed, k);
      ASSERT_EQ(d.salt, (k + 1) / 2);
      ASSERT_EQ(d.pepper, k / 2);
    }
  }
}

TEST(SaltPepper, DeterministicAndSeedSensitive) {
  const Matrix img = grey(20, 20);
  EXPECT_EQ(apply_salt_pepper(img, 0.1, 9), apply_salt_pepper(img, 0.1, 9));
  EXPECT_NE(apply_salt_pepper(img, 0.1, 9), apply_salt_pepper(img, 0.1, 10));
}

TEST(SaltPepper, FractionOutOfRange) {
  const Matrix img = grey(4, 4);
  EXPECT_THROW(apply_salt_pepper(img, 1.5, 0), DimensionError);
  EXPECT_THROW(apply_salt_pepper(img, -0.1, 0), DimensionError);
}

TEST(Block, WholeSquareImage) {
  const Matrix img = grey(12, 12);
  EXPECT_TRUE((apply_block(img, 12, 4).array() == 255.0).all());
}

TEST(Block, SingleInBoundsRegion) {
  const Matrix img = random_matrix(37, 30, 2, 0.0, 254.0);
  for (int b : {1, 10, 12, 14, 30}) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      Matrix out = img;
      const BlockPlacement at = block_inplace(out, b, seed);
      ASSERT_GE(at.row, 0);
      ASSERT_GE(at.col, 0);
      ASSERT_LE(at.row + b, 37);
      ASSERT_LE(at.col + b, 30);
      for (Eigen::Index c = 0; c < 30; ++c)
        for (Eigen::Index r = 0; r < 37; ++r) {
          const bool inside = r >= at.row && r < at.row + b && c >= at.col && c < at.col + b;
          ASSERT_EQ(out(r, c), inside ? 255.0 : img(r, c));
        }
    }
  }
}

TEST(Block, PlacementCoversAllCorners) {
  const Matrix img = grey(5, 4);
  std::set<std::pair<Eigen::Index, Eigen::Index>> seen;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    Matrix out = img;
    const auto at = block_inplace(out, 2, seed);
    seen.insert({at.row, at.col});
  }
  EXPECT_EQ(seen.size(), 12u);  // (5-2+1) x (4-2+1)
}

TEST(Block, TooLarge) {
  const Matrix img = grey(37, 30);
  EXPECT_THROW(apply_block(img, 31, 0), DimensionError);
  EXPECT_THROW(apply_block(img, 0, 0), DimensionError);
}

TEST(Block, OrlOutlierFraction) {
  // 10 x 10 on a 37 x 30 grid: 100 / 1110 = 9.0 %.
  const Matrix img = grey(37, 30);
  const Diff d = diff(img, apply_block(img, 10, 1));
  EXPECT_EQ(d.changed, 100);
  EXPECT_NEAR(100.0 * d.changed / 1110.0, 9.0, 0.05);
}

TEST(CorruptDataset, CleanIsExactCopy) {
  const DataMatrix v(random_matrix(1110, 6, 3, 0, 255), {0, 0, 1, 1, 2, 2});
  const DataMatrix out = corrupt_dataset(v, NoiseSpec::clean(), {37, 30});
  EXPECT_EQ(out.values, v.values);
  EXPECT_EQ(out.labels, v.labels);
}

TEST(CorruptDataset, SaltPepperTotalCount) {
  const DataMatrix v(Matrix::Constant(1110, 400, 100.0), Labels(400, 0));
  const DataMatrix out = corrupt_dataset(v, NoiseSpec::salt_pepper(0.10, 77), {37, 30});
  EXPECT_EQ(diff(v.values, out.values).changed, 400 * 111);
  EXPECT_EQ(out.labels, v.labels);
}

TEST(CorruptDataset, DeterministicAndPerImageSeeds) {
  const DataMatrix v(Matrix::Constant(1110, 5, 100.0), Labels(5, 3));
  const auto spec = NoiseSpec::block(10, 8);
  const DataMatrix a = corrupt_dataset(v, spec, {37, 30});
  EXPECT_EQ(a.values, corrupt_dataset(v, spec, {37, 30}).values);
  // Dropping trailing images leaves the earlier ones untouched.
  const DataMatrix head(v.values.leftCols(3), Labels(3, 3));
  EXPECT_EQ(corrupt_dataset(head, spec, {37, 30}).values, a.values.leftCols(3));
  // Images get different placements.
  EXPECT_NE(a.values.col(0), a.values.col(1));
}

TEST(CorruptDataset, ValuesStayInRange) {
  const DataMatrix v(random_matrix(1110, 10, 4, 0, 255), Labels(10, 0));
  for (const auto& spec : {NoiseSpec::salt_pepper(0.2, 1), NoiseSpec::block(14, 1)}) {
    const DataMatrix out = corrupt_dataset(v, spec, {37, 30});
    EXPECT_GE(out.values.minCoeff(), 0.0);
    EXPECT_LE(out.values.maxCoeff(), 255.0);
    for (Eigen::Index i = 0; i < v.values.size(); ++i) {
      const double x = out.values.data()[i];
      if (x != v.values.data()[i]) ASSERT_TRUE(x == 0.0 || x == 255.0);
    }
  }
}

TEST(CorruptDataset, ShapeMismatch) {
  const DataMatrix v(Matrix::Constant(100, 2, 1.0), Labels(2, 0));
  EXPECT_THROW(corrupt_dataset(v, NoiseSpec::salt_pepper(0.1), {37, 30}), DimensionError);
}

TEST(NoiseSpecText, ParseAndLabel) {
  EXPECT_EQ(noise_label(parse_noise("clean")), "clean");
  EXPECT_EQ(noise_label(parse_noise("sp:0.05")), "salt_pepper:0.05");
  EXPECT_EQ(noise_label(parse_noise("sp:10%")), "salt_pepper:0.1");
  EXPECT_EQ(noise_label(parse_noise("block:12")), "block:12");
  EXPECT_EQ(parse_noise(noise_label(NoiseSpec::salt_pepper(0.2))).p, 0.2);
  EXPECT_THROW(parse_noise("gauss:1"), ConfigError);
  EXPECT_THROW(parse_noise("block:2.5"), ConfigError);
  EXPECT_THROW(parse_noise("sp:1.5"), ConfigError);
  EXPECT_THROW(parse_noise("sp:abc"), ConfigError);
}
