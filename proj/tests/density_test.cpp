#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "crowdkit/density.hpp"
#include "crowdkit/format.hpp"
#include "crowdkit/errors.hpp"

namespace crowdkit {
namespace {

PointSet make_points(int height, int width,
                     std::vector<std::array<double, 2>> pts) {
  PointSet p;
  p.height = height;
  p.width = width;
  p.points = std::move(pts);
  return p;
}

TEST(FixedKernel, SinglePointUnitMass) {
  PointSet points = make_points(512, 512, {{256.0, 256.0}});
  DensityMap map = fixed_kernel_density(points, 15.0);
  EXPECT_NEAR(map.total_mass(), 1.0, 1e-9);
}

TEST(FixedKernel, EmptyPointsGiveZeroMap) {
  PointSet points = make_points(32, 32, {});
  DensityMap map = fixed_kernel_density(points, 15.0);
  EXPECT_DOUBLE_EQ(map.total_mass(), 0.0);
  for (double v : map.values) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(FixedKernel, TwelvePointsWithCorners) {
  PointSet points = make_points(
      96, 128, {{0.0, 0.0},  {127.0, 0.0}, {0.0, 95.0},  {127.0, 95.0},
                {64.0, 48.0}, {10.5, 80.2}, {100.0, 3.0}, {33.3, 33.3},
                {90.0, 90.0}, {5.0, 48.0},  {120.0, 60.0}, {64.0, 1.0}});
  DensityMap map = fixed_kernel_density(points, 15.0);
  EXPECT_NEAR(map.total_mass(), 12.0, 1e-6);
  for (double v : map.values) EXPECT_GE(v, 0.0);
}

TEST(FixedKernel, TranslationEquivariantInInterior) {
  const double sigma = 2.0;
  PointSet a = make_points(64, 64, {{20.0, 24.0}});
  PointSet b = make_points(64, 64, {{23.0, 29.0}});  // shifted (+3, +5)
  DensityMap map_a = fixed_kernel_density(a, sigma);
  DensityMap map_b = fixed_kernel_density(b, sigma);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      const int sr = r + 5;
      const int sc = c + 3;
      if (sr < 0 || sr >= 64 || sc < 0 || sc >= 64) continue;
      EXPECT_NEAR(map_a.at(r, c), map_b.at(sr, sc), 1e-12);
    }
  }
}

TEST(FixedKernel, OutOfBoundsPointClampedNotDropped) {
  PointSet points = make_points(32, 32, {{-5.0, 40.0}});
  DensityMap map = fixed_kernel_density(points, 3.0);
  EXPECT_NEAR(map.total_mass(), 1.0, 1e-9);
}

TEST(FixedKernel, InvalidSigmaRejected) {
  PointSet points = make_points(32, 32, {{1.0, 1.0}});
  EXPECT_THROW(fixed_kernel_density(points, 0.0), ConfigError);
}

TEST(AdaptiveKernel, SigmaFromNeighborDistance) {
  // Two points 10 px apart, k=1, beta=0.3 -> sigma 3.0 for both.
  PointSet points = make_points(64, 64, {{20.0, 32.0}, {30.0, 32.0}});
  DensityMap adaptive = adaptive_kernel_density(points, 0.3, 1);
  DensityMap left = fixed_kernel_density(make_points(64, 64, {{20.0, 32.0}}), 3.0);
  DensityMap right = fixed_kernel_density(make_points(64, 64, {{30.0, 32.0}}), 3.0);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      EXPECT_NEAR(adaptive.at(r, c), left.at(r, c) + right.at(r, c), 1e-12);
    }
  }
}

TEST(AdaptiveKernel, CoincidentPointsUseSigmaFloor) {
  PointSet points = make_points(
      32, 32, {{16.0, 16.0}, {16.0, 16.0}, {16.0, 16.0}, {16.0, 16.0}});
  DensityMap map = adaptive_kernel_density(points, 0.3, 3);
  DensityMap reference = fixed_kernel_density(
      make_points(32, 32, {{16.0, 16.0}}), 1.0);
  EXPECT_NEAR(map.total_mass(), 4.0, 1e-6);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      EXPECT_NEAR(map.at(r, c), 4.0 * reference.at(r, c), 1e-9);
    }
  }
}

TEST(AdaptiveKernel, FallsBackToFixedWhenTooFewPoints) {
  PointSet points = make_points(64, 64, {{10.0, 10.0}, {50.0, 50.0}});
  DensityMap adaptive = adaptive_kernel_density(points, 0.3, 3);
  DensityMap fixed = fixed_kernel_density(points, 15.0);
  for (std::size_t i = 0; i < adaptive.values.size(); ++i) {
    EXPECT_DOUBLE_EQ(adaptive.values[i], fixed.values[i]);
  }
}

TEST(AdaptiveKernel, MassMatchesCount) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coord(0.0, 63.0);
  PointSet points = make_points(64, 64, {});
  for (int i = 0; i < 9; ++i) points.points.push_back({coord(rng), coord(rng)});
  DensityMap map = adaptive_kernel_density(points, 0.3, 3);
  EXPECT_NEAR(map.total_mass(), 9.0, 1e-6);
}

TEST(SumPool, CollapseToSingleCell) {
  PointSet points = make_points(64, 64, {{31.0, 7.0}, {2.0, 60.0}});
  DensityMap map = fixed_kernel_density(points, 4.0);
  DensityMap pooled = sum_pool_to(map, 1, 1);
  EXPECT_NEAR(pooled.values[0], map.total_mass(), 1e-12);
}

TEST(SumPool, IdentityWhenSameDims) {
  PointSet points = make_points(16, 16, {{8.0, 8.0}});
  DensityMap map = fixed_kernel_density(points, 2.0);
  DensityMap pooled = sum_pool_to(map, 16, 16);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    EXPECT_DOUBLE_EQ(pooled.values[i], map.values[i]);
  }
}

TEST(SumPool, BlockSumsByHand) {
  DensityMap map;
  map.height = 4;
  map.width = 4;
  map.values.assign(16, 1.0);
  DensityMap pooled = sum_pool_to(map, 2, 2);
  for (double v : pooled.values) EXPECT_DOUBLE_EQ(v, 4.0);
}

TEST(SumPool, MassPreservedExactly) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(0.0, 63.0);
  PointSet points = make_points(64, 64, {});
  for (int i = 0; i < 14; ++i) points.points.push_back({coord(rng), coord(rng)});
  DensityMap map = fixed_kernel_density(points, 15.0);
  DensityMap pooled = sum_pool_to(map, 8, 8);
  EXPECT_NEAR(pooled.total_mass(), map.total_mass(), 1e-12);
}

TEST(SumPool, IndivisibleRejected) {
  DensityMap map;
  map.height = 6;
  map.width = 6;
  map.values.assign(36, 0.0);
  EXPECT_THROW(sum_pool_to(map, 4, 2), ConfigError);
}

TEST(DensityIo, CkdmRoundTrip) {
  PointSet points = make_points(24, 40, {{10.0, 10.0}, {30.0, 20.0}});
  DensityMap map = fixed_kernel_density(points, 3.0);
  const std::string path =
      (std::filesystem::temp_directory_path() / "crowdkit_test.ckdm").string();
  write_ckdm(path, map);
  DensityMap loaded = read_ckdm(path);
  EXPECT_EQ(loaded.height, map.height);
  EXPECT_EQ(loaded.width, map.width);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    EXPECT_EQ(loaded.values[i], map.values[i]);
  }
  std::filesystem::remove(path);
}

TEST(DensityIo, CkdmRejectsCorruptHeader) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "crowdkit_bad.ckdm").string();
  write_text_file(path, "not a density file");
  EXPECT_THROW(read_ckdm(path), ParseError);
  std::filesystem::remove(path);
}

TEST(DensityIo, PgmRendering) {
  DensityMap map;
  map.height = 2;
  map.width = 2;
  map.values = {0.0, 0.5, 1.0, 2.0};
  const std::string path =
      (std::filesystem::temp_directory_path() / "crowdkit_test.pgm").string();
  write_density_pgm(path, map);
  const auto bytes = read_binary_file(path);
  const std::string header(bytes.begin(), bytes.begin() + 3);
  EXPECT_EQ(header, "P5\n");
  // Max-normalized payload: last pixel is 255, first 0.
  EXPECT_EQ(bytes[bytes.size() - 4], 0);
  EXPECT_EQ(bytes[bytes.size() - 1], 255);
  std::filesystem::remove(path);
}

TEST(DensityMapOps, FlipHorizontalMirrorsColumns) {
  DensityMap map;
  map.height = 2;
  map.width = 3;
  map.values = {1, 2, 3, 4, 5, 6};
  DensityMap flipped = flip_horizontal(map);
  EXPECT_DOUBLE_EQ(flipped.at(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(flipped.at(0, 2), 1.0);
  EXPECT_DOUBLE_EQ(flipped.at(1, 1), 5.0);
  DensityMap twice = flip_horizontal(flipped);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    EXPECT_DOUBLE_EQ(twice.values[i], map.values[i]);
  }
}

}  // namespace
}  // namespace crowdkit
