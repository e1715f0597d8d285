#pragma once

#include <array>
#include <string>
#include <vector>

#include "crowdkit/tensor.hpp"

namespace crowdkit {

// Point annotations in pixel coordinates (col, row). image dims may be 0
// until the points are paired with an image.
struct PointSet {
  std::vector<std::array<double, 2>> points;  // {col, row}
  int height = 0;
  int width = 0;
};

// Clamps out-of-bounds points into [0, W) x [0, H); returns how many moved.
// Callers warn rather than drop.
int clamp_points(PointSet& points);

struct DensityMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major

  double& at(int row, int col) {
    return values[static_cast<std::size_t>(row) * width + col];
  }
  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * width + col];
  }
  // Compensated sum; the grid integral is the count estimate.
  double total_mass() const;
};

// One isotropic Gaussian per point, truncated at radius 4*sigma and
// renormalized to unit mass after truncation and boundary clipping.
DensityMap fixed_kernel_density(const PointSet& points, double sigma);

// Per-point sigma = beta * mean distance to the k nearest other points,
// floored at 1 px. Falls back to fixed sigma = 15 when fewer than k+1
// points exist.
DensityMap adaptive_kernel_density(const PointSet& points, double beta = 0.3,
                                   int k = 3);

// Block sums down to (target_h, target_w); extents must divide evenly.
// Mass is preserved exactly.
DensityMap sum_pool_to(const DensityMap& density, int target_h, int target_w);

DensityMap flip_horizontal(const DensityMap& density);

Tensor density_to_tensor(const DensityMap& density);  // [1, 1, H, W]

// CKDM container: magic "CKDM", version u32, H u32, W u32, f64 row-major.
void write_ckdm(const std::string& path, const DensityMap& density);
DensityMap read_ckdm(const std::string& path);

// Max-normalized 8-bit binary PGM for visual inspection.
void write_density_pgm(const std::string& path, const DensityMap& density);

}  // namespace crowdkit
