#include "crowdkit/density.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <iostream>
#include <sstream>

#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"

namespace crowdkit {

int clamp_points(PointSet& points) {
  if (points.height <= 0 || points.width <= 0) {
    throw ConfigError("point set has no image extents");
  }
  int clamped = 0;
  for (auto& p : points.points) {
    double col = p[0];
    double row = p[1];
    if (col < 0.0) col = 0.0;
    if (col >= points.width) col = points.width - 1;
    if (row < 0.0) row = 0.0;
    if (row >= points.height) row = points.height - 1;
    if (col != p[0] || row != p[1]) {
      ++clamped;
      p[0] = col;
      p[1] = row;
    }
  }
  return clamped;
}

double DensityMap::total_mass() const {
  // Kahan compensation: pooled and unpooled grids must agree to ~1e-12.
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double y = v - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  return sum;
}

namespace {

void splat_gaussian(DensityMap& map, double col, double row, double sigma) {
  const double radius = 4.0 * sigma;
  const double radius_sq = radius * radius;
  const int r0 = std::max(0, static_cast<int>(std::ceil(row - radius)));
  const int r1 = std::min(map.height - 1, static_cast<int>(std::floor(row + radius)));
  const int c0 = std::max(0, static_cast<int>(std::ceil(col - radius)));
  const int c1 = std::min(map.width - 1, static_cast<int>(std::floor(col + radius)));
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);

  // First pass for the in-image truncated mass, second to deposit the
  // renormalized kernel; each point then contributes exactly 1.
  double mass = 0.0;
  for (int r = r0; r <= r1; ++r) {
    const double dy = r - row;
    for (int c = c0; c <= c1; ++c) {
      const double dx = c - col;
      const double d_sq = dx * dx + dy * dy;
      if (d_sq <= radius_sq) mass += std::exp(-d_sq * inv_two_sigma_sq);
    }
  }
  if (mass <= 0.0) {
    // The clamped point sits on a cell, so the window is never empty.
    throw UsageError("gaussian kernel collapsed to zero mass");
  }
  const double inv_mass = 1.0 / mass;
  for (int r = r0; r <= r1; ++r) {
    const double dy = r - row;
    for (int c = c0; c <= c1; ++c) {
      const double dx = c - col;
      const double d_sq = dx * dx + dy * dy;
      if (d_sq <= radius_sq) {
        map.at(r, c) += std::exp(-d_sq * inv_two_sigma_sq) * inv_mass;
      }
    }
  }
}

PointSet clamped_copy(const PointSet& points) {
  PointSet copy = points;
  const int moved = clamp_points(copy);
  if (moved > 0) {
    std::cerr << "crowdkit: clamped " << moved
              << " out-of-bounds annotation point(s) into the image\n";
  }
  return copy;
}

}  // namespace

DensityMap fixed_kernel_density(const PointSet& points, double sigma) {
  if (sigma <= 0.0) throw ConfigError("kernel sigma must be positive");
  PointSet clamped = clamped_copy(points);
  DensityMap map;
  map.height = clamped.height;
  map.width = clamped.width;
  map.values.assign(static_cast<std::size_t>(map.height) * map.width, 0.0);
  for (const auto& p : clamped.points) {
    splat_gaussian(map, p[0], p[1], sigma);
  }
  return map;
}

DensityMap adaptive_kernel_density(const PointSet& points, double beta,
                                   int k) {
  if (beta <= 0.0) throw ConfigError("adaptive kernel beta must be positive");
  if (k < 1) throw ConfigError("adaptive kernel k must be >= 1");
  const std::size_t n = points.points.size();
  if (n < static_cast<std::size_t>(k) + 1) {
    return fixed_kernel_density(points, 15.0);
  }
  PointSet clamped = clamped_copy(points);
  DensityMap map;
  map.height = clamped.height;
  map.width = clamped.width;
  map.values.assign(static_cast<std::size_t>(map.height) * map.width, 0.0);

  std::vector<double> distances;
  distances.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    distances.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = clamped.points[i][0] - clamped.points[j][0];
      const double dy = clamped.points[i][1] - clamped.points[j][1];
      distances.push_back(std::sqrt(dx * dx + dy * dy));
    }
    std::nth_element(distances.begin(), distances.begin() + (k - 1),
                     distances.end());
    std::partial_sort(distances.begin(), distances.begin() + k,
                      distances.end());
    double mean = 0.0;
    for (int m = 0; m < k; ++m) mean += distances[static_cast<std::size_t>(m)];
    mean /= k;
    const double sigma = std::max(1.0, beta * mean);
    splat_gaussian(map, clamped.points[i][0], clamped.points[i][1], sigma);
  }
  return map;
}

DensityMap sum_pool_to(const DensityMap& density, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0) {
    throw ConfigError("sum_pool_to: target extents must be positive");
  }
  if (density.height % target_h != 0 || density.width % target_w != 0) {
    throw ConfigError("sum_pool_to: " + std::to_string(density.height) + "x" +
                      std::to_string(density.width) +
                      " does not divide evenly into " +
                      std::to_string(target_h) + "x" + std::to_string(target_w));
  }
  const int block_h = density.height / target_h;
  const int block_w = density.width / target_w;
  DensityMap out;
  out.height = target_h;
  out.width = target_w;
  out.values.assign(static_cast<std::size_t>(target_h) * target_w, 0.0);
  for (int r = 0; r < density.height; ++r) {
    const int tr = r / block_h;
    for (int c = 0; c < density.width; ++c) {
      out.at(tr, c / block_w) += density.at(r, c);
    }
  }
  return out;
}

DensityMap flip_horizontal(const DensityMap& density) {
  DensityMap out = density;
  for (int r = 0; r < density.height; ++r) {
    for (int c = 0; c < density.width; ++c) {
      out.at(r, c) = density.at(r, density.width - 1 - c);
    }
  }
  return out;
}

Tensor density_to_tensor(const DensityMap& density) {
  return Tensor::from_data({1, 1, density.height, density.width},
                           density.values);
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "CKDM serialization assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  const std::uint8_t* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

}  // namespace

void write_ckdm(const std::string& path, const DensityMap& density) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'C', 'K', 'D', 'M'});
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(density.height));
  put_u32(out, static_cast<std::uint32_t>(density.width));
  const std::uint8_t* p =
      reinterpret_cast<const std::uint8_t*>(density.values.data());
  out.insert(out.end(), p, p + density.values.size() * 8);
  write_binary_file(path, out);
}

DensityMap read_ckdm(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_binary_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "CKDM", 4) != 0) {
    throw ParseError(path + ": not a CKDM density file");
  }
  std::uint32_t version, height, width;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&height, bytes.data() + 8, 4);
  std::memcpy(&width, bytes.data() + 12, 4);
  if (version != 1) {
    throw ParseError(path + ": unsupported CKDM version " +
                     std::to_string(version));
  }
  const std::size_t count = static_cast<std::size_t>(height) * width;
  if (bytes.size() != 16 + count * 8) {
    throw ParseError(path + ": CKDM payload size mismatch");
  }
  DensityMap map;
  map.height = static_cast<int>(height);
  map.width = static_cast<int>(width);
  map.values.resize(count);
  std::memcpy(map.values.data(), bytes.data() + 16, count * 8);
  return map;
}

void write_density_pgm(const std::string& path, const DensityMap& density) {
  double max_v = 0.0;
  for (double v : density.values) max_v = std::max(max_v, v);
  std::ostringstream header;
  header << "P5\n" << density.width << " " << density.height << "\n255\n";
  std::string head = header.str();
  std::vector<std::uint8_t> out(head.begin(), head.end());
  const double scale = max_v > 0.0 ? 255.0 / max_v : 0.0;
  for (double v : density.values) {
    out.push_back(static_cast<std::uint8_t>(std::lround(v * scale)));
  }
  write_binary_file(path, out);
}

}  // namespace crowdkit
