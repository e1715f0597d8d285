#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crowdkit/annotations.hpp"
#include "crowdkit/density.hpp"

namespace crowdkit {

// Per-object scale (bb_width + bb_height) / 2 with population statistics.
struct ScaleStats {
  std::vector<double> scales;
  double mean = 0.0;
  double stddev = 0.0;  // population (divide by n)
  double cv = 0.0;      // stddev / mean
};

ScaleStats object_scales(const std::vector<BBoxRecord>& records);

// Per-point mean Euclidean distance to its n nearest other points.
struct NeighborDistances {
  int n = 2;
  std::vector<double> values;
};

NeighborDistances knn_mean_distance(const PointSet& points, int n);

struct Clustering {
  int k = 2;
  std::vector<int> assignments;
  std::vector<double> centers;
  double wcss = 0.0;
};

// Lloyd iterations to an assignment fixpoint, best of `restarts` seeded
// initializations by within-cluster sum of squares. Restart 0 spreads the
// centers over the sorted value range; the rest sample values at random.
// Empty clusters are repaired by reseeding from the farthest point.
Clustering kmeans_1d(const std::vector<double>& values, int k,
                     int restarts = 10, std::uint64_t seed = 0);

// Single-linkage min inter-cluster distance over the max intra-cluster
// diameter. Throws DegenerateError when every diameter is zero.
double dunn_index(const std::vector<double>& values,
                  const Clustering& clustering);

// Half-open interval tables: [0,.2),[.2,.4),[.4,.6),[.6,.8),[.8,inf) and
// [0,1),[1,2),[2,3),[3,inf).
int bucket_cv(double cv);
int bucket_dvi(double dvi);

struct Histogram {
  double bin_width = 1.0;
  std::vector<std::pair<double, long>> bins;  // (bin_left, count)
};

Histogram build_histogram(const std::vector<double>& values,
                          double bin_width);

struct CrowdStatsReport {
  std::string image_path;
  int object_count = 0;
  ScaleStats scale;
  std::optional<NeighborDistances> distances;
  std::optional<Clustering> clustering;
  std::optional<double> dvi;
  int cv_bucket = 0;
  std::optional<int> dvi_bucket;
  std::string dvi_flag;  // set when the DVI pipeline could not run
  Histogram scale_histogram;
  Histogram distance_histogram;
};

// Full per-image pipeline: scales -> CV; kNN(n=2) -> k-means(k=2) -> DVI;
// bucket assignment; histogram exports. DVI precondition failures are
// flagged in the report rather than thrown.
CrowdStatsReport analyze_image(const std::string& image_path,
                               const std::vector<BBoxRecord>& records,
                               CategoryGroup group, std::uint64_t seed = 0);

std::string report_to_json(const CrowdStatsReport& report);
std::string summary_csv(const std::vector<CrowdStatsReport>& reports);

}  // namespace crowdkit
