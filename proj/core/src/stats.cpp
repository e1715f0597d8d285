#include "crowdkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"

namespace crowdkit {

ScaleStats object_scales(const std::vector<BBoxRecord>& records) {
  if (records.empty()) {
    throw ConfigError("object_scales: no annotated objects");
  }
  ScaleStats stats;
  stats.scales.reserve(records.size());
  for (const BBoxRecord& rec : records) {
    stats.scales.push_back((rec.width + rec.height) / 2.0);
  }
  double sum = 0.0;
  for (double s : stats.scales) sum += s;
  stats.mean = sum / static_cast<double>(stats.scales.size());
  double var = 0.0;
  for (double s : stats.scales) {
    const double d = s - stats.mean;
    var += d * d;
  }
  var /= static_cast<double>(stats.scales.size());
  stats.stddev = std::sqrt(var);
  if (stats.mean == 0.0) {
    throw DegenerateError("object_scales: zero mean scale, CV undefined");
  }
  stats.cv = stats.stddev / stats.mean;
  return stats;
}

NeighborDistances knn_mean_distance(const PointSet& points, int n) {
  if (n < 1) throw ConfigError("knn_mean_distance: n must be >= 1");
  const std::size_t count = points.points.size();
  if (count < static_cast<std::size_t>(n) + 1) {
    throw ConfigError("knn_mean_distance: need at least " +
                      std::to_string(n + 1) + " points, got " +
                      std::to_string(count));
  }
  NeighborDistances result;
  result.n = n;
  result.values.reserve(count);
  std::vector<double> distances;
  distances.reserve(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    distances.clear();
    for (std::size_t j = 0; j < count; ++j) {
      if (j == i) continue;
      const double dx = points.points[i][0] - points.points[j][0];
      const double dy = points.points[i][1] - points.points[j][1];
      distances.push_back(std::sqrt(dx * dx + dy * dy));
    }
    std::partial_sort(distances.begin(), distances.begin() + n,
                      distances.end());
    double mean = 0.0;
    for (int m = 0; m < n; ++m) mean += distances[static_cast<std::size_t>(m)];
    result.values.push_back(mean / n);
  }
  return result;
}

namespace {

double clustering_wcss(const std::vector<double>& values,
                       const std::vector<int>& assignments,
                       const std::vector<double>& centers) {
  double wcss = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - centers[static_cast<std::size_t>(assignments[i])];
    wcss += d * d;
  }
  return wcss;
}

std::vector<double> spread_init(const std::vector<double>& values, int k) {
  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> centers(static_cast<std::size_t>(k));
  const std::size_t n = sorted.size();
  for (int c = 0; c < k; ++c) {
    const std::size_t idx =
        k > 1 ? static_cast<std::size_t>(c) * (n - 1) / (static_cast<std::size_t>(k) - 1)
              : (n - 1) / 2;
    centers[static_cast<std::size_t>(c)] = sorted[idx];
  }
  return centers;
}

Clustering lloyd(const std::vector<double>& values, int k,
                 std::vector<double> centers) {
  const std::size_t n = values.size();
  Clustering result;
  result.k = k;
  result.assignments.assign(n, -1);
  result.centers = std::move(centers);
  std::vector<int> previous(n, -2);

  for (int iteration = 0; iteration < 100; ++iteration) {
    // Nearest center; ties resolve to the lowest center index.
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::fabs(values[i] - result.centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = std::fabs(values[i] - result.centers[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      result.assignments[i] = best;
    }
    // Repair empty clusters from the farthest point; pin it so the
    // all-equal degenerate case stays a fixpoint instead of oscillating.
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : result.assignments) ++sizes[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t farthest = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const int a = result.assignments[i];
        if (sizes[static_cast<std::size_t>(a)] <= 1) continue;
        const double d =
            std::fabs(values[i] - result.centers[static_cast<std::size_t>(a)]);
        if (d > far_d) {
          far_d = d;
          farthest = i;
        }
      }
      --sizes[static_cast<std::size_t>(result.assignments[farthest])];
      result.assignments[farthest] = c;
      ++sizes[static_cast<std::size_t>(c)];
      result.centers[static_cast<std::size_t>(c)] = values[farthest];
    }
    if (result.assignments == previous) break;
    previous = result.assignments;
    // Means update.
    std::vector<double> sums(static_cast<std::size_t>(k), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(result.assignments[i])] += values[i];
      ++counts[static_cast<std::size_t>(result.assignments[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        result.centers[static_cast<std::size_t>(c)] =
            sums[static_cast<std::size_t>(c)] / counts[static_cast<std::size_t>(c)];
      }
    }
  }
  result.wcss = clustering_wcss(values, result.assignments, result.centers);
  return result;
}

}  // namespace

Clustering kmeans_1d(const std::vector<double>& values, int k, int restarts,
                     std::uint64_t seed) {
  if (k < 1) throw ConfigError("kmeans_1d: k must be >= 1");
  if (static_cast<std::size_t>(k) > values.size()) {
    throw ConfigError("kmeans_1d: k=" + std::to_string(k) +
                      " exceeds the number of values (" +
                      std::to_string(values.size()) + ")");
  }
  if (restarts < 1) restarts = 1;
  std::mt19937_64 rng(seed);
  Clustering best;
  bool has_best = false;
  for (int r = 0; r < restarts; ++r) {
    std::vector<double> centers;
    if (r == 0) {
      centers = spread_init(values, k);
    } else {
      // Sample k distinct indices.
      std::vector<std::size_t> idx(values.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (int c = 0; c < k; ++c) {
        const std::size_t j =
            static_cast<std::size_t>(c) +
            static_cast<std::size_t>(rng() % (idx.size() - static_cast<std::size_t>(c)));
        std::swap(idx[static_cast<std::size_t>(c)], idx[j]);
        centers.push_back(values[idx[static_cast<std::size_t>(c)]]);
      }
    }
    Clustering candidate = lloyd(values, k, std::move(centers));
    if (!has_best || candidate.wcss < best.wcss) {
      best = std::move(candidate);
      has_best = true;
    }
  }
  return best;
}

double dunn_index(const std::vector<double>& values,
                  const Clustering& clustering) {
  if (clustering.k < 2) {
    throw ConfigError("dunn_index: need at least two clusters");
  }
  if (values.size() != clustering.assignments.size()) {
    throw ConfigError("dunn_index: assignment size mismatch");
  }
  std::vector<std::vector<double>> groups(
      static_cast<std::size_t>(clustering.k));
  for (std::size_t i = 0; i < values.size(); ++i) {
    groups[static_cast<std::size_t>(clustering.assignments[i])].push_back(
        values[i]);
  }
  for (const auto& g : groups) {
    if (g.empty()) throw ConfigError("dunn_index: empty cluster");
  }
  double min_inter = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      for (double x : groups[a]) {
        for (double y : groups[b]) {
          min_inter = std::min(min_inter, std::fabs(x - y));
        }
      }
    }
  }
  double max_intra = 0.0;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = i + 1; j < g.size(); ++j) {
        max_intra = std::max(max_intra, std::fabs(g[i] - g[j]));
      }
    }
  }
  if (max_intra == 0.0) {
    throw DegenerateError(
        "dunn_index: maximum intra-cluster distance is zero");
  }
  return min_inter / max_intra;
}

int bucket_cv(double cv) {
  if (cv < 0.0 || !std::isfinite(cv)) {
    throw ConfigError("bucket_cv: CV must be a finite non-negative value");
  }
  if (cv < 0.2) return 0;
  if (cv < 0.4) return 1;
  if (cv < 0.6) return 2;
  if (cv < 0.8) return 3;
  return 4;
}

int bucket_dvi(double dvi) {
  if (dvi < 0.0 || !std::isfinite(dvi)) {
    throw ConfigError("bucket_dvi: DVI must be a finite non-negative value");
  }
  if (dvi < 1.0) return 0;
  if (dvi < 2.0) return 1;
  if (dvi < 3.0) return 2;
  return 3;
}

Histogram build_histogram(const std::vector<double>& values,
                          double bin_width) {
  if (bin_width <= 0.0) throw ConfigError("histogram bin width must be positive");
  Histogram hist;
  hist.bin_width = bin_width;
  if (values.empty()) return hist;
  double max_v = 0.0;
  for (double v : values) max_v = std::max(max_v, v);
  const std::size_t bins =
      static_cast<std::size_t>(std::floor(max_v / bin_width)) + 1;
  std::vector<long> counts(bins, 0);
  for (double v : values) {
    std::size_t b = static_cast<std::size_t>(std::floor(v / bin_width));
    if (b >= bins) b = bins - 1;
    ++counts[b];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    hist.bins.emplace_back(static_cast<double>(b) * bin_width, counts[b]);
  }
  return hist;
}

CrowdStatsReport analyze_image(const std::string& image_path,
                               const std::vector<BBoxRecord>& records,
                               CategoryGroup group, std::uint64_t seed) {
  std::vector<BBoxRecord> kept;
  for (const BBoxRecord& rec : records) {
    if (category_in_group(rec.category, group)) kept.push_back(rec);
  }
  CrowdStatsReport report;
  report.image_path = image_path;
  report.object_count = static_cast<int>(kept.size());
  report.scale = object_scales(kept);
  report.cv_bucket = bucket_cv(report.scale.cv);
  report.scale_histogram = build_histogram(report.scale.scales, 5.0);

  PointSet points = convert_group(kept, group);
  if (points.points.size() < 3) {
    report.dvi_flag = "needs at least 3 points for N=2 neighbor distances";
    return report;
  }
  report.distances = knn_mean_distance(points, 2);
  report.distance_histogram = build_histogram(report.distances->values, 5.0);
  report.clustering = kmeans_1d(report.distances->values, 2, 10, seed);
  try {
    report.dvi = dunn_index(report.distances->values, *report.clustering);
    report.dvi_bucket = bucket_dvi(*report.dvi);
  } catch (const DegenerateError& e) {
    report.dvi_flag = e.what();
  }
  return report;
}

namespace {

nlohmann::json histogram_json(const Histogram& hist) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& [left, count] : hist.bins) {
    bins.push_back({left, count});
  }
  return {{"bin_width", hist.bin_width}, {"bins", bins}};
}

}  // namespace

std::string report_to_json(const CrowdStatsReport& report) {
  nlohmann::json j;
  j["image_path"] = report.image_path;
  j["object_count"] = report.object_count;
  j["scale_mean"] = report.scale.mean;
  j["scale_stddev"] = report.scale.stddev;
  j["cv"] = report.scale.cv;
  j["cv_bucket"] = report.cv_bucket;
  if (report.distances) {
    j["nn_distances"] = report.distances->values;
  }
  if (report.clustering) {
    j["cluster_centers"] = report.clustering->centers;
  }
  if (report.dvi) {
    j["dvi"] = *report.dvi;
    j["dvi_bucket"] = *report.dvi_bucket;
  } else {
    j["dvi"] = nullptr;
    j["dvi_bucket"] = nullptr;
    j["dvi_flag"] = report.dvi_flag;
  }
  j["scale_histogram"] = histogram_json(report.scale_histogram);
  j["distance_histogram"] = histogram_json(report.distance_histogram);
  return j.dump(2) + "\n";
}

std::string summary_csv(const std::vector<CrowdStatsReport>& reports) {
  std::ostringstream out;
  out << "image_path,object_count,cv,cv_bucket,dvi,dvi_bucket\n";
  for (const CrowdStatsReport& r : reports) {
    out << r.image_path << "," << r.object_count << ","
        << format_real(r.scale.cv) << "," << r.cv_bucket << ",";
    if (r.dvi) {
      out << format_real(*r.dvi) << "," << *r.dvi_bucket;
    } else {
      out << "NA,NA";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace crowdkit
