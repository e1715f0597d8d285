#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "crowdkit/annotations.hpp"
#include "crowdkit/density.hpp"
#include "crowdkit/image.hpp"

namespace crowdkit {

enum class Split { train, val, test };

Split split_from_string(const std::string& text);
std::string to_string(Split split);

struct CountingSample {
  std::string image_path;
  PointSet points;
  Split split = Split::train;
  CategoryGroup group = CategoryGroup::people;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct ManifestEntry {
  std::string image_path;
  Split split = Split::train;
  int point_count = 0;
};

// Drops samples under min_count points, shuffles deterministically (own
// Fisher-Yates, stable across platforms), and assigns floor-allocated
// split sizes with the remainder going to train. Input order does not
// matter: entries are sorted by path before shuffling.
std::vector<ManifestEntry> filter_and_split(
    std::vector<std::pair<std::string, int>> sample_counts, int min_count,
    SplitRatios ratios, std::uint64_t seed);

// CSV "image_path,split,point_count".
void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Caps resolution at max_h x max_w preserving aspect (scale never > 1),
// then pads or center-crops each extent to a multiple of `multiple`.
// Points are scaled/shifted along; points falling outside a crop are
// dropped.
struct ResizeResult {
  Image image;
  PointSet points;
  double scale = 1.0;
};
ResizeResult resize_with_cap(const Image& image, const PointSet& points,
                             int max_h = 768, int max_w = 1024,
                             int multiple = 32);

// Horizontal mirror with the given probability: col' = (W-1) - col.
std::pair<Image, PointSet> random_flip(const Image& image,
                                       const PointSet& points,
                                       double probability,
                                       std::mt19937_64& rng);

// Deterministic in-place Fisher-Yates; used wherever byte-stable shuffles
// are needed.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(i));
    std::swap(items[i - 1], items[j]);
  }
}

// Ground-truth generation settings shared by the train/eval loaders.
struct GtOptions {
  enum class Mode { fixed, adaptive };
  Mode mode = Mode::fixed;
  double sigma = 15.0;
  double beta = 0.3;
  int k = 3;
};

DensityMap build_ground_truth(const PointSet& points, const GtOptions& gt);

// A fully prepared sample: resized image, aligned points, full-resolution
// ground truth.
struct PreparedSample {
  std::string id;          // manifest image path
  Image image;
  PointSet points;
  DensityMap density;
};

struct LoadOptions {
  CategoryGroup group = CategoryGroup::people;
  GtOptions gt{};
  int max_h = 768;
  int max_w = 1024;
};

// Loads the manifest subset with the given split. Images are read from
// images_dir/<image_path>; annotations from ann_dir/<stem>.csv.
std::vector<PreparedSample> load_prepared_samples(
    const std::string& manifest_path, const std::string& images_dir,
    const std::string& ann_dir, Split split, const LoadOptions& options);

std::string annotation_path_for_image(const std::string& ann_dir,
                                      const std::string& image_path);

}  // namespace crowdkit
