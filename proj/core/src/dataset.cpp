#include "crowdkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"

namespace crowdkit {

Split split_from_string(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + text +
                    "' (expected train, val or test)");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

std::vector<ManifestEntry> filter_and_split(
    std::vector<std::pair<std::string, int>> sample_counts, int min_count,
    SplitRatios ratios, std::uint64_t seed) {
  if (std::fabs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be non-negative");
  }
  std::vector<std::pair<std::string, int>> kept;
  for (auto& sc : sample_counts) {
    if (sc.second >= min_count) kept.push_back(std::move(sc));
  }
  if (kept.empty()) {
    throw ConfigError("no samples survive the min_count=" +
                      std::to_string(min_count) + " filter");
  }
  std::sort(kept.begin(), kept.end());
  std::mt19937_64 rng(seed);
  deterministic_shuffle(kept, rng);

  const std::size_t n = kept.size();
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * ratios.val));
  const std::size_t n_test = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * ratios.test));
  // Remainder of the floor allocation goes to train.
  const std::size_t n_train = n - n_val - n_test;

  std::vector<ManifestEntry> entries;
  entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ManifestEntry entry;
    entry.image_path = kept[i].first;
    entry.point_count = kept[i].second;
    entry.split = i < n_train            ? Split::train
                  : i < n_train + n_val  ? Split::val
                                         : Split::test;
    entries.push_back(std::move(entry));
  }
  return entries;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ostringstream out;
  out << "image_path,split,point_count\n";
  for (const ManifestEntry& e : entries) {
    out << e.image_path << "," << to_string(e.split) << "," << e.point_count
        << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line_no == 1 && line.rfind("image_path,", 0) == 0) continue;
    const std::string ctx = path + ":" + std::to_string(line_no);
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      throw ParseError(ctx + ": expected 'image_path,split,point_count'");
    }
    ManifestEntry entry;
    entry.image_path = fields[0];
    entry.split = split_from_string(fields[1]);
    entry.point_count = static_cast<int>(parse_integer(fields[2], ctx));
    entries.push_back(std::move(entry));
  }
  return entries;
}

namespace {

// Pads (centered) up to `multiple` or center-crops down to the largest
// contained multiple.
void fit_axis(int extent, int multiple, int& out_extent, int& offset,
              bool& pad) {
  if (extent < multiple) {
    out_extent = multiple;
    offset = (multiple - extent) / 2;
    pad = true;
  } else {
    out_extent = (extent / multiple) * multiple;
    offset = (extent - out_extent) / 2;
    pad = false;
  }
}

}  // namespace

ResizeResult resize_with_cap(const Image& image, const PointSet& points,
                             int max_h, int max_w, int multiple) {
  if (max_h <= 0 || max_w <= 0 || multiple <= 0) {
    throw ConfigError("resize_with_cap: caps and multiple must be positive");
  }
  ResizeResult result;
  result.scale = 1.0;
  Image working = image;
  std::vector<std::array<double, 2>> pts = points.points;

  if (image.height > max_h || image.width > max_w) {
    const double s = std::min(static_cast<double>(max_h) / image.height,
                              static_cast<double>(max_w) / image.width);
    const int new_h =
        std::max(1, static_cast<int>(std::lround(image.height * s)));
    const int new_w =
        std::max(1, static_cast<int>(std::lround(image.width * s)));
    working = resize_bilinear(image, new_h, new_w);
    for (auto& p : pts) {
      p[0] *= s;
      p[1] *= s;
    }
    result.scale = s;
  }

  int out_h, out_w, off_h, off_w;
  bool pad_h, pad_w;
  fit_axis(working.height, multiple, out_h, off_h, pad_h);
  fit_axis(working.width, multiple, out_w, off_w, pad_w);

  if (out_h != working.height || out_w != working.width) {
    Image adjusted = make_image(out_h, out_w, working.channels);
    for (int c = 0; c < working.channels; ++c) {
      for (int r = 0; r < out_h; ++r) {
        const int src_r = pad_h ? r - off_h : r + off_h;
        if (src_r < 0 || src_r >= working.height) continue;
        for (int col = 0; col < out_w; ++col) {
          const int src_c = pad_w ? col - off_w : col + off_w;
          if (src_c < 0 || src_c >= working.width) continue;
          adjusted.at(c, r, col) = working.at(c, src_r, src_c);
        }
      }
    }
    const double shift_c = pad_w ? off_w : -off_w;
    const double shift_r = pad_h ? off_h : -off_h;
    std::vector<std::array<double, 2>> adjusted_pts;
    for (const auto& p : pts) {
      const double col = p[0] + shift_c;
      const double row = p[1] + shift_r;
      if (col < 0.0 || col >= out_w || row < 0.0 || row >= out_h) continue;
      adjusted_pts.push_back({col, row});
    }
    working = std::move(adjusted);
    pts = std::move(adjusted_pts);
  }

  result.image = std::move(working);
  result.points.points = std::move(pts);
  result.points.height = result.image.height;
  result.points.width = result.image.width;
  return result;
}

std::pair<Image, PointSet> random_flip(const Image& image,
                                       const PointSet& points,
                                       double probability,
                                       std::mt19937_64& rng) {
  if (probability < 0.0 || probability > 1.0) {
    throw ConfigError("flip probability must lie in [0, 1]");
  }
  bool flip = false;
  if (probability > 0.0) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    flip = dist(rng) < probability;
  }
  if (!flip) return {image, points};
  PointSet mirrored = points;
  mirrored.height = image.height;
  mirrored.width = image.width;
  for (auto& p : mirrored.points) {
    p[0] = (image.width - 1) - p[0];
  }
  return {flip_horizontal(image), std::move(mirrored)};
}

DensityMap build_ground_truth(const PointSet& points, const GtOptions& gt) {
  if (gt.mode == GtOptions::Mode::fixed) {
    return fixed_kernel_density(points, gt.sigma);
  }
  return adaptive_kernel_density(points, gt.beta, gt.k);
}

std::string annotation_path_for_image(const std::string& ann_dir,
                                      const std::string& image_path) {
  const std::filesystem::path stem =
      std::filesystem::path(image_path).stem();
  return (std::filesystem::path(ann_dir) / (stem.string() + ".csv")).string();
}

std::vector<PreparedSample> load_prepared_samples(
    const std::string& manifest_path, const std::string& images_dir,
    const std::string& ann_dir, Split split, const LoadOptions& options) {
  const std::vector<ManifestEntry> manifest = read_manifest(manifest_path);
  std::vector<PreparedSample> samples;
  for (const ManifestEntry& entry : manifest) {
    if (entry.split != split) continue;
    const std::string image_path =
        (std::filesystem::path(images_dir) / entry.image_path).string();
    const std::string ann_path =
        annotation_path_for_image(ann_dir, entry.image_path);
    Image image = read_netpbm(image_path);
    const std::vector<BBoxRecord> records = parse_annotations(ann_path);
    PointSet points = convert_group(records, options.group);
    points.height = image.height;
    points.width = image.width;
    ResizeResult prepared =
        resize_with_cap(image, points, options.max_h, options.max_w);
    PreparedSample sample;
    sample.id = entry.image_path;
    sample.density = build_ground_truth(prepared.points, options.gt);
    sample.image = std::move(prepared.image);
    sample.points = std::move(prepared.points);
    samples.push_back(std::move(sample));
  }
  if (samples.empty()) {
    throw ConfigError("manifest " + manifest_path + " holds no '" +
                      to_string(split) + "' samples");
  }
  return samples;
}

}  // namespace crowdkit
