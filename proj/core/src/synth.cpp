#include "crowdkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <vector>

#include "crowdkit/annotations.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"
#include "crowdkit/image.hpp"

namespace crowdkit {

SynthRegime synth_regime_from_string(const std::string& text) {
  if (text == "scale-var") return SynthRegime::scale_var;
  if (text == "isolated") return SynthRegime::isolated;
  if (text == "mixed") return SynthRegime::mixed;
  throw ConfigError("unknown regime '" + text +
                    "' (expected scale-var, isolated or mixed)");
}

namespace {

struct Blob {
  double col = 0;
  double row = 0;
  double size = 0;  // box edge in pixels
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng);
}

// Jittered grid covering the frame; NN distances stay tight so the
// distance distribution clusters (low DVI).
std::vector<Blob> place_scatter(int n, int height, int width,
                                std::mt19937_64& rng) {
  std::vector<Blob> blobs;
  const int cells = static_cast<int>(std::ceil(std::sqrt(n)));
  const double cell_h = static_cast<double>(height) / cells;
  const double cell_w = static_cast<double>(width) / cells;
  std::vector<int> slots(static_cast<std::size_t>(cells) * cells);
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = static_cast<int>(i);
  for (std::size_t i = slots.size(); i > 1; --i) {
    std::swap(slots[i - 1], slots[rng() % i]);
  }
  for (int i = 0; i < n; ++i) {
    const int slot = slots[static_cast<std::size_t>(i)];
    const int gr = slot / cells;
    const int gc = slot % cells;
    Blob b;
    b.row = (gr + 0.5) * cell_h + uniform(rng, -0.3, 0.3) * cell_h;
    b.col = (gc + 0.5) * cell_w + uniform(rng, -0.3, 0.3) * cell_w;
    blobs.push_back(b);
  }
  return blobs;
}

// One dense central cluster plus a few far singletons in the corners.
std::vector<Blob> place_isolated(int n, int height, int width,
                                 std::mt19937_64& rng) {
  std::vector<Blob> blobs;
  const int outliers = std::clamp(n / 8, 2, 4);
  const int core = n - outliers;
  const double cr = height / 2.0;
  const double cc = width / 2.0;
  const double radius = std::min(height, width) / 8.0;
  for (int i = 0; i < core; ++i) {
    const double angle = uniform(rng, 0.0, 2.0 * 3.14159265358979323846);
    const double dist = radius * std::sqrt(uniform(rng, 0.0, 1.0));
    blobs.push_back({cc + dist * std::cos(angle), cr + dist * std::sin(angle), 0});
  }
  const double margin = 4.0;
  const double corners[4][2] = {{margin, margin},
                                {static_cast<double>(width) - margin, margin},
                                {margin, static_cast<double>(height) - margin},
                                {static_cast<double>(width) - margin,
                                 static_cast<double>(height) - margin}};
  for (int i = 0; i < outliers; ++i) {
    blobs.push_back({corners[i][0] + uniform(rng, -2.0, 2.0),
                     corners[i][1] + uniform(rng, -2.0, 2.0), 0});
  }
  return blobs;
}

std::vector<Blob> place_mixed(int n, int height, int width,
                              std::mt19937_64& rng) {
  std::vector<Blob> blobs;
  const int clustered = n / 2;
  const int scattered = n - clustered;
  auto scatter = place_scatter(scattered, height, width, rng);
  blobs.insert(blobs.end(), scatter.begin(), scatter.end());
  const int groups = 2;
  for (int i = 0; i < clustered; ++i) {
    const int g = i % groups;
    const double cr = height * (g == 0 ? 0.3 : 0.7);
    const double cc = width * (g == 0 ? 0.65 : 0.3);
    const double radius = std::min(height, width) / 6.0;
    blobs.push_back({cc + uniform(rng, -radius, radius),
                     cr + uniform(rng, -radius, radius), 0});
  }
  return blobs;
}

void assign_sizes(std::vector<Blob>& blobs, SynthRegime regime,
                  std::mt19937_64& rng) {
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    switch (regime) {
      case SynthRegime::scale_var:
        // Alternating small/large keeps every image's CV high.
        blobs[i].size = (i % 2 == 0) ? uniform(rng, 4.0, 7.0)
                                     : uniform(rng, 28.0, 36.0);
        break;
      case SynthRegime::isolated:
        blobs[i].size = uniform(rng, 7.0, 9.0);
        break;
      case SynthRegime::mixed:
        blobs[i].size = uniform(rng, 6.0, 16.0);
        break;
    }
  }
}

// Blob extent tracks the box size but stays compact: overlapping saturated
// blobs would decouple image brightness from object count and make the
// counting task ill-posed at desk scale.
void render_blob(Image& image, double col, double row, double size,
                 double peak) {
  const double sigma = std::clamp(size / 5.0, 1.2, 2.4);
  const double radius = 3.0 * sigma;
  const int r0 = std::max(0, static_cast<int>(std::floor(row - radius)));
  const int r1 = std::min(image.height - 1, static_cast<int>(std::ceil(row + radius)));
  const int c0 = std::max(0, static_cast<int>(std::floor(col - radius)));
  const int c1 = std::min(image.width - 1, static_cast<int>(std::ceil(col + radius)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double dy = r - row;
      const double dx = c - col;
      const double v = peak * std::exp(-(dx * dx + dy * dy) /
                                       (2.0 * sigma * sigma));
      for (int ch = 0; ch < image.channels; ++ch) {
        image.at(ch, r, c) = std::min(1.0, image.at(ch, r, c) + v);
      }
    }
  }
}

}  // namespace

void make_synthetic(const std::string& out_dir, const SynthOptions& options) {
  if (options.count < 0) throw ConfigError("synth: count must be >= 0");
  if (options.min_points < 1 || options.max_points < options.min_points) {
    throw ConfigError("synth: need 1 <= min_points <= max_points");
  }
  if (options.height < 8 || options.width < 8) {
    throw ConfigError("synth: image extents must be at least 8");
  }
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "annotations");

  std::mt19937_64 rng(options.seed);
  std::ostringstream manifest;
  for (int index = 0; index < options.count; ++index) {
    const int n = options.min_points +
                  static_cast<int>(rng() % static_cast<std::uint64_t>(
                                       options.max_points - options.min_points + 1));
    std::vector<Blob> blobs;
    switch (options.regime) {
      case SynthRegime::scale_var:
        blobs = place_scatter(n, options.height, options.width, rng);
        break;
      case SynthRegime::isolated:
        blobs = place_isolated(n, options.height, options.width, rng);
        break;
      case SynthRegime::mixed:
        blobs = place_mixed(n, options.height, options.width, rng);
        break;
    }
    assign_sizes(blobs, options.regime, rng);

    // Head-point convention: box top-center sits on the rendered blob, so
    // the converted points line up with the image content.
    std::vector<BBoxRecord> records;
    Image image = make_image(options.height, options.width, 3, 0.05);
    for (Blob& blob : blobs) {
      const double size = std::min(blob.size,
                                   static_cast<double>(std::min(
                                       options.height, options.width)) - 2.0);
      double left = std::clamp(blob.col - size / 2.0, 0.0,
                               static_cast<double>(options.width) - size);
      double top = std::clamp(blob.row, 0.0,
                              static_cast<double>(options.height) - size);
      BBoxRecord rec;
      rec.left = left;
      rec.top = top;
      rec.width = size;
      rec.height = size;
      rec.score = 1;
      rec.category = 0;
      records.push_back(rec);
      render_blob(image, left + size / 2.0, top, size,
                  uniform(rng, 0.7, 0.85));
    }

    char stem[32];
    std::snprintf(stem, sizeof(stem), "img_%04d", index);
    const std::string image_name = std::string(stem) + ".ppm";
    const std::string ann_name = std::string(stem) + ".csv";
    write_netpbm((fs::path(out_dir) / "images" / image_name).string(), image);
    write_annotations((fs::path(out_dir) / "annotations" / ann_name).string(),
                      records);
    manifest << image_name << "," << records.size() << "\n";
  }
  write_text_file((fs::path(out_dir) / "samples.csv").string(),
                  manifest.str());
}

}  // namespace crowdkit
