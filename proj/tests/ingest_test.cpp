#include <algorithm>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "crowdkit/annotations.hpp"
#include "crowdkit/dataset.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"
#include "crowdkit/image.hpp"

namespace crowdkit {
namespace {

BBoxRecord box(double left, double top, double w, double h, int category) {
  BBoxRecord rec;
  rec.left = left;
  rec.top = top;
  rec.width = w;
  rec.height = h;
  rec.category = category;
  return rec;
}

TEST(Convert, PeopleHeadPoint) {
  PointSet points = convert_people({box(10, 20, 6, 8, 0)});
  ASSERT_EQ(points.points.size(), 1u);
  EXPECT_DOUBLE_EQ(points.points[0][0], 13.0);
  EXPECT_DOUBLE_EQ(points.points[0][1], 20.0);
}

TEST(Convert, PeopleFiltersCategories) {
  PointSet points = convert_people(
      {box(10, 20, 6, 8, 4), box(0, 0, 2, 2, 1), box(5, 5, 2, 2, 9)});
  ASSERT_EQ(points.points.size(), 1u);
  EXPECT_DOUBLE_EQ(points.points[0][0], 1.0);
}

TEST(Convert, EmptyInput) {
  EXPECT_TRUE(convert_people({}).points.empty());
  EXPECT_TRUE(convert_vehicle({}).points.empty());
}

TEST(Convert, VehicleCenterPoint) {
  PointSet points = convert_vehicle({box(10, 20, 6, 8, 4)});
  ASSERT_EQ(points.points.size(), 1u);
  EXPECT_DOUBLE_EQ(points.points[0][0], 13.0);
  EXPECT_DOUBLE_EQ(points.points[0][1], 24.0);
}

TEST(Convert, VehicleCategoriesAndHalfPixel) {
  PointSet skipped = convert_vehicle({box(10, 20, 6, 8, 0)});
  EXPECT_TRUE(skipped.points.empty());
  PointSet bus = convert_vehicle({box(0, 0, 1, 1, 9)});
  ASSERT_EQ(bus.points.size(), 1u);
  EXPECT_DOUBLE_EQ(bus.points[0][0], 0.5);
  EXPECT_DOUBLE_EQ(bus.points[0][1], 0.5);
}

TEST(Convert, OrderPreservedPerRecord) {
  std::vector<BBoxRecord> records{box(0, 0, 2, 2, 0), box(10, 0, 2, 2, 3),
                                  box(20, 0, 2, 2, 1), box(30, 0, 2, 2, 0)};
  PointSet points = convert_people(records);
  ASSERT_EQ(points.points.size(), 3u);
  EXPECT_DOUBLE_EQ(points.points[0][0], 1.0);
  EXPECT_DOUBLE_EQ(points.points[1][0], 21.0);
  EXPECT_DOUBLE_EQ(points.points[2][0], 31.0);
}

TEST(Annotations, ParseErrorNamesLine) {
  std::istringstream in("1,2,3,4,1,0,0,0\nbroken line\n");
  try {
    parse_annotation_stream(in, "ann.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("ann.csv:2"), std::string::npos);
  }
}

TEST(Annotations, RejectsNonPositiveExtents) {
  std::istringstream in("1,2,0,4,1,0,0,0\n");
  EXPECT_THROW(parse_annotation_stream(in, "ann.csv"), ParseError);
}

TEST(Annotations, FileRoundTrip) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "crowdkit_ann.csv").string();
  std::vector<BBoxRecord> records{box(10.5, 20.25, 6, 8, 0),
                                  box(1, 2, 3, 4, 9)};
  write_annotations(path, records);
  const auto parsed = parse_annotations(path);
  ASSERT_EQ(parsed.size(), 2u);
  EXPECT_DOUBLE_EQ(parsed[0].left, 10.5);
  EXPECT_DOUBLE_EQ(parsed[0].top, 20.25);
  EXPECT_EQ(parsed[1].category, 9);
  std::filesystem::remove(path);
}

TEST(PointsCsv, RoundTripAndFormatting) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "crowdkit_pts.csv").string();
  PointSet points;
  points.points = {{13.0, 20.0}, {0.5, 99.25}};
  write_points_csv(path, points);
  EXPECT_EQ(read_text_file(path), "13.0,20.0\n0.5,99.25\n");
  PointSet loaded = read_points_csv(path);
  ASSERT_EQ(loaded.points.size(), 2u);
  EXPECT_DOUBLE_EQ(loaded.points[1][1], 99.25);
  std::filesystem::remove(path);
}

TEST(FilterAndSplit, FloorAllocation) {
  std::vector<std::pair<std::string, int>> samples;
  for (int i = 0; i < 10; ++i) {
    samples.emplace_back("img" + std::to_string(i) + ".ppm", 20);
  }
  const auto entries = filter_and_split(samples, 10, {0.8, 0.1, 0.1}, 5);
  int train = 0, val = 0, test = 0;
  for (const auto& e : entries) {
    if (e.split == Split::train) ++train;
    if (e.split == Split::val) ++val;
    if (e.split == Split::test) ++test;
  }
  EXPECT_EQ(train, 8);
  EXPECT_EQ(val, 1);
  EXPECT_EQ(test, 1);
}

TEST(FilterAndSplit, DropsBelowMinCount) {
  std::vector<std::pair<std::string, int>> samples{{"a.ppm", 9},
                                                   {"b.ppm", 10},
                                                   {"c.ppm", 50}};
  const auto entries = filter_and_split(samples, 10, {1.0, 0.0, 0.0}, 0);
  ASSERT_EQ(entries.size(), 2u);
  for (const auto& e : entries) EXPECT_NE(e.image_path, "a.ppm");
  EXPECT_THROW(filter_and_split({{"a.ppm", 3}}, 10, {1.0, 0.0, 0.0}, 0),
               ConfigError);
}

TEST(FilterAndSplit, DeterministicManifest) {
  std::vector<std::pair<std::string, int>> samples;
  for (int i = 0; i < 23; ++i) {
    samples.emplace_back("img" + std::to_string(i) + ".ppm", 10 + i);
  }
  const auto a = filter_and_split(samples, 10, {0.7, 0.2, 0.1}, 99);
  // Same seed, shuffled input order.
  std::reverse(samples.begin(), samples.end());
  const auto b = filter_and_split(samples, 10, {0.7, 0.2, 0.1}, 99);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image_path, b[i].image_path);
    EXPECT_EQ(a[i].split, b[i].split);
  }
}

TEST(FilterAndSplit, PartitionIsExact) {
  std::vector<std::pair<std::string, int>> samples;
  for (int i = 0; i < 37; ++i) {
    samples.emplace_back("img" + std::to_string(i) + ".ppm", 12);
  }
  const auto entries = filter_and_split(samples, 10, {0.6, 0.25, 0.15}, 7);
  std::set<std::string> seen;
  for (const auto& e : entries) {
    EXPECT_TRUE(seen.insert(e.image_path).second) << "duplicate " << e.image_path;
  }
  EXPECT_EQ(seen.size(), 37u);
  EXPECT_THROW(filter_and_split(samples, 10, {0.5, 0.2, 0.2}, 7), ConfigError);
}

TEST(Manifest, FileRoundTrip) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "crowdkit_manifest.csv").string();
  std::vector<ManifestEntry> entries{{"a.ppm", Split::train, 12},
                                     {"b.ppm", Split::test, 40}};
  write_manifest(path, entries);
  const auto loaded = read_manifest(path);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].image_path, "a.ppm");
  EXPECT_EQ(loaded[1].split, Split::test);
  EXPECT_EQ(loaded[1].point_count, 40);
  std::filesystem::remove(path);
}

TEST(ResizeWithCap, HalvesOversizedImage) {
  Image image = make_image(1536, 2048, 3, 0.5);
  PointSet points;
  points.points = {{100.0, 200.0}};
  points.height = 1536;
  points.width = 2048;
  ResizeResult result = resize_with_cap(image, points);
  EXPECT_EQ(result.image.height, 768);
  EXPECT_EQ(result.image.width, 1024);
  EXPECT_DOUBLE_EQ(result.scale, 0.5);
  ASSERT_EQ(result.points.points.size(), 1u);
  EXPECT_DOUBLE_EQ(result.points.points[0][0], 50.0);
  EXPECT_DOUBLE_EQ(result.points.points[0][1], 100.0);
}

TEST(ResizeWithCap, UnderCapUntouched) {
  Image image = make_image(480, 640, 3, 0.25);
  PointSet points;
  points.points = {{10.0, 20.0}};
  points.height = 480;
  points.width = 640;
  ResizeResult result = resize_with_cap(image, points);
  EXPECT_EQ(result.image.height, 480);
  EXPECT_EQ(result.image.width, 640);
  EXPECT_DOUBLE_EQ(result.scale, 1.0);
  EXPECT_DOUBLE_EQ(result.points.points[0][0], 10.0);
}

TEST(ResizeWithCap, SquareUsesMinRatio) {
  Image image = make_image(2000, 2000, 1, 0.0);
  PointSet points;
  points.height = 2000;
  points.width = 2000;
  ResizeResult result = resize_with_cap(image, points);
  EXPECT_EQ(result.image.height, 768);
  EXPECT_EQ(result.image.width, 768);
}

TEST(ResizeWithCap, PadsTinyImagesToMultiple) {
  Image image = make_image(20, 50, 1, 1.0);
  PointSet points;
  points.points = {{0.0, 0.0}};
  points.height = 20;
  points.width = 50;
  ResizeResult result = resize_with_cap(image, points);
  EXPECT_EQ(result.image.height, 32);
  EXPECT_EQ(result.image.width, 32);  // 50 crops down, 20 pads up
  // Points follow: row shifted by the pad offset, column by the crop.
  for (const auto& p : result.points.points) {
    EXPECT_GE(p[0], 0.0);
    EXPECT_LT(p[0], 32.0);
    EXPECT_GE(p[1], 0.0);
    EXPECT_LT(p[1], 32.0);
  }
}

TEST(ResizeWithCap, NeverUpscales) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 100 + static_cast<int>(rng() % 2000);
    const int w = 100 + static_cast<int>(rng() % 2000);
    Image image = make_image(h, w, 1, 0.0);
    PointSet points;
    points.height = h;
    points.width = w;
    ResizeResult result = resize_with_cap(image, points);
    EXPECT_LE(result.scale, 1.0);
    EXPECT_LE(result.image.height, std::max(h, 32));
    EXPECT_LE(result.image.width, std::max(w, 32));
    EXPECT_EQ(result.image.height % 32, 0);
    EXPECT_EQ(result.image.width % 32, 0);
    if (h > 768 || w > 1024) {
      EXPECT_DOUBLE_EQ(result.scale, std::min(768.0 / h, 1024.0 / w));
    } else {
      EXPECT_DOUBLE_EQ(result.scale, 1.0);
    }
  }
}

TEST(RandomFlip, MirrorFormulaAndInvolution) {
  Image image = make_image(4, 100, 1, 0.0);
  image.at(0, 1, 0) = 1.0;
  PointSet points;
  points.points = {{0.0, 1.0}};
  points.height = 4;
  points.width = 100;
  std::mt19937_64 rng(1);
  auto [flipped, moved] = random_flip(image, points, 1.0, rng);
  EXPECT_DOUBLE_EQ(moved.points[0][0], 99.0);
  EXPECT_DOUBLE_EQ(flipped.at(0, 1, 99), 1.0);
  auto [restored, back] = random_flip(flipped, moved, 1.0, rng);
  EXPECT_DOUBLE_EQ(back.points[0][0], 0.0);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    EXPECT_DOUBLE_EQ(restored.data[i], image.data[i]);
  }
}

TEST(RandomFlip, ZeroProbabilityIsIdentity) {
  Image image = make_image(4, 4, 1, 0.5);
  PointSet points;
  points.points = {{2.0, 2.0}};
  points.height = 4;
  points.width = 4;
  std::mt19937_64 rng(1);
  auto [same, pts] = random_flip(image, points, 0.0, rng);
  EXPECT_DOUBLE_EQ(pts.points[0][0], 2.0);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    EXPECT_DOUBLE_EQ(same.data[i], image.data[i]);
  }
}

TEST(Netpbm, BinaryRoundTrip) {
  Image image = make_image(3, 5, 3, 0.0);
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < 3; ++r) {
      for (int col = 0; col < 5; ++col) {
        image.at(c, r, col) = (c + r + col) / 10.0;
      }
    }
  }
  const std::string path =
      (std::filesystem::temp_directory_path() / "crowdkit_img.ppm").string();
  write_netpbm(path, image);
  Image loaded = read_netpbm(path);
  EXPECT_EQ(loaded.height, 3);
  EXPECT_EQ(loaded.width, 5);
  EXPECT_EQ(loaded.channels, 3);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    EXPECT_NEAR(loaded.data[i], image.data[i], 0.5 / 255.0);
  }
  std::filesystem::remove(path);
}

TEST(Netpbm, AsciiVariants) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "crowdkit_ascii.pgm").string();
  write_text_file(path, "P2\n# comment\n2 2\n255\n0 128\n255 64\n");
  Image gray = read_netpbm(path);
  EXPECT_EQ(gray.channels, 1);
  EXPECT_NEAR(gray.at(0, 0, 1), 128.0 / 255.0, 1e-12);
  write_text_file(path, "P3\n1 1\n255\n10 20 30\n");
  Image color = read_netpbm(path);
  EXPECT_EQ(color.channels, 3);
  EXPECT_NEAR(color.at(2, 0, 0), 30.0 / 255.0, 1e-12);
  EXPECT_THROW(
      [&] {
        write_text_file(path, "P9\n1 1\n255\n0\n");
        read_netpbm(path);
      }(),
      ParseError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace crowdkit
