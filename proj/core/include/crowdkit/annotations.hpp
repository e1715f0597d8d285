#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "crowdkit/density.hpp"

namespace crowdkit {

// One detection-style annotation line:
// bb_left,bb_top,bb_width,bb_height,score,category,truncation,occlusion
struct BBoxRecord {
  double left = 0;
  double top = 0;
  double width = 0;
  double height = 0;
  int score = 0;
  int category = 0;
  int truncation = 0;
  int occlusion = 0;
};

enum class CategoryGroup { people, vehicle };

CategoryGroup category_group_from_string(const std::string& text);
std::string to_string(CategoryGroup group);
bool category_in_group(int category, CategoryGroup group);

std::vector<BBoxRecord> parse_annotations(const std::string& path);
std::vector<BBoxRecord> parse_annotation_stream(std::istream& in,
                                                const std::string& name);
void write_annotations(const std::string& path,
                       const std::vector<BBoxRecord>& records);

// Head point (bb_left + bb_width/2, bb_top) of categories 0 and 1.
// Coordinates stay real-valued; image extents are left unset (0).
PointSet convert_people(const std::vector<BBoxRecord>& records);
// Box center of categories 4, 5, 6 and 9.
PointSet convert_vehicle(const std::vector<BBoxRecord>& records);
PointSet convert_group(const std::vector<BBoxRecord>& records,
                       CategoryGroup group);

// "col,row" per line.
void write_points_csv(const std::string& path, const PointSet& points);
PointSet read_points_csv(const std::string& path);

}  // namespace crowdkit
