#include "crowdkit/annotations.hpp"

#include <fstream>
#include <sstream>

#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"

namespace crowdkit {

CategoryGroup category_group_from_string(const std::string& text) {
  if (text == "people") return CategoryGroup::people;
  if (text == "vehicle") return CategoryGroup::vehicle;
  throw ConfigError("unknown category group '" + text +
                    "' (expected 'people' or 'vehicle')");
}

std::string to_string(CategoryGroup group) {
  return group == CategoryGroup::people ? "people" : "vehicle";
}

bool category_in_group(int category, CategoryGroup group) {
  if (group == CategoryGroup::people) {
    return category == 0 || category == 1;
  }
  return category == 4 || category == 5 || category == 6 || category == 9;
}

std::vector<BBoxRecord> parse_annotation_stream(std::istream& in,
                                                const std::string& name) {
  std::vector<BBoxRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string ctx = name + ":" + std::to_string(line_no);
    const auto fields = split_csv_line(line);
    if (fields.size() != 8) {
      throw ParseError(ctx + ": expected 8 comma-separated fields, got " +
                       std::to_string(fields.size()));
    }
    BBoxRecord rec;
    rec.left = parse_real(fields[0], ctx);
    rec.top = parse_real(fields[1], ctx);
    rec.width = parse_real(fields[2], ctx);
    rec.height = parse_real(fields[3], ctx);
    rec.score = static_cast<int>(parse_integer(fields[4], ctx));
    rec.category = static_cast<int>(parse_integer(fields[5], ctx));
    rec.truncation = static_cast<int>(parse_integer(fields[6], ctx));
    rec.occlusion = static_cast<int>(parse_integer(fields[7], ctx));
    if (rec.width <= 0.0 || rec.height <= 0.0) {
      throw ParseError(ctx + ": bounding box extents must be positive");
    }
    records.push_back(rec);
  }
  return records;
}

std::vector<BBoxRecord> parse_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file: " + path);
  return parse_annotation_stream(in, path);
}

void write_annotations(const std::string& path,
                       const std::vector<BBoxRecord>& records) {
  std::ostringstream out;
  for (const BBoxRecord& rec : records) {
    out << format_real(rec.left) << "," << format_real(rec.top) << ","
        << format_real(rec.width) << "," << format_real(rec.height) << ","
        << rec.score << "," << rec.category << "," << rec.truncation << ","
        << rec.occlusion << "\n";
  }
  write_text_file(path, out.str());
}

PointSet convert_people(const std::vector<BBoxRecord>& records) {
  PointSet points;
  for (const BBoxRecord& rec : records) {
    if (!category_in_group(rec.category, CategoryGroup::people)) continue;
    points.points.push_back({rec.left + rec.width / 2.0, rec.top});
  }
  return points;
}

PointSet convert_vehicle(const std::vector<BBoxRecord>& records) {
  PointSet points;
  for (const BBoxRecord& rec : records) {
    if (!category_in_group(rec.category, CategoryGroup::vehicle)) continue;
    points.points.push_back(
        {rec.left + rec.width / 2.0, rec.top + rec.height / 2.0});
  }
  return points;
}

PointSet convert_group(const std::vector<BBoxRecord>& records,
                       CategoryGroup group) {
  return group == CategoryGroup::people ? convert_people(records)
                                        : convert_vehicle(records);
}

void write_points_csv(const std::string& path, const PointSet& points) {
  std::ostringstream out;
  for (const auto& p : points.points) {
    out << format_real(p[0]) << "," << format_real(p[1]) << "\n";
  }
  write_text_file(path, out.str());
}

PointSet read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open points file: " + path);
  PointSet points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string ctx = path + ":" + std::to_string(line_no);
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) {
      throw ParseError(ctx + ": expected 'col,row'");
    }
    points.points.push_back(
        {parse_real(fields[0], ctx), parse_real(fields[1], ctx)});
  }
  return points;
}

}  // namespace crowdkit
