#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace crowdkit {

// Round-trip-ish decimal rendering used by every CSV/points writer.
// Integral values keep one trailing decimal ("13" -> "13.0") so that
// rewritten files are byte-stable across runs.
std::string format_real(double value);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);

std::vector<std::uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path,
                       const std::vector<std::uint8_t>& bytes);

// Splits one CSV line on commas; fields are trimmed of surrounding spaces.
std::vector<std::string> split_csv_line(const std::string& line);

double parse_real(const std::string& text, const std::string& context);
long parse_integer(const std::string& text, const std::string& context);

}  // namespace crowdkit
