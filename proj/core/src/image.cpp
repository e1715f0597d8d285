#include "crowdkit/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"

namespace crowdkit {

Image make_image(int height, int width, int channels, double fill) {
  if (height <= 0 || width <= 0 || (channels != 1 && channels != 3)) {
    throw ConfigError("image extents must be positive with 1 or 3 channels");
  }
  Image img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.data.assign(
      static_cast<std::size_t>(channels) * height * width, fill);
  return img;
}

namespace {

struct PbmScanner {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
  const std::string& path;

  // Token scanner that skips whitespace and '#' comments.
  std::string token() {
    while (pos < bytes.size()) {
      const char c = static_cast<char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() &&
           !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    }
    if (start == pos) throw ParseError(path + ": truncated netpbm header");
    return std::string(reinterpret_cast<const char*>(bytes.data() + start),
                       pos - start);
  }

  int integer() {
    return static_cast<int>(parse_integer(token(), path + " header"));
  }
};

}  // namespace

Image read_netpbm(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_binary_file(path);
  PbmScanner scan{bytes, 0, path};
  const std::string magic = scan.token();
  int channels;
  bool binary;
  if (magic == "P2") {
    channels = 1;
    binary = false;
  } else if (magic == "P3") {
    channels = 3;
    binary = false;
  } else if (magic == "P5") {
    channels = 1;
    binary = true;
  } else if (magic == "P6") {
    channels = 3;
    binary = true;
  } else {
    throw ParseError(path + ": unsupported netpbm magic '" + magic + "'");
  }
  const int width = scan.integer();
  const int height = scan.integer();
  const int maxval = scan.integer();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw ParseError(path + ": invalid netpbm dimensions or maxval");
  }
  Image img = make_image(height, width, channels);
  const std::size_t samples =
      static_cast<std::size_t>(channels) * height * width;
  const double inv_max = 1.0 / maxval;
  if (binary) {
    ++scan.pos;  // single whitespace after maxval
    const int bytes_per = maxval > 255 ? 2 : 1;
    if (scan.pos + samples * bytes_per > bytes.size()) {
      throw ParseError(path + ": truncated netpbm payload");
    }
    for (std::size_t i = 0; i < samples; ++i) {
      int value;
      if (bytes_per == 2) {
        value = (bytes[scan.pos + 2 * i] << 8) | bytes[scan.pos + 2 * i + 1];
      } else {
        value = bytes[scan.pos + i];
      }
      // Interleaved samples -> planar layout.
      const int c = static_cast<int>(i % channels);
      const std::size_t pixel = i / channels;
      img.data[static_cast<std::size_t>(c) * height * width + pixel] =
          value * inv_max;
    }
  } else {
    for (std::size_t i = 0; i < samples; ++i) {
      const int value = scan.integer();
      const int c = static_cast<int>(i % channels);
      const std::size_t pixel = i / channels;
      img.data[static_cast<std::size_t>(c) * height * width + pixel] =
          value * inv_max;
    }
  }
  return img;
}

void write_netpbm(const std::string& path, const Image& image) {
  std::ostringstream header;
  header << (image.channels == 3 ? "P6" : "P5") << "\n"
         << image.width << " " << image.height << "\n255\n";
  const std::string head = header.str();
  std::vector<std::uint8_t> out(head.begin(), head.end());
  const std::size_t pixels =
      static_cast<std::size_t>(image.height) * image.width;
  for (std::size_t pixel = 0; pixel < pixels; ++pixel) {
    for (int c = 0; c < image.channels; ++c) {
      const double v =
          image.data[static_cast<std::size_t>(c) * pixels + pixel];
      const double clamped = std::clamp(v, 0.0, 1.0);
      out.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0)));
    }
  }
  write_binary_file(path, out);
}

Image resize_bilinear(const Image& image, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) {
    throw ConfigError("resize target extents must be positive");
  }
  Image out = make_image(out_h, out_w, image.channels);
  const double sh =
      out_h > 1 ? static_cast<double>(image.height - 1) / (out_h - 1) : 0.0;
  const double sw =
      out_w > 1 ? static_cast<double>(image.width - 1) / (out_w - 1) : 0.0;
  for (int c = 0; c < image.channels; ++c) {
    for (int r = 0; r < out_h; ++r) {
      const double src_r = r * sh;
      const int r0 = std::min(static_cast<int>(src_r), image.height - 1);
      const int r1 = std::min(r0 + 1, image.height - 1);
      const double wr = src_r - r0;
      for (int col = 0; col < out_w; ++col) {
        const double src_c = col * sw;
        const int c0 = std::min(static_cast<int>(src_c), image.width - 1);
        const int c1 = std::min(c0 + 1, image.width - 1);
        const double wc = src_c - c0;
        const double top =
            image.at(c, r0, c0) * (1.0 - wc) + image.at(c, r0, c1) * wc;
        const double bottom =
            image.at(c, r1, c0) * (1.0 - wc) + image.at(c, r1, c1) * wc;
        out.at(c, r, col) = top * (1.0 - wr) + bottom * wr;
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out = image;
  for (int c = 0; c < image.channels; ++c) {
    for (int r = 0; r < image.height; ++r) {
      for (int col = 0; col < image.width; ++col) {
        out.at(c, r, col) = image.at(c, r, image.width - 1 - col);
      }
    }
  }
  return out;
}

Tensor image_to_tensor(const Image& image) {
  return Tensor::from_data({1, image.channels, image.height, image.width},
                           image.data);
}

}  // namespace crowdkit
