#pragma once

#include <string>
#include <vector>

#include "crowdkit/tensor.hpp"

namespace crowdkit {

// Planar CHW image with values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> data;

  double& at(int c, int r, int col) {
    return data[(static_cast<std::size_t>(c) * height + r) * width + col];
  }
  double at(int c, int r, int col) const {
    return data[(static_cast<std::size_t>(c) * height + r) * width + col];
  }
};

Image make_image(int height, int width, int channels, double fill = 0.0);

// Netpbm decoders: P2/P5 (PGM) and P3/P6 (PPM), maxval up to 65535.
Image read_netpbm(const std::string& path);
// Writes binary P6 for 3-channel images, binary P5 for 1-channel.
void write_netpbm(const std::string& path, const Image& image);

// Align-corners bilinear, same convention as the tensor op.
Image resize_bilinear(const Image& image, int out_h, int out_w);
Image flip_horizontal(const Image& image);

Tensor image_to_tensor(const Image& image);  // [1, C, H, W]

}  // namespace crowdkit
