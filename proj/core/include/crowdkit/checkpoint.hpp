#pragma once

#include <map>
#include <string>

#include "crowdkit/tensor.hpp"

namespace crowdkit {

// CKWT weight container: magic "CKWT", version u32, then one record per
// parameter (name length u32, UTF-8 name, rank u32, dims u32[rank],
// f64 payload). Everything little-endian. Records are written in name
// order so files are byte-stable.
inline constexpr std::uint32_t kCkwtVersion = 1;

void write_ckwt(const std::string& path,
                const std::map<std::string, Tensor>& named);
std::map<std::string, Tensor> read_ckwt(const std::string& path);

}  // namespace crowdkit
