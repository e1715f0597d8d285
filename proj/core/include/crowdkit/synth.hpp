#pragma once

#include <cstdint>
#include <string>

namespace crowdkit {

enum class SynthRegime { scale_var, isolated, mixed };

SynthRegime synth_regime_from_string(const std::string& text);

struct SynthOptions {
  int count = 20;
  int min_points = 5;
  int max_points = 30;
  SynthRegime regime = SynthRegime::mixed;
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
};

// Writes <out_dir>/images/img_NNNN.ppm, <out_dir>/annotations/img_NNNN.csv
// (detection-layout people boxes whose head points match the rendered
// blobs) and <out_dir>/samples.csv. Deterministic per seed.
//
// Regimes shape the measured statistics:
//   scale_var - bimodal box sizes over a jittered grid (high CV, low DVI)
//   isolated  - near-constant sizes, one dense blob plus far-away
//               singletons (low CV, high DVI)
//   mixed     - moderate spread of both
void make_synthetic(const std::string& out_dir, const SynthOptions& options);

}  // namespace crowdkit
