#pragma once

#include <random>
#include <vector>

#include "crowdkit/tensor.hpp"

namespace crowdkit::testutil {

// Uniform values in [-1, -0.1] u [0.1, 1]: bounded away from the relu and
// max-pool kinks so finite differences stay clean.
inline Tensor rand_signed(Shape shape, std::mt19937_64& rng,
                          bool requires_grad = false) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor::from_data(std::move(shape), std::move(values), requires_grad);
}

inline Tensor rand_positive(Shape shape, std::mt19937_64& rng,
                            bool requires_grad = false) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = mag(rng);
  return Tensor::from_data(std::move(shape), std::move(values), requires_grad);
}

}  // namespace crowdkit::testutil
