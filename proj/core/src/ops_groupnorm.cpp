#include <cmath>

#include "crowdkit/autograd.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/ops.hpp"

namespace crowdkit::ops {

int group_count_for_channels(int channels) {
  if (channels <= 0) throw ConfigError("group normalization: channel count must be positive");
  if (channels <= 16) return channels;
  if (channels % 16 != 0) {
    throw ConfigError("group normalization: " + std::to_string(channels) +
                      " channels exceed 16 and are not divisible by 16");
  }
  return channels / 16;
}

Tensor group_normalize(const Tensor& input, const Tensor& gamma,
                       const Tensor& beta, double epsilon) {
  const Shape& is = input.shape();
  if (is.size() != 4) throw ConfigError("group_normalize: input must be 4-D");
  if (epsilon <= 0.0) throw ConfigError("group_normalize: epsilon must be positive");
  const int batch = is[0], channels = is[1], height = is[2], width = is[3];
  if (gamma.rank() != 1 || gamma.dim(0) != channels || beta.rank() != 1 ||
      beta.dim(0) != channels) {
    throw ConfigError("group_normalize: gamma/beta must be per-channel [" +
                      std::to_string(channels) + "]");
  }
  const int groups = group_count_for_channels(channels);
  const int group_channels = channels / groups;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t group_size = static_cast<std::size_t>(group_channels) * plane;

  const double* x = input.data().data();
  const double* pg = gamma.data().data();
  const double* pb = beta.data().data();
  std::vector<double> out(input.size());
  // Saved per (sample, group) for backward.
  auto means = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch) * groups);
  auto inv_sigmas = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch) * groups);

  for (int b = 0; b < batch; ++b) {
    for (int g = 0; g < groups; ++g) {
      const std::size_t base =
          (static_cast<std::size_t>(b) * channels +
           static_cast<std::size_t>(g) * group_channels) *
          plane;
      double sum = 0.0;
      for (std::size_t i = 0; i < group_size; ++i) sum += x[base + i];
      const double mean = sum / static_cast<double>(group_size);
      double var_sum = 0.0;
      for (std::size_t i = 0; i < group_size; ++i) {
        const double d = x[base + i] - mean;
        var_sum += d * d;
      }
      const double variance = var_sum / static_cast<double>(group_size);
      const double inv_sigma = 1.0 / std::sqrt(variance + epsilon);
      (*means)[static_cast<std::size_t>(b) * groups + g] = mean;
      (*inv_sigmas)[static_cast<std::size_t>(b) * groups + g] = inv_sigma;
      for (int lc = 0; lc < group_channels; ++lc) {
        const int c = g * group_channels + lc;
        const std::size_t cbase =
            (static_cast<std::size_t>(b) * channels + c) * plane;
        const double scale = pg[c] * inv_sigma;
        const double shift = pb[c] - scale * mean;
        for (std::size_t i = 0; i < plane; ++i) {
          out[cbase + i] = x[cbase + i] * scale + shift;
        }
      }
    }
  }

  Tensor result = Tensor::from_data(is, std::move(out));
  auto ix = input.impl();
  auto ig = gamma.impl();
  auto ib = beta.impl();
  autograd::record(
      result, "group_normalize", {input, gamma, beta},
      [ix, ig, ib, means, inv_sigmas, batch, channels, groups, group_channels,
       plane, group_size](TensorImpl& o) {
        const double* x = ix->data.data();
        const double* pg = ig->data.data();
        const double* go = o.grad.data();
        double* gx = ix->requires_grad ? autograd::grad_buffer(*ix).data()
                                       : nullptr;
        double* gg = ig->requires_grad ? autograd::grad_buffer(*ig).data()
                                       : nullptr;
        double* gb = ib->requires_grad ? autograd::grad_buffer(*ib).data()
                                       : nullptr;
        const double inv_m = 1.0 / static_cast<double>(group_size);
        for (int b = 0; b < batch; ++b) {
          for (int g = 0; g < groups; ++g) {
            const double mean =
                (*means)[static_cast<std::size_t>(b) * groups + g];
            const double inv_sigma =
                (*inv_sigmas)[static_cast<std::size_t>(b) * groups + g];
            const std::size_t base =
                (static_cast<std::size_t>(b) * channels +
                 static_cast<std::size_t>(g) * group_channels) *
                plane;
            // dL/dxhat plus the two group means needed for dL/dx.
            double sum_dxhat = 0.0;
            double sum_dxhat_xhat = 0.0;
            for (int lc = 0; lc < group_channels; ++lc) {
              const int c = g * group_channels + lc;
              const std::size_t cbase =
                  (static_cast<std::size_t>(b) * channels + c) * plane;
              const double gamma_c = pg[c];
              for (std::size_t i = 0; i < plane; ++i) {
                const double xhat = (x[cbase + i] - mean) * inv_sigma;
                const double dxhat = go[cbase + i] * gamma_c;
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
                if (gg) gg[c] += go[cbase + i] * xhat;
                if (gb) gb[c] += go[cbase + i];
              }
            }
            if (gx) {
              const double mean_dxhat = sum_dxhat * inv_m;
              const double mean_dxhat_xhat = sum_dxhat_xhat * inv_m;
              for (int lc = 0; lc < group_channels; ++lc) {
                const int c = g * group_channels + lc;
                const std::size_t cbase =
                    (static_cast<std::size_t>(b) * channels + c) * plane;
                const double gamma_c = pg[c];
                for (std::size_t i = 0; i < plane; ++i) {
                  const double xhat = (x[cbase + i] - mean) * inv_sigma;
                  const double dxhat = go[cbase + i] * gamma_c;
                  gx[cbase + i] += inv_sigma * (dxhat - mean_dxhat -
                                                xhat * mean_dxhat_xhat);
                }
              }
            }
          }
        }
      });
  return result;
}

}  // namespace crowdkit::ops
