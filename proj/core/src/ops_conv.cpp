#include <algorithm>
#include <cmath>

#include "crowdkit/autograd.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/ops.hpp"
#include "crowdkit/parallel.hpp"

namespace crowdkit::ops {

int conv2d_out_extent(int in, int kernel, int stride, int padding,
                      int dilation) {
  const int span = dilation * (kernel - 1) + 1;
  return (in + 2 * padding - span) / stride + 1;
}

namespace {

// Output positions whose sampled input index stays inside [0, extent).
// For index = o*stride - padding + tap*dilation.
void valid_out_range(int extent, int out_extent, int stride, int padding,
                     int tap, int dilation, int& lo, int& hi) {
  const int offset = tap * dilation - padding;
  // o*stride + offset >= 0  and  o*stride + offset < extent
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  hi = (extent - 1 - offset) / stride;  // may be negative
  lo = std::max(lo, 0);
  hi = std::min(hi, out_extent - 1);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel,
              const std::optional<Tensor>& bias, int stride, int padding,
              int dilation) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 4) throw ConfigError("conv2d: input must be 4-D, got " + shape_str(is));
  if (ks.size() != 4) throw ConfigError("conv2d: kernel must be 4-D, got " + shape_str(ks));
  if (stride <= 0 || dilation <= 0) {
    throw ConfigError("conv2d: stride and dilation must be positive");
  }
  if (padding < 0) throw ConfigError("conv2d: padding must be non-negative");
  const int batch = is[0], cin = is[1], in_h = is[2], in_w = is[3];
  const int cout = ks[0], kcin = ks[1], kh = ks[2], kw = ks[3];
  if (cin != kcin) {
    throw ConfigError("conv2d: input channels " + std::to_string(cin) +
                      " do not match kernel channels " + std::to_string(kcin));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) {
    throw ConfigError("conv2d: bias must have shape [" + std::to_string(cout) +
                      "]");
  }
  const int out_h = conv2d_out_extent(in_h, kh, stride, padding, dilation);
  const int out_w = conv2d_out_extent(in_w, kw, stride, padding, dilation);
  if (out_h < 1 || out_w < 1) {
    throw ConfigError("conv2d: kernel span exceeds padded input (" +
                      shape_str(is) + " with " + shape_str(ks) + ")");
  }

  const std::size_t in_plane = static_cast<std::size_t>(in_h) * in_w;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t in_sample = static_cast<std::size_t>(cin) * in_plane;
  const std::size_t out_sample = static_cast<std::size_t>(cout) * out_plane;
  const std::size_t k_filter = static_cast<std::size_t>(kcin) * kh * kw;

  std::vector<double> out(static_cast<std::size_t>(batch) * out_sample, 0.0);
  const double* pin = input.data().data();
  const double* pk = kernel.data().data();
  const double* pbias = bias ? bias->data().data() : nullptr;

  parallel_for(0, static_cast<std::size_t>(batch) * cout, [&](std::size_t job) {
    const int b = static_cast<int>(job) / cout;
    const int co = static_cast<int>(job) % cout;
    double* out_map = out.data() + static_cast<std::size_t>(b) * out_sample +
                      static_cast<std::size_t>(co) * out_plane;
    if (pbias) {
      const double bv = pbias[co];
      for (std::size_t i = 0; i < out_plane; ++i) out_map[i] = bv;
    }
    for (int ci = 0; ci < cin; ++ci) {
      const double* in_map = pin + static_cast<std::size_t>(b) * in_sample +
                             static_cast<std::size_t>(ci) * in_plane;
      const double* filt = pk + static_cast<std::size_t>(co) * k_filter +
                           static_cast<std::size_t>(ci) * kh * kw;
      for (int th = 0; th < kh; ++th) {
        int oh_lo, oh_hi;
        valid_out_range(in_h, out_h, stride, padding, th, dilation, oh_lo,
                        oh_hi);
        for (int tw = 0; tw < kw; ++tw) {
          const double wv = filt[th * kw + tw];
          if (wv == 0.0) continue;
          int ow_lo, ow_hi;
          valid_out_range(in_w, out_w, stride, padding, tw, dilation, ow_lo,
                          ow_hi);
          for (int oh = oh_lo; oh <= oh_hi; ++oh) {
            const int ih = oh * stride - padding + th * dilation;
            const double* in_row =
                in_map + static_cast<std::size_t>(ih) * in_w;
            double* out_row = out_map + static_cast<std::size_t>(oh) * out_w;
            int iw = ow_lo * stride - padding + tw * dilation;
            for (int ow = ow_lo; ow <= ow_hi; ++ow, iw += stride) {
              out_row[ow] += wv * in_row[iw];
            }
          }
        }
      }
    }
  });

  Tensor result =
      Tensor::from_data({batch, cout, out_h, out_w}, std::move(out));
  auto iin = input.impl();
  auto ik = kernel.impl();
  std::shared_ptr<TensorImpl> ibias = bias ? bias->impl() : nullptr;
  std::vector<Tensor> recorded{input, kernel};
  if (bias) recorded.push_back(*bias);
  autograd::record(
      result, "conv2d", recorded,
      [iin, ik, ibias, batch, cin, cout, in_h, in_w, out_h, out_w, kh, kw,
       stride, padding, dilation, in_plane, out_plane, in_sample, out_sample,
       k_filter](TensorImpl& o) {
        const double* go = o.grad.data();
        if (ibias && ibias->requires_grad) {
          auto& gb = autograd::grad_buffer(*ibias);
          for (int b = 0; b < batch; ++b) {
            for (int co = 0; co < cout; ++co) {
              const double* g = go + static_cast<std::size_t>(b) * out_sample +
                                static_cast<std::size_t>(co) * out_plane;
              double acc = 0.0;
              for (std::size_t i = 0; i < out_plane; ++i) acc += g[i];
              gb[static_cast<std::size_t>(co)] += acc;
            }
          }
        }
        const bool need_gin = iin->requires_grad;
        const bool need_gk = ik->requires_grad;
        if (!need_gin && !need_gk) return;
        double* gin = need_gin ? autograd::grad_buffer(*iin).data() : nullptr;
        double* gk = need_gk ? autograd::grad_buffer(*ik).data() : nullptr;
        const double* pin = iin->data.data();
        const double* pk = ik->data.data();
        for (int b = 0; b < batch; ++b) {
          for (int co = 0; co < cout; ++co) {
            const double* g = go + static_cast<std::size_t>(b) * out_sample +
                              static_cast<std::size_t>(co) * out_plane;
            for (int ci = 0; ci < cin; ++ci) {
              const std::size_t in_base =
                  static_cast<std::size_t>(b) * in_sample +
                  static_cast<std::size_t>(ci) * in_plane;
              const std::size_t k_base =
                  static_cast<std::size_t>(co) * k_filter +
                  static_cast<std::size_t>(ci) * kh * kw;
              for (int th = 0; th < kh; ++th) {
                int oh_lo, oh_hi;
                valid_out_range(in_h, out_h, stride, padding, th, dilation,
                                oh_lo, oh_hi);
                for (int tw = 0; tw < kw; ++tw) {
                  int ow_lo, ow_hi;
                  valid_out_range(in_w, out_w, stride, padding, tw, dilation,
                                  ow_lo, ow_hi);
                  const double wv = pk[k_base + th * kw + tw];
                  double wacc = 0.0;
                  for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                    const int ih = oh * stride - padding + th * dilation;
                    const double* grow =
                        g + static_cast<std::size_t>(oh) * out_w;
                    const std::size_t row = in_base +
                                            static_cast<std::size_t>(ih) * in_w;
                    int iw = ow_lo * stride - padding + tw * dilation;
                    for (int ow = ow_lo; ow <= ow_hi; ++ow, iw += stride) {
                      if (need_gin) gin[row + iw] += wv * grow[ow];
                      if (need_gk) wacc += pin[row + iw] * grow[ow];
                    }
                  }
                  if (need_gk) gk[k_base + th * kw + tw] += wacc;
                }
              }
            }
          }
        }
      });
  return result;
}

Tensor max_pool2(const Tensor& input) {
  const Shape& is = input.shape();
  if (is.size() != 4) throw ConfigError("max_pool2: input must be 4-D");
  const int batch = is[0], channels = is[1], in_h = is[2], in_w = is[3];
  if (in_h % 2 != 0 || in_w % 2 != 0) {
    throw ConfigError("max_pool2 requires even spatial extents, got " +
                      shape_str(is));
  }
  const int out_h = in_h / 2;
  const int out_w = in_w / 2;
  const std::size_t maps = static_cast<std::size_t>(batch) * channels;
  const std::size_t in_plane = static_cast<std::size_t>(in_h) * in_w;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  std::vector<double> out(maps * out_plane);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(maps * out_plane);
  const double* src = input.data().data();
  for (std::size_t map = 0; map < maps; ++map) {
    const double* in_map = src + map * in_plane;
    double* out_map = out.data() + map * out_plane;
    std::uint32_t* am = argmax->data() + map * out_plane;
    for (int oh = 0; oh < out_h; ++oh) {
      for (int ow = 0; ow < out_w; ++ow) {
        // Window scanned in row-major order; strict > keeps the first max.
        std::uint32_t best_idx =
            static_cast<std::uint32_t>((2 * oh) * in_w + 2 * ow);
        double best = in_map[best_idx];
        const int candidates[3] = {(2 * oh) * in_w + 2 * ow + 1,
                                   (2 * oh + 1) * in_w + 2 * ow,
                                   (2 * oh + 1) * in_w + 2 * ow + 1};
        for (int idx : candidates) {
          if (in_map[idx] > best) {
            best = in_map[idx];
            best_idx = static_cast<std::uint32_t>(idx);
          }
        }
        out_map[static_cast<std::size_t>(oh) * out_w + ow] = best;
        am[static_cast<std::size_t>(oh) * out_w + ow] = best_idx;
      }
    }
  }
  Tensor result =
      Tensor::from_data({batch, channels, out_h, out_w}, std::move(out));
  auto iin = input.impl();
  autograd::record(result, "max_pool2", {input},
                   [iin, argmax, maps, in_plane, out_plane](TensorImpl& o) {
                     if (!iin->requires_grad) return;
                     auto& gin = autograd::grad_buffer(*iin);
                     for (std::size_t map = 0; map < maps; ++map) {
                       const double* g = o.grad.data() + map * out_plane;
                       const std::uint32_t* am =
                           argmax->data() + map * out_plane;
                       double* dst = gin.data() + map * in_plane;
                       for (std::size_t i = 0; i < out_plane; ++i) {
                         dst[am[i]] += g[i];
                       }
                     }
                   });
  return result;
}

namespace {

struct Interp1d {
  std::vector<int> lo, hi;
  std::vector<double> w_hi;  // weight of hi sample; lo gets 1 - w_hi
};

// Align-corners source mapping: src = dst * (in-1) / (out-1).
Interp1d plan_axis(int in, int out) {
  Interp1d plan;
  plan.lo.resize(static_cast<std::size_t>(out));
  plan.hi.resize(static_cast<std::size_t>(out));
  plan.w_hi.resize(static_cast<std::size_t>(out));
  const double scale = out > 1 ? static_cast<double>(in - 1) / (out - 1) : 0.0;
  for (int d = 0; d < out; ++d) {
    const double src = d * scale;
    int lo = static_cast<int>(std::floor(src));
    lo = std::min(lo, in - 1);
    const int hi = std::min(lo + 1, in - 1);
    plan.lo[static_cast<std::size_t>(d)] = lo;
    plan.hi[static_cast<std::size_t>(d)] = hi;
    plan.w_hi[static_cast<std::size_t>(d)] = src - lo;
  }
  return plan;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  const Shape& is = input.shape();
  if (is.size() != 4) throw ConfigError("bilinear_resize: input must be 4-D");
  if (out_h <= 0 || out_w <= 0) {
    throw ConfigError("bilinear_resize: output extents must be positive");
  }
  const int in_h = is[2], in_w = is[3];
  const std::size_t maps = static_cast<std::size_t>(is[0]) * is[1];
  const std::size_t in_plane = static_cast<std::size_t>(in_h) * in_w;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  auto rows = std::make_shared<Interp1d>(plan_axis(in_h, out_h));
  auto cols = std::make_shared<Interp1d>(plan_axis(in_w, out_w));
  std::vector<double> out(maps * out_plane);
  const double* src = input.data().data();
  parallel_for(0, maps, [&](std::size_t map) {
    const double* in_map = src + map * in_plane;
    double* out_map = out.data() + map * out_plane;
    for (int oh = 0; oh < out_h; ++oh) {
      const int r0 = rows->lo[static_cast<std::size_t>(oh)];
      const int r1 = rows->hi[static_cast<std::size_t>(oh)];
      const double wr = rows->w_hi[static_cast<std::size_t>(oh)];
      const double* row0 = in_map + static_cast<std::size_t>(r0) * in_w;
      const double* row1 = in_map + static_cast<std::size_t>(r1) * in_w;
      double* orow = out_map + static_cast<std::size_t>(oh) * out_w;
      for (int ow = 0; ow < out_w; ++ow) {
        const int c0 = cols->lo[static_cast<std::size_t>(ow)];
        const int c1 = cols->hi[static_cast<std::size_t>(ow)];
        const double wc = cols->w_hi[static_cast<std::size_t>(ow)];
        const double top = row0[c0] * (1.0 - wc) + row0[c1] * wc;
        const double bot = row1[c0] * (1.0 - wc) + row1[c1] * wc;
        orow[ow] = top * (1.0 - wr) + bot * wr;
      }
    }
  });
  Tensor result =
      Tensor::from_data({is[0], is[1], out_h, out_w}, std::move(out));
  auto iin = input.impl();
  autograd::record(
      result, "bilinear_resize", {input},
      [iin, rows, cols, maps, in_plane, out_plane, in_w, out_h,
       out_w](TensorImpl& o) {
        if (!iin->requires_grad) return;
        auto& gin = autograd::grad_buffer(*iin);
        for (std::size_t map = 0; map < maps; ++map) {
          const double* g = o.grad.data() + map * out_plane;
          double* dst = gin.data() + map * in_plane;
          for (int oh = 0; oh < out_h; ++oh) {
            const int r0 = rows->lo[static_cast<std::size_t>(oh)];
            const int r1 = rows->hi[static_cast<std::size_t>(oh)];
            const double wr = rows->w_hi[static_cast<std::size_t>(oh)];
            const double* grow = g + static_cast<std::size_t>(oh) * out_w;
            for (int ow = 0; ow < out_w; ++ow) {
              const int c0 = cols->lo[static_cast<std::size_t>(ow)];
              const int c1 = cols->hi[static_cast<std::size_t>(ow)];
              const double wc = cols->w_hi[static_cast<std::size_t>(ow)];
              const double gv = grow[ow];
              dst[static_cast<std::size_t>(r0) * in_w + c0] +=
                  gv * (1.0 - wr) * (1.0 - wc);
              dst[static_cast<std::size_t>(r0) * in_w + c1] +=
                  gv * (1.0 - wr) * wc;
              dst[static_cast<std::size_t>(r1) * in_w + c0] +=
                  gv * wr * (1.0 - wc);
              dst[static_cast<std::size_t>(r1) * in_w + c1] += gv * wr * wc;
            }
          }
        }
      });
  return result;
}

Tensor bilinear_upsample(const Tensor& input, int factor) {
  if (factor < 1) throw ConfigError("bilinear_upsample: factor must be >= 1");
  const Shape& is = input.shape();
  if (is.size() != 4) throw ConfigError("bilinear_upsample: input must be 4-D");
  return bilinear_resize(input, is[2] * factor, is[3] * factor);
}

}  // namespace crowdkit::ops
