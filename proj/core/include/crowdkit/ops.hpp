#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "crowdkit/tensor.hpp"

namespace crowdkit::ops {

// Elementwise (same shape both sides unless noted). All differentiable.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);  // subgradient 0 at 0

// Shape manipulation.
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
Tensor transpose_last2(const Tensor& a);
Tensor concat_channels(const std::vector<Tensor>& parts);  // axis 1, 4-D
// Mixes the two halves of the channel axis (even C required). The
// permutation swaps channel j of either half for odd j, so it is its own
// inverse at any width.
Tensor channel_shuffle2(const Tensor& a);

// Reductions to a rank-1 scalar tensor.
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Batched matrix product [..., M, K] x [..., K, N] -> [..., M, N].
// Leading batch dims broadcast numpy-style.
Tensor matmul(const Tensor& a, const Tensor& b);

// Max-subtracted softmax over the trailing axis.
Tensor softmax_rows(const Tensor& a);

// Cross-correlation with zero padding.
// input [B, Cin, H, W], kernel [Cout, Cin, kh, kw], bias [Cout] optional.
Tensor conv2d(const Tensor& input, const Tensor& kernel,
              const std::optional<Tensor>& bias = std::nullopt, int stride = 1,
              int padding = 0, int dilation = 1);
int conv2d_out_extent(int in, int kernel, int stride, int padding,
                      int dilation);

// 2x2 / stride-2 max pooling; even H and W required. Gradient goes to the
// first maximal element in row-major window order.
Tensor max_pool2(const Tensor& input);

// Align-corners bilinear interpolation: src = dst * (in-1) / (out-1).
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);
Tensor bilinear_upsample(const Tensor& input, int factor);

// Group normalization over [B, C, H, W]. Group rule: 16 channels per group
// when C > 16 (C must then divide by 16), otherwise one channel per group.
// gamma/beta are per-channel. sigma = sqrt(var + epsilon).
Tensor group_normalize(const Tensor& input, const Tensor& gamma,
                       const Tensor& beta, double epsilon);
int group_count_for_channels(int channels);

// Central finite differences vs. recorded gradients for a scalar-valued
// closure. Returns the max relative error over every element of every
// requires_grad input, with denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& closure,
    const std::vector<Tensor>& inputs, double step);

}  // namespace crowdkit::ops
