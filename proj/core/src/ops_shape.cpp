#include <numeric>

#include "crowdkit/autograd.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/ops.hpp"

namespace crowdkit::ops {

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ConfigError("reshape: cannot view " + shape_str(a.shape()) +
                      " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  Shape old_shape = a.shape();
  Tensor result = Tensor::from_data(std::move(shape), std::move(out));
  auto ia = a.impl();
  autograd::record(result, "reshape", {a}, [ia](TensorImpl& o) {
    autograd::accumulate(*ia, o.grad);
  });
  return result;
}

namespace {

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    strides[i] = strides[i + 1] * static_cast<std::size_t>(shape[i + 1]);
  }
  return strides;
}

// Flat index map for permute: dest flat index -> source flat index.
std::vector<std::size_t> permute_map(const Shape& in_shape,
                                     const std::vector<int>& axes) {
  const std::size_t rank = in_shape.size();
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i)
    out_shape[i] = in_shape[static_cast<std::size_t>(axes[i])];
  auto in_strides = row_major_strides(in_shape);
  auto out_strides = row_major_strides(out_shape);
  std::vector<std::size_t> map(shape_numel(in_shape));
  const std::size_t n = map.size();
  for (std::size_t dst = 0; dst < n; ++dst) {
    std::size_t rem = dst;
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      std::size_t coord = rem / out_strides[i];
      rem %= out_strides[i];
      src += coord * in_strides[static_cast<std::size_t>(axes[i])];
    }
    map[dst] = src;
  }
  return map;
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
  const Shape& in_shape = a.shape();
  const std::size_t rank = in_shape.size();
  if (axes.size() != rank) {
    throw ConfigError("permute: axes rank mismatch for " + shape_str(in_shape));
  }
  std::vector<bool> used(rank, false);
  for (int ax : axes) {
    if (ax < 0 || ax >= static_cast<int>(rank) || used[static_cast<std::size_t>(ax)]) {
      throw ConfigError("permute: invalid axis list");
    }
    used[static_cast<std::size_t>(ax)] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i)
    out_shape[i] = in_shape[static_cast<std::size_t>(axes[i])];
  auto map = permute_map(in_shape, axes);
  const double* src = a.data().data();
  std::vector<double> out(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = src[map[i]];
  Tensor result = Tensor::from_data(std::move(out_shape), std::move(out));
  auto ia = a.impl();
  auto shared_map = std::make_shared<std::vector<std::size_t>>(std::move(map));
  autograd::record(result, "permute", {a}, [ia, shared_map](TensorImpl& o) {
    if (!ia->requires_grad) return;
    auto& ga = autograd::grad_buffer(*ia);
    const auto& m = *shared_map;
    for (std::size_t i = 0; i < m.size(); ++i) ga[m[i]] += o.grad[i];
  });
  return result;
}

Tensor transpose_last2(const Tensor& a) {
  const int rank = a.rank();
  if (rank < 2) throw ConfigError("transpose_last2 requires rank >= 2");
  std::vector<int> axes(static_cast<std::size_t>(rank));
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[static_cast<std::size_t>(rank - 2)],
            axes[static_cast<std::size_t>(rank - 1)]);
  return permute(a, axes);
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ConfigError("concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  if (first.size() != 4) throw ConfigError("concat_channels expects 4-D input");
  int total_c = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] ||
        s[3] != first[3]) {
      throw ConfigError("concat_channels: incompatible shapes " +
                        shape_str(first) + " vs " + shape_str(s));
    }
    total_c += s[1];
  }
  const int batch = first[0];
  const std::size_t plane = static_cast<std::size_t>(first[2]) *
                            static_cast<std::size_t>(first[3]);
  std::vector<double> out(static_cast<std::size_t>(batch) *
                          static_cast<std::size_t>(total_c) * plane);
  std::size_t channel_offset = 0;
  for (const Tensor& t : parts) {
    const std::size_t c = static_cast<std::size_t>(t.dim(1));
    const double* src = t.data().data();
    for (int b = 0; b < batch; ++b) {
      double* dst = out.data() +
                    (static_cast<std::size_t>(b) * static_cast<std::size_t>(total_c) +
                     channel_offset) *
                        plane;
      const double* s = src + static_cast<std::size_t>(b) * c * plane;
      std::copy(s, s + c * plane, dst);
    }
    channel_offset += c;
  }
  Tensor result =
      Tensor::from_data({batch, total_c, first[2], first[3]}, std::move(out));

  std::vector<std::shared_ptr<TensorImpl>> impls;
  impls.reserve(parts.size());
  for (const Tensor& t : parts) impls.push_back(t.impl());
  autograd::record(
      result, "concat_channels", parts,
      [impls, batch, total_c, plane](TensorImpl& o) {
        std::size_t channel_offset = 0;
        for (const auto& impl : impls) {
          const std::size_t c = impl->data.size() /
                                (static_cast<std::size_t>(batch) * plane);
          if (impl->requires_grad) {
            auto& g = autograd::grad_buffer(*impl);
            for (int b = 0; b < batch; ++b) {
              const double* src =
                  o.grad.data() +
                  (static_cast<std::size_t>(b) *
                       static_cast<std::size_t>(total_c) +
                   channel_offset) *
                      plane;
              double* dst = g.data() + static_cast<std::size_t>(b) * c * plane;
              for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
            }
          }
          channel_offset += c;
        }
      });
  return result;
}

namespace {

// Self-inverse two-group mixing permutation: channel j of either half is
// swapped across halves when j is odd and kept in place when j is even.
int shuffle2_source(int c, int half) {
  const int j = c % half;
  if (j % 2 == 0) return c;
  return c < half ? c + half : c - half;
}

}  // namespace

Tensor channel_shuffle2(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() != 4) throw ConfigError("channel_shuffle2 expects 4-D input");
  const int channels = s[1];
  if (channels % 2 != 0) {
    throw ConfigError("channel_shuffle2 requires an even channel count, got " +
                      std::to_string(channels));
  }
  const int half = channels / 2;
  const int batch = s[0];
  const std::size_t plane =
      static_cast<std::size_t>(s[2]) * static_cast<std::size_t>(s[3]);
  const double* src = a.data().data();
  std::vector<double> out(a.size());
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      const int sc = shuffle2_source(c, half);
      const double* in_plane =
          src + (static_cast<std::size_t>(b) * static_cast<std::size_t>(channels) +
                 static_cast<std::size_t>(sc)) *
                    plane;
      double* out_plane =
          out.data() +
          (static_cast<std::size_t>(b) * static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c)) *
              plane;
      std::copy(in_plane, in_plane + plane, out_plane);
    }
  }
  Tensor result = Tensor::from_data(s, std::move(out));
  auto ia = a.impl();
  autograd::record(
      result, "channel_shuffle2", {a},
      [ia, batch, channels, half, plane](TensorImpl& o) {
        if (!ia->requires_grad) return;
        auto& ga = autograd::grad_buffer(*ia);
        for (int b = 0; b < batch; ++b) {
          for (int c = 0; c < channels; ++c) {
            const int sc = shuffle2_source(c, half);
            const double* g =
                o.grad.data() +
                (static_cast<std::size_t>(b) *
                     static_cast<std::size_t>(channels) +
                 static_cast<std::size_t>(c)) *
                    plane;
            double* dst = ga.data() +
                          (static_cast<std::size_t>(b) *
                               static_cast<std::size_t>(channels) +
                           static_cast<std::size_t>(sc)) *
                              plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] += g[i];
          }
        }
      });
  return result;
}

}  // namespace crowdkit::ops
