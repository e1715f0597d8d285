#include <algorithm>

#include "crowdkit/autograd.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/ops.hpp"

namespace crowdkit::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
  Tensor result = Tensor::from_data(a.shape(), std::move(out));
  auto ia = a.impl();
  auto ib = b.impl();
  autograd::record(result, "add", {a, b}, [ia, ib](TensorImpl& o) {
    autograd::accumulate(*ia, o.grad);
    autograd::accumulate(*ib, o.grad);
  });
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
  Tensor result = Tensor::from_data(a.shape(), std::move(out));
  auto ia = a.impl();
  auto ib = b.impl();
  autograd::record(result, "sub", {a, b}, [ia, ib](TensorImpl& o) {
    autograd::accumulate(*ia, o.grad);
    if (ib->requires_grad) {
      auto& gb = autograd::grad_buffer(*ib);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] -= o.grad[i];
    }
  });
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
  Tensor result = Tensor::from_data(a.shape(), std::move(out));
  auto ia = a.impl();
  auto ib = b.impl();
  autograd::record(result, "mul", {a, b}, [ia, ib](TensorImpl& o) {
    if (ia->requires_grad) {
      auto& ga = autograd::grad_buffer(*ia);
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        ga[i] += o.grad[i] * ib->data[i];
    }
    if (ib->requires_grad) {
      auto& gb = autograd::grad_buffer(*ib);
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        gb[i] += o.grad[i] * ia->data[i];
    }
  });
  return result;
}

Tensor scale(const Tensor& a, double factor) {
  std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * factor;
  Tensor result = Tensor::from_data(a.shape(), std::move(out));
  auto ia = a.impl();
  autograd::record(result, "scale", {a}, [ia, factor](TensorImpl& o) {
    if (!ia->requires_grad) return;
    auto& ga = autograd::grad_buffer(*ia);
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      ga[i] += o.grad[i] * factor;
  });
  return result;
}

Tensor relu(const Tensor& a) {
  std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] > 0.0 ? pa[i] : 0.0;
  Tensor result = Tensor::from_data(a.shape(), std::move(out));
  auto ia = a.impl();
  autograd::record(result, "relu", {a}, [ia](TensorImpl& o) {
    if (!ia->requires_grad) return;
    auto& ga = autograd::grad_buffer(*ia);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (ia->data[i] > 0.0) ga[i] += o.grad[i];
    }
  });
  return result;
}

Tensor sum_all(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor result = Tensor::from_data({1}, {total});
  auto ia = a.impl();
  autograd::record(result, "sum_all", {a}, [ia](TensorImpl& o) {
    if (!ia->requires_grad) return;
    auto& ga = autograd::grad_buffer(*ia);
    const double g = o.grad[0];
    for (double& v : ga) v += g;
  });
  return result;
}

Tensor mean_all(const Tensor& a) {
  const double inv_n = 1.0 / static_cast<double>(a.size());
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor result = Tensor::from_data({1}, {total * inv_n});
  auto ia = a.impl();
  autograd::record(result, "mean_all", {a}, [ia, inv_n](TensorImpl& o) {
    if (!ia->requires_grad) return;
    auto& ga = autograd::grad_buffer(*ia);
    const double g = o.grad[0] * inv_n;
    for (double& v : ga) v += g;
  });
  return result;
}

}  // namespace crowdkit::ops
