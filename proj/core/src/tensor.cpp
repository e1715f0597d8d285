#include "crowdkit/tensor.hpp"

#include <cmath>
#include <sstream>

#include "crowdkit/autograd.hpp"
#include "crowdkit/errors.hpp"

namespace crowdkit {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ConfigError("tensor extents must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream ss;
  ss << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) ss << ", ";
    ss << shape[i];
  }
  ss << "]";
  return ss.str();
}

namespace {

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> data,
                                      bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, 0.0),
                          requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, value),
                          requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values,
                         bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ConfigError("data length " + std::to_string(values.size()) +
                      " does not match shape " + shape_str(shape));
  }
  return Tensor(make_impl(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::vector<double> values(n);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) values[i] = dist(rng) * stddev;
  return Tensor(make_impl(std::move(shape), std::move(values), requires_grad));
}

const Shape& Tensor::shape() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  return impl_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw UsageError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::size_t Tensor::size() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  return impl_->data.size();
}

std::span<const double> Tensor::data() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  return {impl_->data.data(), impl_->data.size()};
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  return {impl_->data.data(), impl_->data.size()};
}

double Tensor::item() const {
  if (size() != 1) {
    throw UsageError("item() requires a size-1 tensor, got " +
                     shape_str(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<int> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) {
    throw UsageError("index rank mismatch for " + shape_str(s));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (int i : index) {
    if (i < 0 || i >= s[axis]) {
      throw UsageError("index out of bounds for " + shape_str(s));
    }
    flat = flat * static_cast<std::size_t>(s[axis]) +
           static_cast<std::size_t>(i);
    ++axis;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const {
  return impl_ != nullptr && impl_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool value) {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  if (impl_->node && !value) {
    throw UsageError("cannot clear requires_grad on a graph output");
  }
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const {
  return impl_ != nullptr && !impl_->grad.empty();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) {
    throw UsageError("tensor has no gradient (run backward first)");
  }
  return {impl_->grad.data(), impl_->grad.size()};
}

std::span<double> Tensor::mutable_grad() {
  if (!has_grad()) {
    throw UsageError("tensor has no gradient (run backward first)");
  }
  return {impl_->grad.data(), impl_->grad.size()};
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

void Tensor::backward() const { autograd::backward(*this); }

bool Tensor::all_finite() const {
  for (double v : data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace crowdkit
