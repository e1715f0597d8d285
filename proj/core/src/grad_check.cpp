#include <algorithm>
#include <cmath>

#include "crowdkit/autograd.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/ops.hpp"

namespace crowdkit::ops {

double grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& closure,
    const std::vector<Tensor>& inputs, double step) {
  if (step <= 0.0) throw UsageError("grad_check: step must be positive");

  // One recorded pass for the analytic gradients.
  for (const Tensor& t : inputs) {
    auto impl = t.impl();
    impl->grad.clear();
  }
  Tensor output = closure(inputs);
  if (output.size() != 1) {
    throw UsageError("grad_check: closure must return a scalar");
  }
  output.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) {
      auto g = t.grad();
      analytic.emplace_back(g.begin(), g.end());
    } else {
      analytic.emplace_back();
    }
  }

  // Central differences, forward evaluations only.
  autograd::NoGradGuard no_grad;
  double max_rel_err = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (!inputs[t].requires_grad()) continue;
    Tensor tensor = inputs[t];
    auto values = tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = closure(inputs).item();
      values[i] = saved - step;
      const double down = closure(inputs).item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double exact = analytic[t][i];
      const double denom =
          std::max({std::fabs(exact), std::fabs(numeric), 1e-8});
      max_rel_err = std::max(max_rel_err, std::fabs(exact - numeric) / denom);
    }
  }
  return max_rel_err;
}

}  // namespace crowdkit::ops
