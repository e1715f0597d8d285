#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "crowdkit/tensor.hpp"

namespace crowdkit::autograd {

// One executed primitive. Nodes carry a global sequence number assigned at
// forward time, so the reverse sweep (descending seq) replays the tape in
// exact reverse execution order and visits each node once.
struct Node {
  const char* op = "";
  std::uint64_t seq = 0;
  bool consumed = false;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Receives the node's output impl with grad populated; accumulates (+=)
  // into the inputs' grads.
  std::function<void(TensorImpl&)> backward_fn;
};

bool grad_enabled();

// Disables graph recording in scope (inference / finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Attaches a node to `out` when recording is on and any input requires
// grad; otherwise a no-op (out stays a constant leaf).
void record(Tensor& out, const char* op, const std::vector<Tensor>& inputs,
            std::function<void(TensorImpl&)> backward_fn);

// += rhs into t.grad (allocating zeros first if absent). No-op when the
// tensor does not require grad.
void accumulate(TensorImpl& t, const std::vector<double>& g);
void accumulate(TensorImpl& t, const double* g, std::size_t n);
std::vector<double>& grad_buffer(TensorImpl& t);

void backward(const Tensor& output);

}  // namespace crowdkit::autograd
