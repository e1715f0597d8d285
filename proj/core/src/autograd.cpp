#include "crowdkit/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "crowdkit/errors.hpp"

namespace crowdkit::autograd {

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_next_seq{1};

}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void record(Tensor& out, const char* op, const std::vector<Tensor>& inputs,
            std::function<void(TensorImpl&)> backward_fn) {
  if (!t_grad_enabled) return;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return;

  auto node = std::make_shared<Node>();
  node->op = op;
  node->seq = g_next_seq.fetch_add(1);
  node->backward_fn = std::move(backward_fn);
  node->inputs.reserve(inputs.size());
  for (const auto& t : inputs) node->inputs.push_back(t.impl());
  out.impl()->requires_grad = true;
  out.impl()->node = std::move(node);
}

std::vector<double>& grad_buffer(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

void accumulate(TensorImpl& t, const double* g, std::size_t n) {
  if (!t.requires_grad) return;
  auto& buf = grad_buffer(t);
  for (std::size_t i = 0; i < n; ++i) buf[i] += g[i];
}

void accumulate(TensorImpl& t, const std::vector<double>& g) {
  accumulate(t, g.data(), g.size());
}

void backward(const Tensor& output) {
  if (!output.defined() || output.size() != 1) {
    throw UsageError("backward requires a scalar output");
  }
  auto root = output.impl();
  if (!root->node) {
    throw UsageError("backward: output was not produced by a recorded graph");
  }
  if (root->node->consumed) {
    throw UsageError(
        "backward: graph already consumed; re-run the forward pass");
  }

  // Gather every reachable node together with its (unique) output impl.
  std::vector<std::pair<std::shared_ptr<Node>, std::shared_ptr<TensorImpl>>>
      order;
  std::unordered_set<Node*> seen;
  std::vector<std::shared_ptr<TensorImpl>> stack{root};
  while (!stack.empty()) {
    auto impl = stack.back();
    stack.pop_back();
    if (!impl->node) continue;
    Node* node = impl->node.get();
    if (!seen.insert(node).second) continue;
    if (node->consumed) {
      throw UsageError(
          "backward: graph already consumed; re-run the forward pass");
    }
    order.emplace_back(impl->node, impl);
    for (const auto& in : node->inputs) stack.push_back(in);
  }

  // Reverse execution order: consumers carry larger sequence numbers than
  // their producers, so each output grad is complete when its node runs.
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first->seq > b.first->seq;
  });

  root->grad.assign(1, 1.0);
  for (auto& [node, out] : order) {
    if (out->grad.empty()) out->grad.assign(out->data.size(), 0.0);
    node->backward_fn(*out);
    node->consumed = true;
  }
  // Release saved forward context; the consumed flags stay behind to reject
  // a second sweep.
  for (auto& [node, out] : order) {
    node->backward_fn = nullptr;
    node->inputs.clear();
  }
}

}  // namespace crowdkit::autograd
