#include <algorithm>
#include <cmath>

#include "crowdkit/autograd.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/ops.hpp"
#include "crowdkit/parallel.hpp"

namespace crowdkit::ops {

namespace {

struct BatchPlan {
  Shape out_batch;                 // broadcast leading dims
  std::size_t batches = 1;         // product of out_batch
  std::vector<std::size_t> a_off;  // per-batch flat matrix offsets into a
  std::vector<std::size_t> b_off;
};

// Numpy-style broadcast of leading dims (all but the trailing two axes).
BatchPlan plan_batches(const Shape& a, const Shape& b, std::size_t a_mat,
                       std::size_t b_mat) {
  const std::size_t ra = a.size() - 2;
  const std::size_t rb = b.size() - 2;
  const std::size_t rank = std::max(ra, rb);
  BatchPlan plan;
  plan.out_batch.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const int da = i < rank - ra ? 1 : a[i - (rank - ra)];
    const int db = i < rank - rb ? 1 : b[i - (rank - rb)];
    if (da != db && da != 1 && db != 1) {
      throw ConfigError("matmul: batch dims not broadcastable: " +
                        shape_str(a) + " vs " + shape_str(b));
    }
    plan.out_batch[i] = std::max(da, db);
    plan.batches *= static_cast<std::size_t>(plan.out_batch[i]);
  }
  plan.a_off.resize(plan.batches);
  plan.b_off.resize(plan.batches);
  for (std::size_t flat = 0; flat < plan.batches; ++flat) {
    std::size_t rem = flat;
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      std::size_t block = 1;
      for (std::size_t j = i + 1; j < rank; ++j)
        block *= static_cast<std::size_t>(plan.out_batch[j]);
      const std::size_t coord = rem / block;
      rem %= block;
      const int da = i < rank - ra ? 1 : a[i - (rank - ra)];
      const int db = i < rank - rb ? 1 : b[i - (rank - rb)];
      if (da != 1) ia = ia * static_cast<std::size_t>(da) + coord;
      if (db != 1) ib = ib * static_cast<std::size_t>(db) + coord;
    }
    plan.a_off[flat] = ia * a_mat;
    plan.b_off[flat] = ib * b_mat;
  }
  return plan;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw ConfigError("matmul requires rank >= 2 operands");
  }
  const int m = sa[sa.size() - 2];
  const int k = sa[sa.size() - 1];
  const int k2 = sb[sb.size() - 2];
  const int n = sb[sb.size() - 1];
  if (k != k2) {
    throw ConfigError("matmul: inner dimensions disagree: " + shape_str(sa) +
                      " x " + shape_str(sb));
  }
  const std::size_t a_mat = static_cast<std::size_t>(m) * k;
  const std::size_t b_mat = static_cast<std::size_t>(k) * n;
  const std::size_t o_mat = static_cast<std::size_t>(m) * n;
  BatchPlan plan = plan_batches(sa, sb, a_mat, b_mat);

  Shape out_shape = plan.out_batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(plan.batches * o_mat, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  parallel_for(0, plan.batches, [&](std::size_t batch) {
    const double* am = pa + plan.a_off[batch];
    const double* bm = pb + plan.b_off[batch];
    double* om = out.data() + batch * o_mat;
    for (int i = 0; i < m; ++i) {
      const double* arow = am + static_cast<std::size_t>(i) * k;
      double* orow = om + static_cast<std::size_t>(i) * n;
      for (int kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        const double* brow = bm + static_cast<std::size_t>(kk) * n;
        for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  });
  Tensor result = Tensor::from_data(std::move(out_shape), std::move(out));

  auto ia = a.impl();
  auto ib = b.impl();
  auto shared_plan = std::make_shared<BatchPlan>(std::move(plan));
  autograd::record(
      result, "matmul", {a, b},
      [ia, ib, shared_plan, m, k, n, a_mat, b_mat, o_mat](TensorImpl& o) {
        const BatchPlan& p = *shared_plan;
        if (ia->requires_grad) {
          auto& ga = autograd::grad_buffer(*ia);
          for (std::size_t batch = 0; batch < p.batches; ++batch) {
            const double* go = o.grad.data() + batch * o_mat;
            const double* bm = ib->data.data() + p.b_off[batch];
            double* gam = ga.data() + p.a_off[batch];
            // dA = dO . B^T
            for (int i = 0; i < m; ++i) {
              const double* grow = go + static_cast<std::size_t>(i) * n;
              double* garow = gam + static_cast<std::size_t>(i) * k;
              for (int kk = 0; kk < k; ++kk) {
                const double* brow = bm + static_cast<std::size_t>(kk) * n;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                garow[kk] += acc;
              }
            }
          }
        }
        if (ib->requires_grad) {
          auto& gb = autograd::grad_buffer(*ib);
          for (std::size_t batch = 0; batch < p.batches; ++batch) {
            const double* go = o.grad.data() + batch * o_mat;
            const double* am = ia->data.data() + p.a_off[batch];
            double* gbm = gb.data() + p.b_off[batch];
            // dB = A^T . dO
            for (int i = 0; i < m; ++i) {
              const double* arow = am + static_cast<std::size_t>(i) * k;
              const double* grow = go + static_cast<std::size_t>(i) * n;
              for (int kk = 0; kk < k; ++kk) {
                const double av = arow[kk];
                double* gbrow = gbm + static_cast<std::size_t>(kk) * n;
                for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
              }
            }
          }
        }
      });
  return result;
}

Tensor softmax_rows(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.empty()) throw ConfigError("softmax_rows requires rank >= 1");
  const std::size_t width = static_cast<std::size_t>(s.back());
  const std::size_t rows = a.size() / width;
  const double* src = a.data().data();
  std::vector<double> out(a.size());
  parallel_for(0, rows, [&](std::size_t r) {
    const double* in_row = src + r * width;
    double* out_row = out.data() + r * width;
    double max_v = in_row[0];
    for (std::size_t i = 1; i < width; ++i) max_v = std::max(max_v, in_row[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      out_row[i] = std::exp(in_row[i] - max_v);
      total += out_row[i];
    }
    const double inv = 1.0 / total;
    for (std::size_t i = 0; i < width; ++i) out_row[i] *= inv;
  });
  Tensor result = Tensor::from_data(s, std::move(out));
  auto ia = a.impl();
  autograd::record(result, "softmax_rows", {a},
                   [ia, rows, width](TensorImpl& o) {
                     if (!ia->requires_grad) return;
                     auto& ga = autograd::grad_buffer(*ia);
                     const double* y = o.data.data();
                     for (std::size_t r = 0; r < rows; ++r) {
                       const double* yrow = y + r * width;
                       const double* grow = o.grad.data() + r * width;
                       double dot = 0.0;
                       for (std::size_t i = 0; i < width; ++i)
                         dot += yrow[i] * grow[i];
                       double* garow = ga.data() + r * width;
                       for (std::size_t i = 0; i < width; ++i)
                         garow[i] += yrow[i] * (grow[i] - dot);
                     }
                   });
  return result;
}

}  // namespace crowdkit::ops
