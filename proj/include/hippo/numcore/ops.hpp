#pragma once

// Differentiable operations recorded on an ad::Tape. Matrices are rank-2
// row-major tensors; "row vectors" may be rank-1 [n] or rank-2 [1 x n].
// Reductions run in ascending index order, except the graph-facing ones
// (GIN neighbor sums, batch-norm statistics), which add values in sorted
// order so that relabeling nodes cannot change a single bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "hippo/numcore/autodiff.hpp"

namespace hippo::ad {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename Real>
void require_matrix(const BasicTensor<Real>& t, const char* op) {
  require(t.rank() == 2, std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

template <typename Real>
void require_same_shape(const BasicTensor<Real>& a, const BasicTensor<Real>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <typename Real>
void axpy(BasicTensor<Real>& dst, const BasicTensor<Real>& src, Real scale = Real(1)) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

// out[m x n] += a[m x k] * b[k x n] with optional transposes.
template <typename Real>
void gemm_acc(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b,
              Real* out) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = ta ? a[p * m + i] : a[i * k + p];
      if (av == Real(0)) continue;
      if (!tb) {
        const Real* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * b[j * k + p];
      }
    }
  }
}

// Adds `v` to `init` in ascending value order; the result depends only on
// the multiset of values.
template <typename Real>
Real sorted_sum(std::vector<Real>& v, Real init = Real(0)) {
  std::sort(v.begin(), v.end());
  for (Real x : v) init += x;
  return init;
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename Real>
Var add(Tape<Real>& t, Var a, Var b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  detail::require_same_shape(va, vb, "add");
  BasicTensor<Real> out = va;
  detail::axpy(out, vb);
  return t.record(std::move(out), "add", {a, b}, [a, b](Tape<Real>& tp, const BasicTensor<Real>& g) {
    if (tp.requires_grad(a)) detail::axpy(tp.grad_of(a), g);
    if (tp.requires_grad(b)) detail::axpy(tp.grad_of(b), g);
  });
}

template <typename Real>
Var sub(Tape<Real>& t, Var a, Var b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  detail::require_same_shape(va, vb, "sub");
  BasicTensor<Real> out = va;
  detail::axpy(out, vb, Real(-1));
  return t.record(std::move(out), "sub", {a, b}, [a, b](Tape<Real>& tp, const BasicTensor<Real>& g) {
    if (tp.requires_grad(a)) detail::axpy(tp.grad_of(a), g);
    if (tp.requires_grad(b)) detail::axpy(tp.grad_of(b), g, Real(-1));
  });
}

template <typename Real>
Var mul(Tape<Real>& t, Var a, Var b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  detail::require_same_shape(va, vb, "mul");
  BasicTensor<Real> out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return t.record(std::move(out), "mul", {a, b}, [a, b](Tape<Real>& tp, const BasicTensor<Real>& g) {
    const auto& va = tp.value(a);
    const auto& vb = tp.value(b);
    if (tp.requires_grad(a)) {
      auto& ga = tp.grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

template <typename Real>
Var scale(Tape<Real>& t, Var a, Real c) {
  BasicTensor<Real> out = t.value(a);
  for (auto& v : out.data()) v *= c;
  return t.record(std::move(out), "scale", {a}, [a, c](Tape<Real>& tp, const BasicTensor<Real>& g) {
    detail::axpy(tp.grad_of(a), g, c);
  });
}

template <typename Real>
Var reshape(Tape<Real>& t, Var a, Shape shape) {
  BasicTensor<Real> out = t.value(a).reshaped(std::move(shape));
  return t.record(std::move(out), "reshape", {a}, [a](Tape<Real>& tp, const BasicTensor<Real>& g) {
    auto& ga = tp.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

namespace detail {

template <typename Real, typename F, typename D>
Var unary(Tape<Real>& t, Var a, const char* name, F f, D dfdx) {
  BasicTensor<Real> out = t.value(a);
  for (auto& v : out.data()) v = f(v);
  return t.record(std::move(out), name, {a}, [a, dfdx](Tape<Real>& tp, const BasicTensor<Real>& g) {
    const auto& x = tp.value(a);
    auto& ga = tp.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i]);
  });
}

}  // namespace detail

template <typename Real>
Var relu(Tape<Real>& t, Var a) {
  return detail::unary(
      t, a, "relu", [](Real x) { return x > Real(0) ? x : Real(0); },
      [](Real x) { return x > Real(0) ? Real(1) : Real(0); });
}

// GELU, tanh approximation.
template <typename Real>
Var gelu(Tape<Real>& t, Var a) {
  constexpr Real c = Real(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real k = Real(0.044715);
  return detail::unary(
      t, a, "gelu",
      [](Real x) { return Real(0.5) * x * (Real(1) + std::tanh(c * (x + k * x * x * x))); },
      [](Real x) {
        const Real th = std::tanh(c * (x + k * x * x * x));
        return Real(0.5) * (Real(1) + th) +
               Real(0.5) * x * (Real(1) - th * th) * c * (Real(1) + Real(3) * k * x * x);
      });
}

template <typename Real>
Var tanh(Tape<Real>& t, Var a) {
  return detail::unary(
      t, a, "tanh", [](Real x) { return std::tanh(x); },
      [](Real x) {
        const Real th = std::tanh(x);
        return Real(1) - th * th;
      });
}

template <typename Real>
Real sigmoid_value(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <typename Real>
Var sigmoid(Tape<Real>& t, Var a) {
  return detail::unary(
      t, a, "sigmoid", [](Real x) { return sigmoid_value(x); },
      [](Real x) {
        const Real s = sigmoid_value(x);
        return s * (Real(1) - s);
      });
}

// ---- reductions ------------------------------------------------------------

template <typename Real>
Var sum(Tape<Real>& t, Var a) {
  Real acc = 0;
  for (Real v : t.value(a).data()) acc += v;
  return t.record(BasicTensor<Real>::scalar(acc), "sum", {a}, [a](Tape<Real>& tp, const BasicTensor<Real>& g) {
    for (auto& v : tp.grad_of(a).data()) v += g[0];
  });
}

template <typename Real>
Var mean(Tape<Real>& t, Var a) {
  const Real n = Real(t.value(a).size());
  return scale(t, sum(t, a), Real(1) / n);
}

// sum_i w_i * a_i with constant weights.
template <typename Real>
Var weighted_sum(Tape<Real>& t, Var a, BasicTensor<Real> weights) {
  const auto& va = t.value(a);
  detail::require(va.size() == weights.size(), "weighted_sum: weight count mismatch");
  Real acc = 0;
  for (std::size_t i = 0; i < va.size(); ++i) acc += weights[i] * va[i];
  return t.record(BasicTensor<Real>::scalar(acc), "weighted_sum", {a},
                  [a, w = std::move(weights)](Tape<Real>& tp, const BasicTensor<Real>& g) {
                    auto& ga = tp.grad_of(a);
                    for (std::size_t i = 0; i < w.size(); ++i) ga[i] += g[0] * w[i];
                  });
}

// Sum of several scalar variables, left to right.
template <typename Real>
Var add_n(Tape<Real>& t, const std::vector<Var>& terms) {
  detail::require(!terms.empty(), "add_n: no terms");
  Real acc = 0;
  for (Var v : terms) {
    detail::require(t.value(v).size() == 1, "add_n: terms must be scalars");
    acc += t.value(v)[0];
  }
  return t.record(BasicTensor<Real>::scalar(acc), "add_n", terms,
                  [terms](Tape<Real>& tp, const BasicTensor<Real>& g) {
                    for (Var v : terms)
                      if (tp.requires_grad(v)) tp.grad_of(v)[0] += g[0];
                  });
}

// Largest entry as a [1] tensor; the gradient goes to the first maximizer.
template <typename Real>
Var max_all(Tape<Real>& t, Var a) {
  const auto& va = t.value(a);
  std::size_t arg = 0;
  for (std::size_t i = 1; i < va.size(); ++i)
    if (va[i] > va[arg]) arg = i;
  return t.record(BasicTensor<Real>::scalar(va[arg]), "max_all", {a},
                  [a, arg](Tape<Real>& tp, const BasicTensor<Real>& g) { tp.grad_of(a)[arg] += g[0]; });
}

// Elementwise max(a_i, floor). Ties resolve to the `a` branch.
template <typename Real>
Var maximum_floor(Tape<Real>& t, Var a, Var floor) {
  const auto& va = t.value(a);
  const auto& vf = t.value(floor);
  detail::require(vf.size() == 1, "maximum_floor: floor must be a scalar");
  BasicTensor<Real> out = va;
  for (auto& v : out.data()) v = v >= vf[0] ? v : vf[0];
  return t.record(std::move(out), "maximum_floor", {a, floor},
                  [a, floor](Tape<Real>& tp, const BasicTensor<Real>& g) {
                    const auto& va = tp.value(a);
                    const Real f = tp.value(floor)[0];
                    Real to_floor = 0;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      if (va[i] >= f) {
                        if (tp.requires_grad(a)) tp.grad_of(a)[i] += g[i];
                      } else {
                        to_floor += g[i];
                      }
                    }
                    if (tp.requires_grad(floor)) tp.grad_of(floor)[0] += to_floor;
                  });
}

// ---- linear algebra --------------------------------------------------------

template <typename Real>
Var matmul(Tape<Real>& t, Var a, Var b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  detail::require_matrix(va, "matmul");
  detail::require_matrix(vb, "matmul");
  const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  detail::require(vb.dim(0) == k, "matmul: inner dimensions " + shape_string(va.shape()) + " x " +
                                      shape_string(vb.shape()));
  BasicTensor<Real> out({m, n});
  detail::gemm_acc(false, false, m, n, k, va.data().data(), vb.data().data(), out.data().data());
  return t.record(std::move(out), "matmul", {a, b}, [a, b, m, n, k](Tape<Real>& tp, const BasicTensor<Real>& g) {
    const auto& va = tp.value(a);
    const auto& vb = tp.value(b);
    if (tp.requires_grad(a))  // g[m x n] * b^T
      detail::gemm_acc(false, true, m, k, n, g.data().data(), vb.data().data(), tp.grad_of(a).data().data());
    if (tp.requires_grad(b))  // a^T * g
      detail::gemm_acc(true, false, k, n, m, va.data().data(), g.data().data(), tp.grad_of(b).data().data());
  });
}

template <typename Real>
Var transpose(Tape<Real>& t, Var a) {
  const auto& va = t.value(a);
  detail::require_matrix(va, "transpose");
  const std::size_t m = va.dim(0), n = va.dim(1);
  BasicTensor<Real> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = va(i, j);
  return t.record(std::move(out), "transpose", {a}, [a, m, n](Tape<Real>& tp, const BasicTensor<Real>& g) {
    auto& ga = tp.grad_of(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga(i, j) += g(j, i);
  });
}

// x[m x n] + b broadcast over rows.
template <typename Real>
Var add_rowvec(Tape<Real>& t, Var x, Var b) {
  const auto& vx = t.value(x);
  const auto& vb = t.value(b);
  detail::require_matrix(vx, "add_rowvec");
  const std::size_t m = vx.dim(0), n = vx.dim(1);
  detail::require(vb.size() == n, "add_rowvec: bias width " + std::to_string(vb.size()) + " vs " + std::to_string(n));
  BasicTensor<Real> out = vx;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += vb[j];
  return t.record(std::move(out), "add_rowvec", {x, b}, [x, b, m, n](Tape<Real>& tp, const BasicTensor<Real>& g) {
    if (tp.requires_grad(x)) detail::axpy(tp.grad_of(x), g);
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad_of(b);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g(i, j);
    }
  });
}

// x W + b.
template <typename Real>
Var linear(Tape<Real>& t, Var x, Var w, Var b) {
  return add_rowvec(t, matmul(t, x, w), b);
}

// ---- normalization ---------------------------------------------------------

// Each row scaled to unit Euclidean norm.
template <typename Real>
Var l2_normalize_rows(Tape<Real>& t, Var x) {
  const auto& vx = t.value(x);
  const std::size_t m = vx.rows(), n = vx.cols();
  BasicTensor<Real> out = vx;
  std::vector<Real> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    Real ss = 0;
    for (std::size_t j = 0; j < n; ++j) ss += vx[i * n + j] * vx[i * n + j];
    norms[i] = std::max(std::sqrt(ss), Real(1e-12));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= norms[i];
  }
  return t.record(std::move(out), "l2_normalize_rows", {x},
                  [x, m, n, norms = std::move(norms)](Tape<Real>& tp, const BasicTensor<Real>& g) {
                    const auto& vx = tp.value(x);
                    auto& gx = tp.grad_of(x);
                    for (std::size_t i = 0; i < m; ++i) {
                      Real yg = 0;
                      for (std::size_t j = 0; j < n; ++j) yg += vx[i * n + j] / norms[i] * g[i * n + j];
                      for (std::size_t j = 0; j < n; ++j)
                        gx[i * n + j] += (g[i * n + j] - vx[i * n + j] / norms[i] * yg) / norms[i];
                    }
                  });
}

// Per-row layer normalization with learned gain and shift.
template <typename Real>
Var layer_norm_rows(Tape<Real>& t, Var x, Var gamma, Var beta, Real eps = Real(1e-5)) {
  const auto& vx = t.value(x);
  detail::require_matrix(vx, "layer_norm_rows");
  const std::size_t m = vx.dim(0), n = vx.dim(1);
  detail::require(t.value(gamma).size() == n && t.value(beta).size() == n, "layer_norm_rows: parameter width");
  BasicTensor<Real> xhat({m, n});
  std::vector<Real> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    Real mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += vx(i, j);
    mu /= Real(n);
    Real var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (vx(i, j) - mu) * (vx(i, j) - mu);
    var /= Real(n);
    inv_std[i] = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) xhat(i, j) = (vx(i, j) - mu) * inv_std[i];
  }
  const auto& vg = t.value(gamma);
  const auto& vb = t.value(beta);
  BasicTensor<Real> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = vg[j] * xhat(i, j) + vb[j];
  return t.record(
      std::move(out), "layer_norm_rows", {x, gamma, beta},
      [x, gamma, beta, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Real>& tp,
                                                                                   const BasicTensor<Real>& g) {
        const auto& vg = tp.value(gamma);
        if (tp.requires_grad(gamma) || tp.requires_grad(beta)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              if (tp.requires_grad(gamma)) tp.grad_of(gamma)[j] += g(i, j) * xhat(i, j);
              if (tp.requires_grad(beta)) tp.grad_of(beta)[j] += g(i, j);
            }
        }
        if (!tp.requires_grad(x)) return;
        auto& gx = tp.grad_of(x);
        for (std::size_t i = 0; i < m; ++i) {
          Real mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const Real d = g(i, j) * vg[j];
            mean_d += d;
            mean_dx += d * xhat(i, j);
          }
          mean_d /= Real(n);
          mean_dx /= Real(n);
          for (std::size_t j = 0; j < n; ++j)
            gx(i, j) += inv_std[i] * (g(i, j) * vg[j] - mean_d - xhat(i, j) * mean_dx);
        }
      });
}

template <typename Real>
struct BatchStats {
  std::vector<Real> mean;
  std::vector<Real> var;  // biased (divides by N)
};

// Batch normalization over rows using the batch's own statistics. The
// statistics are written to `stats` when given so callers can update
// running estimates.
template <typename Real>
Var batch_norm_train(Tape<Real>& t, Var x, Var gamma, Var beta, Real eps, BatchStats<Real>* stats = nullptr) {
  const auto& vx = t.value(x);
  detail::require_matrix(vx, "batch_norm_train");
  const std::size_t m = vx.dim(0), n = vx.dim(1);
  detail::require(t.value(gamma).size() == n && t.value(beta).size() == n, "batch_norm_train: parameter width");
  std::vector<Real> mu(n), var(n), inv_std(n), column(m);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) column[i] = vx(i, j);
    mu[j] = detail::sorted_sum(column) / Real(m);
    for (std::size_t i = 0; i < m; ++i) column[i] = (vx(i, j) - mu[j]) * (vx(i, j) - mu[j]);
    var[j] = detail::sorted_sum(column) / Real(m);
  }
  for (std::size_t j = 0; j < n; ++j) inv_std[j] = Real(1) / std::sqrt(var[j] + eps);
  BasicTensor<Real> xhat({m, n}), out({m, n});
  const auto& vg = t.value(gamma);
  const auto& vb = t.value(beta);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (vx(i, j) - mu[j]) * inv_std[j];
      out(i, j) = vg[j] * xhat(i, j) + vb[j];
    }
  if (stats) *stats = BatchStats<Real>{mu, var};
  return t.record(
      std::move(out), "batch_norm_train", {x, gamma, beta},
      [x, gamma, beta, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Real>& tp,
                                                                                   const BasicTensor<Real>& g) {
        const auto& vg = tp.value(gamma);
        std::vector<Real> sum_d(n, Real(0)), sum_dx(n, Real(0));
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            sum_d[j] += g(i, j);
            sum_dx[j] += g(i, j) * xhat(i, j);
          }
        if (tp.requires_grad(gamma)) {
          auto& gg = tp.grad_of(gamma);
          for (std::size_t j = 0; j < n; ++j) gg[j] += sum_dx[j];
        }
        if (tp.requires_grad(beta)) {
          auto& gb = tp.grad_of(beta);
          for (std::size_t j = 0; j < n; ++j) gb[j] += sum_d[j];
        }
        if (!tp.requires_grad(x)) return;
        auto& gx = tp.grad_of(x);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            gx(i, j) += vg[j] * inv_std[j] * (g(i, j) - sum_d[j] / Real(m) - xhat(i, j) * sum_dx[j] / Real(m));
      });
}

// Batch normalization with fixed (running) statistics.
template <typename Real>
Var batch_norm_eval(Tape<Real>& t, Var x, Var gamma, Var beta, const BasicTensor<Real>& running_mean,
                    const BasicTensor<Real>& running_var, Real eps) {
  const auto& vx = t.value(x);
  detail::require_matrix(vx, "batch_norm_eval");
  const std::size_t m = vx.dim(0), n = vx.dim(1);
  detail::require(running_mean.size() == n && running_var.size() == n, "batch_norm_eval: statistics width");
  std::vector<Real> inv_std(n);
  for (std::size_t j = 0; j < n; ++j) inv_std[j] = Real(1) / std::sqrt(running_var[j] + eps);
  BasicTensor<Real> xhat({m, n}), out({m, n});
  const auto& vg = t.value(gamma);
  const auto& vb = t.value(beta);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (vx(i, j) - running_mean[j]) * inv_std[j];
      out(i, j) = vg[j] * xhat(i, j) + vb[j];
    }
  return t.record(std::move(out), "batch_norm_eval", {x, gamma, beta},
                  [x, gamma, beta, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Tape<Real>& tp, const BasicTensor<Real>& g) {
                    const auto& vg = tp.value(gamma);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        if (tp.requires_grad(gamma)) tp.grad_of(gamma)[j] += g(i, j) * xhat(i, j);
                        if (tp.requires_grad(beta)) tp.grad_of(beta)[j] += g(i, j);
                        if (tp.requires_grad(x)) tp.grad_of(x)(i, j) += g(i, j) * vg[j] * inv_std[j];
                      }
                  });
}

// ---- softmax family --------------------------------------------------------

// Row softmax. Columns with key_mask[j] == 0 get probability exactly 0.
template <typename Real>
Var softmax_rows(Tape<Real>& t, Var x, std::vector<std::uint8_t> key_mask = {}) {
  const auto& vx = t.value(x);
  detail::require_matrix(vx, "softmax_rows");
  const std::size_t m = vx.dim(0), n = vx.dim(1);
  if (key_mask.empty()) key_mask.assign(n, 1);
  detail::require(key_mask.size() == n, "softmax_rows: mask width");
  detail::require(std::any_of(key_mask.begin(), key_mask.end(), [](auto v) { return v != 0; }),
                  "softmax_rows: every key is masked");
  BasicTensor<Real> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (key_mask[j]) mx = std::max(mx, vx(i, j));
    Real z = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (key_mask[j]) z += (out(i, j) = std::exp(vx(i, j) - mx));
    for (std::size_t j = 0; j < n; ++j) out(i, j) = key_mask[j] ? out(i, j) / z : Real(0);
  }
  const Var y{t.size()};
  return t.record(std::move(out), "softmax_rows", {x}, [x, y, m, n](Tape<Real>& tp, const BasicTensor<Real>& g) {
    const auto& vy = tp.value(y);
    auto& gx = tp.grad_of(x);
    for (std::size_t i = 0; i < m; ++i) {
      Real dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += vy(i, j) * g(i, j);
      for (std::size_t j = 0; j < n; ++j) gx(i, j) += vy(i, j) * (g(i, j) - dot);
    }
  });
}

// Row-wise log-sum-exp over the entries where mask(i, j) != 0 (all entries
// when the mask is empty). Returns a rank-1 tensor of length rows.
template <typename Real>
Var logsumexp_rows(Tape<Real>& t, Var x, std::vector<std::uint8_t> mask = {}) {
  const auto& vx = t.value(x);
  detail::require_matrix(vx, "logsumexp_rows");
  const std::size_t m = vx.dim(0), n = vx.dim(1);
  if (mask.empty()) mask.assign(m * n, 1);
  detail::require(mask.size() == m * n, "logsumexp_rows: mask shape");
  BasicTensor<Real> out({m});
  BasicTensor<Real> probs({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[i * n + j]) {
        mx = std::max(mx, vx(i, j));
        any = true;
      }
    detail::require(any, "logsumexp_rows: row " + std::to_string(i) + " has no candidates");
    Real z = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[i * n + j]) z += (probs(i, j) = std::exp(vx(i, j) - mx));
    for (std::size_t j = 0; j < n; ++j) probs(i, j) /= z;
    out[i] = mx + std::log(z);
  }
  return t.record(std::move(out), "logsumexp_rows", {x},
                  [x, m, n, probs = std::move(probs)](Tape<Real>& tp, const BasicTensor<Real>& g) {
                    auto& gx = tp.grad_of(x);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) gx(i, j) += g[i] * probs(i, j);
                  });
}

// ---- indexing --------------------------------------------------------------

// Rows of `table` selected by `ids` (embedding lookup).
template <typename Real>
Var gather_rows(Tape<Real>& t, Var table, std::vector<std::size_t> ids) {
  const auto& vt = t.value(table);
  detail::require_matrix(vt, "gather_rows");
  const std::size_t v = vt.dim(0), d = vt.dim(1);
  detail::require(!ids.empty(), "gather_rows: no indices");
  BasicTensor<Real> out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    detail::require(ids[r] < v, "gather_rows: index " + std::to_string(ids[r]) + " out of range");
    for (std::size_t j = 0; j < d; ++j) out(r, j) = vt(ids[r], j);
  }
  return t.record(std::move(out), "gather_rows", {table},
                  [table, d, ids = std::move(ids)](Tape<Real>& tp, const BasicTensor<Real>& g) {
                    auto& gt = tp.grad_of(table);
                    for (std::size_t r = 0; r < ids.size(); ++r)
                      for (std::size_t j = 0; j < d; ++j) gt(ids[r], j) += g(r, j);
                  });
}

// Flat elements at `idx`, as a rank-1 tensor.
template <typename Real>
Var gather(Tape<Real>& t, Var x, std::vector<std::size_t> idx) {
  const auto& vx = t.value(x);
  detail::require(!idx.empty(), "gather: no indices");
  BasicTensor<Real> out({idx.size()});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    detail::require(idx[k] < vx.size(), "gather: index out of range");
    out[k] = vx[idx[k]];
  }
  return t.record(std::move(out), "gather", {x}, [x, idx = std::move(idx)](Tape<Real>& tp, const BasicTensor<Real>& g) {
    auto& gx = tp.grad_of(x);
    for (std::size_t k = 0; k < idx.size(); ++k) gx[idx[k]] += g[k];
  });
}

template <typename Real>
Var slice_cols(Tape<Real>& t, Var x, std::size_t start, std::size_t count) {
  const auto& vx = t.value(x);
  detail::require_matrix(vx, "slice_cols");
  const std::size_t m = vx.dim(0), n = vx.dim(1);
  detail::require(count > 0 && start + count <= n, "slice_cols: range out of bounds");
  BasicTensor<Real> out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = vx(i, start + j);
  return t.record(std::move(out), "slice_cols", {x}, [x, m, start, count](Tape<Real>& tp, const BasicTensor<Real>& g) {
    auto& gx = tp.grad_of(x);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) gx(i, start + j) += g(i, j);
  });
}

template <typename Real>
Var concat_cols(Tape<Real>& t, const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = t.value(parts[0]).rows();
  std::size_t total = 0;
  for (Var p : parts) {
    detail::require(t.value(p).rows() == m, "concat_cols: row count mismatch");
    total += t.value(p).cols();
  }
  BasicTensor<Real> out({m, total});
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& vp = t.value(p);
    const std::size_t c = vp.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) out(i, off + j) = vp[i * c + j];
    off += c;
  }
  return t.record(std::move(out), "concat_cols", parts, [parts, m, total](Tape<Real>& tp, const BasicTensor<Real>& g) {
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t c = tp.value(p).cols();
      if (tp.requires_grad(p)) {
        auto& gp = tp.grad_of(p);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + off + j];
      }
      off += c;
    }
  });
}

// Stacks row vectors (each [d] or [1 x d]) into a [k x d] matrix.
template <typename Real>
Var stack_rows(Tape<Real>& t, const std::vector<Var>& rows) {
  detail::require(!rows.empty(), "stack_rows: no inputs");
  const std::size_t d = t.value(rows[0]).size();
  BasicTensor<Real> out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& vr = t.value(rows[r]);
    detail::require(vr.size() == d, "stack_rows: width mismatch");
    for (std::size_t j = 0; j < d; ++j) out(r, j) = vr[j];
  }
  return t.record(std::move(out), "stack_rows", rows, [rows, d](Tape<Real>& tp, const BasicTensor<Real>& g) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!tp.requires_grad(rows[r])) continue;
      auto& gr = tp.grad_of(rows[r]);
      for (std::size_t j = 0; j < d; ++j) gr[j] += g(r, j);
    }
  });
}

// Mean over rows where mask[r] != 0; returns a rank-1 [d] tensor.
template <typename Real>
Var masked_mean_rows(Tape<Real>& t, Var x, std::vector<std::uint8_t> mask) {
  const auto& vx = t.value(x);
  detail::require_matrix(vx, "masked_mean_rows");
  const std::size_t m = vx.dim(0), d = vx.dim(1);
  detail::require(mask.size() == m, "masked_mean_rows: mask length");
  std::size_t count = 0;
  for (auto v : mask) count += v != 0;
  detail::require(count > 0, "masked_mean_rows: every row is masked");
  BasicTensor<Real> out({d});
  for (std::size_t i = 0; i < m; ++i)
    if (mask[i])
      for (std::size_t j = 0; j < d; ++j) out[j] += vx(i, j);
  for (auto& v : out.data()) v /= Real(count);
  return t.record(std::move(out), "masked_mean_rows", {x},
                  [x, m, d, count, mask = std::move(mask)](Tape<Real>& tp, const BasicTensor<Real>& g) {
                    auto& gx = tp.grad_of(x);
                    for (std::size_t i = 0; i < m; ++i)
                      if (mask[i])
                        for (std::size_t j = 0; j < d; ++j) gx(i, j) += g[j] / Real(count);
                  });
}

// ---- sequence and graph kernels --------------------------------------------

// 1-D "same" convolution over positions with zero padding.
// x: [L x Cin], w: [K x Cin x Cout] with K odd, b: [Cout] -> [L x Cout].
template <typename Real>
Var conv1d_same(Tape<Real>& t, Var x, Var w, Var b) {
  const auto& vx = t.value(x);
  const auto& vw = t.value(w);
  detail::require_matrix(vx, "conv1d_same");
  detail::require(vw.rank() == 3, "conv1d_same: weight must be [K x Cin x Cout]");
  const std::size_t len = vx.dim(0), cin = vx.dim(1), k = vw.dim(0), cout = vw.dim(2);
  detail::require(vw.dim(1) == cin, "conv1d_same: channel mismatch");
  detail::require(k % 2 == 1, "conv1d_same: kernel width must be odd");
  detail::require(t.value(b).size() == cout, "conv1d_same: bias width");
  const std::ptrdiff_t half = std::ptrdiff_t(k / 2);
  BasicTensor<Real> out({len, cout});
  const auto& vb = t.value(b);
  for (std::size_t p = 0; p < len; ++p) {
    Real* orow = &out(p, 0);
    for (std::size_t o = 0; o < cout; ++o) orow[o] = vb[o];
    for (std::size_t kk = 0; kk < k; ++kk) {
      const std::ptrdiff_t src = std::ptrdiff_t(p) + std::ptrdiff_t(kk) - half;
      if (src < 0 || src >= std::ptrdiff_t(len)) continue;
      for (std::size_t c = 0; c < cin; ++c) {
        const Real xv = vx(std::size_t(src), c);
        const Real* wrow = &vw[(kk * cin + c) * cout];
        for (std::size_t o = 0; o < cout; ++o) orow[o] += xv * wrow[o];
      }
    }
  }
  return t.record(std::move(out), "conv1d_same", {x, w, b},
                  [x, w, b, len, cin, k, cout, half](Tape<Real>& tp, const BasicTensor<Real>& g) {
                    const auto& vx = tp.value(x);
                    const auto& vw = tp.value(w);
                    const bool need_x = tp.requires_grad(x), need_w = tp.requires_grad(w);
                    if (tp.requires_grad(b)) {
                      auto& gb = tp.grad_of(b);
                      for (std::size_t p = 0; p < len; ++p)
                        for (std::size_t o = 0; o < cout; ++o) gb[o] += g(p, o);
                    }
                    if (!need_x && !need_w) return;
                    BasicTensor<Real>* gx = need_x ? &tp.grad_of(x) : nullptr;
                    BasicTensor<Real>* gw = need_w ? &tp.grad_of(w) : nullptr;
                    for (std::size_t p = 0; p < len; ++p) {
                      const Real* grow = &g(p, 0);
                      for (std::size_t kk = 0; kk < k; ++kk) {
                        const std::ptrdiff_t src = std::ptrdiff_t(p) + std::ptrdiff_t(kk) - half;
                        if (src < 0 || src >= std::ptrdiff_t(len)) continue;
                        for (std::size_t c = 0; c < cin; ++c) {
                          const std::size_t base = (kk * cin + c) * cout;
                          if (gx) {
                            Real acc = 0;
                            for (std::size_t o = 0; o < cout; ++o) acc += grow[o] * vw[base + o];
                            (*gx)(std::size_t(src), c) += acc;
                          }
                          if (gw) {
                            const Real xv = vx(std::size_t(src), c);
                            Real* gwrow = &(*gw)[base];
                            for (std::size_t o = 0; o < cout; ++o) gwrow[o] += xv * grow[o];
                          }
                        }
                      }
                    }
                  });
}

// Compressed adjacency: neighbors of node v are index[offset[v] .. offset[v+1]).
struct Csr {
  std::vector<std::size_t> offset{0};
  std::vector<std::size_t> index;
  std::size_t nodes() const noexcept { return offset.size() - 1; }
};

// GIN aggregation: (1 + eps) x_v + sum over neighbors u of x_u. Per
// coordinate the neighbor values are added to the self term in sorted order.
template <typename Real>
Var gin_aggregate(Tape<Real>& t, Var x, const Csr& adj, Real eps) {
  const auto& vx = t.value(x);
  detail::require_matrix(vx, "gin_aggregate");
  const std::size_t n = vx.dim(0), d = vx.dim(1);
  detail::require(adj.nodes() == n, "gin_aggregate: adjacency has " + std::to_string(adj.nodes()) +
                                        " nodes, features have " + std::to_string(n));
  BasicTensor<Real> out({n, d});
  std::vector<Real> nb;
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < d; ++j) {
      nb.clear();
      for (std::size_t e = adj.offset[v]; e < adj.offset[v + 1]; ++e) nb.push_back(vx(adj.index[e], j));
      out(v, j) = detail::sorted_sum(nb, (Real(1) + eps) * vx(v, j));
    }
  return t.record(std::move(out), "gin_aggregate", {x}, [x, adj, eps, n, d](Tape<Real>& tp, const BasicTensor<Real>& g) {
    auto& gx = tp.grad_of(x);
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t j = 0; j < d; ++j) gx(v, j) += (Real(1) + eps) * g(v, j);
      for (std::size_t e = adj.offset[v]; e < adj.offset[v + 1]; ++e) {
        const std::size_t u = adj.index[e];
        for (std::size_t j = 0; j < d; ++j) gx(u, j) += g(v, j);
      }
    }
  });
}

// ---- fused losses ----------------------------------------------------------

enum class Reduction { kSum, kMean };

// Binary cross-entropy on logits, log-space stable:
// max(z, 0) - z y + log(1 + exp(-|z|)).
template <typename Real>
Var bce_with_logits(Tape<Real>& t, Var logits, BasicTensor<Real> labels, Reduction reduction) {
  const auto& vz = t.value(logits);
  detail::require_same_shape(vz, labels, "bce_with_logits");
  Real acc = 0;
  for (std::size_t i = 0; i < vz.size(); ++i) {
    const Real z = vz[i];
    acc += std::max(z, Real(0)) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const Real denom = reduction == Reduction::kMean ? Real(vz.size()) : Real(1);
  return t.record(BasicTensor<Real>::scalar(acc / denom), "bce_with_logits", {logits},
                  [logits, denom, y = std::move(labels)](Tape<Real>& tp, const BasicTensor<Real>& g) {
                    const auto& vz = tp.value(logits);
                    auto& gz = tp.grad_of(logits);
                    for (std::size_t i = 0; i < vz.size(); ++i) gz[i] += g[0] * (sigmoid_value(vz[i]) - y[i]) / denom;
                  });
}

// Focal binary loss on probabilities, averaged over entries:
//   -[a (1-p)^g log p] for y = 1,  -[(1-a) p^g log(1-p)] for y = 0.
// p is clamped to [clamp, 1 - clamp]; clamped entries get zero gradient.
template <typename Real>
Var focal_loss(Tape<Real>& t, Var probs, BasicTensor<Real> labels, Real alpha, Real gamma, Real clamp = Real(1e-7)) {
  const auto& vp = t.value(probs);
  detail::require_same_shape(vp, labels, "focal_loss");
  const Real lo = clamp, hi = Real(1) - clamp;
  const std::size_t n = vp.size();
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real p = std::clamp(vp[i], lo, hi);
    acc += labels[i] != Real(0) ? -alpha * std::pow(Real(1) - p, gamma) * std::log(p)
                                : -(Real(1) - alpha) * std::pow(p, gamma) * std::log(Real(1) - p);
  }
  return t.record(BasicTensor<Real>::scalar(acc / Real(n)), "focal_loss", {probs},
                  [probs, lo, hi, alpha, gamma, n, y = std::move(labels)](Tape<Real>& tp, const BasicTensor<Real>& g) {
                    const auto& vp = tp.value(probs);
                    auto& gp = tp.grad_of(probs);
                    for (std::size_t i = 0; i < n; ++i) {
                      const Real p = vp[i];
                      if (p < lo || p > hi) continue;
                      Real d;
                      if (y[i] != Real(0)) {
                        const Real q = Real(1) - p;
                        const Real dq = gamma == Real(0) ? Real(0) : gamma * std::pow(q, gamma - Real(1)) * std::log(p);
                        d = alpha * (dq - std::pow(q, gamma) / p);
                      } else {
                        const Real dp = gamma == Real(0) ? Real(0) : gamma * std::pow(p, gamma - Real(1)) * std::log(Real(1) - p);
                        d = -(Real(1) - alpha) * (dp - std::pow(p, gamma) / (Real(1) - p));
                      }
                      gp[i] += g[0] * d / Real(n);
                    }
                  });
}

}  // namespace hippo::ad
