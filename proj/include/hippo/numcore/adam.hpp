#pragma once

#include <cmath>
#include <vector>

#include "hippo/numcore/params.hpp"

namespace hippo {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Real>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One bias-corrected update. Entries of `trainable` that are false (when
  // given) leave the matching tensor untouched.
  void step(ParamSet<Real>& params, const std::vector<BasicTensor<Real>>& grads,
            const std::vector<bool>& trainable = {}) {
    if (grads.size() != params.size()) throw ShapeError("adam: gradient count does not match parameters");
    if (m_.empty()) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_.push_back(BasicTensor<Real>::zeros(params[i].shape()));
        v_.push_back(BasicTensor<Real>::zeros(params[i].shape()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!trainable.empty() && !trainable[i]) continue;
      auto& p = params[i];
      const auto& g = grads[i];
      if (g.size() != p.size()) throw ShapeError("adam: gradient shape mismatch for " + params.name(i));
      for (std::size_t k = 0; k < p.size(); ++k) {
        m_[i][k] = Real(cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g[k]);
        v_[i][k] = Real(cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g[k] * g[k]);
        const double mhat = m_[i][k] / c1;
        const double vhat = v_[i][k] / c2;
        p[k] = Real(p[k] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  long steps() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<BasicTensor<Real>> m_, v_;
  long t_ = 0;
};

}  // namespace hippo
