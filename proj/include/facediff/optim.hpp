#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "facediff/kernels.hpp"

namespace facediff {

// Adaptive-moment gradient descent over a named tensor list. Moment buffers
// are laid out lazily from the first step() call and keyed by position, so
// the same enumeration order must be used on every call.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<std::pair<std::string, Mat*>>& params,
            const std::vector<std::pair<std::string, Mat*>>& grads) {
    require(params.size() == grads.size(), "Adam: param/grad list mismatch");
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].second->size(), 0.0);
        v_[i].assign(params[i].second->size(), 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].second->a;
      const auto& g = grads[i].second->a;
      require(p.size() == g.size(), "Adam: tensor size mismatch");
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < p.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  long steps_taken() const { return t_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace facediff
