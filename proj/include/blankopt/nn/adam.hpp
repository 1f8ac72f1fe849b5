#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "blankopt/nn/layers.hpp"

namespace blankopt::nn {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Param<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  // Throws NonFiniteGradient naming the parameter before touching any value.
  void step() {
    for (auto* p : params_)
      for (T g : p->grad)
        if (!std::isfinite(static_cast<double>(g))) throw NonFiniteGradient("non-finite gradient in " + p->name);
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = b1_ * m[i] + (1.0 - b1_) * g;
        v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
        const double mhat = m[i] / c1, vhat = v[i] / c2;
        p.value[i] = static_cast<T>(p.value[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  long steps() const { return t_; }
  double lr() const { return lr_; }

 private:
  std::vector<Param<T>*> params_;
  double lr_, b1_, b2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace blankopt::nn
