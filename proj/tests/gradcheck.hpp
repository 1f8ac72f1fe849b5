#pragma once

// Finite-difference gradient checks shared by the unit tests and the
// acceptance run.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "blankopt/nn/layers.hpp"
#include "blankopt/nn/res_se.hpp"
#include "blankopt/random.hpp"

namespace gradcheck {

using namespace blankopt;
using namespace blankopt::nn;

using TD = Tensor<double>;

inline TD random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  TD t(n, c, h, w);
  for (auto& v : t.data) v = scale * rng.normal();
  return t;
}

inline double dot(const TD& a, const TD& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Norm-wise relative error. The floor covers gradients that vanish
// identically, such as a conv bias feeding a training-mode batch norm.
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(num) / std::max({std::sqrt(na), std::sqrt(nb), 1e-3});
}

// Central differences of the scalar sum(r * layer(x)) against the analytic
// gradients for the input and every parameter. Returns the worst norm-wise
// relative error.
inline double gradient_check(Layer<double>& layer, TD x, std::uint64_t seed, double step = 1e-3) {
  Rng rng(seed);
  const TD y0 = layer.forward(x);
  const TD r = random_tensor(y0.n, y0.c, y0.h, y0.w, rng);
  std::vector<Param<double>*> params;
  layer.collect_params(params);
  for (auto* p : params) p->zero_grad();
  layer.forward(x);
  const TD dx = layer.backward(r);

  auto objective = [&] { return dot(layer.forward(x), r); };
  double worst = 0.0;
  std::vector<double> num(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + step;
    const double fp = objective();
    x.data[i] = keep - step;
    const double fm = objective();
    x.data[i] = keep;
    num[i] = (fp - fm) / (2 * step);
  }
  worst = std::max(worst, rel_err(dx.data, num));
  for (auto* p : params) {
    std::vector<double> pn(p->value.size());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + step;
      const double fp = objective();
      p->value[i] = keep - step;
      const double fm = objective();
      p->value[i] = keep;
      pn[i] = (fp - fm) / (2 * step);
    }
    worst = std::max(worst, rel_err(p->grad, pn));
  }
  return worst;
}

inline double min_abs(const TD& t) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : t.data) m = std::min(m, std::abs(v));
  return m;
}

// Distance of the block's relu inputs from the kink. Central differences are
// only meaningful when no perturbation crosses a kink.
inline double kink_margin(ResSEBlock<double>& l, const TD& x) {
  const TD b1 = l.first().bn().forward(l.first().conv().forward(x));
  const TD a1 = l.first().forward(x);
  const TD b2 = l.second().bn().forward(l.second().conv().forward(a1));
  TD pre = l.se().forward(l.second().forward(a1));
  add_into(pre, x);
  return std::min({min_abs(b1), min_abs(b2), min_abs(pre)});
}

inline void randomise_params(Layer<double>& layer, Rng& rng) {
  std::vector<Param<double>*> params;
  layer.collect_params(params);
  for (auto* p : params)
    for (auto& v : p->value) v = 0.5 * rng.normal();
}

}  // namespace gradcheck
