#include "blankopt/nn/loss.hpp"

#include <cmath>

namespace blankopt::nn {

template <typename T>
double field_loss(const Tensor<T>& pred, const Tensor<T>& gt, double l1, double l2, Tensor<T>* grad) {
  require_same_shape(pred, gt, "loss");
  const std::size_t N = pred.sample_size();
  if (grad) *grad = Tensor<T>(pred.n, pred.c, pred.h, pred.w);
  double total = 0.0;
  for (int i = 0; i < pred.n; ++i) {
    const T* p = pred.sample(i);
    const T* y = gt.sample(i);
    double se = 0.0, py = 0.0, pp = 0.0, yy = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const double d = static_cast<double>(p[k]) - y[k];
      se += d * d;
      py += static_cast<double>(p[k]) * y[k];
      pp += static_cast<double>(p[k]) * p[k];
      yy += static_cast<double>(y[k]) * y[k];
    }
    if (!(yy > 0.0)) throw ShapeError("loss: ground truth has zero norm");
    const double np = std::sqrt(pp), ny = std::sqrt(yy);
    const double cos = np > 0.0 ? py / (np * ny) : 0.0;
    total += l1 * se / static_cast<double>(N) - l2 * cos;
    if (grad) {
      T* g = grad->sample(i);
      const double scale = 1.0 / pred.n;
      for (std::size_t k = 0; k < N; ++k) {
        double d = l1 * 2.0 * (static_cast<double>(p[k]) - y[k]) / static_cast<double>(N);
        if (np > 0.0) d -= l2 * (y[k] / (np * ny) - cos * p[k] / pp);
        g[k] = static_cast<T>(d * scale);
      }
    }
  }
  return total / pred.n;
}

template double field_loss<float>(const Tensor<float>&, const Tensor<float>&, double, double, Tensor<float>*);
template double field_loss<double>(const Tensor<double>&, const Tensor<double>&, double, double, Tensor<double>*);

}  // namespace blankopt::nn
