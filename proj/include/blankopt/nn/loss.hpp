#pragma once

#include "blankopt/nn/tensor.hpp"

namespace blankopt::nn {

// Per-sample l1 * mean((y - yhat)^2) - l2 * cos(y, yhat), averaged over the
// batch. The cosine term is taken as 0 when the prediction has zero norm.
// When grad is non-null it receives dL/dpred.
template <typename T>
double field_loss(const Tensor<T>& pred, const Tensor<T>& gt, double l1, double l2, Tensor<T>* grad = nullptr);

}  // namespace blankopt::nn
