#pragma once

// Helpers that gather state from a layer tree, and conversions between
// grids and single-channel tensors.

#include <vector>

#include "blankopt/field_grid.hpp"
#include "blankopt/nn/checkpoint.hpp"
#include "blankopt/nn/layers.hpp"

namespace blankopt::nn {

template <typename T>
std::vector<Param<T>*> params_of(Layer<T>& layer) {
  std::vector<Param<T>*> out;
  layer.collect_params(out);
  return out;
}

template <typename T>
std::vector<Buffer<T>> buffers_of(Layer<T>& layer) {
  std::vector<Buffer<T>> out;
  layer.collect_buffers(out);
  return out;
}

template <typename T>
std::vector<LayerSpec> specs_of(const Layer<T>& layer) {
  std::vector<LayerSpec> out;
  layer.collect_specs(out);
  return out;
}

// Stacks grids of one spec as N x 1 x H x W, multiplying values by scale.
template <typename T>
Tensor<T> grids_to_tensor(const std::vector<const ScalarGrid*>& grids, double scale = 1.0) {
  if (grids.empty()) throw ShapeError("no grids to stack");
  const GridSpec& spec = grids.front()->spec;
  Tensor<T> t(static_cast<int>(grids.size()), 1, spec.height, spec.width);
  for (std::size_t i = 0; i < grids.size(); ++i) {
    if (!(grids[i]->spec == spec)) throw ShapeError("grids on different specs");
    T* dst = t.sample(static_cast<int>(i));
    for (std::size_t k = 0; k < spec.size(); ++k) dst[k] = static_cast<T>(grids[i]->values[k] * scale);
  }
  return t;
}

template <typename T>
ScalarGrid tensor_to_grid(const Tensor<T>& t, int index, const GridSpec& spec, GridKind kind, double scale = 1.0) {
  if (t.c != 1 || t.h != spec.height || t.w != spec.width)
    throw ShapeError("tensor " + t.shape_str() + " does not match the grid spec");
  ScalarGrid g(spec, kind);
  const T* src = t.sample(index);
  for (std::size_t k = 0; k < spec.size(); ++k) g.values[k] = static_cast<float>(src[k] * scale);
  return g;
}

// Copies all parameters and buffers of a float network into a checkpoint.
inline void store_network(Checkpoint& ck, Layer<float>& net) {
  ck.layers = specs_of(net);
  store_state(ck, params_of(net), buffers_of(net));
}

inline void load_network(const Checkpoint& ck, Layer<float>& net) { load_state(ck, params_of(net), buffers_of(net)); }

}  // namespace blankopt::nn
