#include "blankopt/nn/res_se.hpp"

#include <algorithm>

namespace blankopt::nn {

template <typename T>
SqueezeExcite<T>::SqueezeExcite(std::string name, int channels, int reduction)
    : channels_(channels),
      width_(std::max(1, channels / reduction)),
      fc1_(name + ".fc1", channels, std::max(1, channels / reduction)),
      fc2_(name + ".fc2", std::max(1, channels / reduction), channels) {}

template <typename T>
void SqueezeExcite<T>::init(Rng& rng) {
  fc1_.init(rng);
  fc2_.init(rng);
}

template <typename T>
Tensor<T> SqueezeExcite<T>::forward(const Tensor<T>& u) {
  if (u.c != channels_) throw ShapeError("squeeze-excite: expected " + std::to_string(channels_) + " channels");
  u_ = u;
  q_ = sigmoid_.forward(fc2_.forward(relu_.forward(fc1_.forward(pool_.forward(u)))));
  Tensor<T> v = u;
  const std::size_t plane = u.plane();
  for (int i = 0; i < u.n; ++i)
    for (int ch = 0; ch < u.c; ++ch) {
      const T q = q_.data[static_cast<std::size_t>(i) * u.c + ch];
      T* p = v.sample(i) + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) p[k] *= q;
    }
  return v;
}

template <typename T>
Tensor<T> SqueezeExcite<T>::backward(const Tensor<T>& dv) {
  require_same_shape(dv, u_, "squeeze-excite backward");
  const std::size_t plane = dv.plane();
  Tensor<T> du = dv;
  Tensor<T> dq(dv.n, dv.c, 1, 1);
  for (int i = 0; i < dv.n; ++i)
    for (int ch = 0; ch < dv.c; ++ch) {
      const std::size_t qi = static_cast<std::size_t>(i) * dv.c + ch;
      const T q = q_.data[qi];
      const T* d = dv.sample(i) + ch * plane;
      const T* u = u_.sample(i) + ch * plane;
      T* o = du.sample(i) + ch * plane;
      T acc = 0;
      for (std::size_t k = 0; k < plane; ++k) {
        acc += d[k] * u[k];
        o[k] = d[k] * q;
      }
      dq.data[qi] = acc;
    }
  add_into(du, pool_.backward(fc1_.backward(relu_.backward(fc2_.backward(sigmoid_.backward(dq))))));
  return du;
}

template <typename T>
void SqueezeExcite<T>::collect_params(std::vector<Param<T>*>& out) {
  fc1_.collect_params(out);
  fc2_.collect_params(out);
}

template <typename T>
void SqueezeExcite<T>::collect_specs(std::vector<LayerSpec>& out) const {
  out.push_back({LayerType::GlobalAvgPool, 1, 1, 1, 1, 0, 0, 0, 0, channels_, channels_, "se.pool"});
  fc1_.collect_specs(out);
  out.push_back({LayerType::Relu, 1, 1, 1, 1, 0, 0, 0, 0, width_, width_, "se.relu"});
  fc2_.collect_specs(out);
  out.push_back({LayerType::Sigmoid, 1, 1, 1, 1, 0, 0, 0, 0, channels_, channels_, "se.sigmoid"});
}

template <typename T>
void SqueezeExcite<T>::set_param_grad(bool g) {
  Layer<T>::set_param_grad(g);
  fc1_.set_param_grad(g);
  fc2_.set_param_grad(g);
}

template <typename T>
ResSEBlock<T>::ResSEBlock(std::string name, int channels, int reduction)
    : channels_(channels),
      cbr1_(name + ".cbr1", channels, channels, 3, 3, 1, 1, 1, 1),
      cbr2_(name + ".cbr2", channels, channels, 3, 3, 1, 1, 1, 1),
      se_(name + ".se", channels, reduction) {}

template <typename T>
void ResSEBlock<T>::init(Rng& rng) {
  cbr1_.init(rng);
  cbr2_.init(rng);
  se_.init(rng);
}

template <typename T>
Tensor<T> ResSEBlock<T>::forward(const Tensor<T>& x) {
  if (x.c != channels_)
    throw ShapeError("res-se block: expected " + std::to_string(channels_) + " channels, got " + x.shape_str());
  Tensor<T> v = se_.forward(cbr2_.forward(cbr1_.forward(x)));
  add_into(v, x);
  return out_relu_.forward(v);
}

template <typename T>
Tensor<T> ResSEBlock<T>::backward(const Tensor<T>& dy) {
  Tensor<T> d = out_relu_.backward(dy);
  Tensor<T> dx = cbr1_.backward(cbr2_.backward(se_.backward(d)));
  add_into(dx, d);
  return dx;
}

template <typename T>
void ResSEBlock<T>::collect_params(std::vector<Param<T>*>& out) {
  cbr1_.collect_params(out);
  cbr2_.collect_params(out);
  se_.collect_params(out);
}

template <typename T>
void ResSEBlock<T>::collect_buffers(std::vector<Buffer<T>>& out) {
  cbr1_.collect_buffers(out);
  cbr2_.collect_buffers(out);
}

template <typename T>
void ResSEBlock<T>::collect_specs(std::vector<LayerSpec>& out) const {
  cbr1_.collect_specs(out);
  cbr2_.collect_specs(out);
  se_.collect_specs(out);
}

template <typename T>
void ResSEBlock<T>::set_training(bool t) {
  Layer<T>::set_training(t);
  cbr1_.set_training(t);
  cbr2_.set_training(t);
  se_.set_training(t);
}

template <typename T>
void ResSEBlock<T>::set_param_grad(bool g) {
  Layer<T>::set_param_grad(g);
  cbr1_.set_param_grad(g);
  cbr2_.set_param_grad(g);
  se_.set_param_grad(g);
}

template class SqueezeExcite<float>;
template class SqueezeExcite<double>;
template class ResSEBlock<float>;
template class ResSEBlock<double>;

}  // namespace blankopt::nn
