#pragma once

#include "blankopt/nn/layers.hpp"

namespace blankopt::nn {

// Squeeze-and-excitation: v = u * sigmoid(fc2(relu(fc1(avgpool(u))))).
template <typename T>
class SqueezeExcite : public Layer<T> {
 public:
  SqueezeExcite(std::string name, int channels, int reduction = 16);
  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& u) override;
  Tensor<T> backward(const Tensor<T>& dv) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_specs(std::vector<LayerSpec>& out) const override;
  void set_param_grad(bool g) override;
  int squeeze_width() const { return width_; }
  Linear<T>& fc2() { return fc2_; }
  const Tensor<T>& attention() const { return q_; }

 private:
  int channels_, width_;
  GlobalAvgPool<T> pool_;
  Linear<T> fc1_;
  Relu<T> relu_;
  Linear<T> fc2_;
  Sigmoid<T> sigmoid_;
  Tensor<T> u_, q_;
};

// relu(x + SE(cbr2(cbr1(x)))) with 3x3 convolutions.
template <typename T>
class ResSEBlock : public Layer<T> {
 public:
  ResSEBlock(std::string name, int channels, int reduction = 16);
  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<Buffer<T>>& out) override;
  void collect_specs(std::vector<LayerSpec>& out) const override;
  void set_training(bool t) override;
  void set_param_grad(bool g) override;
  ConvBnRelu<T>& first() { return cbr1_; }
  ConvBnRelu<T>& second() { return cbr2_; }
  SqueezeExcite<T>& se() { return se_; }

 private:
  int channels_;
  ConvBnRelu<T> cbr1_, cbr2_;
  SqueezeExcite<T> se_;
  Relu<T> out_relu_;
};

}  // namespace blankopt::nn
