#pragma once

// Layers with explicit forward and backward passes. Each instance caches
// what its backward pass needs from the most recent forward call, so a
// layer object appears at most once per network graph.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "blankopt/nn/tensor.hpp"
#include "blankopt/random.hpp"

namespace blankopt::nn {

enum class LayerType : std::uint8_t {
  Conv = 0,
  TransposeConv = 1,
  Linear = 2,
  BatchNorm = 3,
  Relu = 4,
  Sigmoid = 5,
  GlobalAvgPool = 6,
  Resize = 7,
  Mask = 8,
};

const char* layer_type_name(LayerType t);

struct LayerSpec {
  LayerType type = LayerType::Conv;
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int ph = 0, pw = 0;
  int oh = 0, ow = 0;  // output padding, transpose only
  int in_channels = 0, out_channels = 0;
  std::string name;
};

// Spatial size arithmetic.
// A non-positive result means the layer collapses its input.
inline int conv_out(int in, int k, int s, int p) {
  const int span = in + 2 * p - k;
  return span < 0 ? 0 : span / s + 1;
}
inline int transpose_out(int in, int k, int s, int p, int op) { return (in - 1) * s - 2 * p + k + op; }

template <typename T>
struct Param {
  std::string name;
  std::vector<T> value;
  std::vector<T> grad;

  Param() = default;
  Param(std::string n, std::size_t size) : name(std::move(n)), value(size, T(0)), grad(size, T(0)) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

// Running statistics and other non-trainable state saved with a model.
template <typename T>
struct Buffer {
  std::string name;
  std::vector<T>* value = nullptr;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void collect_params(std::vector<Param<T>*>&) {}
  virtual void collect_buffers(std::vector<Buffer<T>>&) {}
  virtual void collect_specs(std::vector<LayerSpec>&) const {}
  virtual void set_training(bool t) { training_ = t; }
  // When false, backward only propagates to the input and leaves parameter
  // gradients untouched.
  virtual void set_param_grad(bool g) { param_grad_ = g; }
  bool training() const { return training_; }

 protected:
  bool training_ = true;
  bool param_grad_ = true;
};

template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::string name, int cin, int cout, int kh, int kw, int sh, int sw, int ph, int pw);
  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override { out.push_back(&weight_); out.push_back(&bias_); }
  void collect_specs(std::vector<LayerSpec>& out) const override { out.push_back(spec_); }
  const LayerSpec& spec() const { return spec_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  LayerSpec spec_;
  Param<T> weight_, bias_;  // weight: cout x (cin*kh*kw)
  Tensor<T> x_;
};

template <typename T>
class ConvTranspose2d : public Layer<T> {
 public:
  ConvTranspose2d(std::string name, int cin, int cout, int kh, int kw, int sh, int sw, int ph, int pw, int oh,
                  int ow);
  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override { out.push_back(&weight_); out.push_back(&bias_); }
  void collect_specs(std::vector<LayerSpec>& out) const override { out.push_back(spec_); }
  const LayerSpec& spec() const { return spec_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  LayerSpec spec_;
  Param<T> weight_, bias_;  // weight: cin x (cout*kh*kw)
  Tensor<T> x_;
};

// Acts on the flattened sample: N x in -> N x out (as N x out x 1 x 1).
template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(std::string name, int in, int out);
  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override { out.push_back(&weight_); out.push_back(&bias_); }
  void collect_specs(std::vector<LayerSpec>& out) const override { out.push_back(spec_); }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  LayerSpec spec_;
  Param<T> weight_, bias_;  // weight: out x in
  Tensor<T> x_;
};

template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  BatchNorm2d(std::string name, int channels, T momentum = T(0.1), T eps = T(1e-5));
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override { out.push_back(&gamma_); out.push_back(&beta_); }
  void collect_buffers(std::vector<Buffer<T>>& out) override;
  void collect_specs(std::vector<LayerSpec>& out) const override { out.push_back(spec_); }
  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }
  std::vector<T>& running_mean() { return running_mean_; }
  std::vector<T>& running_var() { return running_var_; }

 private:
  LayerSpec spec_;
  T momentum_, eps_;
  Param<T> gamma_, beta_;
  std::vector<T> running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  bool cached_training_ = true;
};

template <typename T>
class Relu : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  Tensor<T> y_;
};

template <typename T>
class Sigmoid : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  Tensor<T> y_;
};

// N x C x H x W -> N x C x 1 x 1
template <typename T>
class GlobalAvgPool : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  int h_ = 0, w_ = 0;
};

// Bilinear resize with half-pixel centres (edge-clamped).
template <typename T>
class Resize : public Layer<T> {
 public:
  Resize(int out_h, int out_w) : oh_(out_h), ow_(out_w) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  int oh_, ow_;
  int ih_ = 0, iw_ = 0;
};

// Convolution, batch norm and relu applied in sequence.
template <typename T>
class ConvBnRelu : public Layer<T> {
 public:
  ConvBnRelu(std::string name, int cin, int cout, int kh, int kw, int sh, int sw, int ph, int pw);
  void init(Rng& rng) { conv_.init(rng); }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<Buffer<T>>& out) override;
  void collect_specs(std::vector<LayerSpec>& out) const override;
  void set_training(bool t) override;
  void set_param_grad(bool g) override;
  Conv2d<T>& conv() { return conv_; }
  BatchNorm2d<T>& bn() { return bn_; }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  Relu<T> relu_;
};

// Transpose convolution, batch norm and relu applied in sequence.
template <typename T>
class ConvTBnRelu : public Layer<T> {
 public:
  ConvTBnRelu(std::string name, int cin, int cout, int kh, int kw, int sh, int sw, int ph, int pw, int oh, int ow);
  void init(Rng& rng) { conv_.init(rng); }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<Buffer<T>>& out) override;
  void collect_specs(std::vector<LayerSpec>& out) const override;
  void set_training(bool t) override;
  void set_param_grad(bool g) override;
  ConvTranspose2d<T>& conv() { return conv_; }

 private:
  ConvTranspose2d<T> conv_;
  BatchNorm2d<T> bn_;
  Relu<T> relu_;
};

}  // namespace blankopt::nn
