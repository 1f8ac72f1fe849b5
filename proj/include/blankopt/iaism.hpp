#pragma once

// Image-based surrogate: a masked U-Net with residual squeeze-excitation
// blocks at the bottleneck. Blank SDF in, thinning field out.

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "blankopt/config.hpp"
#include "blankopt/field_grid.hpp"
#include "blankopt/forming_oracle.hpp"
#include "blankopt/nn/layers.hpp"
#include "blankopt/nn/res_se.hpp"

namespace blankopt {

// SDF values are multiplied by this before entering a network.
inline constexpr double kSdfScale = 0.01;

struct KernelSpec {
  int kh, kw, sh, sw, ph, pw;
};

// Encoder layers 1..6; decoder stages 6..2 reuse layers 6..2.
inline constexpr std::array<KernelSpec, 6> kEncoderKernels{{
    {8, 8, 2, 2, 3, 3},
    {8, 9, 2, 1, 3, 4},
    {6, 5, 2, 2, 2, 2},
    {4, 3, 2, 2, 1, 1},
    {3, 3, 2, 2, 1, 1},
    {3, 3, 2, 2, 1, 1},
}};

struct StageDims {
  int h = 0, w = 0;
  bool operator==(const StageDims&) const = default;
};

// Output dims of encoder layers 1..6; throws ShapeError naming the first
// layer whose output collapses.
std::vector<StageDims> encoder_dims(int height, int width);

// Output padding that makes a transpose layer map `in` exactly onto `out`.
// Throws ShapeError naming the layer when no valid padding exists.
int output_padding(int in, int out, int k, int s, int p, const std::string& layer);

struct IaismConfig {
  std::vector<int> channels{16, 32, 64, 128, 128, 128};
  int res_blocks = 6;
  int reduction = 16;
  int epochs = 2000;
  int batch = 4;
  double lr = 4e-4;
  double lambda1 = 1.0;
  double lambda2 = 0.2;
  std::uint64_t seed = 37;

  void validate() const;
  // Reads the [iaism] section; missing keys keep their defaults.
  static IaismConfig from_config(const Config& config);
};

template <typename T>
class MaskResSEUNet : public nn::Layer<T> {
 public:
  MaskResSEUNet(const GridSpec& spec, const std::vector<int>& channels, int res_blocks = 6, int reduction = 16);

  void init(std::uint64_t seed);
  // Raw SDF in (N x 1 x H x W, SDF units); masked field out.
  nn::Tensor<T> forward(const nn::Tensor<T>& sdf) override;
  // Returns the gradient with respect to the raw input SDF.
  nn::Tensor<T> backward(const nn::Tensor<T>& dfield) override;

  void collect_params(std::vector<nn::Param<T>*>& out) override;
  void collect_buffers(std::vector<nn::Buffer<T>>& out) override;
  void collect_specs(std::vector<nn::LayerSpec>& out) const override;
  void set_training(bool t) override;
  void set_param_grad(bool g) override;

  const GridSpec& spec() const { return spec_; }
  const std::vector<int>& channels() const { return channels_; }
  int res_blocks() const { return static_cast<int>(res_.size()); }
  int reduction() const { return reduction_; }
  const std::vector<StageDims>& stage_dims() const { return dims_; }
  nn::Conv2d<T>& final_conv() { return final_; }

 private:
  GridSpec spec_;
  std::vector<int> channels_;
  int reduction_;
  std::vector<StageDims> dims_;
  std::vector<std::unique_ptr<nn::ConvBnRelu<T>>> enc_;
  std::vector<std::unique_ptr<nn::ResSEBlock<T>>> res_;
  std::vector<std::unique_ptr<nn::ConvTBnRelu<T>>> dec_;  // stages 6, 5, 4, 3, 2
  nn::Resize<T> up_;
  nn::Conv2d<T> final_;
  nn::Tensor<T> mask_;
};

using Iaism = MaskResSEUNet<float>;

struct FieldPair {
  ScalarGrid sdf;
  ScalarGrid field;
};

// Original, horizontal, vertical and double flips of every pair, in that
// order per pair.
std::vector<FieldPair> augment_flips(const std::vector<FieldPair>& pairs);

struct IaismTraining {
  std::unique_ptr<Iaism> net;
  std::vector<double> loss_history;  // epoch means
  std::size_t n_pairs = 0;           // after augmentation
};

IaismTraining train_iaism(const std::vector<FieldPair>& pairs, bool augment, const IaismConfig& cfg);

// Evaluation-mode inference on one grid.
ScalarGrid forward(Iaism& net, const ScalarGrid& sdf);
Maxima predict_maxima(Iaism& net, const ScalarGrid& sdf);

void save_iaism(Iaism& net, const std::filesystem::path& path, const std::map<std::string, std::string>& meta = {});
std::unique_ptr<Iaism> load_iaism(const std::filesystem::path& path);

}  // namespace blankopt
