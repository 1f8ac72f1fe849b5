#pragma once

// Auto-decoder generator: a decoder trained jointly with one latent code per
// shape, reconstructing blank SDFs from latent vectors.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "blankopt/config.hpp"
#include "blankopt/field_grid.hpp"
#include "blankopt/iaism.hpp"
#include "blankopt/nn/layers.hpp"
#include "blankopt/nn/res_se.hpp"

namespace blankopt {

inline constexpr int kLatentDim = 25;

using LatentVector = std::vector<float>;

// Transpose layers 1..4, from the seed resolution up to the grid.
inline constexpr std::array<KernelSpec, 4> kDecoderKernels{{
    {4, 3, 2, 2, 1, 1},
    {6, 5, 2, 2, 2, 2},
    {8, 9, 2, 1, 3, 4},
    {8, 8, 2, 2, 3, 3},
}};

struct DecoderLayout {
  StageDims seed;
  std::vector<StageDims> outputs;        // after each transpose layer
  std::vector<StageDims> output_padding;  // (h, w) per transpose layer
};

// Inverts the transpose-layer arithmetic so the last layer lands exactly on
// the grid. Throws ShapeError when the grid is too small.
DecoderLayout decoder_layout(int height, int width);

struct AutoDecoderConfig {
  std::vector<int> channels{128, 64, 32, 16};  // seed, after layer 1, 2, 3
  int res_blocks = 6;
  int reduction = 16;
  int epochs = 2000;
  int batch = 16;
  double lr = 4e-4;
  double lambda1 = 0.01;
  double lambda2 = 0.2;
  std::uint64_t seed = 37;
  double init_std = 0.01;
  int infer_steps = 1000;
  double infer_lr = 0.4;

  void validate() const;
  // Reads the [autodecoder] section; missing keys keep their defaults.
  static AutoDecoderConfig from_config(const Config& config);
};

template <typename T>
class SdfDecoder : public nn::Layer<T> {
 public:
  SdfDecoder(const GridSpec& spec, const std::vector<int>& channels, int res_blocks = 6, int reduction = 16);

  void init(std::uint64_t seed);
  // Latents N x 25 x 1 x 1 in, scaled SDF N x 1 x H x W out.
  nn::Tensor<T> forward(const nn::Tensor<T>& z) override;
  nn::Tensor<T> backward(const nn::Tensor<T>& dy) override;

  void collect_params(std::vector<nn::Param<T>*>& out) override;
  void collect_buffers(std::vector<nn::Buffer<T>>& out) override;
  void collect_specs(std::vector<nn::LayerSpec>& out) const override;
  void set_training(bool t) override;
  void set_param_grad(bool g) override;

  const GridSpec& spec() const { return spec_; }
  const std::vector<int>& channels() const { return channels_; }
  const DecoderLayout& layout() const { return layout_; }
  int res_blocks() const { return static_cast<int>(res_.size()); }
  int reduction() const { return reduction_; }

 private:
  GridSpec spec_;
  std::vector<int> channels_;
  int reduction_;
  DecoderLayout layout_;
  nn::Linear<T> fc_;
  nn::ConvBnRelu<T> stem_;
  std::vector<std::unique_ptr<nn::ResSEBlock<T>>> res_;
  std::vector<std::unique_ptr<nn::ConvTBnRelu<T>>> up_;
  std::unique_ptr<nn::ConvTranspose2d<T>> out_;
};

using Decoder = SdfDecoder<float>;

struct AutoDecoderTraining {
  std::unique_ptr<Decoder> decoder;
  std::vector<LatentVector> latents;  // one per training shape
  std::vector<double> loss_history;   // epoch means
};

AutoDecoderTraining train_autodecoder(const std::vector<ScalarGrid>& shapes, const AutoDecoderConfig& cfg);

// Evaluation-mode decode to SDF units.
ScalarGrid decode(Decoder& decoder, const LatentVector& z);

struct LatentInference {
  std::vector<LatentVector> latents;
  std::vector<double> loss_history;  // per step, mean over shapes
};

// Fits one latent per SDF against the frozen decoder. Each shape starts from
// its own seeded Normal(0, init_std^2) draw and is optimised independently.
LatentInference infer_latents(Decoder& decoder, const std::vector<ScalarGrid>& sdfs, int steps, double lr,
                              std::uint64_t seed, const AutoDecoderConfig& cfg = {});
LatentVector infer_latent(Decoder& decoder, const ScalarGrid& sdf, int steps = 1000, double lr = 0.4,
                          std::uint64_t seed = 0);

// z1 + i/(k+1) (z2 - z1) for i = 1..k.
std::vector<LatentVector> interpolate_latents(const LatentVector& z1, const LatentVector& z2, int k = 8);

void save_decoder(Decoder& decoder, const std::filesystem::path& path,
                  const std::map<std::string, std::string>& meta = {});
std::unique_ptr<Decoder> load_decoder(const std::filesystem::path& path);

// LTNT latent tables: magic, u16 version, u32 rows, u32 dim, f32 row-major.
void write_latents(const std::vector<LatentVector>& table, const std::filesystem::path& path);
std::vector<LatentVector> read_latents(const std::filesystem::path& path);

}  // namespace blankopt
