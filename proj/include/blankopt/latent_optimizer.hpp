#pragma once

// Gradient-based blank design: a latent vector is decoded to an SDF, the
// surrogate predicts its thinning field, and the design loss is driven down
// by Adam on the latent alone.

#include <optional>
#include <string>
#include <vector>

#include "blankopt/auto_decoder.hpp"
#include "blankopt/config.hpp"
#include "blankopt/forming_oracle.hpp"
#include "blankopt/iaism.hpp"

namespace blankopt {

// Inclusive pixel rectangle.
struct PixelBox {
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;
  int count() const { return (r1 - r0 + 1) * (c1 - c0 + 1); }
};

enum class MaxMode { Hard, Smooth };

struct OptimizerConfig {
  double lambda1 = 0.1;   // thickening objective
  double lambda2 = 0.35;  // thinning penalty
  double lambda3 = 1.5;   // line regulariser
  double threshold = 0.13;
  double lr = 2.0;
  int epochs = 2000;
  PixelBox line_box{120, 134, 108, 172};
  Vec2 ref_grad{0.0603, 0.9982};
  MaxMode max_mode = MaxMode::Hard;
  double tau = 0.01;          // smooth-max temperature
  double start_jitter = 0.0;  // std of the seeded start perturbation
  std::vector<std::uint64_t> seeds{1, 2, 3};

  void validate() const;
  // Reads the [optimizer] section; missing keys keep their defaults.
  static OptimizerConfig from_config(const Config& config);
};

// Mean over the box of (Gx - gx)^2 + (Gy - gy)^2, with G the central
// difference of the SDF divided by the grid spacing. Accumulates
// d/d(sdf) into grad when given. Throws when the box or its neighbours
// fall outside the grid.
double line_regulariser(const ScalarGrid& sdf, const PixelBox& box, Vec2 ref_grad,
                        std::vector<double>* grad = nullptr);

struct DesignLoss {
  double value = 0.0;
  double thinning = 0.0;    // extracted per the max mode
  double thickening = 0.0;
  double line = 0.0;
  std::vector<double> dfield;  // d value / d field, when requested
  std::vector<double> dsdf;    // d value / d sdf (mm), when requested
};

// lambda1 |thickening| + lambda2 max(0, |thinning| - threshold) + lambda3 line.
DesignLoss design_loss(const ScalarGrid& field, const ScalarGrid& sdf, const OptimizerConfig& cfg,
                       bool want_grad = false);

// Index of the smallest max thickening; ties go to the lowest index.
std::size_t select_start_index(const std::vector<Maxima>& maxima);
LatentVector select_start_latent(const std::vector<LatentVector>& latents, const std::vector<Maxima>& maxima);

// Design loss of a latent and its gradient, through any-precision networks
// in evaluation mode. Neither network's weights or gradients change.
template <typename T>
double latent_loss(SdfDecoder<T>& decoder, MaskResSEUNet<T>& net, const std::vector<T>& z, const OptimizerConfig& cfg,
                   std::vector<T>* dz = nullptr, DesignLoss* detail = nullptr);

struct ValidationResult {
  bool pass = false;
  std::string reason;  // empty on success
  ThinningResult oracle;
  Contour contour;
};

// decode, extract the blank outline, re-rasterise and run the oracle.
ValidationResult validate(Decoder& decoder, const LatentVector& z, const OracleConfig& oracle);

struct OptimizationTrace {
  std::vector<double> loss;          // epochs + 1 entries, including the start
  std::vector<double> max_thinning;  // surrogate-predicted
  std::vector<double> max_thickening;
  LatentVector start, final_latent;
  bool aborted = false;  // non-finite loss
  std::optional<ValidationResult> validation;
};

OptimizationTrace optimise(const LatentVector& start, Decoder& decoder, Iaism& net, const OptimizerConfig& cfg,
                           std::uint64_t seed);

void write_trace_csv(const OptimizationTrace& trace, const std::filesystem::path& path);

}  // namespace blankopt
