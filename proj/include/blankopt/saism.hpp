#pragma once

// Scalar surrogates from latent vectors to one forming indicator:
// multiquadric RBF interpolation and constant-mean Kriging.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "blankopt/config.hpp"

namespace blankopt {

class SaismError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Samples = std::vector<std::vector<double>>;

// sqrt(1 + (d / l)^2)
double multiquadric(double d, double l);

struct RbfModel {
  Samples x;
  std::vector<double> weights;
  double scale = 1.0;  // mean pairwise training distance

  double predict(const std::vector<double>& q) const;
};

// Solves Phi w = y by pivoted LU. Throws SaismError on duplicate inputs or
// when the residual exceeds 1e-8 * max|y|.
RbfModel rbf_fit(const Samples& x, const std::vector<double>& y);
inline double rbf_predict(const RbfModel& m, const std::vector<double>& q) { return m.predict(q); }

struct KrigingOptions {
  double nugget = 1e-10;
  double log10_theta_lo = -6.0;
  double log10_theta_hi = 3.0;
  int starts = 8;
  int max_iterations = 200;
  std::uint64_t seed = 37;

  void validate() const;
  // Reads the [saism] section; missing keys keep their defaults.
  static KrigingOptions from_config(const Config& config);
};

struct KrigingModel {
  std::vector<double> x_mean, x_std;
  Samples xn;                 // normalised training inputs
  std::vector<double> theta;  // one per input dimension
  std::vector<double> alpha;  // (R + nugget I)^-1 (y - beta0)
  double beta0 = 0.0;
  double sigma2 = 0.0;
  double log_likelihood = 0.0;

  double predict(const std::vector<double>& q) const;
};

struct KrigingLikelihood {
  double value = 0.0;  // concentrated log-likelihood
  double beta0 = 0.0;
  double sigma2 = 0.0;
  std::vector<double> grad;  // with respect to log10(theta)
  bool ok = false;           // false when R + nugget I is not positive definite
};

// Concentrated log-likelihood with beta0 and sigma^2 profiled out, on
// already normalised inputs.
KrigingLikelihood kriging_likelihood(const Samples& xn, const std::vector<double>& y, const std::vector<double>& theta,
                                     double nugget);

// Normalises inputs per component, then maximises the concentrated
// likelihood from a Latin hypercube of starts in log10(theta).
KrigingModel kriging_fit(const Samples& x, const std::vector<double>& y, const KrigingOptions& options = {});
inline double kriging_predict(const KrigingModel& m, const std::vector<double>& q) { return m.predict(q); }

// SSMF files: magic, u16 version, u8 kind, then named f64 arrays.
void save_rbf(const RbfModel& m, const std::filesystem::path& path);
RbfModel load_rbf(const std::filesystem::path& path);
void save_kriging(const KrigingModel& m, const std::filesystem::path& path);
KrigingModel load_kriging(const std::filesystem::path& path);

}  // namespace blankopt
