#pragma once

// Reconstruction and surrogate accuracy metrics, and the comparison report.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "blankopt/field_grid.hpp"
#include "blankopt/forming_oracle.hpp"

namespace blankopt {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Maximum and mean absolute pixel-wise error, in SDF units.
double mpae(const ScalarGrid& gt, const ScalarGrid& pd);
double aape(const ScalarGrid& gt, const ScalarGrid& pd);

// |gt - pd| / |gt|; throws "undefined relative error" when |gt| < 1e-9.
double relative_error(double gt, double pd);
inline double rmt(double gt_thinning, double pd_thinning) { return relative_error(gt_thinning, pd_thinning); }
inline double rmtk(double gt_thickening, double pd_thickening) { return relative_error(gt_thickening, pd_thickening); }

struct ReconstructionScore {
  std::string model;
  std::vector<double> mpae, aape;  // per sample
  double mean_mpae = 0.0, max_mpae = 0.0, mean_aape = 0.0, max_aape = 0.0;
};

ReconstructionScore evaluate_reconstruction(const std::string& model, const std::vector<ScalarGrid>& gt,
                                            const std::vector<ScalarGrid>& pd);

struct SurrogatePredictions {
  std::string model;
  std::vector<Maxima> predicted;  // aligned with the ground truth
};

struct SurrogateScore {
  std::string model;
  std::vector<double> rmt, rmtk;  // per sample
  double armt = 0.0, armtk = 0.0;
};

std::vector<SurrogateScore> evaluate_surrogates(const std::vector<Maxima>& truth,
                                                const std::vector<SurrogatePredictions>& models);

struct EvalReport {
  std::string split;
  std::vector<std::string> ids;
  std::vector<Maxima> truth;
  std::vector<SurrogatePredictions> predictions;
  std::vector<SurrogateScore> surrogates;
  std::vector<ReconstructionScore> reconstructions;
};

// Long format: section,model,split,sample,metric,value. Aggregates use the
// sample names "mean" and "max".
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
std::string format_report(const EvalReport& report);

}  // namespace blankopt
