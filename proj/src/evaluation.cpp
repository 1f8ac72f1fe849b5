#include "blankopt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace blankopt {

namespace {

void require_same(const ScalarGrid& gt, const ScalarGrid& pd) {
  if (!(gt.spec == pd.spec) || gt.values.size() != pd.values.size())
    throw EvalError("ground truth and prediction are on different grids");
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double max_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

}  // namespace

double mpae(const ScalarGrid& gt, const ScalarGrid& pd) {
  require_same(gt, pd);
  double m = 0.0;
  for (std::size_t i = 0; i < gt.values.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(gt.values[i]) - static_cast<double>(pd.values[i])));
  return m;
}

double aape(const ScalarGrid& gt, const ScalarGrid& pd) {
  require_same(gt, pd);
  double s = 0.0;
  for (std::size_t i = 0; i < gt.values.size(); ++i)
    s += std::abs(static_cast<double>(gt.values[i]) - static_cast<double>(pd.values[i]));
  return gt.values.empty() ? 0.0 : s / static_cast<double>(gt.values.size());
}

double relative_error(double gt, double pd) {
  if (!(std::abs(gt) >= 1e-9)) throw EvalError("undefined relative error: ground truth " + std::to_string(gt));
  return std::abs(gt - pd) / std::abs(gt);
}

ReconstructionScore evaluate_reconstruction(const std::string& model, const std::vector<ScalarGrid>& gt,
                                            const std::vector<ScalarGrid>& pd) {
  if (gt.size() != pd.size()) throw EvalError("ground truth and prediction counts differ");
  ReconstructionScore s;
  s.model = model;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    s.mpae.push_back(mpae(gt[i], pd[i]));
    s.aape.push_back(aape(gt[i], pd[i]));
  }
  s.mean_mpae = mean(s.mpae);
  s.max_mpae = max_of(s.mpae);
  s.mean_aape = mean(s.aape);
  s.max_aape = max_of(s.aape);
  return s;
}

std::vector<SurrogateScore> evaluate_surrogates(const std::vector<Maxima>& truth,
                                                const std::vector<SurrogatePredictions>& models) {
  std::vector<SurrogateScore> out;
  for (const auto& m : models) {
    if (m.predicted.size() != truth.size())
      throw EvalError(m.model + ": " + std::to_string(m.predicted.size()) + " predictions for " +
                      std::to_string(truth.size()) + " samples");
    SurrogateScore s;
    s.model = m.model;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      s.rmt.push_back(rmt(truth[i].thinning, m.predicted[i].thinning));
      s.rmtk.push_back(rmtk(truth[i].thickening, m.predicted[i].thickening));
    }
    s.armt = mean(s.rmt);
    s.armtk = mean(s.rmtk);
    out.push_back(std::move(s));
  }
  return out;
}

void write_report_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw EvalError("cannot write " + path.string());
  f << std::setprecision(10);
  f << "section,model,split,sample,metric,value\n";
  auto id = [&](std::size_t i) { return i < r.ids.size() ? r.ids[i] : std::to_string(i); };
  for (std::size_t i = 0; i < r.truth.size(); ++i) {
    f << "truth,oracle," << r.split << ',' << id(i) << ",max_thinning," << r.truth[i].thinning << '\n';
    f << "truth,oracle," << r.split << ',' << id(i) << ",max_thickening," << r.truth[i].thickening << '\n';
  }
  for (const auto& p : r.predictions)
    for (std::size_t i = 0; i < p.predicted.size(); ++i) {
      f << "prediction," << p.model << ',' << r.split << ',' << id(i) << ",max_thinning," << p.predicted[i].thinning
        << '\n';
      f << "prediction," << p.model << ',' << r.split << ',' << id(i) << ",max_thickening,"
        << p.predicted[i].thickening << '\n';
    }
  for (const auto& s : r.surrogates) {
    for (std::size_t i = 0; i < s.rmt.size(); ++i) {
      f << "surrogate," << s.model << ',' << r.split << ',' << id(i) << ",rmt," << s.rmt[i] << '\n';
      f << "surrogate," << s.model << ',' << r.split << ',' << id(i) << ",rmtk," << s.rmtk[i] << '\n';
    }
    f << "surrogate," << s.model << ',' << r.split << ",mean,armt," << s.armt << '\n';
    f << "surrogate," << s.model << ',' << r.split << ",mean,armtk," << s.armtk << '\n';
  }
  for (const auto& s : r.reconstructions) {
    for (std::size_t i = 0; i < s.mpae.size(); ++i) {
      f << "reconstruction," << s.model << ',' << r.split << ',' << id(i) << ",mpae," << s.mpae[i] << '\n';
      f << "reconstruction," << s.model << ',' << r.split << ',' << id(i) << ",aape," << s.aape[i] << '\n';
    }
    f << "reconstruction," << s.model << ',' << r.split << ",mean,mpae," << s.mean_mpae << '\n';
    f << "reconstruction," << s.model << ',' << r.split << ",max,mpae," << s.max_mpae << '\n';
    f << "reconstruction," << s.model << ',' << r.split << ",mean,aape," << s.mean_aape << '\n';
    f << "reconstruction," << s.model << ',' << r.split << ",max,aape," << s.max_aape << '\n';
  }
  if (!f) throw EvalError("write failed: " + path.string());
}

std::string format_report(const EvalReport& r) {
  std::ostringstream o;
  o << std::fixed;
  if (!r.surrogates.empty()) {
    std::size_t w = 5;
    for (const auto& s : r.surrogates) w = std::max(w, s.model.size());
    o << "Surrogate accuracy (" << r.split << ", " << r.truth.size() << " samples)\n";
    o << std::left << std::setw(static_cast<int>(w)) << "Model" << std::right << std::setw(11) << "ARMT (%)"
      << std::setw(12) << "ARMTK (%)" << '\n';
    for (const auto& s : r.surrogates)
      o << std::left << std::setw(static_cast<int>(w)) << s.model << std::right << std::setprecision(2)
        << std::setw(11) << 100.0 * s.armt << std::setw(12) << 100.0 * s.armtk << '\n';
  }
  if (!r.reconstructions.empty()) {
    std::size_t w = 5;
    for (const auto& s : r.reconstructions) w = std::max(w, s.model.size());
    if (!r.surrogates.empty()) o << '\n';
    o << "Reconstruction error (" << r.split << ", SDF units)\n";
    o << std::left << std::setw(static_cast<int>(w)) << "Model" << std::right << std::setw(11) << "mean MPAE"
      << std::setw(11) << "max MPAE" << std::setw(11) << "mean AAPE" << std::setw(11) << "max AAPE" << '\n';
    for (const auto& s : r.reconstructions)
      o << std::left << std::setw(static_cast<int>(w)) << s.model << std::right << std::setprecision(3)
        << std::setw(11) << s.mean_mpae << std::setw(11) << s.max_mpae << std::setw(11) << s.mean_aape
        << std::setw(11) << s.max_aape << '\n';
  }
  return o.str();
}

}  // namespace blankopt
