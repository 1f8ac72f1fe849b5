#include "blankopt/latent_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "blankopt/nn/adam.hpp"
#include "blankopt/random.hpp"

namespace blankopt {

void OptimizerConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(lambda3 >= 0.0))
    throw ConfigError("optimizer weights must be non-negative");
  if (!(threshold > 0.0 && threshold < kThinningLimit))
    throw ConfigError("optimizer.threshold must lie in (0, " + std::to_string(kThinningLimit) + ")");
  if (!(lr > 0.0) || epochs < 0 || !(tau > 0.0) || !(start_jitter >= 0.0))
    throw ConfigError("invalid optimizer settings");
  if (line_box.r0 > line_box.r1 || line_box.c0 > line_box.c1) throw ConfigError("optimizer.line_box is empty");
}

OptimizerConfig OptimizerConfig::from_config(const Config& config) {
  OptimizerConfig c;
  c.lambda1 = config.get_double("optimizer.lambda1", c.lambda1);
  c.lambda2 = config.get_double("optimizer.lambda2", c.lambda2);
  c.lambda3 = config.get_double("optimizer.lambda3", c.lambda3);
  c.threshold = config.get_double("optimizer.threshold", c.threshold);
  c.lr = config.get_double("optimizer.lr", c.lr);
  c.epochs = static_cast<int>(config.get_int("optimizer.epochs", c.epochs));
  if (config.has("optimizer.line_box")) {
    const auto b = config.get_ints("optimizer.line_box");
    if (b.size() != 4) throw ConfigError("optimizer.line_box needs r0 r1 c0 c1");
    c.line_box = {b[0], b[1], b[2], b[3]};
  }
  if (config.has("optimizer.ref_grad")) {
    const auto g = config.get_doubles("optimizer.ref_grad");
    if (g.size() != 2) throw ConfigError("optimizer.ref_grad needs two values");
    c.ref_grad = {g[0], g[1]};
  }
  const std::string mode = config.get_string("optimizer.max_mode", "hard");
  if (mode == "hard")
    c.max_mode = MaxMode::Hard;
  else if (mode == "smooth")
    c.max_mode = MaxMode::Smooth;
  else
    throw ConfigError("optimizer.max_mode must be hard or smooth, got '" + mode + "'");
  c.tau = config.get_double("optimizer.tau", c.tau);
  c.start_jitter = config.get_double("optimizer.start_jitter", c.start_jitter);
  if (config.has("optimizer.seeds")) {
    c.seeds.clear();
    for (int s : config.get_ints("optimizer.seeds")) c.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  c.validate();
  return c;
}

namespace {

void check_box(const GridSpec& spec, const PixelBox& b) {
  if (b.r0 > b.r1 || b.c0 > b.c1) throw GridError("line box is empty");
  if (b.r0 < 1 || b.c0 < 1 || b.r1 > spec.height - 2 || b.c1 > spec.width - 2)
    throw GridError("line box rows " + std::to_string(b.r0) + ".." + std::to_string(b.r1) + ", cols " +
                    std::to_string(b.c0) + ".." + std::to_string(b.c1) + " is outside the grid interior");
}

double line_core(const double* f, const GridSpec& spec, const PixelBox& b, Vec2 ref, double* grad) {
  check_box(spec, b);
  const int w = spec.width;
  const double inv = 1.0 / (2.0 * spec.spacing), m = b.count();
  double sum = 0.0;
  for (int r = b.r0; r <= b.r1; ++r)
    for (int c = b.c0; c <= b.c1; ++c) {
      const std::size_t k = static_cast<std::size_t>(r) * w + c;
      const double ex = (f[k + 1] - f[k - 1]) * inv - ref.x;
      const double ey = (f[k + w] - f[k - w]) * inv - ref.y;
      sum += ex * ex + ey * ey;
      if (grad) {
        const double gx = 2.0 * ex * inv / m, gy = 2.0 * ey * inv / m;
        grad[k + 1] += gx;
        grad[k - 1] -= gx;
        grad[k + w] += gy;
        grad[k - w] -= gy;
      }
    }
  return sum / m;
}

// Largest value (clamped below at 0 in hard mode, as the oracle does) and
// its gradient weights, of sign * field.
double extract_max(const std::vector<double>& field, double sign, const OptimizerConfig& cfg, std::vector<double>* w) {
  if (cfg.max_mode == MaxMode::Hard) {
    double best = 0.0;
    std::size_t at = field.size();
    for (std::size_t i = 0; i < field.size(); ++i)
      if (sign * field[i] > best) {
        best = sign * field[i];
        at = i;
      }
    if (w && at < field.size()) (*w)[at] = sign;
    return best;
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double v : field) top = std::max(top, sign * v / cfg.tau);
  double z = 0.0;
  for (double v : field) z += std::exp(sign * v / cfg.tau - top);
  if (w)
    for (std::size_t i = 0; i < field.size(); ++i) (*w)[i] = sign * std::exp(sign * field[i] / cfg.tau - top) / z;
  return cfg.tau * (top + std::log(z));
}

DesignLoss design_core(const std::vector<double>& field, const std::vector<double>& sdf, const GridSpec& spec,
                       const OptimizerConfig& cfg, bool want_grad) {
  DesignLoss out;
  const std::size_t n = field.size();
  std::vector<double> w_thin, w_thick;
  if (want_grad) {
    w_thin.assign(n, 0.0);
    w_thick.assign(n, 0.0);
    out.dsdf.assign(n, 0.0);
  }
  out.thinning = extract_max(field, 1.0, cfg, want_grad ? &w_thin : nullptr);
  out.thickening = extract_max(field, -1.0, cfg, want_grad ? &w_thick : nullptr);
  out.line = line_core(sdf.data(), spec, cfg.line_box, cfg.ref_grad, want_grad ? out.dsdf.data() : nullptr);
  const double hinge = std::abs(out.thinning) - cfg.threshold;
  out.value = cfg.lambda1 * std::abs(out.thickening) + cfg.lambda2 * std::max(0.0, hinge) + cfg.lambda3 * out.line;
  if (want_grad) {
    const double a = cfg.lambda1 * (out.thickening < 0 ? -1.0 : 1.0);
    const double b = hinge > 0 ? cfg.lambda2 * (out.thinning < 0 ? -1.0 : 1.0) : 0.0;
    out.dfield.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) out.dfield[i] = a * w_thick[i] + b * w_thin[i];
    for (auto& g : out.dsdf) g *= cfg.lambda3;
  }
  return out;
}

}  // namespace

double line_regulariser(const ScalarGrid& sdf, const PixelBox& box, Vec2 ref_grad, std::vector<double>* grad) {
  const std::vector<double> f(sdf.values.begin(), sdf.values.end());
  if (grad) grad->resize(f.size(), 0.0);
  return line_core(f.data(), sdf.spec, box, ref_grad, grad ? grad->data() : nullptr);
}

DesignLoss design_loss(const ScalarGrid& field, const ScalarGrid& sdf, const OptimizerConfig& cfg, bool want_grad) {
  if (!(field.spec == sdf.spec)) throw GridError("field and SDF are on different grids");
  return design_core({field.values.begin(), field.values.end()}, {sdf.values.begin(), sdf.values.end()}, sdf.spec,
                     cfg, want_grad);
}

std::size_t select_start_index(const std::vector<Maxima>& maxima) {
  if (maxima.empty()) throw std::invalid_argument("no samples to start from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < maxima.size(); ++i)
    if (maxima[i].thickening < maxima[best].thickening) best = i;
  return best;
}

LatentVector select_start_latent(const std::vector<LatentVector>& latents, const std::vector<Maxima>& maxima) {
  if (latents.size() != maxima.size()) throw std::invalid_argument("latent and maxima counts differ");
  return latents[select_start_index(maxima)];
}

template <typename T>
double latent_loss(SdfDecoder<T>& decoder, MaskResSEUNet<T>& net, const std::vector<T>& z, const OptimizerConfig& cfg,
                   std::vector<T>* dz, DesignLoss* detail) {
  if (!(decoder.spec() == net.spec())) throw nn::ShapeError("decoder and surrogate grids differ");
  if (z.size() != static_cast<std::size_t>(kLatentDim)) throw nn::ShapeError("latent length mismatch");
  const GridSpec& spec = decoder.spec();
  decoder.set_training(false);
  net.set_training(false);
  decoder.set_param_grad(false);
  net.set_param_grad(false);

  nn::Tensor<T> zt(1, kLatentDim, 1, 1);
  std::copy(z.begin(), z.end(), zt.data.begin());
  nn::Tensor<T> sdf = decoder.forward(zt);
  for (auto& v : sdf.data) v = static_cast<T>(v / kSdfScale);
  const nn::Tensor<T> field = net.forward(sdf);
  const bool want = dz != nullptr;
  DesignLoss loss = design_core({field.data.begin(), field.data.end()}, {sdf.data.begin(), sdf.data.end()}, spec,
                                cfg, want);
  if (want) {
    nn::Tensor<T> df(1, 1, spec.height, spec.width);
    for (std::size_t i = 0; i < df.size(); ++i) df.data[i] = static_cast<T>(loss.dfield[i]);
    nn::Tensor<T> ds = net.backward(df);
    for (std::size_t i = 0; i < ds.size(); ++i)
      ds.data[i] = static_cast<T>((ds.data[i] + loss.dsdf[i]) / kSdfScale);
    const nn::Tensor<T> g = decoder.backward(ds);
    dz->assign(g.data.begin(), g.data.end());
  }
  decoder.set_param_grad(true);
  net.set_param_grad(true);
  const double value = loss.value;
  if (detail) *detail = std::move(loss);
  return value;
}

template double latent_loss(SdfDecoder<float>&, MaskResSEUNet<float>&, const std::vector<float>&,
                            const OptimizerConfig&, std::vector<float>*, DesignLoss*);
template double latent_loss(SdfDecoder<double>&, MaskResSEUNet<double>&, const std::vector<double>&,
                            const OptimizerConfig&, std::vector<double>*, DesignLoss*);

ValidationResult validate(Decoder& decoder, const LatentVector& z, const OracleConfig& oracle) {
  ValidationResult v;
  const ScalarGrid decoded = decode(decoder, z);
  try {
    v.contour = extract_contour(decoded);
  } catch (const GridError& e) {
    v.reason = e.what();
    return v;
  }
  v.oracle = simulate(rasterize_sdf(v.contour, decoded.spec), oracle);
  v.pass = meets_criteria(v.oracle.maxima);
  if (!v.pass) {
    std::ostringstream r;
    r << "max thinning " << v.oracle.maxima.thinning << " (limit " << kThinningLimit << "), max thickening "
      << v.oracle.maxima.thickening << " (limit " << kThickeningLimit << ")";
    v.reason = r.str();
  }
  return v;
}

OptimizationTrace optimise(const LatentVector& start, Decoder& decoder, Iaism& net, const OptimizerConfig& cfg,
                           std::uint64_t seed) {
  cfg.validate();
  if (start.size() != static_cast<std::size_t>(kLatentDim)) throw nn::ShapeError("latent length mismatch");
  OptimizationTrace trace;
  trace.start = start;
  Rng rng(mix_seed(seed, 0x0b7));
  for (auto& v : trace.start) v = static_cast<float>(v + cfg.start_jitter * rng.normal());

  nn::Param<float> z("latent", kLatentDim);
  z.value = trace.start;
  nn::Adam<float> opt({&z}, cfg.lr);
  std::vector<float> dz;
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    DesignLoss d;
    const bool step = epoch < cfg.epochs;
    const double value = latent_loss(decoder, net, z.value, cfg, step ? &dz : nullptr, &d);
    if (!std::isfinite(value)) {
      trace.aborted = true;
      break;
    }
    trace.loss.push_back(value);
    trace.max_thinning.push_back(d.thinning);
    trace.max_thickening.push_back(d.thickening);
    if (!step) break;
    z.grad = dz;
    opt.step();
  }
  trace.final_latent = z.value;
  return trace;
}

void write_trace_csv(const OptimizationTrace& t, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << std::setprecision(10) << "epoch,loss,max_thinning,max_thickening\n";
  for (std::size_t i = 0; i < t.loss.size(); ++i)
    f << i << ',' << t.loss[i] << ',' << t.max_thinning[i] << ',' << t.max_thickening[i] << '\n';
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace blankopt
