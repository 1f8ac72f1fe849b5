#include "blankopt/saism.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <string>

#include "blankopt/doe_sampler.hpp"

namespace blankopt {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

std::size_t check_samples(const Samples& x, const std::vector<double>& y, std::size_t min_n) {
  if (x.size() < min_n) throw SaismError("need at least " + std::to_string(min_n) + " samples");
  if (x.size() != y.size()) throw SaismError("input and target counts differ");
  const std::size_t d = x.front().size();
  if (d == 0) throw SaismError("empty input vectors");
  for (const auto& r : x)
    if (r.size() != d) throw SaismError("input vectors differ in length");
  for (double v : y)
    if (!std::isfinite(v)) throw SaismError("non-finite target");
  return d;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

void check_query(std::size_t want, const std::vector<double>& q) {
  if (q.size() != want)
    throw SaismError("query has " + std::to_string(q.size()) + " components, expected " + std::to_string(want));
}

}  // namespace

double multiquadric(double d, double l) { return std::sqrt(1.0 + (d / l) * (d / l)); }

double RbfModel::predict(const std::vector<double>& q) const {
  check_query(x.front().size(), q);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += weights[i] * multiquadric(distance(q, x[i]), scale);
  return s;
}

RbfModel rbf_fit(const Samples& x, const std::vector<double>& y) {
  check_samples(x, y, 1);
  const std::size_t n = x.size();
  Mat dist(n, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distance(x[i], x[j]);
      if (d == 0.0) throw SaismError("duplicate inputs " + std::to_string(i) + " and " + std::to_string(j));
      dist(i, j) = dist(j, i) = d;
      total += d;
    }
  }
  RbfModel m;
  m.x = x;
  // A single sample has no pairs; its kernel is flat at any scale.
  m.scale = n > 1 ? total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1)) : 1.0;
  Mat phi(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) phi(i, j) = multiquadric(dist(i, j), m.scale);
  const Vec yv = Eigen::Map<const Vec>(y.data(), static_cast<Eigen::Index>(n));
  const Vec w = phi.fullPivLu().solve(yv);
  const double resid = (phi * w - yv).lpNorm<Eigen::Infinity>();
  if (!std::isfinite(resid) || resid > 1e-8 * yv.lpNorm<Eigen::Infinity>())
    throw SaismError("RBF system is ill-conditioned (residual " + std::to_string(resid) + ")");
  m.weights.assign(w.data(), w.data() + n);
  return m;
}

void KrigingOptions::validate() const {
  if (!(nugget >= 0.0) || !(log10_theta_lo < log10_theta_hi) || starts < 1 || max_iterations < 0)
    throw ConfigError("invalid Kriging settings");
}

KrigingOptions KrigingOptions::from_config(const Config& config) {
  KrigingOptions o;
  o.nugget = config.get_double("saism.nugget", o.nugget);
  o.log10_theta_lo = config.get_double("saism.log10_theta_lo", o.log10_theta_lo);
  o.log10_theta_hi = config.get_double("saism.log10_theta_hi", o.log10_theta_hi);
  o.starts = static_cast<int>(config.get_int("saism.starts", o.starts));
  o.max_iterations = static_cast<int>(config.get_int("saism.max_iterations", o.max_iterations));
  o.seed = static_cast<std::uint64_t>(config.get_int("saism.seed", static_cast<long long>(o.seed)));
  o.validate();
  return o;
}

namespace {

Mat correlation(const Samples& xn, const std::vector<double>& theta) {
  const std::size_t n = xn.size();
  Mat c(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    c(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < theta.size(); ++k) s += theta[k] * (xn[i][k] - xn[j][k]) * (xn[i][k] - xn[j][k]);
      c(i, j) = c(j, i) = std::exp(-s);
    }
  }
  return c;
}

}  // namespace

KrigingLikelihood kriging_likelihood(const Samples& xn, const std::vector<double>& y, const std::vector<double>& theta,
                                     double nugget) {
  KrigingLikelihood out;
  const std::size_t n = xn.size(), d = theta.size();
  const Mat c = correlation(xn, theta);
  Mat r = c;
  r.diagonal().array() += nugget;
  const Eigen::LLT<Mat> llt(r);
  if (llt.info() != Eigen::Success) return out;
  const Vec yv = Eigen::Map<const Vec>(y.data(), static_cast<Eigen::Index>(n));
  const Vec ones = Vec::Ones(static_cast<Eigen::Index>(n));
  const Vec ri_y = llt.solve(yv), ri_1 = llt.solve(ones);
  const double denom = ones.dot(ri_1);
  if (!(denom > 0.0)) return out;
  out.beta0 = ones.dot(ri_y) / denom;
  const Vec resid = yv - out.beta0 * ones;
  const Vec alpha = llt.solve(resid);
  out.sigma2 = resid.dot(alpha) / static_cast<double>(n);
  if (!(out.sigma2 > 0.0)) return out;
  const Mat l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  out.value = -0.5 * static_cast<double>(n) * std::log(out.sigma2) - 0.5 * log_det;
  if (!std::isfinite(out.value)) return out;

  // dR/dtheta_k = -C o D_k, so d lnL / d theta_k = -1/2 sum_ij M_ij C_ij D_k,ij
  // with M = alpha alpha^T / sigma^2 - R^-1.
  const Mat m = alpha * alpha.transpose() / out.sigma2 - llt.solve(Mat::Identity(r.rows(), r.cols()));
  out.grad.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = -m(i, j) * c(i, j);  // both triangles, times 1/2
      for (std::size_t k = 0; k < d; ++k) out.grad[k] += w * (xn[i][k] - xn[j][k]) * (xn[i][k] - xn[j][k]);
    }
  for (std::size_t k = 0; k < d; ++k) out.grad[k] *= theta[k] * std::log(10.0);
  out.ok = true;
  return out;
}

double KrigingModel::predict(const std::vector<double>& q) const {
  check_query(x_mean.size(), q);
  double s = beta0;
  for (std::size_t i = 0; i < xn.size(); ++i) {
    double e = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      const double u = (q[k] - x_mean[k]) / x_std[k] - xn[i][k];
      e += theta[k] * u * u;
    }
    s += alpha[i] * std::exp(-e);
  }
  return s;
}

namespace {

// log10(theta_k) = lo + (hi - lo) * sigmoid(u_k) keeps the unconstrained
// minimiser inside the search box.
struct SearchProblem {
  const Samples* xn;
  const std::vector<double>* y;
  double nugget, lo, hi;
  int evaluations = 0;

  std::vector<double> theta_of(const gsl_vector* u) const {
    std::vector<double> t(u->size);
    for (std::size_t k = 0; k < u->size; ++k)
      t[k] = std::pow(10.0, lo + (hi - lo) / (1.0 + std::exp(-gsl_vector_get(u, k))));
    return t;
  }
};

constexpr double kFailedObjective = 1e30;

void objective_fdf(const gsl_vector* u, void* params, double* f, gsl_vector* g) {
  auto* p = static_cast<SearchProblem*>(params);
  ++p->evaluations;
  const KrigingLikelihood lk = kriging_likelihood(*p->xn, *p->y, p->theta_of(u), p->nugget);
  if (f) *f = lk.ok ? -lk.value : kFailedObjective;
  if (g)
    for (std::size_t k = 0; k < u->size; ++k) {
      const double s = 1.0 / (1.0 + std::exp(-gsl_vector_get(u, k)));
      gsl_vector_set(g, k, lk.ok ? -lk.grad[k] * (p->hi - p->lo) * s * (1.0 - s) : 0.0);
    }
}

double objective_f(const gsl_vector* u, void* params) {
  double f = 0.0;
  objective_fdf(u, params, &f, nullptr);
  return f;
}

void objective_df(const gsl_vector* u, void* params, gsl_vector* g) { objective_fdf(u, params, nullptr, g); }

}  // namespace

KrigingModel kriging_fit(const Samples& x, const std::vector<double>& y, const KrigingOptions& options) {
  options.validate();
  const std::size_t d = check_samples(x, y, 2);
  const std::size_t n = x.size();
  KrigingModel m;
  m.x_mean.assign(d, 0.0);
  m.x_std.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    for (const auto& r : x) m.x_mean[k] += r[k];
    m.x_mean[k] /= static_cast<double>(n);
    for (const auto& r : x) m.x_std[k] += (r[k] - m.x_mean[k]) * (r[k] - m.x_mean[k]);
    m.x_std[k] = std::sqrt(m.x_std[k] / static_cast<double>(n - 1));
    if (!(m.x_std[k] > 0.0)) throw SaismError("input component " + std::to_string(k) + " is constant");
  }
  m.xn.assign(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) m.xn[i][k] = (x[i][k] - m.x_mean[k]) / m.x_std[k];

  SearchProblem prob{&m.xn, &y, options.nugget, options.log10_theta_lo, options.log10_theta_hi};
  gsl_multimin_function_fdf fn{&objective_f, &objective_df, &objective_fdf, d, &prob};
  gsl_set_error_handler_off();
  gsl_multimin_fdfminimizer* solver = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, d);
  gsl_vector* u = gsl_vector_alloc(d);
  std::vector<double> best_theta;
  double best = -std::numeric_limits<double>::infinity();
  const auto starts = lhs(static_cast<std::size_t>(options.starts), d, options.seed);
  for (const auto& s : starts) {
    for (std::size_t k = 0; k < d; ++k) {
      const double t = std::clamp(s[k], 1e-6, 1.0 - 1e-6);
      gsl_vector_set(u, k, std::log(t / (1.0 - t)));
    }
    if (objective_f(u, &prob) >= kFailedObjective) continue;
    gsl_multimin_fdfminimizer_set(solver, &fn, u, 0.5, 0.1);
    for (int it = 0; it < options.max_iterations; ++it) {
      if (gsl_multimin_fdfminimizer_iterate(solver) != GSL_SUCCESS) break;
      if (gsl_multimin_test_gradient(solver->gradient, 1e-6) == GSL_SUCCESS) break;
    }
    const double value = -solver->f;
    if (value > best) {
      best = value;
      best_theta = prob.theta_of(solver->x);
    }
  }
  gsl_vector_free(u);
  gsl_multimin_fdfminimizer_free(solver);
  if (best_theta.empty()) throw SaismError("correlation matrix is not positive definite at any start");

  const KrigingLikelihood lk = kriging_likelihood(m.xn, y, best_theta, options.nugget);
  if (!lk.ok) throw SaismError("correlation matrix is not positive definite");
  Mat r = correlation(m.xn, best_theta);
  r.diagonal().array() += options.nugget;
  const Vec yv = Eigen::Map<const Vec>(y.data(), static_cast<Eigen::Index>(n));
  const Vec alpha = r.llt().solve(yv - lk.beta0 * Vec::Ones(static_cast<Eigen::Index>(n)));
  m.theta = best_theta;
  m.alpha.assign(alpha.data(), alpha.data() + n);
  m.beta0 = lk.beta0;
  m.sigma2 = lk.sigma2;
  m.log_likelihood = lk.value;
  return m;
}

namespace {

constexpr char kMagic[4] = {'S', 'S', 'M', 'F'};
constexpr std::uint16_t kVersion = 1;
enum : std::uint8_t { kRbf = 0, kKriging = 1 };

using Arrays = std::map<std::string, std::vector<double>>;

std::vector<double> flatten(const Samples& s) {
  std::vector<double> out;
  for (const auto& r : s) out.insert(out.end(), r.begin(), r.end());
  return out;
}

Samples unflatten(const std::vector<double>& v, std::size_t rows) {
  if (rows == 0 || v.size() % rows != 0) throw SaismError("bad sample array size");
  const std::size_t cols = v.size() / rows;
  Samples out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i].assign(v.begin() + i * cols, v.begin() + (i + 1) * cols);
  return out;
}

void write_arrays(const std::filesystem::path& path, std::uint8_t kind, const Arrays& arrays) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SaismError("cannot write " + path.string());
  f.write(kMagic, 4);
  f.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  f.write(reinterpret_cast<const char*>(&kind), 1);
  const auto count = static_cast<std::uint32_t>(arrays.size());
  f.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& [name, v] : arrays) {
    const auto len = static_cast<std::uint32_t>(name.size());
    const auto size = static_cast<std::uint64_t>(v.size());
    f.write(reinterpret_cast<const char*>(&len), sizeof len);
    f.write(name.data(), len);
    f.write(reinterpret_cast<const char*>(&size), sizeof size);
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(size * sizeof(double)));
  }
  if (!f) throw SaismError("write failed: " + path.string());
}

Arrays read_arrays(const std::filesystem::path& path, std::uint8_t kind) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SaismError("cannot open " + path.string());
  char magic[4];
  std::uint16_t version = 0;
  std::uint8_t got = 0;
  std::uint32_t count = 0;
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) throw SaismError("bad magic");
  f.read(reinterpret_cast<char*>(&version), sizeof version);
  f.read(reinterpret_cast<char*>(&got), 1);
  f.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!f) throw SaismError("short read");
  if (version != kVersion) throw SaismError("unsupported version " + std::to_string(version));
  if (got != kind) throw SaismError("wrong surrogate kind in " + path.string());
  Arrays out;
  for (std::uint32_t a = 0; a < count; ++a) {
    std::uint32_t len = 0;
    std::uint64_t size = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!f || len > 256) throw SaismError("bad array name");
    std::string name(len, '\0');
    f.read(name.data(), len);
    f.read(reinterpret_cast<char*>(&size), sizeof size);
    if (!f || size > (1ULL << 32)) throw SaismError("bad array size");
    std::vector<double> v(size);
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(size * sizeof(double)));
    if (!f) throw SaismError("short read");
    out[name] = std::move(v);
  }
  return out;
}

const std::vector<double>& need(const Arrays& a, const std::string& name) {
  const auto it = a.find(name);
  if (it == a.end()) throw SaismError("model file lacks '" + name + "'");
  return it->second;
}

double scalar(const Arrays& a, const std::string& name) {
  const auto& v = need(a, name);
  if (v.size() != 1) throw SaismError("'" + name + "' is not a scalar");
  return v.front();
}

}  // namespace

void save_rbf(const RbfModel& m, const std::filesystem::path& path) {
  write_arrays(path, kRbf, {{"x", flatten(m.x)}, {"weights", m.weights}, {"scale", {m.scale}}});
}

RbfModel load_rbf(const std::filesystem::path& path) {
  const Arrays a = read_arrays(path, kRbf);
  RbfModel m;
  m.weights = need(a, "weights");
  m.x = unflatten(need(a, "x"), m.weights.size());
  m.scale = scalar(a, "scale");
  return m;
}

void save_kriging(const KrigingModel& m, const std::filesystem::path& path) {
  write_arrays(path, kKriging,
               {{"x_mean", m.x_mean},
                {"x_std", m.x_std},
                {"xn", flatten(m.xn)},
                {"theta", m.theta},
                {"alpha", m.alpha},
                {"beta0", {m.beta0}},
                {"sigma2", {m.sigma2}},
                {"log_likelihood", {m.log_likelihood}}});
}

KrigingModel load_kriging(const std::filesystem::path& path) {
  const Arrays a = read_arrays(path, kKriging);
  KrigingModel m;
  m.x_mean = need(a, "x_mean");
  m.x_std = need(a, "x_std");
  m.theta = need(a, "theta");
  m.alpha = need(a, "alpha");
  m.xn = unflatten(need(a, "xn"), m.alpha.size());
  m.beta0 = scalar(a, "beta0");
  m.sigma2 = scalar(a, "sigma2");
  m.log_likelihood = scalar(a, "log_likelihood");
  if (m.x_std.size() != m.x_mean.size() || m.theta.size() != m.x_mean.size() ||
      (!m.xn.empty() && m.xn.front().size() != m.x_mean.size()))
    throw SaismError("inconsistent Kriging model file");
  return m;
}

}  // namespace blankopt
