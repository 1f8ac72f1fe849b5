#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "blankopt/random.hpp"
#include "blankopt/saism.hpp"

using namespace blankopt;

namespace {

Samples random_samples(std::size_t n, std::size_t d, Rng& rng) {
  Samples x(n, std::vector<double>(d));
  for (auto& r : x)
    for (auto& v : r) v = rng.normal();
  return x;
}

double max_interp_error(const Samples& x, const std::vector<double>& y, auto&& predict) {
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) e = std::max(e, std::abs(predict(x[i]) - y[i]));
  return e;
}

}  // namespace

TEST_CASE("multiquadric kernel") {
  CHECK(multiquadric(0.0, 3.0) == 1.0);
  CHECK(multiquadric(3.0, 3.0) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("rbf worked examples") {
  const RbfModel one = rbf_fit({{1.0, 2.0}}, {2.0});
  CHECK(one.weights[0] == doctest::Approx(2.0));
  CHECK(one.predict({1.0, 2.0}) == doctest::Approx(2.0));

  const RbfModel two = rbf_fit({{0.0}, {2.0}}, {0.0, 1.0});
  CHECK(two.scale == doctest::Approx(2.0));
  CHECK(two.predict({0.0}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(two.predict({2.0}) == doctest::Approx(1.0));
  // Hand-solved 2x2 system. The midpoint value is phi(l/2) (y0 + y1) / (phi(0) + phi(l)),
  // not the plain mean of the targets.
  const double a = multiquadric(0, 2), b = multiquadric(2, 2), c = multiquadric(1, 2);
  const double w0 = (a * 0.0 - b * 1.0) / (a * a - b * b), w1 = (a * 1.0 - b * 0.0) / (a * a - b * b);
  CHECK(two.weights[0] == doctest::Approx(w0));
  CHECK(two.weights[1] == doctest::Approx(w1));
  CHECK(two.predict({1.0}) == doctest::Approx(c * (w0 + w1)));
  CHECK(two.predict({1.0}) == doctest::Approx(c / (a + b)));
  CHECK(two.predict({1.0}) != doctest::Approx(0.5));

  CHECK_THROWS_WITH_AS(rbf_fit({{1.0}, {1.0}}, {0.0, 1.0}), doctest::Contains("duplicate"), SaismError);
  CHECK_THROWS_AS(rbf_fit({}, {}), SaismError);
  CHECK_THROWS_AS(rbf_fit({{1.0}, {2.0}}, {0.0}), SaismError);
  CHECK_THROWS_AS(two.predict({1.0, 2.0}), SaismError);
}

TEST_CASE("rbf scale is the mean pairwise distance") {
  const RbfModel m = rbf_fit({{0.0, 0.0}, {3.0, 0.0}, {0.0, 4.0}}, {1.0, 2.0, 3.0});
  CHECK(m.scale == doctest::Approx((3.0 + 4.0 + 5.0) / 3.0));
}

TEST_CASE("both surrogates interpolate random data") {
  Rng rng(3);
  KrigingOptions opt;
  opt.starts = 2;
  for (int t = 0; t < 3; ++t) {
    const std::size_t n = 10 + 20 * t;
    const Samples x = random_samples(n, 25, rng);
    std::vector<double> y(n);
    for (auto& v : y) v = 0.1 + 0.05 * rng.normal();
    const double tol = 1e-6 * (0.3 + 1.0);
    const RbfModel r = rbf_fit(x, y);
    CHECK(max_interp_error(x, y, [&](const auto& q) { return r.predict(q); }) <= tol);
    const KrigingModel k = kriging_fit(x, y, opt);
    CHECK(max_interp_error(x, y, [&](const auto& q) { return k.predict(q); }) <= tol);
    for (double th : k.theta) {
      CHECK(th >= 1e-6 * (1 - 1e-9));
      CHECK(th <= 1e3 * (1 + 1e-9));
    }
  }
}

TEST_CASE("kriging likelihood gradient matches finite differences") {
  Rng rng(5);
  const Samples xn = random_samples(12, 3, rng);
  std::vector<double> y(12);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::sin(xn[i][0]) + 0.3 * xn[i][1];
  const std::vector<double> theta{0.3, 1.2, 0.05};
  const KrigingLikelihood lk = kriging_likelihood(xn, y, theta, 1e-10);
  REQUIRE(lk.ok);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double h = 1e-5;
    auto at = [&](double dl) {
      auto t = theta;
      t[k] = theta[k] * std::pow(10.0, dl);
      return kriging_likelihood(xn, y, t, 1e-10).value;
    };
    const double fd = (at(h) - at(-h)) / (2 * h);
    CHECK(lk.grad[k] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("kriging limits and invariances") {
  Rng rng(7);
  const Samples x = random_samples(6, 2, rng);
  std::vector<double> y{0.3, -0.1, 0.7, 0.2, 0.0, 0.5};
  const KrigingModel m = kriging_fit(x, y);
  CHECK(m.predict({1e3, -1e3}) == doctest::Approx(m.beta0));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(m.predict(x[i]) == doctest::Approx(y[i]).epsilon(1e-6));

  // Affine rescaling is absorbed by the normalisation.
  Samples x2 = x;
  for (auto& r : x2)
    for (auto& v : r) v = 10.0 * v + 3.0;
  const KrigingModel m2 = kriging_fit(x2, y);
  const std::vector<double> q{0.2, -0.4};
  CHECK(m2.predict({10.0 * q[0] + 3.0, 10.0 * q[1] + 3.0}) == doctest::Approx(m.predict(q)).epsilon(1e-5));

  const Samples two{{0.0, 1.0}, {1.0, 0.0}};
  const KrigingModel mt = kriging_fit(two, {1.0, 4.0});
  CHECK(mt.predict(two[0]) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(mt.predict(two[1]) == doctest::Approx(4.0).epsilon(1e-6));

  CHECK_THROWS_WITH_AS(kriging_fit({{1.0, 0.0}, {1.0, 1.0}}, {0.0, 1.0}), doctest::Contains("constant"), SaismError);
  CHECK_THROWS_AS(kriging_fit({{1.0}}, {0.0}), SaismError);
}

TEST_CASE("kriging with vanishing theta tends to the mean") {
  const Samples xn{{-1.0}, {0.0}, {1.0}};
  const std::vector<double> y{1.0, 2.0, 6.0};
  const KrigingLikelihood lk = kriging_likelihood(xn, y, {1e-12}, 1e-10);
  REQUIRE(lk.ok);
  CHECK(lk.beta0 == doctest::Approx(3.0).epsilon(1e-2));
}

TEST_CASE("kriging beats a constant predictor leave-one-out on a sine") {
  Samples x;
  std::vector<double> y;
  for (int i = 0; i < 8; ++i) {
    x.push_back({0.8 * i});
    y.push_back(std::sin(0.8 * i));
  }
  double se_k = 0.0, se_c = 0.0;
  for (std::size_t out = 0; out < x.size(); ++out) {
    Samples xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (i != out) {
        xs.push_back(x[i]);
        ys.push_back(y[i]);
      }
    double mean = 0.0;
    for (double v : ys) mean += v / static_cast<double>(ys.size());
    const KrigingModel m = kriging_fit(xs, ys);
    se_k += std::pow(m.predict(x[out]) - y[out], 2);
    se_c += std::pow(mean - y[out], 2);
  }
  CHECK(se_k < se_c);
}

TEST_CASE("surrogate files round trip") {
  Rng rng(9);
  const Samples x = random_samples(8, 4, rng);
  std::vector<double> y(8);
  for (auto& v : y) v = rng.uniform();
  const auto dir = std::filesystem::temp_directory_path();
  const RbfModel r = rbf_fit(x, y);
  save_rbf(r, dir / "blankopt_rbf_test.ssmf");
  const RbfModel r2 = load_rbf(dir / "blankopt_rbf_test.ssmf");
  const KrigingModel k = kriging_fit(x, y);
  save_kriging(k, dir / "blankopt_kriging_test.ssmf");
  const KrigingModel k2 = load_kriging(dir / "blankopt_kriging_test.ssmf");
  const std::vector<double> q{0.1, 0.2, 0.3, 0.4};
  CHECK(r2.predict(q) == r.predict(q));
  CHECK(k2.predict(q) == k.predict(q));
  CHECK_THROWS_WITH_AS(load_kriging(dir / "blankopt_rbf_test.ssmf"), doctest::Contains("kind"), SaismError);
  std::filesystem::remove(dir / "blankopt_rbf_test.ssmf");
  std::filesystem::remove(dir / "blankopt_kriging_test.ssmf");
}
