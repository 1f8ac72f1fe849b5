#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "blankopt/iaism.hpp"
#include "blankopt/nn/loss.hpp"
#include "blankopt/nn/network.hpp"

using namespace blankopt;

namespace {

GridSpec toy_spec() {
  GridSpec s;
  s.height = 16;
  s.width = 8;
  s.origin = {0.5, 0.5};
  s.spacing = 1.0;
  return s;
}

// Disc of radius r about (cx, cy), in mm.
ScalarGrid disc_sdf(const GridSpec& spec, double cx, double cy, double r) {
  ScalarGrid g(spec, GridKind::Sdf);
  for (int i = 0; i < spec.height; ++i)
    for (int j = 0; j < spec.width; ++j) {
      const Vec2 p = spec.centre(i, j);
      g.at(i, j) = static_cast<float>(std::hypot(p.x - cx, p.y - cy) - r);
    }
  return g;
}

template <typename T>
void randomise_bn(nn::Layer<T>& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& b : nn::buffers_of(net))
    for (auto& v : *b.value) v = static_cast<T>(b.name.ends_with("var") ? 0.5 + rng.uniform() : 0.1 * rng.normal());
}

}  // namespace

TEST_CASE("encoder dims") {
  const std::vector<StageDims> full{{305, 560}, {152, 560}, {76, 280}, {38, 140}, {19, 70}, {10, 35}};
  CHECK(encoder_dims(610, 1120) == full);
  CHECK(encoder_dims(152, 280).back() == StageDims{3, 9});
  CHECK_THROWS_WITH_AS(encoder_dims(8, 8), doctest::Contains("enc4"), nn::ShapeError);
  CHECK_NOTHROW(encoder_dims(16, 8));
}

TEST_CASE("output padding inverts the stride arithmetic") {
  CHECK(output_padding(3, 5, 3, 2, 1, "d") == 0);
  CHECK(output_padding(3, 6, 3, 2, 1, "d") == 1);
  CHECK_THROWS_AS(output_padding(3, 8, 3, 2, 1, "d"), nn::ShapeError);
}

TEST_CASE("forward keeps the grid shape and zeroes the outside") {
  const GridSpec desk = GridSpec::desk();
  Iaism net(desk, {2, 2, 4, 4, 4, 4}, 1, 2);
  net.init(3);
  const ScalarGrid sdf = disc_sdf(desk, 560, 300, 200);
  const ScalarGrid y = forward(net, sdf);
  CHECK(y.spec == desk);
  CHECK(y.kind == GridKind::ThinningField);

  const GridSpec toy = toy_spec();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Iaism small(toy, {2, 2, 2, 2, 2, 2}, 2, 1);
    small.init(seed);
    randomise_bn(small, seed + 100);
    const ScalarGrid s = disc_sdf(toy, 3.0 + seed * 0.3, 7.0, 3.5);
    const ScalarGrid f = forward(small, s);
    bool exact = true, any_inside = false;
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      if (s.values[k] >= 0.0f)
        exact = exact && std::signbit(f.values[k]) == false && f.values[k] == 0.0f;
      else
        any_inside = any_inside || f.values[k] != 0.0f;
    }
    CHECK(exact);
    CHECK(any_inside);
  }
  CHECK_THROWS_AS(forward(net, disc_sdf(toy, 3, 7, 2)), nn::ShapeError);
}

TEST_CASE("no blank gives a zero field") {
  const GridSpec toy = toy_spec();
  Iaism net(toy, {2, 2, 2, 2, 2, 2}, 1, 1);
  net.init(5);
  const ScalarGrid f = forward(net, ScalarGrid(toy, GridKind::Sdf, 3.0f));
  for (float v : f.values) CHECK(v == 0.0f);
}

TEST_CASE("zeroed final layer predicts no thinning") {
  const GridSpec toy = toy_spec();
  Iaism net(toy, {2, 2, 2, 2, 2, 2}, 1, 1);
  net.init(5);
  std::vector<nn::Param<float>*> ps;
  net.final_conv().collect_params(ps);
  for (auto* p : ps) std::fill(p->value.begin(), p->value.end(), 0.0f);
  const Maxima m = predict_maxima(net, disc_sdf(toy, 4, 8, 3));
  CHECK(m.thinning == 0.0);
  CHECK(m.thickening == 0.0);
}

TEST_CASE("forward is deterministic") {
  const GridSpec toy = toy_spec();
  Iaism a(toy, {2, 2, 2, 2, 2, 2}, 1, 1), b(toy, {2, 2, 2, 2, 2, 2}, 1, 1);
  a.init(9);
  b.init(9);
  const ScalarGrid s = disc_sdf(toy, 4, 8, 3);
  CHECK(forward(a, s).values == forward(b, s).values);
}

TEST_CASE("input gradient matches finite differences") {
  const GridSpec toy = toy_spec();
  MaskResSEUNet<double> net(toy, {3, 3, 4, 4, 4, 4}, 2, 2);
  net.init(11);
  randomise_bn(net, 12);
  net.set_training(false);
  net.set_param_grad(false);
  const ScalarGrid s = disc_sdf(toy, 4.2, 7.7, 4.0);
  nn::Tensor<double> x = nn::grids_to_tensor<double>({&s});
  ScalarGrid gt(toy, GridKind::ThinningField);
  Rng rng(13);
  for (std::size_t k = 0; k < gt.values.size(); ++k)
    if (s.values[k] < 0) gt.values[k] = static_cast<float>(0.1 * rng.uniform());
  const nn::Tensor<double> y = nn::grids_to_tensor<double>({&gt});

  nn::Tensor<double> dy;
  nn::field_loss(net.forward(x), y, 1.0, 0.2, &dy);
  const nn::Tensor<double> dx = net.backward(dy);

  const double h = 1e-6;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double fp = nn::field_loss(net.forward(x), y, 1.0, 0.2);
    x.data[i] = keep - h;
    const double fm = nn::field_loss(net.forward(x), y, 1.0, 0.2);
    x.data[i] = keep;
    const double fd = (fp - fm) / (2 * h);
    num += (fd - dx.data[i]) * (fd - dx.data[i]);
    den += fd * fd;
  }
  CHECK(den > 0.0);
  CHECK(std::sqrt(num / den) <= 1e-4);
}

TEST_CASE("flip augmentation") {
  const GridSpec toy = toy_spec();
  std::vector<FieldPair> pairs;
  for (int i = 0; i < 3; ++i) {
    ScalarGrid s = disc_sdf(toy, 2.0 + i, 5.0, 2.5), f(toy, GridKind::ThinningField);
    for (std::size_t k = 0; k < f.values.size(); ++k) f.values[k] = static_cast<float>(k * (i + 1));
    pairs.push_back({s, f});
  }
  const auto out = augment_flips(pairs);
  REQUIRE(out.size() == 12);
  for (int i = 0; i < 3; ++i) {
    CHECK(out[4 * i].sdf.values == pairs[i].sdf.values);
    CHECK(out[4 * i + 1].field.values == flip(pairs[i].field, FlipAxis::Horizontal).values);
    CHECK(out[4 * i + 2].sdf.values == flip(pairs[i].sdf, FlipAxis::Vertical).values);
    CHECK(out[4 * i + 3].field.values == flip(pairs[i].field, FlipAxis::Both).values);
  }
}

TEST_CASE("training rejects bad inputs and is deterministic") {
  const GridSpec toy = toy_spec();
  IaismConfig cfg;
  cfg.channels = {2, 2, 2, 2, 2, 2};
  cfg.res_blocks = 1;
  cfg.reduction = 1;
  cfg.epochs = 3;
  std::vector<FieldPair> pairs;
  for (int i = 0; i < 4; ++i) {
    ScalarGrid s = disc_sdf(toy, 3.0 + 0.5 * i, 8.0, 3.0), f(toy, GridKind::ThinningField);
    for (std::size_t k = 0; k < f.values.size(); ++k) f.values[k] = s.values[k] < 0 ? 0.05f * (i + 1) : 0.0f;
    pairs.push_back({s, f});
  }
  CHECK_THROWS_AS(train_iaism({pairs[0]}, false, cfg), nn::ShapeError);
  const auto a = train_iaism(pairs, true, cfg);
  const auto b = train_iaism(pairs, true, cfg);
  CHECK(a.n_pairs == 16);
  CHECK(a.loss_history.size() == 3);
  CHECK(a.loss_history == b.loss_history);

  auto mixed = pairs;
  GridSpec other = toy;
  other.spacing = 2.0;
  mixed.push_back({disc_sdf(other, 3, 8, 3), ScalarGrid(other, GridKind::ThinningField)});
  CHECK_THROWS_AS(train_iaism(mixed, false, cfg), nn::ShapeError);
}

TEST_CASE("surrogate checkpoint round trip") {
  const GridSpec toy = toy_spec();
  Iaism net(toy, {2, 3, 2, 2, 2, 2}, 2, 1);
  net.init(21);
  randomise_bn(net, 22);
  const auto path = std::filesystem::temp_directory_path() / "blankopt_iaism_test.nnck";
  save_iaism(net, path, {{"note", "x"}});
  auto back = load_iaism(path);
  const ScalarGrid s = disc_sdf(toy, 4, 8, 3);
  CHECK(back->channels() == net.channels());
  CHECK(back->res_blocks() == 2);
  CHECK(forward(*back, s).values == forward(net, s).values);
  std::filesystem::remove(path);
}
