#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "blankopt/nn/adam.hpp"
#include "blankopt/nn/checkpoint.hpp"
#include "blankopt/nn/layers.hpp"
#include "blankopt/nn/loss.hpp"
#include "blankopt/nn/res_se.hpp"
#include "gradcheck.hpp"

using namespace blankopt;
using namespace blankopt::nn;
using namespace gradcheck;

TEST_CASE("spatial size arithmetic") {
  CHECK(conv_out(610, 8, 2, 3) == 305);
  CHECK(conv_out(4, 6, 2, 2) == 2);
  CHECK(conv_out(1, 4, 2, 1) == 0);
  CHECK(transpose_out(3, 3, 2, 1, 0) == 5);
  CHECK(transpose_out(3, 3, 2, 1, 1) == 6);
  CHECK_THROWS_AS(ConvTranspose2d<double>("t", 1, 1, 3, 3, 2, 2, 1, 1, 2, 0), ShapeError);
}

TEST_CASE("conv matches a direct convolution") {
  Rng rng(5);
  Conv2d<double> conv("c", 2, 3, 3, 4, 2, 1, 1, 2);
  randomise_params(conv, rng);
  const TD x = random_tensor(2, 2, 7, 6, rng);
  const TD y = conv.forward(x);
  REQUIRE(y.h == conv_out(7, 3, 2, 1));
  REQUIRE(y.w == conv_out(6, 4, 1, 2));
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 3; ++o)
      for (int i = 0; i < y.h; ++i)
        for (int j = 0; j < y.w; ++j) {
          double s = conv.bias().value[o];
          for (int c = 0; c < 2; ++c)
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 4; ++b) {
                const int yy = i * 2 - 1 + a, xx = j - 2 + b;
                if (yy < 0 || yy >= 7 || xx < 0 || xx >= 6) continue;
                s += conv.weight().value[(o * 2 + c) * 12 + a * 4 + b] * x.at(n, c, yy, xx);
              }
          CHECK(y.at(n, o, i, j) == doctest::Approx(s).epsilon(1e-12));
        }
}

TEST_CASE("transpose conv is the adjoint of conv") {
  // <conv(x), y> == <x, convT(y)> when both share weights and have no bias.
  Rng rng(6);
  Conv2d<double> conv("c", 2, 3, 4, 3, 2, 2, 1, 1);
  randomise_params(conv, rng);
  std::fill(conv.bias().value.begin(), conv.bias().value.end(), 0.0);
  ConvTranspose2d<double> tconv("t", 3, 2, 4, 3, 2, 2, 1, 1, 0, 0);
  tconv.weight().value = conv.weight().value;
  const TD x = random_tensor(1, 2, 8, 7, rng);
  const TD cx = conv.forward(x);
  const TD y = random_tensor(cx.n, cx.c, cx.h, cx.w, rng);
  const TD ty = tconv.forward(y);
  REQUIRE(ty.same_shape(x));
  CHECK(dot(cx, y) == doctest::Approx(dot(x, ty)).epsilon(1e-12));
}

TEST_CASE("finite-difference gradients") {
  Rng rng(11);
  constexpr double kTol = 1e-4;
  SUBCASE("conv") {
    Conv2d<double> l("c", 2, 3, 3, 4, 2, 1, 1, 2);
    randomise_params(l, rng);
    CHECK(gradient_check(l, random_tensor(2, 2, 6, 5, rng), 1) <= kTol);
  }
  SUBCASE("transpose conv") {
    ConvTranspose2d<double> l("t", 3, 2, 4, 3, 2, 2, 1, 1, 1, 1);
    randomise_params(l, rng);
    CHECK(gradient_check(l, random_tensor(2, 3, 3, 4, rng), 2) <= kTol);
  }
  SUBCASE("linear") {
    Linear<double> l("f", 6, 4);
    randomise_params(l, rng);
    CHECK(gradient_check(l, random_tensor(3, 6, 1, 1, rng), 3) <= kTol);
  }
  SUBCASE("batch norm, training") {
    BatchNorm2d<double> l("bn", 3);
    randomise_params(l, rng);
    CHECK(gradient_check(l, random_tensor(2, 3, 3, 3, rng), 4) <= kTol);
  }
  SUBCASE("batch norm, evaluation") {
    BatchNorm2d<double> l("bn", 3);
    randomise_params(l, rng);
    for (int i = 0; i < 3; ++i) l.forward(random_tensor(2, 3, 3, 3, rng));
    l.set_training(false);
    CHECK(gradient_check(l, random_tensor(2, 3, 3, 3, rng), 5) <= kTol);
  }
  SUBCASE("sigmoid and pooling") {
    Sigmoid<double> s;
    CHECK(gradient_check(s, random_tensor(2, 3, 2, 2, rng), 6) <= kTol);
    GlobalAvgPool<double> p;
    CHECK(gradient_check(p, random_tensor(2, 3, 4, 5, rng), 7) <= kTol);
  }
  SUBCASE("bilinear resize") {
    Resize<double> up(9, 13);
    CHECK(gradient_check(up, random_tensor(2, 2, 4, 6, rng), 8) <= kTol);
    Resize<double> down(3, 4);
    CHECK(gradient_check(down, random_tensor(1, 2, 7, 9, rng), 9) <= kTol);
  }
  SUBCASE("squeeze excitation") {
    SqueezeExcite<double> l("se", 4, 2);
    randomise_params(l, rng);
    CHECK(gradient_check(l, random_tensor(2, 4, 3, 3, rng), 10) <= kTol);
  }
  SUBCASE("residual SE block") {
    ResSEBlock<double> l("res", 4, 2);
    randomise_params(l, rng);
    TD x = random_tensor(3, 4, 4, 4, rng);
    while (kink_margin(l, x) < 0.02) x = random_tensor(3, 4, 4, 4, rng);
    CHECK(gradient_check(l, x, 12) <= kTol);
  }
}

TEST_CASE("loss value and gradient") {
  // Worked example: pred (1,0), gt (1,1): mse 0.5, cosine 1/sqrt(2).
  TD p(1, 1, 1, 2), y(1, 1, 1, 2);
  p.data = {1.0, 0.0};
  y.data = {1.0, 1.0};
  CHECK(field_loss(p, y, 1.0, 0.2) == doctest::Approx(0.5 - 0.2 / std::sqrt(2.0)));
  CHECK(field_loss(y, y, 1.0, 0.2) == doctest::Approx(-0.2));
  TD zero(1, 1, 1, 2);
  CHECK(field_loss(zero, y, 1.0, 0.2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(field_loss(y, zero, 1.0, 0.2), ShapeError);

  Rng rng(21);
  TD pred = random_tensor(3, 1, 4, 5, rng), gt = random_tensor(3, 1, 4, 5, rng);
  TD grad;
  field_loss(pred, gt, 0.7, 0.3, &grad);
  std::vector<double> num(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double keep = pred.data[i];
    pred.data[i] = keep + 1e-3;
    const double fp = field_loss(pred, gt, 0.7, 0.3);
    pred.data[i] = keep - 1e-3;
    const double fm = field_loss(pred, gt, 0.7, 0.3);
    pred.data[i] = keep;
    num[i] = (fp - fm) / 2e-3;
  }
  CHECK(rel_err(grad.data, num) <= 1e-4);
}

TEST_CASE("squeeze excitation structure") {
  SqueezeExcite<float> se("se", 128, 16);
  CHECK(se.squeeze_width() == 8);
  CHECK(SqueezeExcite<float>("se", 8, 16).squeeze_width() == 1);

  // A saturated gate passes the residual branch through unchanged, so the
  // block reduces to relu(x + u).
  Rng rng(3);
  ResSEBlock<double> block("res", 4, 2);
  randomise_params(block, rng);
  std::fill(block.se().fc2().weight().value.begin(), block.se().fc2().weight().value.end(), 0.0);
  std::fill(block.se().fc2().bias().value.begin(), block.se().fc2().bias().value.end(), 60.0);
  const TD x = random_tensor(2, 4, 5, 5, rng);
  const TD y = block.forward(x);
  const TD u = block.second().forward(block.first().forward(x));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data[i] == doctest::Approx(std::max(0.0, x.data[i] + u.data[i])));
}

TEST_CASE("zero input through conv bn relu stays finite") {
  ConvBnRelu<float> l("cbr", 2, 3, 3, 3, 1, 1, 1, 1);
  Rng rng(1);
  l.init(rng);
  const Tensor<float> y = l.forward(Tensor<float>(2, 2, 5, 5));
  for (float v : y.data) CHECK(v == 0.0f);
}

TEST_CASE("adam") {
  Param<double> p("p", 2);
  p.value = {1.0, -2.0};
  Adam<double> opt({&p}, 0.1);
  // The first bias-corrected step moves each coordinate by lr against the sign.
  p.grad = {3.0, -0.001};
  opt.step();
  CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(-1.9).epsilon(1e-4));

  // Minimises a quadratic.
  Param<double> q("q", 1);
  q.value = {5.0};
  Adam<double> opt2({&q}, 0.05);
  for (int i = 0; i < 2000; ++i) {
    q.grad = {2.0 * (q.value[0] - 1.5)};
    opt2.step();
  }
  CHECK(q.value[0] == doctest::Approx(1.5).epsilon(1e-3));

  p.grad = {std::nan(""), 0.0};
  const auto before = p.value;
  CHECK_THROWS_WITH_AS(opt.step(), "non-finite gradient in p", NonFiniteGradient);
  CHECK(p.value == before);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(4);
  ResSEBlock<float> a("res", 4, 2), b("res", 4, 2);
  a.init(rng);
  a.forward([&] {
    Tensor<float> t(2, 4, 3, 3);
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    return t;
  }());
  std::vector<Param<float>*> pa, pb;
  std::vector<Buffer<float>> ba, bb;
  a.collect_params(pa);
  a.collect_buffers(ba);
  b.collect_params(pb);
  b.collect_buffers(bb);
  Checkpoint ck;
  ck.meta["kind"] = "test";
  a.collect_specs(ck.layers);
  store_state(ck, pa, ba);
  const auto path = std::filesystem::temp_directory_path() / "blankopt_ck_test.nnck";
  write_checkpoint(ck, path);
  const Checkpoint back = read_checkpoint(path);
  CHECK(back.meta.at("kind") == "test");
  REQUIRE(back.layers.size() == ck.layers.size());
  CHECK(back.layers[0].name == ck.layers[0].name);
  load_state(back, pb, bb);
  CHECK(parameter_checksum(pa) == parameter_checksum(pb));
  for (std::size_t i = 0; i < ba.size(); ++i) CHECK(*ba[i].value == *bb[i].value);

  ResSEBlock<float> wrong("res", 8, 2);
  std::vector<Param<float>*> pw;
  std::vector<Buffer<float>> bw;
  wrong.collect_params(pw);
  wrong.collect_buffers(bw);
  CHECK_THROWS_AS(load_state(back, pw, bw), CheckpointError);

  {
    std::ofstream(path, std::ios::binary) << "JUNKJUNK";
  }
  CHECK_THROWS_AS(read_checkpoint(path), CheckpointError);
  std::filesystem::remove(path);
}
