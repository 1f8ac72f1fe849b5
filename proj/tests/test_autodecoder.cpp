#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "blankopt/auto_decoder.hpp"
#include "blankopt/nn/checkpoint.hpp"

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

ScalarGrid disc_sdf(const GridSpec& spec, double cx, double cy, double r) {
  ScalarGrid g(spec, GridKind::Sdf);
  for (int i = 0; i < spec.height; ++i)
    for (int j = 0; j < spec.width; ++j) {
      const Vec2 p = spec.centre(i, j);
      g.at(i, j) = static_cast<float>(std::hypot(p.x - cx, p.y - cy) - r);
    }
  return g;
}

AutoDecoderConfig toy_config() {
  AutoDecoderConfig c;
  c.channels = {4, 3, 2, 2};
  c.res_blocks = 1;
  c.reduction = 2;
  c.epochs = 4;
  c.batch = 2;
  return c;
}

}  // namespace

TEST_CASE("decoder layout lands on the grid") {
  const DecoderLayout desk = decoder_layout(152, 280);
  CHECK(desk.seed == StageDims{9, 35});
  REQUIRE(desk.outputs.size() == 4);
  CHECK(desk.outputs[0] == StageDims{19, 70});
  CHECK(desk.outputs[3] == StageDims{152, 280});
  CHECK(desk.output_padding[0] == StageDims{1, 1});
  CHECK(desk.output_padding[1] == StageDims{0, 1});
  CHECK(desk.output_padding[3] == StageDims{0, 0});

  const DecoderLayout full = decoder_layout(610, 1120);
  CHECK(full.outputs.back() == StageDims{610, 1120});
  CHECK(decoder_layout(16, 8).seed == StageDims{1, 1});
  CHECK_THROWS_AS(decoder_layout(8, 8), nn::ShapeError);
}

TEST_CASE("decode shape, determinism and latent length") {
  const GridSpec desk = GridSpec::desk();
  Decoder d(desk, {4, 4, 2, 2}, 1, 2);
  d.init(1);
  LatentVector z(kLatentDim);
  for (int i = 0; i < kLatentDim; ++i) z[i] = 0.01f * (i - 12);
  const ScalarGrid a = decode(d, z);
  CHECK(a.spec == desk);
  CHECK(a.kind == GridKind::Sdf);
  CHECK(decode(d, z).values == a.values);
  CHECK_THROWS_AS(decode(d, LatentVector(24)), nn::ShapeError);
}

TEST_CASE("latent interpolation") {
  const LatentVector a{0.0f, 1.0f}, b{1.0f, -1.0f};
  const auto chain = interpolate_latents(a, b, 3);
  REQUIRE(chain.size() == 3);
  CHECK(chain[0][0] == doctest::Approx(0.25));
  CHECK(chain[1][1] == doctest::Approx(0.0));
  CHECK(chain[2][0] == doctest::Approx(0.75));
  CHECK(interpolate_latents(a, b, 0).empty());
  CHECK_THROWS_AS(interpolate_latents(a, LatentVector(3), 2), nn::ShapeError);
}

TEST_CASE("joint training moves latents and is deterministic") {
  const GridSpec toy = toy_spec();
  std::vector<ScalarGrid> shapes;
  for (int i = 0; i < 3; ++i) shapes.push_back(disc_sdf(toy, 3.0 + i, 8.0, 3.0 + 0.5 * i));
  const AutoDecoderConfig cfg = toy_config();
  const auto a = train_autodecoder(shapes, cfg);
  const auto b = train_autodecoder(shapes, cfg);
  CHECK(a.loss_history.size() == 4);
  CHECK(a.loss_history == b.loss_history);
  REQUIRE(a.latents.size() == 3);
  CHECK(a.latents == b.latents);
  for (const auto& z : a.latents) CHECK(z.size() == static_cast<std::size_t>(kLatentDim));
  CHECK(a.latents[0] != a.latents[1]);

  auto mixed = shapes;
  GridSpec other = toy;
  other.spacing = 2.0;
  mixed.push_back(disc_sdf(other, 3, 8, 3));
  CHECK_THROWS_AS(train_autodecoder(mixed, cfg), nn::ShapeError);
  CHECK_THROWS_AS(train_autodecoder({}, cfg), nn::ShapeError);
}

TEST_CASE("latent inference") {
  const GridSpec toy = toy_spec();
  std::vector<ScalarGrid> shapes{disc_sdf(toy, 4, 8, 3), disc_sdf(toy, 4, 6, 2)};
  auto trained = train_autodecoder(shapes, toy_config());
  Decoder& d = *trained.decoder;
  std::vector<nn::Param<float>*> ps;
  d.collect_params(ps);
  std::vector<std::vector<float>> before;
  for (auto* p : ps) before.push_back(p->value);

  const AutoDecoderConfig cfg = toy_config();
  const auto zero = infer_latents(d, shapes, 0, 0.1, 5, cfg);
  REQUIRE(zero.latents.size() == 2);
  CHECK(zero.loss_history.empty());
  for (int i = 0; i < 2; ++i) {
    Rng rng(mix_seed(5, static_cast<std::uint64_t>(i)));
    CHECK(zero.latents[i][0] == static_cast<float>(cfg.init_std * rng.normal()));
  }

  // The toy decoder's ReLUs are all off near z = 0, so start further out.
  AutoDecoderConfig wide = cfg;
  wide.init_std = 0.5;
  const auto fit = infer_latents(d, shapes, 30, 0.05, 5, wide);
  CHECK(fit.loss_history.size() == 30);
  CHECK(fit.loss_history.back() < fit.loss_history.front());
  // A shape's latent does not depend on which other shapes share the batch.
  const auto alone = infer_latents(d, {shapes[1]}, 30, 0.05, 5, wide);
  const auto reordered = infer_latents(d, {shapes[1], shapes[0]}, 30, 0.05, 5, wide);
  for (int k = 0; k < kLatentDim; ++k)
    CHECK(reordered.latents[0][k] == doctest::Approx(alone.latents[0][k]).epsilon(1e-4));

  for (std::size_t i = 0; i < ps.size(); ++i) CHECK(ps[i]->value == before[i]);
  CHECK_THROWS_AS(infer_latents(d, {disc_sdf(GridSpec::desk(), 500, 300, 100)}, 1, 0.1, 0), nn::ShapeError);
}

TEST_CASE("decoder and latent files round trip") {
  const GridSpec toy = toy_spec();
  Decoder d(toy, {4, 3, 2, 2}, 2, 2);
  d.init(8);
  const auto dir = std::filesystem::temp_directory_path();
  save_decoder(d, dir / "blankopt_decoder_test.nnck");
  auto back = load_decoder(dir / "blankopt_decoder_test.nnck");
  LatentVector z(kLatentDim, 0.1f);
  CHECK(decode(*back, z).values == decode(d, z).values);
  CHECK(back->channels() == d.channels());

  const std::vector<LatentVector> table{LatentVector(kLatentDim, 0.5f), LatentVector(kLatentDim, -1.25f)};
  write_latents(table, dir / "blankopt_latents_test.ltnt");
  CHECK(read_latents(dir / "blankopt_latents_test.ltnt") == table);
  CHECK_THROWS_AS(read_latents(dir / "blankopt_decoder_test.nnck"), nn::CheckpointError);
  std::filesystem::remove(dir / "blankopt_decoder_test.nnck");
  std::filesystem::remove(dir / "blankopt_latents_test.ltnt");
}
