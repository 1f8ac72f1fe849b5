#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "blankopt/pipeline.hpp"

using namespace blankopt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("blankopt_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

PipelineConfig tiny() { return PipelineConfig::from_file(fs::path(BLANKOPT_TEST_DATA) / "tiny.cfg"); }

std::string bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("shipped config") {
  const PipelineConfig c = PipelineConfig::from_config(default_pipeline_config());
  CHECK(c.grid == GridSpec::desk());
  CHECK(c.plan.n_train == 64);
  CHECK(c.plan.n_test == 16);
  CHECK(c.hash.size() == 16);
  CHECK(c.oracle.sites.size() == 8);
  CHECK(c.optimizer.seeds.size() == 3);
}

TEST_CASE("config errors") {
  Config c = default_pipeline_config();
  c.set("optimizer.line_box", "120 134 108 279");
  CHECK_THROWS_AS(PipelineConfig::from_config(c), ConfigError);
  c = default_pipeline_config();
  c.set("sampling.n_train", "1");
  CHECK_THROWS_AS(PipelineConfig::from_config(c), ConfigError);
  c = default_pipeline_config();
  c.set("grid.spacing", "0");
  CHECK_THROWS_AS(PipelineConfig::from_config(c), ConfigError);
}

TEST_CASE("manifest round trip") {
  Manifest m;
  ManifestRecord a;
  a.id = "train-0000";
  a.split = "train";
  a.bits = 13;
  a.params = {{0, 21.971580319714235}, {22, -57.164721445235017}};
  a.sdf_path = "sdf/train-0000.fgrd";
  a.seed = 7;
  a.config_hash = "0123456789abcdef";
  ManifestRecord b = a;
  b.id = "test-0000";
  b.split = "test";
  b.field_path = "field/test-0000.fgrd";
  b.max_thinning = 0.1 / 3.0;
  b.max_thickening = 0.2;
  m.records = {a, b};
  const fs::path dir = scratch("manifest");
  write_manifest(m, dir / "manifest.tsv");
  const Manifest r = read_manifest(dir / "manifest.tsv");
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].params == a.params);
  CHECK(std::isnan(r.records[0].max_thinning));
  CHECK_FALSE(r.records[0].simulated());
  CHECK(r.records[1].max_thinning == b.max_thinning);
  CHECK(r.records[1].field_path == b.field_path);
  CHECK(r.find("test-0000").split == "test");
  CHECK(r.split("train").size() == 1);

  m.records = {a, a};
  write_manifest(m, dir / "dup.tsv");
  CHECK_THROWS_WITH_AS(read_manifest(dir / "dup.tsv"), doctest::Contains("duplicate id"), PipelineError);
  CHECK_THROWS_AS(read_manifest(dir / "absent.tsv"), MissingArtifact);
  fs::remove_all(dir);
}

TEST_CASE("stages report missing upstream artifacts") {
  const PipelineConfig cfg = tiny();
  const Workspace ws{scratch("missing")};
  CHECK_THROWS_AS(stage_simulate(cfg, ws), MissingArtifact);
  try {
    stage_optimize(cfg, ws);
    FAIL("expected a missing artifact");
  } catch (const MissingArtifact& e) {
    CHECK(e.path == ws.manifest());
  }
  stage_sample(cfg, ws);
  CHECK_THROWS_AS(stage_train_iaism(cfg, ws), MissingArtifact);
  CHECK_THROWS_AS(stage_infer_latents(cfg, ws), MissingArtifact);
  stage_simulate(cfg, ws);
  try {
    stage_optimize(cfg, ws);
    FAIL("expected a missing artifact");
  } catch (const MissingArtifact& e) {
    CHECK(e.path == ws.decoder());
  }

  // A manifest from another config is refused.
  Config other = cfg.raw;
  other.set("oracle.clamp_hi", "0.4");
  CHECK_THROWS_AS(stage_train_iaism(PipelineConfig::from_config(other), ws), ConfigError);
  fs::remove_all(ws.root);
}

TEST_CASE("tiny pipeline end to end and reproducibly") {
  const PipelineConfig cfg = tiny();
  auto run = [&](const Workspace& ws) {
    const Manifest m = stage_sample(cfg, ws);
    CHECK(m.records.size() == 7);
    const Manifest sim = stage_simulate(cfg, ws);
    stage_train_autodecoder(cfg, ws);
    stage_infer_latents(cfg, ws);
    stage_train_iaism(cfg, ws);
    stage_train_saism(cfg, ws);
    const EvalReport rep = stage_evaluate(cfg, ws);
    CHECK(rep.surrogates.size() == 3);
    CHECK(rep.truth.size() == 2);
    const auto traces = stage_optimize(cfg, ws);
    REQUIRE(traces.size() == 1);
    CHECK(traces[0].loss.size() == 3);
    CHECK(traces[0].validation.has_value());
    CHECK(stage_export(cfg, ws, "pgm") == 14);
    CHECK_THROWS_AS(stage_export(cfg, ws, "png"), ConfigError);
    return sim;
  };
  const Workspace a{scratch("run_a")}, b{scratch("run_b")};
  const Manifest m = run(a);

  // Every referenced file exists and parses, and recorded maxima match the
  // stored fields.
  for (const auto& r : m.records) {
    CHECK(r.config_hash == cfg.hash);
    CHECK(read_grid(a.root / r.sdf_path).kind == GridKind::Sdf);
    const ScalarGrid field = read_grid(a.root / r.field_path);
    CHECK(maxima(field).thinning == r.max_thinning);
    CHECK(maxima(field).thickening == r.max_thickening);
  }
  CHECK(read_latents(a.train_latents()).size() == 5);
  CHECK(read_latents(a.test_latents()).size() == 2);
  CHECK(PipelineConfig::from_file(a.config()).hash == cfg.hash);

  run(b);
  for (const fs::path rel : {"manifest.tsv", "models/decoder.nnck", "models/iaism.nnck", "models/kriging_thinning.ssmf",
                             "latents/test.ltnt", "reports/evaluation.csv", "optimized/seed1_trace.csv",
                             "field/test-0001.fgrd"})
    CHECK_MESSAGE(bytes(a.root / rel) == bytes(b.root / rel), rel.string());
  fs::remove_all(a.root);
  fs::remove_all(b.root);
}
