// Pipeline driver. Exit codes: 0 success, 1 config error, 2 missing
// upstream artifact, 3 any other failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "blankopt/pipeline.hpp"

using namespace blankopt;

namespace {

struct Options {
  // Empty: sample uses the built-in desk config, later stages the
  // snapshot the sample stage left in the work directory.
  std::string config;
  std::string workdir = "run";
  // Overrides for the sample stage; negative means keep the config value.
  long long n_train = -1, n_test = -1, seed_train = -1, seed_test = -1;
  std::string export_format = "pgm";
};

PipelineConfig load(const std::string& stage, const Options& o) {
  const Workspace ws{o.workdir};
  Config raw;
  if (!o.config.empty())
    raw = Config::from_file(o.config);
  else if (stage != "sample" && std::filesystem::exists(ws.config()))
    raw = Config::from_file(ws.config());
  else
    raw = default_pipeline_config();
  auto put = [&](const char* key, long long v) {
    if (v >= 0) raw.set(key, std::to_string(v));
  };
  put("sampling.n_train", o.n_train);
  put("sampling.n_test", o.n_test);
  put("sampling.seed_train", o.seed_train);
  put("sampling.seed_test", o.seed_test);
  return PipelineConfig::from_config(raw);
}

void print_losses(const char* what, const std::vector<double>& losses) {
  if (losses.empty()) return;
  std::printf("%s: %zu epochs, loss %.6g -> %.6g\n", what, losses.size(), losses.front(), losses.back());
}

int run(const std::string& stage, const Options& o) {
  const PipelineConfig cfg = load(stage, o);
  const Workspace ws{o.workdir};
  if (stage == "sample") {
    const Manifest m = stage_sample(cfg, ws);
    std::printf("sampled %zu records (train %zu, test %zu, decoder-extra %zu) into %s\n", m.records.size(),
                m.split("train").size(), m.split("test").size(), m.split("decoder-extra").size(),
                ws.manifest().c_str());
  } else if (stage == "simulate") {
    const Manifest m = stage_simulate(cfg, ws);
    std::printf("simulated %zu records\n", m.records.size());
  } else if (stage == "train-autodecoder") {
    print_losses("auto-decoder", stage_train_autodecoder(cfg, ws));
  } else if (stage == "infer-latents") {
    stage_infer_latents(cfg, ws);
    std::printf("wrote %s\n", ws.test_latents().c_str());
  } else if (stage == "train-iaism") {
    print_losses("IAISM", stage_train_iaism(cfg, ws));
  } else if (stage == "train-saism") {
    stage_train_saism(cfg, ws);
    std::printf("wrote RBF and Kriging models to %s\n", (ws.root / "models").c_str());
  } else if (stage == "evaluate") {
    std::cout << format_report(stage_evaluate(cfg, ws));
  } else if (stage == "optimize") {
    const auto traces = stage_optimize(cfg, ws);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const auto& t = traces[i];
      std::printf("seed %llu: loss %.6g -> %.6g%s, oracle (%.4f, %.4f) %s\n",
                  static_cast<unsigned long long>(cfg.optimizer.seeds[i]), t.loss.front(), t.loss.back(),
                  t.aborted ? " (aborted)" : "", t.validation->oracle.maxima.thinning,
                  t.validation->oracle.maxima.thickening, t.validation->pass ? "PASS" : t.validation->reason.c_str());
    }
  } else if (stage == "export") {
    std::printf("exported %zu grids to %s\n", stage_export(cfg, ws, o.export_format), ws.exports().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blank shape design pipeline"};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config, "Pipeline config file (default: work directory snapshot or built-in)");
  app.add_option("-w,--workdir", o.workdir, "Artifact directory")->capture_default_str();

  auto* sample = app.add_subcommand("sample", "Draw designs and write the manifest");
  sample->add_option("--n-train", o.n_train, "Training samples");
  sample->add_option("--n-test", o.n_test, "Test samples");
  sample->add_option("--seed-train", o.seed_train, "Training sampler seed");
  sample->add_option("--seed-test", o.seed_test, "Test sampler seed");
  app.add_subcommand("simulate", "Run the forming oracle over the manifest");
  app.add_subcommand("train-autodecoder", "Train the SDF auto-decoder and its latent table");
  app.add_subcommand("infer-latents", "Fit latents for the test shapes");
  app.add_subcommand("train-iaism", "Train the image-based surrogate");
  app.add_subcommand("train-saism", "Fit the RBF and Kriging surrogates");
  app.add_subcommand("evaluate", "Score all surrogates on the test split");
  app.add_subcommand("optimize", "Optimise a blank shape and validate it");
  auto* exp = app.add_subcommand("export", "Write CSV or PGM copies of the grids");
  exp->add_option("--format", o.export_format, "csv or pgm")->check(CLI::IsMember({"csv", "pgm"}))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    return run(stage, o);
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
