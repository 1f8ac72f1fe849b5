#pragma once

// End-to-end pipeline stages over a work directory: sample designs,
// simulate them, train the surrogates, evaluate and optimise. Every stage
// reads its inputs from disk, so stages can run as separate processes.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "blankopt/auto_decoder.hpp"
#include "blankopt/config.hpp"
#include "blankopt/doe_sampler.hpp"
#include "blankopt/evaluation.hpp"
#include "blankopt/forming_oracle.hpp"
#include "blankopt/iaism.hpp"
#include "blankopt/latent_optimizer.hpp"
#include "blankopt/saism.hpp"

namespace blankopt {

// An upstream artifact a stage needs does not exist.
class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::filesystem::path& p)
      : std::runtime_error("missing artifact: " + p.string()), path(p) {}
  std::filesystem::path path;
};

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  Config raw;
  std::string hash;
  GridSpec grid;
  SamplingPlan plan;
  std::size_t n_decoder_extra = 0;
  std::uint64_t seed_decoder_extra = 13;
  OracleConfig oracle;
  AutoDecoderConfig autodecoder;
  IaismConfig iaism;
  bool iaism_augment = false;
  KrigingOptions kriging;
  OptimizerConfig optimizer;

  // Reads [grid], [sampling], [oracle], [autodecoder], [iaism], [saism] and
  // [optimizer]. Throws ConfigError on invalid values.
  static PipelineConfig from_config(const Config& config);
  static PipelineConfig from_file(const std::filesystem::path& path);
};

// The shipped desk-scale config, compiled in.
Config default_pipeline_config();

inline constexpr double kNotSimulated = std::numeric_limits<double>::quiet_NaN();

struct ManifestRecord {
  std::string id;
  std::string split;  // train, test or decoder-extra
  unsigned bits = 0;
  std::map<int, double> params;
  std::string sdf_path;  // relative to the work directory
  std::string field_path;  // empty until simulated
  double max_thinning = kNotSimulated;
  double max_thickening = kNotSimulated;
  std::uint64_t seed = 0;
  std::string config_hash;

  bool simulated() const { return !field_path.empty(); }
};

struct Manifest {
  std::vector<ManifestRecord> records;

  std::vector<const ManifestRecord*> split(const std::string& tag) const;
  const ManifestRecord& find(const std::string& id) const;
};

// Tab-separated, one record per line after a header.
void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

// Fixed artifact locations inside a work directory.
struct Workspace {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.tsv"; }
  // Snapshot of the effective config written by the sample stage.
  std::filesystem::path config() const { return root / "config.cfg"; }
  std::filesystem::path decoder() const { return root / "models" / "decoder.nnck"; }
  std::filesystem::path iaism() const { return root / "models" / "iaism.nnck"; }
  std::filesystem::path saism(const std::string& kind, const std::string& target) const {
    return root / "models" / (kind + "_" + target + ".ssmf");
  }
  std::filesystem::path train_latents() const { return root / "latents" / "train.ltnt"; }
  std::filesystem::path test_latents() const { return root / "latents" / "test.ltnt"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path optimized() const { return root / "optimized"; }
  std::filesystem::path exports() const { return root / "export"; }
};

// Throws MissingArtifact unless the path exists.
void require_artifact(const std::filesystem::path& path);

// Draws the train, test and decoder-extra designs, rasterises them and
// writes a fresh manifest and config snapshot.
Manifest stage_sample(const PipelineConfig& cfg, const Workspace& ws);

// Runs the oracle over every record and fills the field path and maxima.
Manifest stage_simulate(const PipelineConfig& cfg, const Workspace& ws);

// Trains the decoder on train and decoder-extra shapes. Returns the
// epoch-mean losses.
std::vector<double> stage_train_autodecoder(const PipelineConfig& cfg, const Workspace& ws);

// Fits test-set latents against the frozen decoder.
void stage_infer_latents(const PipelineConfig& cfg, const Workspace& ws);

std::vector<double> stage_train_iaism(const PipelineConfig& cfg, const Workspace& ws);

// RBF and Kriging models of both maxima over the training latents.
void stage_train_saism(const PipelineConfig& cfg, const Workspace& ws);

EvalReport stage_evaluate(const PipelineConfig& cfg, const Workspace& ws);

// One trace per configured seed, each validated against the oracle.
std::vector<OptimizationTrace> stage_optimize(const PipelineConfig& cfg, const Workspace& ws);

// Writes CSV or PGM copies of every manifest grid.
std::size_t stage_export(const PipelineConfig& cfg, const Workspace& ws, const std::string& format);

}  // namespace blankopt
