#include "blankopt/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "blankopt/geometry.hpp"
#include "default_configs.hpp"
#include "blankopt/parallel.hpp"

namespace blankopt {

namespace fs = std::filesystem;

namespace {

const char* const kManifestHeader =
    "id\tsplit\tbits\tparams\tsdf\tfield\tmax_thinning\tmax_thickening\tseed\tconfig_hash";

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

double parse_double(const std::string& s, const std::string& what) {
  if (s == "nan") return kNotSimulated;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw PipelineError("manifest: bad " + what + " '" + s + "'");
}

std::string format_params(const std::map<int, double>& params) {
  std::string out;
  for (const auto& [id, v] : params) {
    if (!out.empty()) out += ';';
    out += param_name(id) + '=' + format_double(v);
  }
  return out;
}

std::map<int, double> parse_params(const std::string& s) {
  std::map<int, double> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ';')) {
    const auto eq = item.find('=');
    if (item.size() < 3 || item[0] != 'P' || eq == std::string::npos)
      throw PipelineError("manifest: bad parameter '" + item + "'");
    out[std::stoi(item.substr(1, eq - 1))] = parse_double(item.substr(eq + 1), "parameter value");
  }
  return out;
}

std::string zero_pad(std::size_t i, int width) {
  std::ostringstream o;
  o << std::setw(width) << std::setfill('0') << i;
  return o.str();
}

Manifest load_checked_manifest(const PipelineConfig& cfg, const Workspace& ws) {
  require_artifact(ws.manifest());
  Manifest m = read_manifest(ws.manifest());
  for (const auto& r : m.records)
    if (r.config_hash != cfg.hash)
      throw ConfigError("manifest record " + r.id + " was written under config " + r.config_hash +
                        ", current config is " + cfg.hash);
  return m;
}

// Records of a split, all of which must have been simulated.
std::vector<const ManifestRecord*> simulated(const Manifest& m, const Workspace& ws, const std::string& split) {
  auto recs = m.split(split);
  for (const auto* r : recs)
    if (!r->simulated()) throw MissingArtifact(ws.root / "field" / (r->id + ".fgrd"));
  return recs;
}

ScalarGrid load_grid(const Workspace& ws, const std::string& rel) {
  const fs::path p = ws.root / rel;
  require_artifact(p);
  return read_grid(p);
}

std::vector<LatentVector> load_latents(const fs::path& path) {
  require_artifact(path);
  return read_latents(path);
}

std::map<std::string, std::string> stamp(const PipelineConfig& cfg) { return {{"config_hash", cfg.hash}}; }

void write_losses(const std::vector<double>& losses, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path);
  f << std::setprecision(10) << "epoch,loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) f << e + 1 << ',' << losses[e] << '\n';
  if (!f) throw PipelineError("write failed: " + path.string());
}

const char* const kTargets[] = {"thinning", "thickening"};

}  // namespace

PipelineConfig PipelineConfig::from_config(const Config& config) {
  PipelineConfig c;
  c.raw = config;
  c.hash = config.hash();
  c.grid.height = static_cast<int>(config.get_int("grid.height", c.grid.height));
  c.grid.width = static_cast<int>(config.get_int("grid.width", c.grid.width));
  if (config.has("grid.origin")) c.grid.origin = config.get_vec2("grid.origin");
  c.grid.spacing = config.get_double("grid.spacing", c.grid.spacing);
  try {
    c.grid.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("[grid]: ") + e.what());
  }

  auto count = [&](const std::string& key, std::size_t fallback) {
    const long long v = config.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  auto seed = [&](const std::string& key, std::uint64_t fallback) {
    return static_cast<std::uint64_t>(config.get_int(key, static_cast<long long>(fallback)));
  };
  c.plan.n_train = count("sampling.n_train", c.plan.n_train);
  c.plan.n_test = count("sampling.n_test", c.plan.n_test);
  c.plan.seed_train = seed("sampling.seed_train", c.plan.seed_train);
  c.plan.seed_test = seed("sampling.seed_test", c.plan.seed_test);
  c.plan.stratify = config.get_bool("sampling.stratify", c.plan.stratify);
  c.plan.max_retries = count("sampling.max_retries", c.plan.max_retries);
  c.n_decoder_extra = count("sampling.n_decoder_extra", c.n_decoder_extra);
  c.seed_decoder_extra = seed("sampling.seed_decoder_extra", c.seed_decoder_extra);
  if (c.plan.n_train < 2) throw ConfigError("sampling.n_train must be at least 2");

  c.oracle = OracleConfig::from_config(config);
  c.autodecoder = AutoDecoderConfig::from_config(config);
  c.iaism = IaismConfig::from_config(config);
  c.iaism_augment = config.get_bool("iaism.augment", c.iaism_augment);
  c.kriging = KrigingOptions::from_config(config);
  c.optimizer = OptimizerConfig::from_config(config);
  const PixelBox& b = c.optimizer.line_box;
  if (b.r0 < 1 || b.c0 < 1 || b.r1 > c.grid.height - 2 || b.c1 > c.grid.width - 2)
    throw ConfigError("optimizer.line_box does not fit the grid");
  return c;
}

Config default_pipeline_config() { return Config::from_string(detail::kPipelineConfig); }

PipelineConfig PipelineConfig::from_file(const fs::path& path) { return from_config(Config::from_file(path)); }

std::vector<const ManifestRecord*> Manifest::split(const std::string& tag) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records)
    if (r.split == tag) out.push_back(&r);
  return out;
}

const ManifestRecord& Manifest::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return r;
  throw PipelineError("manifest has no record '" + id + "'");
}

void write_manifest(const Manifest& m, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw PipelineError("cannot write " + path.string());
  f << kManifestHeader << '\n';
  for (const auto& r : m.records)
    f << r.id << '\t' << r.split << '\t' << r.bits << '\t' << format_params(r.params) << '\t' << r.sdf_path << '\t'
      << (r.field_path.empty() ? "-" : r.field_path) << '\t' << format_double(r.max_thinning) << '\t'
      << format_double(r.max_thickening) << '\t' << r.seed << '\t' << r.config_hash << '\n';
  if (!f) throw PipelineError("write failed: " + path.string());
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw MissingArtifact(path);
  std::string line;
  if (!std::getline(f, line) || line != kManifestHeader) throw PipelineError(path.string() + ": bad manifest header");
  Manifest m;
  std::set<std::string> ids;
  for (int n = 2; std::getline(f, line); ++n) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream in(line);
    std::string col;
    while (std::getline(in, col, '\t')) cols.push_back(col);
    if (cols.size() != 10)
      throw PipelineError(path.string() + ":" + std::to_string(n) + ": expected 10 columns, got " +
                          std::to_string(cols.size()));
    ManifestRecord r;
    r.id = cols[0];
    r.split = cols[1];
    if (r.split != "train" && r.split != "test" && r.split != "decoder-extra")
      throw PipelineError(path.string() + ":" + std::to_string(n) + ": unknown split '" + r.split + "'");
    r.bits = static_cast<unsigned>(std::stoul(cols[2]));
    r.params = parse_params(cols[3]);
    r.sdf_path = cols[4];
    r.field_path = cols[5] == "-" ? "" : cols[5];
    r.max_thinning = parse_double(cols[6], "max_thinning");
    r.max_thickening = parse_double(cols[7], "max_thickening");
    r.seed = std::stoull(cols[8]);
    r.config_hash = cols[9];
    if (!ids.insert(r.id).second) throw PipelineError(path.string() + ": duplicate id '" + r.id + "'");
    m.records.push_back(std::move(r));
  }
  return m;
}

void require_artifact(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact(path);
}

Manifest stage_sample(const PipelineConfig& cfg, const Workspace& ws) {
  const ReferenceGeometry ref = build_reference();
  const auto [train, test] = generate_splits(cfg.plan, ref);
  const std::vector<BlankDesign> extra =
      cfg.n_decoder_extra > 0
          ? sample_designs(cfg.n_decoder_extra, cfg.seed_decoder_extra, ref, cfg.plan.stratify, cfg.plan.max_retries)
          : std::vector<BlankDesign>{};

  Manifest m;
  std::vector<const BlankDesign*> designs;
  auto add = [&](const std::vector<BlankDesign>& ds, const std::string& split, const std::string& prefix,
                 std::uint64_t seed) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      ManifestRecord r;
      r.id = prefix + zero_pad(i, 4);
      r.split = split;
      r.bits = ds[i].choices.bits();
      r.params = ds[i].params;
      r.sdf_path = "sdf/" + r.id + ".fgrd";
      r.seed = seed;
      r.config_hash = cfg.hash;
      m.records.push_back(std::move(r));
      designs.push_back(&ds[i]);
    }
  };
  add(train, "train", "train-", cfg.plan.seed_train);
  add(test, "test", "test-", cfg.plan.seed_test);
  add(extra, "decoder-extra", "extra-", cfg.seed_decoder_extra);

  fs::create_directories(ws.root / "sdf");
  parallel_for(m.records.size(), [&](std::size_t i) {
    write_grid(rasterize_sdf(build_contour(*designs[i], ref), cfg.grid), ws.root / m.records[i].sdf_path);
  });
  write_manifest(m, ws.manifest());
  std::ofstream f(ws.config());
  f << cfg.raw.canonical();
  if (!f) throw PipelineError("write failed: " + ws.config().string());
  return m;
}

Manifest stage_simulate(const PipelineConfig& cfg, const Workspace& ws) {
  Manifest m = load_checked_manifest(cfg, ws);
  for (const auto& r : m.records) require_artifact(ws.root / r.sdf_path);
  fs::create_directories(ws.root / "field");
  parallel_for(m.records.size(), [&](std::size_t i) {
    ManifestRecord& r = m.records[i];
    const ThinningResult t = simulate(read_grid(ws.root / r.sdf_path), cfg.oracle);
    r.field_path = "field/" + r.id + ".fgrd";
    write_grid(t.field, ws.root / r.field_path);
    r.max_thinning = t.maxima.thinning;
    r.max_thickening = t.maxima.thickening;
  });
  write_manifest(m, ws.manifest());
  return m;
}

std::vector<double> stage_train_autodecoder(const PipelineConfig& cfg, const Workspace& ws) {
  const Manifest m = load_checked_manifest(cfg, ws);
  std::vector<const ManifestRecord*> recs = m.split("train");
  for (const auto* r : m.split("decoder-extra")) recs.push_back(r);
  std::vector<ScalarGrid> shapes;
  for (const auto* r : recs) shapes.push_back(load_grid(ws, r->sdf_path));
  AutoDecoderTraining t = train_autodecoder(shapes, cfg.autodecoder);
  fs::create_directories(ws.decoder().parent_path());
  fs::create_directories(ws.train_latents().parent_path());
  save_decoder(*t.decoder, ws.decoder(), stamp(cfg));
  write_latents(t.latents, ws.train_latents());
  write_losses(t.loss_history, ws.reports() / "autodecoder_loss.csv");
  return t.loss_history;
}

void stage_infer_latents(const PipelineConfig& cfg, const Workspace& ws) {
  const Manifest m = load_checked_manifest(cfg, ws);
  require_artifact(ws.decoder());
  std::vector<ScalarGrid> sdfs;
  for (const auto* r : m.split("test")) sdfs.push_back(load_grid(ws, r->sdf_path));
  auto dec = load_decoder(ws.decoder());
  const LatentInference inf =
      infer_latents(*dec, sdfs, cfg.autodecoder.infer_steps, cfg.autodecoder.infer_lr, cfg.autodecoder.seed,
                    cfg.autodecoder);
  fs::create_directories(ws.test_latents().parent_path());
  write_latents(inf.latents, ws.test_latents());
}

std::vector<double> stage_train_iaism(const PipelineConfig& cfg, const Workspace& ws) {
  const Manifest m = load_checked_manifest(cfg, ws);
  std::vector<FieldPair> pairs;
  for (const auto* r : simulated(m, ws, "train"))
    pairs.push_back({load_grid(ws, r->sdf_path), load_grid(ws, r->field_path)});
  IaismTraining t = train_iaism(pairs, cfg.iaism_augment, cfg.iaism);
  fs::create_directories(ws.iaism().parent_path());
  save_iaism(*t.net, ws.iaism(), stamp(cfg));
  write_losses(t.loss_history, ws.reports() / "iaism_loss.csv");
  return t.loss_history;
}

void stage_train_saism(const PipelineConfig& cfg, const Workspace& ws) {
  const Manifest m = load_checked_manifest(cfg, ws);
  const auto recs = simulated(m, ws, "train");
  const auto latents = load_latents(ws.train_latents());
  if (latents.size() < recs.size())
    throw PipelineError("latent table has " + std::to_string(latents.size()) + " rows for " +
                        std::to_string(recs.size()) + " training samples");
  Samples x;
  std::vector<double> y[2];
  for (std::size_t i = 0; i < recs.size(); ++i) {
    x.emplace_back(latents[i].begin(), latents[i].end());
    y[0].push_back(recs[i]->max_thinning);
    y[1].push_back(recs[i]->max_thickening);
  }
  fs::create_directories(ws.root / "models");
  for (int t = 0; t < 2; ++t) {
    save_rbf(rbf_fit(x, y[t]), ws.saism("rbf", kTargets[t]));
    save_kriging(kriging_fit(x, y[t], cfg.kriging), ws.saism("kriging", kTargets[t]));
  }
}

EvalReport stage_evaluate(const PipelineConfig& cfg, const Workspace& ws) {
  const Manifest m = load_checked_manifest(cfg, ws);
  const auto recs = simulated(m, ws, "test");
  const auto latents = load_latents(ws.test_latents());
  if (latents.size() != recs.size())
    throw PipelineError("test latent table has " + std::to_string(latents.size()) + " rows for " +
                        std::to_string(recs.size()) + " test samples");
  for (const char* kind : {"rbf", "kriging"})
    for (const char* target : kTargets) require_artifact(ws.saism(kind, target));
  require_artifact(ws.iaism());
  require_artifact(ws.decoder());

  EvalReport r;
  r.split = "test";
  std::vector<ScalarGrid> sdfs;
  for (const auto* rec : recs) {
    r.ids.push_back(rec->id);
    r.truth.push_back({rec->max_thinning, rec->max_thickening});
    sdfs.push_back(load_grid(ws, rec->sdf_path));
  }

  const RbfModel rbf[2] = {load_rbf(ws.saism("rbf", kTargets[0])), load_rbf(ws.saism("rbf", kTargets[1]))};
  const KrigingModel krg[2] = {load_kriging(ws.saism("kriging", kTargets[0])),
                               load_kriging(ws.saism("kriging", kTargets[1]))};
  SurrogatePredictions p_rbf{"RBF", {}}, p_krg{"Kriging", {}}, p_ia{"IAISM", {}};
  for (const auto& z : latents) {
    const std::vector<double> q(z.begin(), z.end());
    p_rbf.predicted.push_back({rbf[0].predict(q), rbf[1].predict(q)});
    p_krg.predicted.push_back({krg[0].predict(q), krg[1].predict(q)});
  }
  auto net = load_iaism(ws.iaism());
  for (const auto& s : sdfs) p_ia.predicted.push_back(predict_maxima(*net, s));
  r.predictions = {p_rbf, p_krg, p_ia};
  r.surrogates = evaluate_surrogates(r.truth, r.predictions);

  auto dec = load_decoder(ws.decoder());
  std::vector<ScalarGrid> decoded;
  for (const auto& z : latents) decoded.push_back(decode(*dec, z));
  r.reconstructions = {evaluate_reconstruction("Auto-decoder", sdfs, decoded)};

  fs::create_directories(ws.reports());
  write_report_csv(r, ws.reports() / "evaluation.csv");
  std::ofstream f(ws.reports() / "evaluation.txt");
  f << format_report(r) << "\nconfig " << cfg.hash << '\n';
  if (!f) throw PipelineError("write failed: " + (ws.reports() / "evaluation.txt").string());
  return r;
}

std::vector<OptimizationTrace> stage_optimize(const PipelineConfig& cfg, const Workspace& ws) {
  const Manifest m = load_checked_manifest(cfg, ws);
  require_artifact(ws.decoder());
  require_artifact(ws.iaism());
  const auto recs = simulated(m, ws, "train");
  const auto latents = load_latents(ws.train_latents());
  if (latents.size() < recs.size()) throw PipelineError("latent table is shorter than the training split");
  std::vector<Maxima> maxima;
  for (const auto* r : recs) maxima.push_back({r->max_thinning, r->max_thickening});
  const LatentVector start =
      select_start_latent(std::vector<LatentVector>(latents.begin(), latents.begin() + recs.size()), maxima);

  auto dec = load_decoder(ws.decoder());
  auto net = load_iaism(ws.iaism());
  if (!(dec->spec() == net->spec())) throw PipelineError("decoder and surrogate grids differ");
  fs::create_directories(ws.optimized());
  std::vector<OptimizationTrace> traces;
  std::ofstream summary(ws.optimized() / "summary.txt");
  summary << "config " << cfg.hash << '\n';
  for (const std::uint64_t seed : cfg.optimizer.seeds) {
    OptimizationTrace t = optimise(start, *dec, *net, cfg.optimizer, seed);
    t.validation = validate(*dec, t.final_latent, cfg.oracle);
    const std::string stem = "seed" + std::to_string(seed);
    write_trace_csv(t, ws.optimized() / (stem + "_trace.csv"));
    write_grid(decode(*dec, t.final_latent), ws.optimized() / (stem + "_sdf.fgrd"));
    std::ofstream pts(ws.optimized() / (stem + "_contour.csv"));
    pts << std::setprecision(10) << "x_mm,y_mm\n";
    for (const Vec2& p : t.validation->contour.points) pts << p.x << ',' << p.y << '\n';
    summary << std::setprecision(6) << stem << ": loss " << t.loss.front() << " -> " << t.loss.back()
            << (t.aborted ? " (aborted)" : "") << ", oracle thinning " << t.validation->oracle.maxima.thinning
            << ", thickening " << t.validation->oracle.maxima.thickening << ", "
            << (t.validation->pass ? "PASS" : "FAIL " + t.validation->reason) << '\n';
    traces.push_back(std::move(t));
  }
  if (!summary) throw PipelineError("write failed: " + (ws.optimized() / "summary.txt").string());
  return traces;
}

std::size_t stage_export(const PipelineConfig& cfg, const Workspace& ws, const std::string& format) {
  if (format != "csv" && format != "pgm") throw ConfigError("export format must be csv or pgm, got '" + format + "'");
  const Manifest m = load_checked_manifest(cfg, ws);
  fs::create_directories(ws.exports());
  std::size_t n = 0;
  for (const auto& r : m.records) {
    std::vector<std::pair<std::string, std::string>> grids{{r.sdf_path, "sdf"}};
    if (r.simulated()) grids.emplace_back(r.field_path, "field");
    for (const auto& [rel, tag] : grids) {
      const ScalarGrid g = load_grid(ws, rel);
      const fs::path out = ws.exports() / (r.id + "_" + tag + "." + format);
      if (format == "csv")
        export_csv(g, out);
      else
        export_pgm(g, out);
      ++n;
    }
  }
  return n;
}

}  // namespace blankopt
