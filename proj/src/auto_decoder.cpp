#include "blankopt/auto_decoder.hpp"

#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "blankopt/nn/adam.hpp"
#include "blankopt/nn/checkpoint.hpp"
#include "blankopt/nn/loss.hpp"
#include "blankopt/nn/network.hpp"
#include "blankopt/random.hpp"

namespace blankopt {

using nn::ShapeError;
using nn::Tensor;

DecoderLayout decoder_layout(int height, int width) {
  DecoderLayout L;
  L.outputs.resize(kDecoderKernels.size());
  L.output_padding.resize(kDecoderKernels.size());
  StageDims out{height, width};
  for (std::size_t i = kDecoderKernels.size(); i-- > 0;) {
    const KernelSpec& k = kDecoderKernels[i];
    const std::string name = "up" + std::to_string(i + 1);
    StageDims in{nn::conv_out(out.h, k.kh, k.sh, k.ph), nn::conv_out(out.w, k.kw, k.sw, k.pw)};
    if (in.h < 1 || in.w < 1)
      throw ShapeError(name + ": grid " + std::to_string(height) + " x " + std::to_string(width) + " is too small");
    L.outputs[i] = out;
    L.output_padding[i] = {output_padding(in.h, out.h, k.kh, k.sh, k.ph, name),
                           output_padding(in.w, out.w, k.kw, k.sw, k.pw, name)};
    out = in;
  }
  L.seed = out;
  return L;
}

void AutoDecoderConfig::validate() const {
  if (channels.size() != 4) throw ConfigError("autodecoder.channels needs 4 values");
  for (int c : channels)
    if (c < 1) throw ConfigError("autodecoder.channels must be positive");
  if (res_blocks < 0 || reduction < 1 || epochs < 0 || batch < 1 || !(lr > 0.0) || !(init_std >= 0.0) ||
      infer_steps < 0 || !(infer_lr > 0.0))
    throw ConfigError("invalid autodecoder settings");
}

AutoDecoderConfig AutoDecoderConfig::from_config(const Config& config) {
  AutoDecoderConfig c;
  if (config.has("autodecoder.channels")) c.channels = config.get_ints("autodecoder.channels");
  c.res_blocks = static_cast<int>(config.get_int("autodecoder.res_blocks", c.res_blocks));
  c.reduction = static_cast<int>(config.get_int("autodecoder.reduction", c.reduction));
  c.epochs = static_cast<int>(config.get_int("autodecoder.epochs", c.epochs));
  c.batch = static_cast<int>(config.get_int("autodecoder.batch", c.batch));
  c.lr = config.get_double("autodecoder.lr", c.lr);
  c.lambda1 = config.get_double("autodecoder.lambda1", c.lambda1);
  c.lambda2 = config.get_double("autodecoder.lambda2", c.lambda2);
  c.seed = static_cast<std::uint64_t>(config.get_int("autodecoder.seed", static_cast<long long>(c.seed)));
  c.init_std = config.get_double("autodecoder.init_std", c.init_std);
  c.infer_steps = static_cast<int>(config.get_int("autodecoder.infer_steps", c.infer_steps));
  c.infer_lr = config.get_double("autodecoder.infer_lr", c.infer_lr);
  c.validate();
  return c;
}

template <typename T>
SdfDecoder<T>::SdfDecoder(const GridSpec& spec, const std::vector<int>& channels, int res_blocks, int reduction)
    : spec_(spec),
      channels_(channels),
      reduction_(reduction),
      layout_(decoder_layout(spec.height, spec.width)),
      fc_("fc", kLatentDim, (channels.empty() ? 1 : channels[0]) * layout_.seed.h * layout_.seed.w),
      stem_("stem", channels.empty() ? 1 : channels[0], channels.empty() ? 1 : channels[0], 3, 3, 1, 1, 1, 1) {
  if (channels.size() != 4) throw ShapeError("the decoder needs 4 channel counts");
  for (int b = 0; b < res_blocks; ++b)
    res_.push_back(std::make_unique<nn::ResSEBlock<T>>("res" + std::to_string(b + 1), channels[0], reduction));
  for (std::size_t i = 0; i < kDecoderKernels.size(); ++i) {
    const KernelSpec& k = kDecoderKernels[i];
    const StageDims op = layout_.output_padding[i];
    const std::string name = "up" + std::to_string(i + 1);
    if (i + 1 < kDecoderKernels.size())
      up_.push_back(std::make_unique<nn::ConvTBnRelu<T>>(name, channels[i], channels[i + 1], k.kh, k.kw, k.sh, k.sw,
                                                         k.ph, k.pw, op.h, op.w));
    else
      out_ = std::make_unique<nn::ConvTranspose2d<T>>(name, channels[i], 1, k.kh, k.kw, k.sh, k.sw, k.ph, k.pw, op.h,
                                                      op.w);
  }
}

template <typename T>
void SdfDecoder<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  fc_.init(rng);
  stem_.init(rng);
  for (auto& l : res_) l->init(rng);
  for (auto& l : up_) l->init(rng);
  out_->init(rng);
}

template <typename T>
Tensor<T> SdfDecoder<T>::forward(const Tensor<T>& z) {
  if (static_cast<int>(z.sample_size()) != kLatentDim)
    throw ShapeError("latent length " + std::to_string(z.sample_size()) + ", expected " + std::to_string(kLatentDim));
  Tensor<T> h = fc_.forward(z);
  h.c = channels_[0];
  h.h = layout_.seed.h;
  h.w = layout_.seed.w;
  h = stem_.forward(h);
  for (auto& r : res_) h = r->forward(h);
  for (auto& u : up_) h = u->forward(h);
  return out_->forward(h);
}

template <typename T>
Tensor<T> SdfDecoder<T>::backward(const Tensor<T>& dy) {
  Tensor<T> g = out_->backward(dy);
  for (auto it = up_.rbegin(); it != up_.rend(); ++it) g = (*it)->backward(g);
  for (auto it = res_.rbegin(); it != res_.rend(); ++it) g = (*it)->backward(g);
  g = stem_.backward(g);
  g.c = static_cast<int>(g.sample_size());
  g.h = g.w = 1;
  return fc_.backward(g);
}

template <typename T>
void SdfDecoder<T>::collect_params(std::vector<nn::Param<T>*>& out) {
  fc_.collect_params(out);
  stem_.collect_params(out);
  for (auto& l : res_) l->collect_params(out);
  for (auto& l : up_) l->collect_params(out);
  out_->collect_params(out);
}

template <typename T>
void SdfDecoder<T>::collect_buffers(std::vector<nn::Buffer<T>>& out) {
  stem_.collect_buffers(out);
  for (auto& l : res_) l->collect_buffers(out);
  for (auto& l : up_) l->collect_buffers(out);
}

template <typename T>
void SdfDecoder<T>::collect_specs(std::vector<nn::LayerSpec>& out) const {
  fc_.collect_specs(out);
  stem_.collect_specs(out);
  for (auto& l : res_) l->collect_specs(out);
  for (auto& l : up_) l->collect_specs(out);
  out_->collect_specs(out);
}

template <typename T>
void SdfDecoder<T>::set_training(bool t) {
  nn::Layer<T>::set_training(t);
  fc_.set_training(t);
  stem_.set_training(t);
  for (auto& l : res_) l->set_training(t);
  for (auto& l : up_) l->set_training(t);
  out_->set_training(t);
}

template <typename T>
void SdfDecoder<T>::set_param_grad(bool g) {
  nn::Layer<T>::set_param_grad(g);
  fc_.set_param_grad(g);
  stem_.set_param_grad(g);
  for (auto& l : res_) l->set_param_grad(g);
  for (auto& l : up_) l->set_param_grad(g);
  out_->set_param_grad(g);
}

template class SdfDecoder<float>;
template class SdfDecoder<double>;

namespace {

void draw_latents(nn::Param<float>& table, std::size_t rows, double std_dev, Rng& rng) {
  for (std::size_t i = 0; i < rows * kLatentDim; ++i) table.value[i] = static_cast<float>(std_dev * rng.normal());
}

}  // namespace

AutoDecoderTraining train_autodecoder(const std::vector<ScalarGrid>& shapes, const AutoDecoderConfig& cfg) {
  cfg.validate();
  if (shapes.empty()) throw ShapeError("decoder training needs at least one shape");
  const GridSpec spec = shapes.front().spec;
  for (const auto& s : shapes)
    if (!(s.spec == spec)) throw ShapeError("training shapes on different grid specs");

  AutoDecoderTraining out;
  out.decoder = std::make_unique<Decoder>(spec, cfg.channels, cfg.res_blocks, cfg.reduction);
  out.decoder->init(cfg.seed);
  out.decoder->set_training(true);
  const std::size_t n = shapes.size();
  nn::Param<float> table("latents", n * kLatentDim);
  Rng rng(mix_seed(cfg.seed, 1));
  draw_latents(table, n, cfg.init_std, rng);

  auto params = nn::params_of<float>(*out.decoder);
  params.push_back(&table);
  nn::Adam<float> opt(params, cfg.lr);
  Rng order_rng(mix_seed(cfg.seed, 2));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t b1 = std::min(n, b0 + static_cast<std::size_t>(cfg.batch));
      const int nb = static_cast<int>(b1 - b0);
      Tensor<float> z(nb, kLatentDim, 1, 1);
      std::vector<const ScalarGrid*> batch;
      for (int k = 0; k < nb; ++k) {
        const std::size_t id = order[b0 + static_cast<std::size_t>(k)];
        std::copy_n(table.value.data() + id * kLatentDim, kLatentDim, z.sample(k));
        batch.push_back(&shapes[id]);
      }
      const Tensor<float> gt = nn::grids_to_tensor<float>(batch, kSdfScale);
      opt.zero_grad();
      const Tensor<float> pred = out.decoder->forward(z);
      Tensor<float> grad;
      sum += nn::field_loss(pred, gt, cfg.lambda1, cfg.lambda2, &grad);
      ++batches;
      const Tensor<float> dz = out.decoder->backward(grad);
      for (int k = 0; k < nb; ++k) {
        float* g = table.grad.data() + order[b0 + static_cast<std::size_t>(k)] * kLatentDim;
        for (int d = 0; d < kLatentDim; ++d) g[d] += dz.sample(k)[d];
      }
      opt.step();
    }
    out.loss_history.push_back(sum / static_cast<double>(batches));
  }
  out.decoder->set_training(false);
  for (std::size_t i = 0; i < n; ++i)
    out.latents.emplace_back(table.value.begin() + static_cast<std::ptrdiff_t>(i * kLatentDim),
                             table.value.begin() + static_cast<std::ptrdiff_t>((i + 1) * kLatentDim));
  return out;
}

ScalarGrid decode(Decoder& decoder, const LatentVector& z) {
  if (z.size() != static_cast<std::size_t>(kLatentDim))
    throw ShapeError("latent length " + std::to_string(z.size()) + ", expected " + std::to_string(kLatentDim));
  decoder.set_training(false);
  Tensor<float> t(1, kLatentDim, 1, 1);
  std::copy(z.begin(), z.end(), t.data.begin());
  return nn::tensor_to_grid(decoder.forward(t), 0, decoder.spec(), GridKind::Sdf, 1.0 / kSdfScale);
}

LatentInference infer_latents(Decoder& decoder, const std::vector<ScalarGrid>& sdfs, int steps, double lr,
                              std::uint64_t seed, const AutoDecoderConfig& cfg) {
  LatentInference out;
  const std::size_t n = sdfs.size();
  if (n == 0) return out;
  std::vector<const ScalarGrid*> ptrs;
  for (const auto& s : sdfs) {
    if (!(s.spec == decoder.spec())) throw ShapeError("SDF grid does not match the decoder's spec");
    ptrs.push_back(&s);
  }
  nn::Param<float> z("latent", n * kLatentDim);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, i));
    for (int d = 0; d < kLatentDim; ++d) z.value[i * kLatentDim + d] = static_cast<float>(cfg.init_std * rng.normal());
  }
  const Tensor<float> gt = nn::grids_to_tensor<float>(ptrs, kSdfScale);
  decoder.set_training(false);
  decoder.set_param_grad(false);
  nn::Adam<float> opt({&z}, lr);
  const int N = static_cast<int>(n);
  for (int step = 0; step < steps; ++step) {
    Tensor<float> zt(N, kLatentDim, 1, 1);
    std::copy(z.value.begin(), z.value.end(), zt.data.begin());
    const Tensor<float> pred = decoder.forward(zt);
    Tensor<float> grad;
    // The batch loss is a mean; scaling by N makes each latent see the
    // gradient of its own loss, so shapes do not interact.
    out.loss_history.push_back(nn::field_loss(pred, gt, cfg.lambda1, cfg.lambda2, &grad));
    for (auto& v : grad.data) v *= static_cast<float>(N);
    const Tensor<float> dz = decoder.backward(grad);
    opt.zero_grad();
    std::copy(dz.data.begin(), dz.data.end(), z.grad.begin());
    opt.step();
  }
  decoder.set_param_grad(true);
  for (std::size_t i = 0; i < n; ++i)
    out.latents.emplace_back(z.value.begin() + static_cast<std::ptrdiff_t>(i * kLatentDim),
                             z.value.begin() + static_cast<std::ptrdiff_t>((i + 1) * kLatentDim));
  return out;
}

LatentVector infer_latent(Decoder& decoder, const ScalarGrid& sdf, int steps, double lr, std::uint64_t seed) {
  return infer_latents(decoder, {sdf}, steps, lr, seed).latents.front();
}

std::vector<LatentVector> interpolate_latents(const LatentVector& z1, const LatentVector& z2, int k) {
  if (z1.size() != z2.size()) throw ShapeError("latents of different lengths");
  std::vector<LatentVector> out;
  for (int i = 1; i <= k; ++i) {
    const double t = static_cast<double>(i) / (k + 1);
    LatentVector z(z1.size());
    for (std::size_t d = 0; d < z.size(); ++d) z[d] = static_cast<float>(z1[d] + t * (z2[d] - z1[d]));
    out.push_back(std::move(z));
  }
  return out;
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? " " : "") << v[i];
  return s.str();
}

constexpr char kLatentMagic[4] = {'L', 'T', 'N', 'T'};
constexpr std::uint16_t kLatentVersion = 1;

}  // namespace

void save_decoder(Decoder& decoder, const std::filesystem::path& path, const std::map<std::string, std::string>& meta) {
  nn::Checkpoint ck;
  ck.meta = meta;
  const GridSpec& s = decoder.spec();
  ck.meta["model"] = "decoder";
  std::ostringstream grid;
  grid.precision(17);
  grid << s.height << ' ' << s.width << ' ' << s.origin.x << ' ' << s.origin.y << ' ' << s.spacing;
  ck.meta["grid"] = grid.str();
  ck.meta["channels"] = join_ints(decoder.channels());
  ck.meta["res_blocks"] = std::to_string(decoder.res_blocks());
  ck.meta["reduction"] = std::to_string(decoder.reduction());
  nn::store_network(ck, decoder);
  nn::write_checkpoint(ck, path);
}

std::unique_ptr<Decoder> load_decoder(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  auto get = [&](const std::string& k) {
    const auto it = ck.meta.find(k);
    if (it == ck.meta.end()) throw nn::CheckpointError("checkpoint lacks '" + k + "'");
    return it->second;
  };
  if (get("model") != "decoder") throw nn::CheckpointError("not a decoder checkpoint: " + path.string());
  GridSpec spec;
  std::istringstream(get("grid")) >> spec.height >> spec.width >> spec.origin.x >> spec.origin.y >> spec.spacing;
  std::vector<int> channels;
  std::istringstream cs(get("channels"));
  for (int c; cs >> c;) channels.push_back(c);
  auto dec = std::make_unique<Decoder>(spec, channels, std::stoi(get("res_blocks")), std::stoi(get("reduction")));
  nn::load_network(ck, *dec);
  dec->set_training(false);
  return dec;
}

void write_latents(const std::vector<LatentVector>& table, const std::filesystem::path& path) {
  const std::uint32_t dim = table.empty() ? kLatentDim : static_cast<std::uint32_t>(table.front().size());
  for (const auto& z : table)
    if (z.size() != dim) throw ShapeError("latent table rows differ in length");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw nn::CheckpointError("cannot write " + path.string());
  const auto rows = static_cast<std::uint32_t>(table.size());
  f.write(kLatentMagic, 4);
  f.write(reinterpret_cast<const char*>(&kLatentVersion), sizeof kLatentVersion);
  f.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  f.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  for (const auto& z : table) f.write(reinterpret_cast<const char*>(z.data()), static_cast<std::streamsize>(dim * 4));
  if (!f) throw nn::CheckpointError("write failed: " + path.string());
}

std::vector<LatentVector> read_latents(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw nn::CheckpointError("cannot open " + path.string());
  char magic[4];
  std::uint16_t version = 0;
  std::uint32_t rows = 0, dim = 0;
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kLatentMagic, 4) != 0) throw nn::CheckpointError("bad magic");
  f.read(reinterpret_cast<char*>(&version), sizeof version);
  f.read(reinterpret_cast<char*>(&rows), sizeof rows);
  f.read(reinterpret_cast<char*>(&dim), sizeof dim);
  if (!f) throw nn::CheckpointError("short read");
  if (version != kLatentVersion) throw nn::CheckpointError("unsupported version " + std::to_string(version));
  std::vector<LatentVector> table(rows, LatentVector(dim));
  for (auto& z : table) {
    f.read(reinterpret_cast<char*>(z.data()), static_cast<std::streamsize>(dim * 4));
    if (!f) throw nn::CheckpointError("short read");
  }
  return table;
}

}  // namespace blankopt
