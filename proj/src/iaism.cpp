#include "blankopt/iaism.hpp"

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

std::vector<StageDims> encoder_dims(int height, int width) {
  std::vector<StageDims> dims;
  StageDims d{height, width};
  for (std::size_t i = 0; i < kEncoderKernels.size(); ++i) {
    const KernelSpec& k = kEncoderKernels[i];
    d = {nn::conv_out(d.h, k.kh, k.sh, k.ph), nn::conv_out(d.w, k.kw, k.sw, k.pw)};
    if (d.h < 1 || d.w < 1)
      throw ShapeError("enc" + std::to_string(i + 1) + ": output collapses for input " + std::to_string(height) +
                       " x " + std::to_string(width));
    dims.push_back(d);
  }
  return dims;
}

int output_padding(int in, int out, int k, int s, int p, const std::string& layer) {
  const int op = out - nn::transpose_out(in, k, s, p, 0);
  if (op < 0 || op >= s)
    throw ShapeError(layer + ": cannot map " + std::to_string(in) + " onto " + std::to_string(out));
  return op;
}

void IaismConfig::validate() const {
  if (channels.size() != 6) throw ConfigError("iaism.channels needs 6 values");
  for (int c : channels)
    if (c < 1) throw ConfigError("iaism.channels must be positive");
  if (res_blocks < 0 || reduction < 1 || epochs < 0 || batch < 1 || !(lr > 0.0))
    throw ConfigError("invalid iaism training settings");
}

IaismConfig IaismConfig::from_config(const Config& config) {
  IaismConfig c;
  if (config.has("iaism.channels")) c.channels = config.get_ints("iaism.channels");
  c.res_blocks = static_cast<int>(config.get_int("iaism.res_blocks", c.res_blocks));
  c.reduction = static_cast<int>(config.get_int("iaism.reduction", c.reduction));
  c.epochs = static_cast<int>(config.get_int("iaism.epochs", c.epochs));
  c.batch = static_cast<int>(config.get_int("iaism.batch", c.batch));
  c.lr = config.get_double("iaism.lr", c.lr);
  c.lambda1 = config.get_double("iaism.lambda1", c.lambda1);
  c.lambda2 = config.get_double("iaism.lambda2", c.lambda2);
  c.seed = static_cast<std::uint64_t>(config.get_int("iaism.seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

template <typename T>
MaskResSEUNet<T>::MaskResSEUNet(const GridSpec& spec, const std::vector<int>& channels, int res_blocks,
                                int reduction)
    : spec_(spec),
      channels_(channels),
      reduction_(reduction),
      dims_(encoder_dims(spec.height, spec.width)),
      up_(spec.height, spec.width),
      final_("final", 2 * (channels.empty() ? 1 : channels[0]) + 1, 1, 5, 5, 1, 1, 2, 2) {
  if (channels.size() != 6) throw ShapeError("the surrogate needs 6 encoder channel counts");
  int cin = 1;
  for (std::size_t i = 0; i < 6; ++i) {
    const KernelSpec& k = kEncoderKernels[i];
    enc_.push_back(std::make_unique<nn::ConvBnRelu<T>>("enc" + std::to_string(i + 1), cin, channels[i], k.kh, k.kw,
                                                       k.sh, k.sw, k.ph, k.pw));
    cin = channels[i];
  }
  for (int b = 0; b < res_blocks; ++b)
    res_.push_back(std::make_unique<nn::ResSEBlock<T>>("res" + std::to_string(b + 1), channels[5], reduction));
  // Stage i maps encoder layer i's output dims back onto layer i-1's.
  for (int i = 6; i >= 2; --i) {
    const KernelSpec& k = kEncoderKernels[static_cast<std::size_t>(i - 1)];
    const StageDims in = dims_[static_cast<std::size_t>(i - 1)];
    const StageDims out = dims_[static_cast<std::size_t>(i - 2)];
    const std::string name = "dec" + std::to_string(i);
    const int oh = output_padding(in.h, out.h, k.kh, k.sh, k.ph, name);
    const int ow = output_padding(in.w, out.w, k.kw, k.sw, k.pw, name);
    const int dec_in = i == 6 ? channels[5] : 2 * channels[static_cast<std::size_t>(i - 1)];
    dec_.push_back(std::make_unique<nn::ConvTBnRelu<T>>(name, dec_in, channels[static_cast<std::size_t>(i - 2)], k.kh,
                                                        k.kw, k.sh, k.sw, k.ph, k.pw, oh, ow));
  }
}

template <typename T>
void MaskResSEUNet<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& l : enc_) l->init(rng);
  for (auto& l : res_) l->init(rng);
  for (auto& l : dec_) l->init(rng);
  final_.init(rng);
}

template <typename T>
Tensor<T> MaskResSEUNet<T>::forward(const Tensor<T>& sdf) {
  if (sdf.c != 1 || sdf.h != spec_.height || sdf.w != spec_.width)
    throw ShapeError("surrogate input " + sdf.shape_str() + " does not match its grid spec");
  mask_ = Tensor<T>(sdf.n, 1, sdf.h, sdf.w);
  Tensor<T> x(sdf.n, 1, sdf.h, sdf.w);
  for (std::size_t i = 0; i < sdf.size(); ++i) {
    mask_.data[i] = sdf.data[i] < T(0) ? T(1) : T(0);
    x.data[i] = static_cast<T>(sdf.data[i] * kSdfScale);
  }
  std::vector<Tensor<T>> e(6);
  e[0] = enc_[0]->forward(x);
  for (std::size_t i = 1; i < 6; ++i) e[i] = enc_[i]->forward(e[i - 1]);
  Tensor<T> h = e[5];
  for (auto& r : res_) h = r->forward(h);
  h = dec_[0]->forward(h);
  for (std::size_t s = 1; s < dec_.size(); ++s) h = dec_[s]->forward(nn::concat_channels(h, e[5 - s]));
  h = up_.forward(nn::concat_channels(h, e[0]));
  Tensor<T> y = final_.forward(nn::concat_channels(h, x));
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = mask_.data[i] != T(0) ? y.data[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> MaskResSEUNet<T>::backward(const Tensor<T>& dfield) {
  nn::require_same_shape(dfield, mask_, "surrogate backward");
  Tensor<T> g = dfield;
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= mask_.data[i];
  g = final_.backward(g);
  Tensor<T> gh, gx;
  nn::split_channels(g, g.c - 1, gh, gx);
  g = up_.backward(gh);

  // Skip gradients for encoder outputs 1..5.
  std::vector<Tensor<T>> ge(6);
  Tensor<T> gd;
  nn::split_channels(g, channels_[0], gd, ge[0]);
  for (std::size_t s = dec_.size() - 1; s >= 1; --s) {
    g = dec_[s]->backward(gd);
    nn::split_channels(g, g.c / 2, gd, ge[5 - s]);
  }
  g = dec_[0]->backward(gd);
  for (auto it = res_.rbegin(); it != res_.rend(); ++it) g = (*it)->backward(g);
  for (std::size_t i = 5; i >= 1; --i) {
    g = enc_[i]->backward(g);
    nn::add_into(g, ge[i - 1]);
  }
  g = enc_[0]->backward(g);
  nn::add_into(g, gx);
  for (auto& v : g.data) v = static_cast<T>(v * kSdfScale);
  return g;
}

template <typename T>
void MaskResSEUNet<T>::collect_params(std::vector<nn::Param<T>*>& out) {
  for (auto& l : enc_) l->collect_params(out);
  for (auto& l : res_) l->collect_params(out);
  for (auto& l : dec_) l->collect_params(out);
  final_.collect_params(out);
}

template <typename T>
void MaskResSEUNet<T>::collect_buffers(std::vector<nn::Buffer<T>>& out) {
  for (auto& l : enc_) l->collect_buffers(out);
  for (auto& l : res_) l->collect_buffers(out);
  for (auto& l : dec_) l->collect_buffers(out);
}

template <typename T>
void MaskResSEUNet<T>::collect_specs(std::vector<nn::LayerSpec>& out) const {
  for (auto& l : enc_) l->collect_specs(out);
  for (auto& l : res_) l->collect_specs(out);
  for (auto& l : dec_) l->collect_specs(out);
  const int c = 2 * channels_[0];
  out.push_back({nn::LayerType::Resize, 1, 1, 1, 1, 0, 0, 0, 0, c, c, "up"});
  final_.collect_specs(out);
  out.push_back({nn::LayerType::Mask, 1, 1, 1, 1, 0, 0, 0, 0, 1, 1, "mask"});
}

template <typename T>
void MaskResSEUNet<T>::set_training(bool t) {
  nn::Layer<T>::set_training(t);
  for (auto& l : enc_) l->set_training(t);
  for (auto& l : res_) l->set_training(t);
  for (auto& l : dec_) l->set_training(t);
  final_.set_training(t);
}

template <typename T>
void MaskResSEUNet<T>::set_param_grad(bool g) {
  nn::Layer<T>::set_param_grad(g);
  for (auto& l : enc_) l->set_param_grad(g);
  for (auto& l : res_) l->set_param_grad(g);
  for (auto& l : dec_) l->set_param_grad(g);
  final_.set_param_grad(g);
}

template class MaskResSEUNet<float>;
template class MaskResSEUNet<double>;

std::vector<FieldPair> augment_flips(const std::vector<FieldPair>& pairs) {
  std::vector<FieldPair> out;
  out.reserve(pairs.size() * 4);
  for (const auto& p : pairs) {
    out.push_back(p);
    for (FlipAxis a : {FlipAxis::Horizontal, FlipAxis::Vertical, FlipAxis::Both})
      out.push_back({flip(p.sdf, a), flip(p.field, a)});
  }
  return out;
}

IaismTraining train_iaism(const std::vector<FieldPair>& pairs, bool augment, const IaismConfig& cfg) {
  cfg.validate();
  if (pairs.size() < 2) throw ShapeError("surrogate training needs at least 2 pairs");
  const GridSpec spec = pairs.front().sdf.spec;
  for (const auto& p : pairs)
    if (!(p.sdf.spec == spec) || !(p.field.spec == spec)) throw ShapeError("training pairs on different grid specs");
  const std::vector<FieldPair> data = augment ? augment_flips(pairs) : pairs;

  IaismTraining out;
  out.n_pairs = data.size();
  out.net = std::make_unique<Iaism>(spec, cfg.channels, cfg.res_blocks, cfg.reduction);
  out.net->init(cfg.seed);
  out.net->set_training(true);
  auto params = nn::params_of<float>(*out.net);
  nn::Adam<float> opt(params, cfg.lr);
  Rng order_rng(cfg.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch));
      std::vector<const ScalarGrid*> sdfs, fields;
      for (std::size_t k = b0; k < b1; ++k) {
        sdfs.push_back(&data[order[k]].sdf);
        fields.push_back(&data[order[k]].field);
      }
      const Tensor<float> x = nn::grids_to_tensor<float>(sdfs);
      const Tensor<float> y = nn::grids_to_tensor<float>(fields);
      opt.zero_grad();
      const Tensor<float> pred = out.net->forward(x);
      Tensor<float> grad;
      sum += nn::field_loss(pred, y, cfg.lambda1, cfg.lambda2, &grad);
      ++batches;
      out.net->backward(grad);
      opt.step();
    }
    out.loss_history.push_back(sum / static_cast<double>(batches));
  }
  out.net->set_training(false);
  return out;
}

ScalarGrid forward(Iaism& net, const ScalarGrid& sdf) {
  if (!(sdf.spec == net.spec())) throw ShapeError("SDF grid does not match the surrogate's spec");
  net.set_training(false);
  const Tensor<float> y = net.forward(nn::grids_to_tensor<float>({&sdf}));
  return nn::tensor_to_grid(y, 0, sdf.spec, GridKind::ThinningField);
}

Maxima predict_maxima(Iaism& net, const ScalarGrid& sdf) { return maxima(forward(net, sdf)); }

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? " " : "") << v[i];
  return s.str();
}

}  // namespace

void save_iaism(Iaism& net, const std::filesystem::path& path, const std::map<std::string, std::string>& meta) {
  nn::Checkpoint ck;
  ck.meta = meta;
  const GridSpec& s = net.spec();
  ck.meta["model"] = "iaism";
  std::ostringstream grid;
  grid.precision(17);
  grid << s.height << ' ' << s.width << ' ' << s.origin.x << ' ' << s.origin.y << ' ' << s.spacing;
  ck.meta["grid"] = grid.str();
  ck.meta["channels"] = join_ints(net.channels());
  ck.meta["res_blocks"] = std::to_string(net.res_blocks());
  ck.meta["reduction"] = std::to_string(net.reduction());
  nn::store_network(ck, net);
  nn::write_checkpoint(ck, path);
}

std::unique_ptr<Iaism> load_iaism(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  auto get = [&](const std::string& k) {
    const auto it = ck.meta.find(k);
    if (it == ck.meta.end()) throw nn::CheckpointError("checkpoint lacks '" + k + "'");
    return it->second;
  };
  if (get("model") != "iaism") throw nn::CheckpointError("not a surrogate checkpoint: " + path.string());
  GridSpec spec;
  std::istringstream(get("grid")) >> spec.height >> spec.width >> spec.origin.x >> spec.origin.y >> spec.spacing;
  std::vector<int> channels;
  std::istringstream cs(get("channels"));
  for (int c; cs >> c;) channels.push_back(c);
  auto net = std::make_unique<Iaism>(spec, channels, std::stoi(get("res_blocks")), std::stoi(get("reduction")));
  nn::load_network(ck, *net);
  net->set_training(false);
  return net;
}

}  // namespace blankopt
