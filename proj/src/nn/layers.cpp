#include "blankopt/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace blankopt::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

// Upper bound on the column buffer of one GEMM chunk.
constexpr std::size_t kColBudget = std::size_t{24} << 20;

struct Geometry {
  int c, h, w;      // image
  int kh, kw, sh, sw, ph, pw;
  int oh, ow;       // column grid
  std::size_t rows() const { return static_cast<std::size_t>(c) * kh * kw; }
  std::size_t cols() const { return static_cast<std::size_t>(oh) * ow; }
};

// col[(ch*kh+i)*kw+j][off + y*ow+x] = img[ch][y*sh-ph+i][x*sw-pw+j]
template <typename T>
void im2col(const T* img, const Geometry& g, T* col, std::size_t ld, std::size_t off) {
  for (int ch = 0; ch < g.c; ++ch)
    for (int i = 0; i < g.kh; ++i)
      for (int j = 0; j < g.kw; ++j) {
        T* row = col + ((static_cast<std::size_t>(ch) * g.kh + i) * g.kw + j) * ld + off;
        const T* plane = img + static_cast<std::size_t>(ch) * g.h * g.w;
        for (int y = 0; y < g.oh; ++y) {
          const int iy = y * g.sh - g.ph + i;
          T* dst = row + static_cast<std::size_t>(y) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (int x = 0; x < g.ow; ++x) {
            const int ix = x * g.sw - g.pw + j;
            dst[x] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
}

// Adjoint of im2col: accumulates columns back into the image.
template <typename T>
void col2im(const T* col, const Geometry& g, T* img, std::size_t ld, std::size_t off) {
  for (int ch = 0; ch < g.c; ++ch)
    for (int i = 0; i < g.kh; ++i)
      for (int j = 0; j < g.kw; ++j) {
        const T* row = col + ((static_cast<std::size_t>(ch) * g.kh + i) * g.kw + j) * ld + off;
        T* plane = img + static_cast<std::size_t>(ch) * g.h * g.w;
        for (int y = 0; y < g.oh; ++y) {
          const int iy = y * g.sh - g.ph + i;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(y) * g.ow;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int x = 0; x < g.ow; ++x) {
            const int ix = x * g.sw - g.pw + j;
            if (ix >= 0 && ix < g.w) dst[ix] += src[x];
          }
        }
      }
}

// Copies samples [s0, s0+nb) of an NCHW tensor into a channel-major matrix
// [c][nb*plane], and back.
template <typename T>
void gather(const Tensor<T>& t, int s0, int nb, T* out) {
  const std::size_t p = t.plane(), ld = p * nb;
  for (int s = 0; s < nb; ++s)
    for (int ch = 0; ch < t.c; ++ch) {
      const T* src = t.sample(s0 + s) + ch * p;
      std::copy(src, src + p, out + ch * ld + s * p);
    }
}

template <typename T>
void scatter(const T* in, int s0, int nb, Tensor<T>& t) {
  const std::size_t p = t.plane(), ld = p * nb;
  for (int s = 0; s < nb; ++s)
    for (int ch = 0; ch < t.c; ++ch) {
      const T* src = in + ch * ld + s * p;
      std::copy(src, src + p, t.sample(s0 + s) + ch * p);
    }
}

// Direct convolution for unit column stride and few channel pairs. Inner
// loops run along contiguous rows, avoiding the im2col buffer whose traffic
// dominates when the GEMM is thin.
bool use_direct(const LayerSpec& s) { return s.sw == 1 && s.in_channels * s.out_channels <= 256; }

// Valid output columns j for kernel column b: 0 <= j - pw + b < w.
inline std::pair<int, int> col_span(int b, int pw, int w, int ow) {
  return {std::max(0, pw - b), std::min(ow, w + pw - b)};
}

// y (cout x oh x ow) = conv(x (cin x h x w)); s describes the convolution.
// y is overwritten; bias may be null.
template <typename T>
void direct_forward(const T* x, const T* wt, const T* bias, const LayerSpec& s, int h, int w, int oh, int ow, T* y) {
  const std::size_t op = static_cast<std::size_t>(oh) * ow;
  for (int o = 0; o < s.out_channels; ++o) {
    T* yo = y + o * op;
    std::fill(yo, yo + op, bias ? bias[o] : T(0));
    for (int c = 0; c < s.in_channels; ++c) {
      const T* xc = x + static_cast<std::size_t>(c) * h * w;
      const T* wk = wt + (static_cast<std::size_t>(o) * s.in_channels + c) * s.kh * s.kw;
      for (int i = 0; i < oh; ++i) {
        T* yr = yo + static_cast<std::size_t>(i) * ow;
        for (int a = 0; a < s.kh; ++a) {
          const int iy = i * s.sh - s.ph + a;
          if (iy < 0 || iy >= h) continue;
          const T* xr = xc + static_cast<std::size_t>(iy) * w - s.pw;
          for (int b = 0; b < s.kw; ++b) {
            const T k = wk[a * s.kw + b];
            const auto [j0, j1] = col_span(b, s.pw, w, ow);
            for (int j = j0; j < j1; ++j) yr[j] += k * xr[j + b];
          }
        }
      }
    }
  }
}

// Reductions in a fixed order over eight lanes. Eigen's vectorised
// reductions peel by buffer alignment, so their rounding depends on where
// the heap placed the data.
template <typename T>
T lane_dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  for (int l = 0; i < n; ++i, ++l) acc[l] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
T plane_sum(const T* p, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += p[i + l];
  for (int l = 0; i < n; ++i, ++l) acc[l] += p[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Adjoint of direct_forward. Accumulates into dx (x-shaped) and dw when
// they are non-null; x is only read when dw is requested.
template <typename T>
void direct_backward(const T* x, const T* wt, const T* dy, const LayerSpec& s, int h, int w, int oh, int ow, T* dx,
                     T* dw) {
  const std::size_t op = static_cast<std::size_t>(oh) * ow;
  for (int o = 0; o < s.out_channels; ++o) {
    const T* go = dy + o * op;
    for (int c = 0; c < s.in_channels; ++c) {
      const std::size_t wo = (static_cast<std::size_t>(o) * s.in_channels + c) * s.kh * s.kw;
      const std::size_t xo = static_cast<std::size_t>(c) * h * w;
      for (int i = 0; i < oh; ++i) {
        const T* gr = go + static_cast<std::size_t>(i) * ow;
        for (int a = 0; a < s.kh; ++a) {
          const int iy = i * s.sh - s.ph + a;
          if (iy < 0 || iy >= h) continue;
          const std::size_t ro = xo + static_cast<std::size_t>(iy) * w;
          for (int b = 0; b < s.kw; ++b) {
            const auto [j0, j1] = col_span(b, s.pw, w, ow);
            if (j1 <= j0) continue;
            const std::size_t at = ro + static_cast<std::size_t>(j0 + b - s.pw);
            if (dx) {
              const T k = wt[wo + a * s.kw + b];
              T* dxr = dx + at;
              for (int j = 0; j < j1 - j0; ++j) dxr[j] += k * gr[j0 + j];
            }
            if (dw) dw[wo + a * s.kw + b] += lane_dot(gr + j0, x + at, static_cast<std::size_t>(j1 - j0));
          }
        }
      }
    }
  }
}

// The convolution a transpose layer mirrors: channels swapped.
LayerSpec mirrored(const LayerSpec& s) {
  LayerSpec m = s;
  m.type = LayerType::Conv;
  m.in_channels = s.out_channels;
  m.out_channels = s.in_channels;
  return m;
}


int chunk_samples(std::size_t rows, std::size_t cols, int n) {
  const std::size_t per = std::max<std::size_t>(1, rows * cols * sizeof(float));
  return static_cast<int>(std::clamp<std::size_t>(kColBudget / per, 1, static_cast<std::size_t>(n)));
}

template <typename T>
void kaiming_uniform(std::vector<T>& w, double fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / std::max(1.0, fan_in));
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

const char* layer_type_name(LayerType t) {
  switch (t) {
    case LayerType::Conv: return "conv";
    case LayerType::TransposeConv: return "transpose_conv";
    case LayerType::Linear: return "linear";
    case LayerType::BatchNorm: return "batch_norm";
    case LayerType::Relu: return "relu";
    case LayerType::Sigmoid: return "sigmoid";
    case LayerType::GlobalAvgPool: return "global_avg_pool";
    case LayerType::Resize: return "resize";
    case LayerType::Mask: return "mask";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int cin, int cout, int kh, int kw, int sh, int sw, int ph, int pw)
    : weight_(name + ".weight", static_cast<std::size_t>(cout) * cin * kh * kw),
      bias_(name + ".bias", static_cast<std::size_t>(cout)) {
  spec_ = {LayerType::Conv, kh, kw, sh, sw, ph, pw, 0, 0, cin, cout, std::move(name)};
}

template <typename T>
void Conv2d<T>::init(Rng& rng) {
  kaiming_uniform(weight_.value, static_cast<double>(spec_.in_channels) * spec_.kh * spec_.kw, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  const LayerSpec& s = spec_;
  if (x.c != s.in_channels)
    throw ShapeError(s.name + ": expected " + std::to_string(s.in_channels) + " channels, got " + x.shape_str());
  const int oh = conv_out(x.h, s.kh, s.sh, s.ph), ow = conv_out(x.w, s.kw, s.sw, s.pw);
  if (oh < 1 || ow < 1) throw ShapeError(s.name + ": output collapses for input " + x.shape_str());
  x_ = x;
  Tensor<T> y(x.n, s.out_channels, oh, ow);
  if (use_direct(s)) {
    for (int i = 0; i < x.n; ++i)
      direct_forward(x.sample(i), weight_.value.data(), bias_.value.data(), s, x.h, x.w, oh, ow, y.sample(i));
    return y;
  }
  const Geometry g{x.c, x.h, x.w, s.kh, s.kw, s.sh, s.sw, s.ph, s.pw, oh, ow};
  const std::size_t K = g.rows(), P = g.cols();
  const int chunk = chunk_samples(K, P, x.n);
  std::vector<T> col, out;
  CMapR<T> W(weight_.value.data(), s.out_channels, static_cast<Eigen::Index>(K));
  for (int s0 = 0; s0 < x.n; s0 += chunk) {
    const int nb = std::min(chunk, x.n - s0);
    const std::size_t ld = P * nb;
    col.resize(K * ld);
    out.resize(static_cast<std::size_t>(s.out_channels) * ld);
    for (int b = 0; b < nb; ++b) im2col(x.sample(s0 + b), g, col.data(), ld, b * P);
    MapR<T> O(out.data(), s.out_channels, static_cast<Eigen::Index>(ld));
    O.noalias() = W * CMapR<T>(col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(ld));
    for (int co = 0; co < s.out_channels; ++co) O.row(co).array() += bias_.value[co];
    scatter(out.data(), s0, nb, y);
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  const LayerSpec& s = spec_;
  const Tensor<T>& x = x_;
  Tensor<T> dx(x.n, x.c, x.h, x.w);
  if (use_direct(s)) {
    const bool pg = this->param_grad_;
    for (int i = 0; i < x.n; ++i) {
      direct_backward(x.sample(i), weight_.value.data(), dy.sample(i), s, x.h, x.w, dy.h, dy.w, dx.sample(i),
                      pg ? weight_.grad.data() : nullptr);
      if (pg)
        for (int co = 0; co < s.out_channels; ++co) bias_.grad[co] += plane_sum(dy.sample(i) + co * dy.plane(), dy.plane());
    }
    return dx;
  }
  const Geometry g{x.c, x.h, x.w, s.kh, s.kw, s.sh, s.sw, s.ph, s.pw, dy.h, dy.w};
  const std::size_t K = g.rows(), P = g.cols();
  const int chunk = chunk_samples(K, P, x.n);
  std::vector<T> col, dcol, dout;
  CMapR<T> W(weight_.value.data(), s.out_channels, static_cast<Eigen::Index>(K));
  MapR<T> dW(weight_.grad.data(), s.out_channels, static_cast<Eigen::Index>(K));
  for (int s0 = 0; s0 < x.n; s0 += chunk) {
    const int nb = std::min(chunk, x.n - s0);
    const auto ld = static_cast<Eigen::Index>(P * nb);
    dout.resize(static_cast<std::size_t>(s.out_channels) * ld);
    gather(dy, s0, nb, dout.data());
    CMapR<T> D(dout.data(), s.out_channels, ld);
    if (this->param_grad_) {
      col.resize(K * ld);
      for (int b = 0; b < nb; ++b) im2col(x.sample(s0 + b), g, col.data(), ld, b * P);
      dW.noalias() += D * CMapR<T>(col.data(), static_cast<Eigen::Index>(K), ld).transpose();
      for (int co = 0; co < s.out_channels; ++co) bias_.grad[co] += plane_sum(dout.data() + co * ld, static_cast<std::size_t>(ld));
    }
    dcol.resize(K * ld);
    MapR<T>(dcol.data(), static_cast<Eigen::Index>(K), ld).noalias() = W.transpose() * D;
    for (int b = 0; b < nb; ++b) col2im(dcol.data(), g, dx.sample(s0 + b), ld, b * P);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int cin, int cout, int kh, int kw, int sh, int sw, int ph,
                                    int pw, int oh, int ow)
    : weight_(name + ".weight", static_cast<std::size_t>(cin) * cout * kh * kw),
      bias_(name + ".bias", static_cast<std::size_t>(cout)) {
  if (oh < 0 || ow < 0 || oh >= sh || ow >= sw)
    throw ShapeError(name + ": output padding must be smaller than the stride");
  spec_ = {LayerType::TransposeConv, kh, kw, sh, sw, ph, pw, oh, ow, cin, cout, std::move(name)};
}

template <typename T>
void ConvTranspose2d<T>::init(Rng& rng) {
  const double fan_in = static_cast<double>(spec_.in_channels) * spec_.kh * spec_.kw / (spec_.sh * spec_.sw);
  kaiming_uniform(weight_.value, fan_in, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x) {
  const LayerSpec& s = spec_;
  if (x.c != s.in_channels)
    throw ShapeError(s.name + ": expected " + std::to_string(s.in_channels) + " channels, got " + x.shape_str());
  const int oh = transpose_out(x.h, s.kh, s.sh, s.ph, s.oh), ow = transpose_out(x.w, s.kw, s.sw, s.pw, s.ow);
  if (oh < 1 || ow < 1) throw ShapeError(s.name + ": output collapses for input " + x.shape_str());
  x_ = x;
  Tensor<T> y(x.n, s.out_channels, oh, ow);
  if (use_direct(s)) {
    // The forward pass of a transpose layer is the data gradient of the
    // convolution it mirrors.
    const LayerSpec m = mirrored(s);
    for (int i = 0; i < x.n; ++i)
      direct_backward<T>(nullptr, weight_.value.data(), x.sample(i), m, oh, ow, x.h, x.w, y.sample(i), nullptr);
  } else {
  const Geometry g{s.out_channels, oh, ow, s.kh, s.kw, s.sh, s.sw, s.ph, s.pw, x.h, x.w};
  const std::size_t K = g.rows(), P = g.cols();
  const int chunk = chunk_samples(K, P, x.n);
  std::vector<T> xin, col;
  CMapR<T> W(weight_.value.data(), s.in_channels, static_cast<Eigen::Index>(K));
  for (int s0 = 0; s0 < x.n; s0 += chunk) {
    const int nb = std::min(chunk, x.n - s0);
    const auto ld = static_cast<Eigen::Index>(P * nb);
    xin.resize(static_cast<std::size_t>(s.in_channels) * ld);
    gather(x, s0, nb, xin.data());
    col.resize(K * ld);
    MapR<T>(col.data(), static_cast<Eigen::Index>(K), ld).noalias() =
        W.transpose() * CMapR<T>(xin.data(), s.in_channels, ld);
    for (int b = 0; b < nb; ++b) col2im(col.data(), g, y.sample(s0 + b), ld, b * P);
  }
  }
  const std::size_t plane = y.plane();
  for (int i = 0; i < y.n; ++i)
    for (int co = 0; co < s.out_channels; ++co) {
      T* p = y.sample(i) + co * plane;
      const T b = bias_.value[co];
      for (std::size_t k = 0; k < plane; ++k) p[k] += b;
    }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& dy) {
  const LayerSpec& s = spec_;
  const Tensor<T>& x = x_;
  Tensor<T> dx(x.n, x.c, x.h, x.w);
  if (use_direct(s)) {
    const LayerSpec m = mirrored(s);
    for (int i = 0; i < x.n; ++i) {
      direct_forward<T>(dy.sample(i), weight_.value.data(), nullptr, m, dy.h, dy.w, x.h, x.w, dx.sample(i));
      if (this->param_grad_)
        direct_backward<T>(dy.sample(i), nullptr, x.sample(i), m, dy.h, dy.w, x.h, x.w, nullptr, weight_.grad.data());
    }
  } else {
  const Geometry g{s.out_channels, dy.h, dy.w, s.kh, s.kw, s.sh, s.sw, s.ph, s.pw, x.h, x.w};
  const std::size_t K = g.rows(), P = g.cols();
  const int chunk = chunk_samples(K, P, x.n);
  std::vector<T> dcol, xin, dxin;
  CMapR<T> W(weight_.value.data(), s.in_channels, static_cast<Eigen::Index>(K));
  MapR<T> dW(weight_.grad.data(), s.in_channels, static_cast<Eigen::Index>(K));
  for (int s0 = 0; s0 < x.n; s0 += chunk) {
    const int nb = std::min(chunk, x.n - s0);
    const auto ld = static_cast<Eigen::Index>(P * nb);
    dcol.resize(K * ld);
    for (int b = 0; b < nb; ++b) im2col(dy.sample(s0 + b), g, dcol.data(), ld, b * P);
    CMapR<T> DC(dcol.data(), static_cast<Eigen::Index>(K), ld);
    if (this->param_grad_) {
      xin.resize(static_cast<std::size_t>(s.in_channels) * ld);
      gather(x, s0, nb, xin.data());
      dW.noalias() += CMapR<T>(xin.data(), s.in_channels, ld) * DC.transpose();
    }
    dxin.resize(static_cast<std::size_t>(s.in_channels) * ld);
    MapR<T>(dxin.data(), s.in_channels, ld).noalias() = W * DC;
    scatter(dxin.data(), s0, nb, dx);
  }
  }
  if (this->param_grad_)
    for (int i = 0; i < dy.n; ++i)
      for (int co = 0; co < s.out_channels; ++co) bias_.grad[co] += plane_sum(dy.sample(i) + co * dy.plane(), dy.plane());
  return dx;
}

// ---------------------------------------------------------------------------
// Linear

template <typename T>
Linear<T>::Linear(std::string name, int in, int out)
    : weight_(name + ".weight", static_cast<std::size_t>(out) * in), bias_(name + ".bias", static_cast<std::size_t>(out)) {
  spec_ = {LayerType::Linear, 1, 1, 1, 1, 0, 0, 0, 0, in, out, std::move(name)};
}

template <typename T>
void Linear<T>::init(Rng& rng) {
  kaiming_uniform(weight_.value, spec_.in_channels, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  if (static_cast<int>(x.sample_size()) != spec_.in_channels)
    throw ShapeError(spec_.name + ": expected " + std::to_string(spec_.in_channels) + " features, got " + x.shape_str());
  x_ = x;
  Tensor<T> y(x.n, spec_.out_channels, 1, 1);
  CMapR<T> X(x.data.data(), x.n, spec_.in_channels);
  CMapR<T> W(weight_.value.data(), spec_.out_channels, spec_.in_channels);
  MapR<T> Y(y.data.data(), x.n, spec_.out_channels);
  Y.noalias() = X * W.transpose();
  for (int i = 0; i < x.n; ++i)
    for (int o = 0; o < spec_.out_channels; ++o) Y(i, o) += bias_.value[o];
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
  const Tensor<T>& x = x_;
  CMapR<T> X(x.data.data(), x.n, spec_.in_channels);
  CMapR<T> D(dy.data.data(), x.n, spec_.out_channels);
  CMapR<T> W(weight_.value.data(), spec_.out_channels, spec_.in_channels);
  if (this->param_grad_) {
    MapR<T>(weight_.grad.data(), spec_.out_channels, spec_.in_channels).noalias() += D.transpose() * X;
    for (int o = 0; o < spec_.out_channels; ++o)
      for (int i = 0; i < x.n; ++i) bias_.grad[o] += dy.data[static_cast<std::size_t>(i) * spec_.out_channels + o];
  }
  Tensor<T> dx(x.n, x.c, x.h, x.w);
  MapR<T>(dx.data.data(), x.n, spec_.in_channels).noalias() = D * W;
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int channels, T momentum, T eps)
    : momentum_(momentum),
      eps_(eps),
      gamma_(name + ".gamma", static_cast<std::size_t>(channels)),
      beta_(name + ".beta", static_cast<std::size_t>(channels)),
      running_mean_(static_cast<std::size_t>(channels), T(0)),
      running_var_(static_cast<std::size_t>(channels), T(1)) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
  spec_ = {LayerType::BatchNorm, 1, 1, 1, 1, 0, 0, 0, 0, channels, channels, std::move(name)};
}

template <typename T>
void BatchNorm2d<T>::collect_buffers(std::vector<Buffer<T>>& out) {
  out.push_back({spec_.name + ".running_mean", &running_mean_});
  out.push_back({spec_.name + ".running_var", &running_var_});
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x) {
  const int C = spec_.in_channels;
  if (x.c != C) throw ShapeError(spec_.name + ": expected " + std::to_string(C) + " channels, got " + x.shape_str());
  const std::size_t plane = x.plane();
  const double m = static_cast<double>(plane) * x.n;
  Tensor<T> y(x.n, x.c, x.h, x.w);
  xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
  inv_std_.assign(static_cast<std::size_t>(C), T(0));
  cached_training_ = this->training_;
  for (int ch = 0; ch < C; ++ch) {
    double mean, var;
    if (this->training_) {
      double s = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const T* p = x.sample(i) + ch * plane;
        for (std::size_t k = 0; k < plane; ++k) s += p[k];
      }
      mean = s / m;
      double ss = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const T* p = x.sample(i) + ch * plane;
        for (std::size_t k = 0; k < plane; ++k) ss += (p[k] - mean) * (p[k] - mean);
      }
      var = ss / m;
      const double unbiased = m > 1.0 ? ss / (m - 1.0) : var;
      running_mean_[ch] = static_cast<T>((1.0 - momentum_) * running_mean_[ch] + momentum_ * mean);
      running_var_[ch] = static_cast<T>((1.0 - momentum_) * running_var_[ch] + momentum_ * unbiased);
    } else {
      mean = running_mean_[ch];
      var = running_var_[ch];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
    inv_std_[ch] = inv;
    const T g = gamma_.value[ch], b = beta_.value[ch], mu = static_cast<T>(mean);
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.sample(i) + ch * plane;
      T* xh = xhat_.sample(i) + ch * plane;
      T* q = y.sample(i) + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        xh[k] = (p[k] - mu) * inv;
        q[k] = g * xh[k] + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& dy) {
  const int C = spec_.in_channels;
  const std::size_t plane = dy.plane();
  const double m = static_cast<double>(plane) * dy.n;
  Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
  for (int ch = 0; ch < C; ++ch) {
    double sdy = 0.0, sdyx = 0.0;
    for (int i = 0; i < dy.n; ++i) {
      const T* d = dy.sample(i) + ch * plane;
      const T* xh = xhat_.sample(i) + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        sdy += d[k];
        sdyx += d[k] * xh[k];
      }
    }
    if (this->param_grad_) {
      gamma_.grad[ch] += static_cast<T>(sdyx);
      beta_.grad[ch] += static_cast<T>(sdy);
    }
    const T g = gamma_.value[ch], inv = inv_std_[ch];
    for (int i = 0; i < dy.n; ++i) {
      const T* d = dy.sample(i) + ch * plane;
      const T* xh = xhat_.sample(i) + ch * plane;
      T* o = dx.sample(i) + ch * plane;
      if (cached_training_) {
        const T a = static_cast<T>(sdy / m), b = static_cast<T>(sdyx / m);
        for (std::size_t k = 0; k < plane; ++k) o[k] = g * inv * (d[k] - a - xh[k] * b);
      } else {
        for (std::size_t k = 0; k < plane; ++k) o[k] = g * inv * d[k];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Elementwise and pooling

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x) {
  y_ = x;
  for (auto& v : y_.data) v = v > T(0) ? v : T(0);
  return y_;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& dy) {
  require_same_shape(dy, y_, "relu backward");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(y_.data[i] > T(0))) dx.data[i] = T(0);
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x) {
  y_ = x;
  for (auto& v : y_.data) v = T(1) / (T(1) + std::exp(-v));
  return y_;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& dy) {
  require_same_shape(dy, y_, "sigmoid backward");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= y_.data[i] * (T(1) - y_.data[i]);
  return dx;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  h_ = x.h;
  w_ = x.w;
  Tensor<T> y(x.n, x.c, 1, 1);
  const std::size_t plane = x.plane();
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const T* p = x.sample(i) + ch * plane;
      T s = 0;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      y.at(i, ch, 0, 0) = s / static_cast<T>(plane);
    }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.n, dy.c, h_, w_);
  const std::size_t plane = dx.plane();
  for (int i = 0; i < dy.n; ++i)
    for (int ch = 0; ch < dy.c; ++ch) {
      const T g = dy.at(i, ch, 0, 0) / static_cast<T>(plane);
      T* p = dx.sample(i) + ch * plane;
      std::fill(p, p + plane, g);
    }
  return dx;
}

namespace {

struct Lerp {
  int i0, i1;
  double t;
};

std::vector<Lerp> lerp_table(int in, int out) {
  std::vector<Lerp> tab(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    tab[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
  }
  return tab;
}

}  // namespace

template <typename T>
Tensor<T> Resize<T>::forward(const Tensor<T>& x) {
  ih_ = x.h;
  iw_ = x.w;
  Tensor<T> y(x.n, x.c, oh_, ow_);
  const auto ty = lerp_table(x.h, oh_), tx = lerp_table(x.w, ow_);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch)
      for (int r = 0; r < oh_; ++r) {
        const Lerp& a = ty[static_cast<std::size_t>(r)];
        for (int c = 0; c < ow_; ++c) {
          const Lerp& b = tx[static_cast<std::size_t>(c)];
          const T top = static_cast<T>((1 - b.t) * x.at(i, ch, a.i0, b.i0) + b.t * x.at(i, ch, a.i0, b.i1));
          const T bot = static_cast<T>((1 - b.t) * x.at(i, ch, a.i1, b.i0) + b.t * x.at(i, ch, a.i1, b.i1));
          y.at(i, ch, r, c) = static_cast<T>((1 - a.t) * top + a.t * bot);
        }
      }
  return y;
}

template <typename T>
Tensor<T> Resize<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.n, dy.c, ih_, iw_);
  const auto ty = lerp_table(ih_, oh_), tx = lerp_table(iw_, ow_);
  for (int i = 0; i < dy.n; ++i)
    for (int ch = 0; ch < dy.c; ++ch)
      for (int r = 0; r < oh_; ++r) {
        const Lerp& a = ty[static_cast<std::size_t>(r)];
        for (int c = 0; c < ow_; ++c) {
          const Lerp& b = tx[static_cast<std::size_t>(c)];
          const double g = dy.at(i, ch, r, c);
          dx.at(i, ch, a.i0, b.i0) += static_cast<T>(g * (1 - a.t) * (1 - b.t));
          dx.at(i, ch, a.i0, b.i1) += static_cast<T>(g * (1 - a.t) * b.t);
          dx.at(i, ch, a.i1, b.i0) += static_cast<T>(g * a.t * (1 - b.t));
          dx.at(i, ch, a.i1, b.i1) += static_cast<T>(g * a.t * b.t);
        }
      }
  return dx;
}

// ---------------------------------------------------------------------------
// ConvBnRelu

template <typename T>
ConvBnRelu<T>::ConvBnRelu(std::string name, int cin, int cout, int kh, int kw, int sh, int sw, int ph, int pw)
    : conv_(name + ".conv", cin, cout, kh, kw, sh, sw, ph, pw), bn_(name + ".bn", cout) {}

template <typename T>
Tensor<T> ConvBnRelu<T>::forward(const Tensor<T>& x) {
  return relu_.forward(bn_.forward(conv_.forward(x)));
}

template <typename T>
Tensor<T> ConvBnRelu<T>::backward(const Tensor<T>& dy) {
  return conv_.backward(bn_.backward(relu_.backward(dy)));
}

template <typename T>
void ConvBnRelu<T>::collect_params(std::vector<Param<T>*>& out) {
  conv_.collect_params(out);
  bn_.collect_params(out);
}

template <typename T>
void ConvBnRelu<T>::collect_buffers(std::vector<Buffer<T>>& out) {
  bn_.collect_buffers(out);
}

template <typename T>
void ConvBnRelu<T>::collect_specs(std::vector<LayerSpec>& out) const {
  conv_.collect_specs(out);
  bn_.collect_specs(out);
  out.push_back({LayerType::Relu, 1, 1, 1, 1, 0, 0, 0, 0, conv_.spec().out_channels, conv_.spec().out_channels,
                 conv_.spec().name + ".relu"});
}

template <typename T>
void ConvBnRelu<T>::set_training(bool t) {
  Layer<T>::set_training(t);
  conv_.set_training(t);
  bn_.set_training(t);
}

template <typename T>
void ConvBnRelu<T>::set_param_grad(bool g) {
  Layer<T>::set_param_grad(g);
  conv_.set_param_grad(g);
  bn_.set_param_grad(g);
}

// ---------------------------------------------------------------------------
// ConvTBnRelu

template <typename T>
ConvTBnRelu<T>::ConvTBnRelu(std::string name, int cin, int cout, int kh, int kw, int sh, int sw, int ph, int pw,
                            int oh, int ow)
    : conv_(name + ".tconv", cin, cout, kh, kw, sh, sw, ph, pw, oh, ow), bn_(name + ".bn", cout) {}

template <typename T>
Tensor<T> ConvTBnRelu<T>::forward(const Tensor<T>& x) {
  return relu_.forward(bn_.forward(conv_.forward(x)));
}

template <typename T>
Tensor<T> ConvTBnRelu<T>::backward(const Tensor<T>& dy) {
  return conv_.backward(bn_.backward(relu_.backward(dy)));
}

template <typename T>
void ConvTBnRelu<T>::collect_params(std::vector<Param<T>*>& out) {
  conv_.collect_params(out);
  bn_.collect_params(out);
}

template <typename T>
void ConvTBnRelu<T>::collect_buffers(std::vector<Buffer<T>>& out) {
  bn_.collect_buffers(out);
}

template <typename T>
void ConvTBnRelu<T>::collect_specs(std::vector<LayerSpec>& out) const {
  conv_.collect_specs(out);
  bn_.collect_specs(out);
  out.push_back({LayerType::Relu, 1, 1, 1, 1, 0, 0, 0, 0, conv_.spec().out_channels, conv_.spec().out_channels,
                 conv_.spec().name + ".relu"});
}

template <typename T>
void ConvTBnRelu<T>::set_training(bool t) {
  Layer<T>::set_training(t);
  conv_.set_training(t);
  bn_.set_training(t);
}

template <typename T>
void ConvTBnRelu<T>::set_param_grad(bool g) {
  Layer<T>::set_param_grad(g);
  conv_.set_param_grad(g);
  bn_.set_param_grad(g);
}

#define BLANKOPT_INSTANTIATE(T)          \
  template class Conv2d<T>;              \
  template class ConvTranspose2d<T>;     \
  template class Linear<T>;              \
  template class BatchNorm2d<T>;         \
  template class Relu<T>;                \
  template class Sigmoid<T>;             \
  template class GlobalAvgPool<T>;       \
  template class Resize<T>;              \
  template class ConvBnRelu<T>;          \
  template class ConvTBnRelu<T>;

BLANKOPT_INSTANTIATE(float)
BLANKOPT_INSTANTIATE(double)

}  // namespace blankopt::nn
