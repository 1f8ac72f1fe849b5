#pragma once

// Dense NCHW tensor. Feature vectors are stored as N x C x 1 x 1.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace blankopt::nn {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  T* sample(int i) { return data.data() + i * sample_size(); }
  const T* sample(int i) const { return data.data() + i * sample_size(); }
  T& at(int i, int ch, int y, int x) { return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x]; }
  T at(int i, int ch, int y, int x) const { return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x]; }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
  }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
  if (!a.same_shape(b)) throw ShapeError(std::string(where) + ": shape " + a.shape_str() + " vs " + b.shape_str());
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> o(t.n, t.c, t.h, t.w);
  for (std::size_t i = 0; i < t.size(); ++i) o.data[i] = static_cast<To>(t.data[i]);
  return o;
}

// Channel concatenation and its inverse.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw ShapeError("concat: shape " + a.shape_str() + " vs " + b.shape_str());
  Tensor<T> o(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), o.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), o.sample(i) + a.sample_size());
  }
  return o;
}

template <typename T>
void split_channels(const Tensor<T>& g, int ca, Tensor<T>& ga, Tensor<T>& gb) {
  ga = Tensor<T>(g.n, ca, g.h, g.w);
  gb = Tensor<T>(g.n, g.c - ca, g.h, g.w);
  for (int i = 0; i < g.n; ++i) {
    std::copy(g.sample(i), g.sample(i) + ga.sample_size(), ga.sample(i));
    std::copy(g.sample(i) + ga.sample_size(), g.sample(i) + g.sample_size(), gb.sample(i));
  }
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& g) {
  require_same_shape(acc, g, "add");
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += g.data[i];
}

}  // namespace blankopt::nn
