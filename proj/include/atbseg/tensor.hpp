#pragma once

#include <cstddef>
#include <vector>

namespace atbseg::nn {

/// Dense NCHW tensor.
template <typename T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, T fill = T{})
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return plane() * c; }
  std::size_t size() const { return data.size(); }

  T* sample(int i) { return data.data() + sample_size() * i; }
  const T* sample(int i) const { return data.data() + sample_size() * i; }
  T* channel(int i, int ch) { return sample(i) + plane() * ch; }
  const T* channel(int i, int ch) const { return sample(i) + plane() * ch; }
  T& at(int i, int ch, int y, int x) { return channel(i, ch)[static_cast<std::size_t>(y) * w + x]; }
  const T& at(int i, int ch, int y, int x) const { return channel(i, ch)[static_cast<std::size_t>(y) * w + x]; }
};

}  // namespace atbseg::nn
