#pragma once

// Layer kernels used by Network<T>. Convolutions are lowered to GEMM.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "atbseg/tensor.hpp"

namespace atbseg::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// cols[(c*9 + ky*3 + kx), y*W + x] = img[c, y+ky-1, x+kx-1], zero outside.
template <typename T>
void im2col3(const T* img, int channels, int h, int w, T* cols) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const T* src = img + plane * c;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = cols + plane * (static_cast<std::size_t>(c) * 9 + ky * 3 + kx);
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          T* row = dst + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(sy) * w;
          if (x0 > 0) row[0] = T(0);
          if (x1 < w) row[w - 1] = T(0);
          std::memcpy(row + x0, srow + x0 + dx, sizeof(T) * static_cast<std::size_t>(x1 - x0));
        }
      }
    }
  }
}

/// Adjoint of im2col3: accumulates into img.
template <typename T>
void col2im3(const T* cols, int channels, int h, int w, T* img) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    T* dst = img + plane * c;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = cols + plane * (static_cast<std::size_t>(c) * 9 + ky * 3 + kx);
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const T* row = src + static_cast<std::size_t>(y) * w;
          T* drow = dst + static_cast<std::size_t>(sy) * w;
          for (int x = x0; x < x1; ++x) drow[x + dx] += row[x];
        }
      }
    }
  }
}

/// 3x3 same convolution (kernel 3) or 1x1 convolution (kernel 1). weight is [O, C, k, k].
template <typename T>
Tensor4<T> conv_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>* bias, int out_ch,
                        int kernel) {
  Tensor4<T> out(in.n, out_ch, in.h, in.w);
  const int hw = static_cast<int>(in.plane());
  const int k2 = kernel * kernel;
  ConstMatMap<T> wm(weight.data(), out_ch, in.c * k2);
  std::vector<T> cols(kernel == 3 ? static_cast<std::size_t>(in.c) * 9 * hw : 0);
  for (int i = 0; i < in.n; ++i) {
    MatMap<T> om(out.sample(i), out_ch, hw);
    if (kernel == 3) {
      im2col3(in.sample(i), in.c, in.h, in.w, cols.data());
      om.noalias() = wm * ConstMatMap<T>(cols.data(), in.c * 9, hw);
    } else {
      om.noalias() = wm * ConstMatMap<T>(in.sample(i), in.c, hw);
    }
    if (bias) {
      for (int o = 0; o < out_ch; ++o) om.row(o).array() += (*bias)[o];
    }
  }
  return out;
}

/// Accumulates dW (and db) and returns d(input) when requested.
template <typename T>
Tensor4<T> conv_backward(const Tensor4<T>& in, const Tensor4<T>& dout, const std::vector<T>& weight, int kernel,
                         std::vector<T>& dweight, std::vector<T>* dbias, bool need_input_grad) {
  const int hw = static_cast<int>(in.plane());
  const int k2 = kernel * kernel;
  const int out_ch = dout.c;
  ConstMatMap<T> wm(weight.data(), out_ch, in.c * k2);
  MatMap<T> dwm(dweight.data(), out_ch, in.c * k2);
  Tensor4<T> din;
  if (need_input_grad) din = Tensor4<T>(in.n, in.c, in.h, in.w);
  std::vector<T> cols(kernel == 3 ? static_cast<std::size_t>(in.c) * 9 * hw : 0);
  for (int i = 0; i < in.n; ++i) {
    ConstMatMap<T> dom(dout.sample(i), out_ch, hw);
    if (kernel == 3) {
      im2col3(in.sample(i), in.c, in.h, in.w, cols.data());
      dwm.noalias() += dom * ConstMatMap<T>(cols.data(), in.c * 9, hw).transpose();
      if (need_input_grad) {
        MatMap<T> dcols(cols.data(), in.c * 9, hw);
        dcols.noalias() = wm.transpose() * dom;
        col2im3(cols.data(), in.c, in.h, in.w, din.sample(i));
      }
    } else {
      dwm.noalias() += dom * ConstMatMap<T>(in.sample(i), in.c, hw).transpose();
      if (need_input_grad) MatMap<T>(din.sample(i), in.c, hw).noalias() = wm.transpose() * dom;
    }
    if (dbias) {
      for (int o = 0; o < out_ch; ++o) (*dbias)[o] += dom.row(o).sum();
    }
  }
  return din;
}

/// 2x2 stride-2 transposed convolution. weight rows are (o*4 + dy*2 + dx), columns input channels.
template <typename T>
Tensor4<T> upconv_forward(const Tensor4<T>& in, const std::vector<T>& weight, int out_ch) {
  Tensor4<T> out(in.n, out_ch, in.h * 2, in.w * 2);
  const int hw = static_cast<int>(in.plane());
  ConstMatMap<T> wm(weight.data(), out_ch * 4, in.c);
  RowMat<T> tmp(out_ch * 4, hw);
  for (int i = 0; i < in.n; ++i) {
    tmp.noalias() = wm * ConstMatMap<T>(in.sample(i), in.c, hw);
    for (int o = 0; o < out_ch; ++o) {
      T* dst = out.channel(i, o);
      for (int d = 0; d < 4; ++d) {
        const int dy = d / 2, dx = d % 2;
        const T* src = tmp.data() + static_cast<std::size_t>(o * 4 + d) * hw;
        for (int y = 0; y < in.h; ++y) {
          T* drow = dst + static_cast<std::size_t>(2 * y + dy) * out.w + dx;
          const T* srow = src + static_cast<std::size_t>(y) * in.w;
          for (int x = 0; x < in.w; ++x) drow[2 * x] = srow[x];
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> upconv_backward(const Tensor4<T>& in, const Tensor4<T>& dout, const std::vector<T>& weight,
                           std::vector<T>& dweight) {
  const int out_ch = dout.c;
  const int hw = static_cast<int>(in.plane());
  ConstMatMap<T> wm(weight.data(), out_ch * 4, in.c);
  MatMap<T> dwm(dweight.data(), out_ch * 4, in.c);
  Tensor4<T> din(in.n, in.c, in.h, in.w);
  RowMat<T> dtmp(out_ch * 4, hw);
  for (int i = 0; i < in.n; ++i) {
    for (int o = 0; o < out_ch; ++o) {
      const T* src = dout.channel(i, o);
      for (int d = 0; d < 4; ++d) {
        const int dy = d / 2, dx = d % 2;
        T* dst = dtmp.data() + static_cast<std::size_t>(o * 4 + d) * hw;
        for (int y = 0; y < in.h; ++y) {
          const T* srow = src + static_cast<std::size_t>(2 * y + dy) * dout.w + dx;
          T* drow = dst + static_cast<std::size_t>(y) * in.w;
          for (int x = 0; x < in.w; ++x) drow[x] = srow[2 * x];
        }
      }
    }
    ConstMatMap<T> inm(in.sample(i), in.c, hw);
    dwm.noalias() += dtmp * inm.transpose();
    MatMap<T>(din.sample(i), in.c, hw).noalias() = wm.transpose() * dtmp;
  }
  return din;
}

/// 2x2 max pooling; argmax holds the flat input offset of each selected element
/// (first maximum in raster order on ties).
template <typename T>
Tensor4<T> maxpool_forward(const Tensor4<T>& in, std::vector<std::size_t>* argmax) {
  Tensor4<T> out(in.n, in.c, in.h / 2, in.w / 2);
  if (argmax) argmax->resize(out.size());
  std::size_t k = 0;
  for (int i = 0; i < in.n; ++i) {
    for (int c = 0; c < in.c; ++c) {
      const T* src = in.channel(i, c);
      const std::size_t base = static_cast<std::size_t>(src - in.data.data());
      T* dst = out.channel(i, c);
      for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x, ++k) {
          std::size_t best = static_cast<std::size_t>(2 * y) * in.w + 2 * x;
          const std::size_t cand[3] = {best + 1, best + in.w, best + in.w + 1};
          for (auto idx : cand) {
            if (src[idx] > src[best]) best = idx;
          }
          dst[static_cast<std::size_t>(y) * out.w + x] = src[best];
          if (argmax) (*argmax)[k] = base + best;
        }
      }
    }
  }
  return out;
}

template <typename T>
void maxpool_backward(const Tensor4<T>& dout, const std::vector<std::size_t>& argmax, Tensor4<T>& din) {
  for (std::size_t k = 0; k < dout.size(); ++k) din.data[argmax[k]] += dout.data[k];
}

/// Channel concatenation [a; b] along C.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  Tensor4<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), out.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), out.sample(i) + a.sample_size());
  }
  return out;
}

template <typename T>
void split_channels(const Tensor4<T>& d, int first_channels, Tensor4<T>& da, Tensor4<T>& db) {
  da = Tensor4<T>(d.n, first_channels, d.h, d.w);
  db = Tensor4<T>(d.n, d.c - first_channels, d.h, d.w);
  for (int i = 0; i < d.n; ++i) {
    std::copy(d.sample(i), d.sample(i) + da.sample_size(), da.sample(i));
    std::copy(d.sample(i) + da.sample_size(), d.sample(i) + d.sample_size(), db.sample(i));
  }
}

}  // namespace atbseg::nn
