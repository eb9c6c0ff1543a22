#pragma once

#include <algorithm>
#include <cstddef>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "lss/core/error.hpp"

namespace lss::nn {

/// Eigen picks its vectorized summation order from the buffer address, so
/// every buffer handed to it shares one alignment to keep runs reproducible.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

/// Dense NCHW activation tensor.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  Buffer<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(std::size_t(n_) * c_ * h_ * w_, fill) {}

  std::size_t plane() const { return std::size_t(h) * w; }
  std::size_t sample_stride() const { return std::size_t(c) * plane(); }
  std::size_t size() const { return data.size(); }
  T* sample(int i) { return data.data() + i * sample_stride(); }
  const T* sample(int i) const { return data.data() + i * sample_stride(); }
  T& at(int i, int ch, int y, int x) { return data[(std::size_t(i) * c + ch) * plane() + std::size_t(y) * w + x]; }
  const T& at(int i, int ch, int y, int x) const {
    return data[(std::size_t(i) * c + ch) * plane() + std::size_t(y) * w + x];
  }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// A window of channels [c0, c0 + c) inside a tensor; rows of one sample are contiguous.
template <typename T>
struct View {
  T* base = nullptr;  // sample 0, first channel of the window
  int n = 0, c = 0, h = 0, w = 0;
  std::size_t sample_stride = 0;

  std::size_t plane() const { return std::size_t(h) * w; }
  T* sample(int i) const { return base + i * sample_stride; }
  Eigen::Map<RowMatrix<std::remove_const_t<T>>> mat(int i) const
    requires(!std::is_const_v<T>)
  {
    return {sample(i), c, Eigen::Index(plane())};
  }
  Eigen::Map<const RowMatrix<std::remove_const_t<T>>> cmat(int i) const {
    return {sample(i), c, Eigen::Index(plane())};
  }
  operator View<const std::remove_const_t<T>>() const
    requires(!std::is_const_v<T>)
  {
    return {base, n, c, h, w, sample_stride};
  }
};

template <typename T>
View<T> view(Tensor<T>& t, int c0, int c) {
  if (c0 < 0 || c0 + c > t.c) throw Error("tensor view: channel window out of range");
  return {t.data.data() + std::size_t(c0) * t.plane(), t.n, c, t.h, t.w, t.sample_stride()};
}
template <typename T>
View<T> view(Tensor<T>& t) {
  return view(t, 0, t.c);
}
template <typename T>
View<const T> view(const Tensor<T>& t, int c0, int c) {
  if (c0 < 0 || c0 + c > t.c) throw Error("tensor view: channel window out of range");
  return {t.data.data() + std::size_t(c0) * t.plane(), t.n, c, t.h, t.w, t.sample_stride()};
}
template <typename T>
View<const T> view(const Tensor<T>& t) {
  return view(t, 0, t.c);
}
template <typename T>
View<const T> as_const(const View<T>& v) {
  return {v.base, v.n, v.c, v.h, v.w, v.sample_stride};
}

}  // namespace lss::nn
