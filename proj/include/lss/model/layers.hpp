#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "lss/core/rng.hpp"
#include "lss/model/tensor.hpp"

namespace lss::nn {

enum class Mode { train, eval };

enum class Init { he_normal, zeros, ones };

/// A named parameter or buffer. Buffers (running statistics) have no gradient.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  Buffer<T> value;
  Buffer<T> grad;
  Init init = Init::zeros;
  int fan_in = 1;
  bool trainable = true;

  std::size_t size() const { return value.size(); }
};

/// Owns every parameter of a network in registration order. Element addresses
/// are stable, layers keep raw pointers into it.
template <typename T>
class ParamSet {
 public:
  Param<T>& add(std::string name, std::vector<int> shape, Init init, int fan_in = 1, bool trainable = true) {
    std::size_t n = 1;
    for (int d : shape) n *= std::size_t(d);
    Param<T>& p = items_.emplace_back();
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value.assign(n, T(0));
    p.grad.assign(trainable ? n : 0, T(0));
    p.init = init;
    p.fan_in = fan_in;
    p.trainable = trainable;
    return p;
  }

  void initialize(Param<T>& p, Rng& rng) const {
    switch (p.init) {
      case Init::zeros: std::fill(p.value.begin(), p.value.end(), T(0)); break;
      case Init::ones: std::fill(p.value.begin(), p.value.end(), T(1)); break;
      case Init::he_normal: {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / p.fan_in));
        for (auto& v : p.value) v = T(dist(rng));
        break;
      }
    }
  }

  void initialize_all(Rng& rng) {
    for (auto& p : items_) initialize(p, rng);
  }

  void zero_grad() {
    for (auto& p : items_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }

  Param<T>* find(const std::string& name) {
    for (auto& p : items_)
      if (p.name == name) return &p;
    return nullptr;
  }
  const Param<T>* find(const std::string& name) const {
    for (const auto& p : items_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::deque<Param<T>>& items() { return items_; }
  const std::deque<Param<T>>& items() const { return items_; }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : items_)
      if (p.trainable) n += p.size();
    return n;
  }

 private:
  std::deque<Param<T>> items_;
};

/// 1x1 or 3x3 ("same" padding) convolution. With `upsample`, the input is
/// zero-interleaved to twice its size first, which makes the 3x3 case a
/// stride-2 transposed convolution.
template <typename T>
class Conv2d {
 public:
  Conv2d(ParamSet<T>& ps, const std::string& name, int cin, int cout, int kernel, bool upsample = false)
      : cin_(cin), cout_(cout), kernel_(kernel), upsample_(upsample) {
    if (kernel != 1 && kernel != 3) throw Error("conv: kernel must be 1 or 3");
    if (upsample && kernel != 3) throw Error("conv: upsampling needs a 3x3 kernel");
    const int taps = kernel * kernel;
    weight_ = &ps.add(name + ".weight", {taps, cout, cin}, Init::he_normal, cin * taps);
    bias_ = &ps.add(name + ".bias", {cout}, Init::zeros);
  }

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

  void forward(View<const T> in, View<T> out) {
    check(in, out);
    const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_->value.data(), cout_);
    if (kernel_ == 1) {
      const ConstMatMap<T> w(weight_->value.data(), cout_, cin_);
      for (int i = 0; i < in.n; ++i) {
        auto o = out.mat(i);
        o.noalias() = w * in.cmat(i);
        o.colwise() += b;
      }
      return;
    }
    const Geometry g = geometry(in);
    Buffer<T> padded(std::size_t(cin_) * g.plane, T(0));
    RowMatrix<T> ext(cout_, g.length);
    for (int i = 0; i < in.n; ++i) {
      pad(in, i, g, padded);
      ext.setZero();
      for (int k = 0; k < 9; ++k) ext.noalias() += tap(k) * shifted(padded.data(), g, k);
      T* dst = out.sample(i);
      for (int co = 0; co < cout_; ++co)
        for (int y = 0; y < g.out_h; ++y)
          for (int x = 0; x < g.out_w; ++x)
            dst[std::size_t(co) * out.plane() + std::size_t(y) * g.out_w + x] = ext(co, y * g.wp + x) + b[co];
    }
  }

  /// Accumulates parameter gradients and, when `gin` is non-null, input gradients.
  void backward(View<const T> in, View<const T> gout, const View<T>* gin) {
    check(in, gout);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(bias_->grad.data(), cout_);
    for (int i = 0; i < in.n; ++i) gb += gout.cmat(i).rowwise().sum();
    if (kernel_ == 1) {
      const ConstMatMap<T> w(weight_->value.data(), cout_, cin_);
      MatMap<T> gw(weight_->grad.data(), cout_, cin_);
      for (int i = 0; i < in.n; ++i) {
        gw.noalias() += gout.cmat(i) * in.cmat(i).transpose();
        if (gin) gin->mat(i).noalias() += w.transpose() * gout.cmat(i);
      }
      return;
    }
    const Geometry g = geometry(in);
    Buffer<T> padded(std::size_t(cin_) * g.plane, T(0));
    Buffer<T> gpadded(gin ? std::size_t(cin_) * g.plane : 0);
    RowMatrix<T> ext = RowMatrix<T>::Zero(cout_, g.length);
    for (int i = 0; i < in.n; ++i) {
      const T* src = gout.sample(i);
      for (int co = 0; co < cout_; ++co)
        for (int y = 0; y < g.out_h; ++y)
          for (int x = 0; x < g.out_w; ++x)
            ext(co, y * g.wp + x) = src[std::size_t(co) * gout.plane() + std::size_t(y) * g.out_w + x];
      pad(in, i, g, padded);
      for (int k = 0; k < 9; ++k) {
        MatMap<T> gw(weight_->grad.data() + std::size_t(k) * cout_ * cin_, cout_, cin_);
        gw.noalias() += ext * shifted(padded.data(), g, k).transpose();
      }
      if (!gin) continue;
      std::fill(gpadded.begin(), gpadded.end(), T(0));
      for (int k = 0; k < 9; ++k) {
        Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>> gp(gpadded.data() + offset(g, k), cin_, g.length,
                                                             Eigen::OuterStride<>(Eigen::Index(g.plane)));
        gp.noalias() += tap(k).transpose() * ext;
      }
      unpad(gpadded, g, *gin, i);
    }
  }

 private:
  struct Geometry {
    int in_h, in_w, out_h, out_w, hp, wp;
    std::size_t plane;  // padded plane + slack for the last shifted window
    Eigen::Index length;
  };

  Geometry geometry(const View<const T>& in) const {
    Geometry g;
    g.in_h = in.h, g.in_w = in.w;
    g.out_h = upsample_ ? 2 * in.h : in.h;
    g.out_w = upsample_ ? 2 * in.w : in.w;
    g.hp = g.out_h + 2, g.wp = g.out_w + 2;
    g.plane = std::size_t(g.hp) * g.wp + 2;
    g.length = Eigen::Index(g.out_h) * g.wp;
    return g;
  }

  template <typename V, typename W>
  void check(const V& in, const W& out) const {
    if (in.c != cin_ || out.c != cout_) throw Error("conv: channel mismatch");
    const int oh = upsample_ ? 2 * in.h : in.h, ow = upsample_ ? 2 * in.w : in.w;
    if (out.h != oh || out.w != ow || out.n != in.n) throw Error("conv: spatial shape mismatch");
  }

  static std::size_t offset(const Geometry& g, int k) { return std::size_t(k / 3) * g.wp + std::size_t(k % 3); }

  // Padded position of input pixel (y, x).
  std::size_t padded_index(const Geometry& g, int y, int x) const {
    return upsample_ ? std::size_t(2 * y + 1) * g.wp + std::size_t(2 * x + 1)
                     : std::size_t(y + 1) * g.wp + std::size_t(x + 1);
  }

  void pad(const View<const T>& in, int i, const Geometry& g, Buffer<T>& padded) const {
    const T* src = in.sample(i);
    for (int c = 0; c < cin_; ++c) {
      T* dst = padded.data() + std::size_t(c) * g.plane;
      const T* s = src + std::size_t(c) * in.plane();
      for (int y = 0; y < g.in_h; ++y)
        for (int x = 0; x < g.in_w; ++x) dst[padded_index(g, y, x)] = s[std::size_t(y) * g.in_w + x];
    }
  }

  void unpad(const Buffer<T>& gpadded, const Geometry& g, const View<T>& gin, int i) const {
    T* dst = gin.sample(i);
    for (int c = 0; c < cin_; ++c) {
      const T* s = gpadded.data() + std::size_t(c) * g.plane;
      T* d = dst + std::size_t(c) * gin.plane();
      for (int y = 0; y < g.in_h; ++y)
        for (int x = 0; x < g.in_w; ++x) d[std::size_t(y) * g.in_w + x] += s[padded_index(g, y, x)];
    }
  }

  ConstMatMap<T> tap(int k) const {
    return {weight_->value.data() + std::size_t(k) * cout_ * cin_, cout_, cin_};
  }

  Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>> shifted(const T* padded, const Geometry& g, int k) const {
    return {padded + offset(g, k), cin_, g.length, Eigen::OuterStride<>(Eigen::Index(g.plane))};
  }

  int cin_, cout_, kernel_;
  bool upsample_;
  Param<T>* weight_;
  Param<T>* bias_;
};

/// Batch normalization fused with the ReLU that always follows it here.
template <typename T>
class BatchNormRelu {
 public:
  BatchNormRelu(ParamSet<T>& ps, const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5)
      : channels_(channels), momentum_(momentum), eps_(eps) {
    gamma_ = &ps.add(name + ".weight", {channels}, Init::ones);
    beta_ = &ps.add(name + ".bias", {channels}, Init::zeros);
    running_mean_ = &ps.add(name + ".running_mean", {channels}, Init::zeros, 1, false);
    running_var_ = &ps.add(name + ".running_var", {channels}, Init::ones, 1, false);
  }

  /// out = relu(bn(in)); in train mode the batch statistics are used and the
  /// running estimates updated.
  void forward(View<const T> in, View<T> out, Mode mode) {
    if (in.c != channels_ || out.c != channels_) throw Error("batchnorm: channel mismatch");
    mean_.assign(channels_, 0.0);
    invstd_.assign(channels_, 0.0);
    mode_ = mode;
    const double m = double(in.n) * double(in.plane());
    for (int c = 0; c < channels_; ++c) {
      if (mode == Mode::train) {
        double s = 0.0, ss = 0.0;
        for (int i = 0; i < in.n; ++i) {
          const auto row = in.cmat(i).row(c).template cast<double>();
          s += row.sum();
          ss += row.squaredNorm();
        }
        const double mean = s / m;
        const double var = std::max(0.0, ss / m - mean * mean);
        mean_[c] = mean;
        invstd_[c] = 1.0 / std::sqrt(var + eps_);
        const double unbiased = m > 1 ? var * m / (m - 1) : var;
        running_mean_->value[c] = T((1 - momentum_) * running_mean_->value[c] + momentum_ * mean);
        running_var_->value[c] = T((1 - momentum_) * running_var_->value[c] + momentum_ * unbiased);
      } else {
        mean_[c] = running_mean_->value[c];
        invstd_[c] = 1.0 / std::sqrt(double(running_var_->value[c]) + eps_);
      }
    }
    apply(in, out);
  }

  /// Recompute the forward output from the statistics of the last forward call.
  void apply(View<const T> in, View<T> out) const {
    for (int c = 0; c < channels_; ++c) {
      const T scale = T(gamma_->value[c] * invstd_[c]);
      const T shift = T(beta_->value[c] - mean_[c] * gamma_->value[c] * invstd_[c]);
      for (int i = 0; i < in.n; ++i) out.mat(i).row(c) = (in.cmat(i).row(c).array() * scale + shift).max(T(0)).matrix();
    }
  }

  /// Accumulates into `gin` and the gamma/beta gradients.
  void backward(View<const T> in, View<const T> gout, View<T> gin) {
    const double m = double(in.n) * double(in.plane());
    Eigen::Array<T, 1, Eigen::Dynamic> xhat, dy;
    for (int c = 0; c < channels_; ++c) {
      const double g = gamma_->value[c], b = beta_->value[c], mu = mean_[c], is = invstd_[c];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int i = 0; i < in.n; ++i) {
        xhat = (in.cmat(i).row(c).array() - T(mu)) * T(is);
        dy = gout.cmat(i).row(c).array() * (xhat * T(g) + T(b) > T(0)).template cast<T>();
        sum_dy += dy.template cast<double>().sum();
        sum_dy_xhat += (dy * xhat).template cast<double>().sum();
      }
      gamma_->grad[c] += T(sum_dy_xhat);
      beta_->grad[c] += T(sum_dy);
      for (int i = 0; i < in.n; ++i) {
        xhat = (in.cmat(i).row(c).array() - T(mu)) * T(is);
        dy = gout.cmat(i).row(c).array() * (xhat * T(g) + T(b) > T(0)).template cast<T>();
        if (mode_ == Mode::train)
          gin.mat(i).row(c).array() += T(g * is / m) * (T(m) * dy - T(sum_dy) - xhat * T(sum_dy_xhat));
        else
          gin.mat(i).row(c).array() += T(g * is) * dy;
      }
    }
  }

 private:
  int channels_;
  double momentum_, eps_;
  Param<T>* gamma_;
  Param<T>* beta_;
  Param<T>* running_mean_;
  Param<T>* running_var_;
  std::vector<double> mean_, invstd_;
  Mode mode_ = Mode::train;
};

/// Inverted dropout; the keep mask of the last train-mode call is retained.
template <typename T>
class Dropout {
 public:
  explicit Dropout(double rate) : rate_(rate) {}

  void forward(View<T> x, Mode mode, Rng& rng) {
    active_ = mode == Mode::train && rate_ > 0.0;
    if (!active_) return;
    const T scale = T(1.0 / (1.0 - rate_));
    mask_.resize(std::size_t(x.n) * x.c * x.plane());
    std::bernoulli_distribution keep(1.0 - rate_);
    std::size_t k = 0;
    for (int i = 0; i < x.n; ++i) {
      T* p = x.sample(i);
      for (std::size_t j = 0; j < std::size_t(x.c) * x.plane(); ++j, ++k) {
        mask_[k] = keep(rng);
        p[j] = mask_[k] ? p[j] * scale : T(0);
      }
    }
  }

  void backward(View<T> g) const {
    if (!active_) return;
    const T scale = T(1.0 / (1.0 - rate_));
    std::size_t k = 0;
    for (int i = 0; i < g.n; ++i) {
      T* p = g.sample(i);
      for (std::size_t j = 0; j < std::size_t(g.c) * g.plane(); ++j, ++k) p[j] = mask_[k] ? p[j] * scale : T(0);
    }
  }

 private:
  double rate_;
  bool active_ = false;
  std::vector<std::uint8_t> mask_;
};

/// 2x2 max pooling, stride 2.
template <typename T>
class MaxPool2 {
 public:
  void forward(View<const T> in, View<T> out) {
    if (out.h * 2 != in.h || out.w * 2 != in.w || out.c != in.c) throw Error("maxpool: shape mismatch");
    argmax_.resize(std::size_t(in.n) * in.c * out.plane());
    std::size_t k = 0;
    for (int i = 0; i < in.n; ++i)
      for (int c = 0; c < in.c; ++c) {
        const T* s = in.sample(i) + std::size_t(c) * in.plane();
        T* d = out.sample(i) + std::size_t(c) * out.plane();
        for (int y = 0; y < out.h; ++y)
          for (int x = 0; x < out.w; ++x, ++k) {
            const T* p = s + std::size_t(2 * y) * in.w + 2 * x;
            const T v[4] = {p[0], p[1], p[in.w], p[in.w + 1]};
            int best = 0;
            for (int q = 1; q < 4; ++q)
              if (v[q] > v[best]) best = q;
            argmax_[k] = std::uint8_t(best);
            d[std::size_t(y) * out.w + x] = v[best];
          }
      }
  }

  void backward(View<const T> gout, View<T> gin) const {
    std::size_t k = 0;
    for (int i = 0; i < gout.n; ++i)
      for (int c = 0; c < gout.c; ++c) {
        const T* s = gout.sample(i) + std::size_t(c) * gout.plane();
        T* d = gin.sample(i) + std::size_t(c) * gin.plane();
        for (int y = 0; y < gout.h; ++y)
          for (int x = 0; x < gout.w; ++x, ++k) {
            const int q = argmax_[k];
            d[std::size_t(2 * y + q / 2) * gin.w + 2 * x + q % 2] += s[std::size_t(y) * gout.w + x];
          }
      }
  }

 private:
  std::vector<std::uint8_t> argmax_;
};

/// Fully connected layer on row-per-sample inputs.
template <typename T>
class Linear {
 public:
  Linear(ParamSet<T>& ps, const std::string& name, int in, int out) : in_(in), out_(out) {
    weight_ = &ps.add(name + ".weight", {out, in}, Init::he_normal, in);
    bias_ = &ps.add(name + ".bias", {out}, Init::zeros);
  }

  RowMatrix<T> forward(const RowMatrix<T>& x) const {
    const ConstMatMap<T> w(weight_->value.data(), out_, in_);
    const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_->value.data(), out_);
    RowMatrix<T> y = x * w.transpose();
    y.rowwise() += b;
    return y;
  }

  RowMatrix<T> backward(const RowMatrix<T>& x, const RowMatrix<T>& gy) {
    const ConstMatMap<T> w(weight_->value.data(), out_, in_);
    MatMap<T> gw(weight_->grad.data(), out_, in_);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(bias_->grad.data(), out_);
    gw.noalias() += gy.transpose() * x;
    gb += gy.colwise().sum();
    return gy * w;
  }

 private:
  int in_, out_;
  Param<T>* weight_;
  Param<T>* bias_;
};

}  // namespace lss::nn
