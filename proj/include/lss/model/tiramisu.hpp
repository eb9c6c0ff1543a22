#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lss/model/config.hpp"
#include "lss/model/layers.hpp"

namespace lss::nn {

/// Dense block operating in place on a preallocated tensor whose first
/// `in_channels` channels hold the block input. Each layer appends `growth`
/// channels: BN-ReLU, 3x3 conv, dropout.
template <typename T>
class DenseBlock {
 public:
  DenseBlock(ParamSet<T>& ps, const std::string& prefix, int in_channels, int layers, int growth, double dropout)
      : in_(in_channels), growth_(growth) {
    for (int l = 0; l < layers; ++l) {
      const int c = in_channels + l * growth;
      const std::string name = prefix + ".layer" + std::to_string(l);
      layers_.push_back({BatchNormRelu<T>(ps, name + ".bn", c), Conv2d<T>(ps, name + ".conv", c, growth, 3),
                         Dropout<T>(dropout)});
    }
  }

  int in_channels() const { return in_; }
  int out_channels() const { return in_ + int(layers_.size()) * growth_; }

  void forward(Tensor<T>& block, Mode mode, Rng& rng) {
    Tensor<T> tmp;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const int c = in_ + int(l) * growth_;
      auto& layer = layers_[l];
      tmp = Tensor<T>(block.n, c, block.h, block.w);
      layer.bn.forward(view(std::as_const(block), 0, c), view(tmp), mode);
      layer.conv.forward(view(std::as_const(tmp)), view(block, c, growth_));
      layer.drop.forward(view(block, c, growth_), mode, rng);
    }
  }

  /// `grad` holds the gradient w.r.t. every channel of `block`; on return its
  /// first in_channels() channels also include the contributions of all layers.
  void backward(const Tensor<T>& block, Tensor<T>& grad) {
    Tensor<T> tmp, gtmp;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const int c = in_ + int(l) * growth_;
      auto& layer = layers_[l];
      layer.drop.backward(view(grad, c, growth_));
      tmp = Tensor<T>(block.n, c, block.h, block.w);
      gtmp = Tensor<T>(block.n, c, block.h, block.w);
      layer.bn.apply(view(block, 0, c), view(tmp));
      const View<T> gin = view(gtmp);
      layer.conv.backward(view(std::as_const(tmp)), view(std::as_const(grad), c, growth_), &gin);
      layer.bn.backward(view(block, 0, c), view(std::as_const(gtmp)), view(grad, 0, c));
    }
  }

 private:
  struct Layer {
    BatchNormRelu<T> bn;
    Conv2d<T> conv;
    Dropout<T> drop;
  };
  int in_, growth_;
  std::vector<Layer> layers_;
};

/// BN-ReLU, 1x1 conv, dropout, 2x2 max pooling.
template <typename T>
class TransitionDown {
 public:
  TransitionDown(ParamSet<T>& ps, const std::string& prefix, int channels, double dropout)
      : bn_(ps, prefix + ".bn", channels), conv_(ps, prefix + ".conv", channels, channels, 1), drop_(dropout) {}

  void forward(View<const T> in, View<T> out, Mode mode, Rng& rng) {
    Tensor<T> tmp(in.n, in.c, in.h, in.w), conv(in.n, in.c, in.h, in.w);
    bn_.forward(in, view(tmp), mode);
    conv_.forward(view(std::as_const(tmp)), view(conv));
    drop_.forward(view(conv), mode, rng);
    pool_.forward(view(std::as_const(conv)), out);
  }

  void backward(View<const T> in, View<const T> gout, View<T> gin) {
    Tensor<T> gconv(in.n, in.c, in.h, in.w), tmp(in.n, in.c, in.h, in.w), gtmp(in.n, in.c, in.h, in.w);
    pool_.backward(gout, view(gconv));
    drop_.backward(view(gconv));
    bn_.apply(in, view(tmp));
    const View<T> g = view(gtmp);
    conv_.backward(view(std::as_const(tmp)), view(std::as_const(gconv)), &g);
    bn_.backward(in, view(std::as_const(gtmp)), gin);
  }

 private:
  BatchNormRelu<T> bn_;
  Conv2d<T> conv_;
  Dropout<T> drop_;
  MaxPool2<T> pool_;
};

/// Fully convolutional DenseNet with five transitions down and five up, skip
/// concatenation between the paths, and one of three heads. The
/// classification variant has no up path; it pools the bottleneck block
/// globally and applies one linear layer.
template <typename T>
class Tiramisu {
 public:
  static constexpr int kLevels = 5;

  Tiramisu(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    cfg.validate();
    const int k = cfg.growth_rate, L = cfg.layers_per_block, g = cfg.block_growth();
    const double p = cfg.dropout;
    stem_.emplace(params_, "stem.conv", cfg.in_channels, cfg.initial_features, 3);
    for (int i = 0; i < kLevels; ++i) {
      const std::string name = "down" + std::to_string(i);
      down_.emplace_back(params_, name, cfg.down_channels(i), L, k, p);
      td_.emplace_back(params_, name + ".td", cfg.down_channels(i + 1), p);
    }
    bottleneck_.emplace(params_, "bottleneck", cfg.down_channels(kLevels), L, k, p);
    if (cfg.head == Head::classification) {
      linear_.emplace(params_, "head.linear", bottleneck_->out_channels(), 2);
    } else {
      for (int j = 0; j < kLevels; ++j) {
        const int level = kLevels - 1 - j;
        const std::string name = "up" + std::to_string(j);
        tu_.emplace_back(params_, name + ".tu.conv", g, g, 3, true);
        up_.emplace_back(params_, name, g + skip_channels(level), L, k, p);
      }
      head_conv_.emplace(params_, "head.conv", up_.back().out_channels(), cfg.output_channels(), 1);
    }
    params_.initialize_all(rng_);
  }

  Tiramisu(const Tiramisu&) = delete;
  Tiramisu& operator=(const Tiramisu&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  Rng& rng() { return rng_; }

  /// Restoration: sigmoid intensities (N,1,H,W). Segmentation: logits
  /// (N,4,H,W). Classification: logits (N,2,1,1).
  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.c != cfg_.in_channels)
      throw Error("network: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                  std::to_string(x.c));
    if (x.h % 32 != 0 || x.w % 32 != 0 || x.h == 0 || x.w == 0)
      throw Error("network: spatial dims must be positive multiples of 32");
    input_ = x;
    const int g = cfg_.block_growth();
    down_t_[0] = Tensor<T>(x.n, down_[0].out_channels(), x.h, x.w);
    stem_->forward(view(input_), view(down_t_[0], 0, cfg_.initial_features));
    for (int i = 0; i < kLevels; ++i) {
      down_[i].forward(down_t_[i], mode, rng_);
      Tensor<T>& next = i + 1 < kLevels ? down_t_[i + 1] : bott_t_;
      const int out_c = i + 1 < kLevels ? down_[i + 1].out_channels() : bottleneck_->out_channels();
      next = Tensor<T>(x.n, out_c, down_t_[i].h / 2, down_t_[i].w / 2);
      td_[i].forward(view(std::as_const(down_t_[i])), view(next, 0, cfg_.down_channels(i + 1)), mode, rng_);
    }
    bottleneck_->forward(bott_t_, mode, rng_);

    if (linear_) {
      const double inv = 1.0 / double(bott_t_.plane());
      pooled_ = RowMatrix<T>(x.n, bott_t_.c);
      for (int i = 0; i < x.n; ++i)
        pooled_.row(i) = (view(std::as_const(bott_t_)).cmat(i).rowwise().sum() * T(inv)).transpose();
      const RowMatrix<T> logits = linear_->forward(pooled_);
      Tensor<T> out(x.n, 2, 1, 1);
      std::copy(logits.data(), logits.data() + logits.size(), out.data.begin());
      return out;
    }

    View<const T> prev = view(std::as_const(bott_t_), cfg_.down_channels(kLevels), g);
    for (int j = 0; j < kLevels; ++j) {
      const int level = kLevels - 1 - j;
      const Tensor<T>& skip = down_t_[level];
      up_t_[j] = Tensor<T>(x.n, up_[j].out_channels(), skip.h, skip.w);
      tu_[j].forward(prev, view(up_t_[j], 0, g));
      for (int i = 0; i < x.n; ++i)
        std::copy(skip.sample(i), skip.sample(i) + skip.sample_stride(), up_t_[j].sample(i) + g * skip.plane());
      up_[j].forward(up_t_[j], mode, rng_);
      prev = view(std::as_const(up_t_[j]), up_[j].in_channels(), g);
    }
    Tensor<T> out(x.n, cfg_.output_channels(), x.h, x.w);
    head_conv_->forward(view(std::as_const(up_t_[kLevels - 1])), view(out));
    if (cfg_.head == Head::restoration)
      for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    output_ = out;
    return out;
  }

  /// Backpropagates d(loss)/d(output) of the last forward call and
  /// accumulates parameter gradients.
  void backward(const Tensor<T>& grad_out) {
    const int n = input_.n, g = cfg_.block_growth();
    Tensor<T> gbott(n, bott_t_.c, bott_t_.h, bott_t_.w);
    std::array<Tensor<T>, kLevels> gdown;
    for (int i = 0; i < kLevels; ++i) gdown[i] = Tensor<T>(n, down_t_[i].c, down_t_[i].h, down_t_[i].w);

    if (linear_) {
      if (grad_out.n != n || grad_out.c != 2) throw Error("network: gradient shape mismatch");
      RowMatrix<T> gy(n, 2);
      std::copy(grad_out.data.begin(), grad_out.data.end(), gy.data());
      const RowMatrix<T> gp = linear_->backward(pooled_, gy);
      const T inv = T(1.0 / double(gbott.plane()));
      for (int i = 0; i < n; ++i) view(gbott).mat(i).colwise() = (gp.row(i).transpose() * inv);
    } else {
      Tensor<T> gout = grad_out;
      if (!gout.same_shape(output_)) throw Error("network: gradient shape mismatch");
      if (cfg_.head == Head::restoration)
        for (std::size_t q = 0; q < gout.size(); ++q) gout.data[q] *= output_.data[q] * (T(1) - output_.data[q]);
      std::array<Tensor<T>, kLevels> gup;
      for (int j = 0; j < kLevels; ++j) gup[j] = Tensor<T>(n, up_t_[j].c, up_t_[j].h, up_t_[j].w);
      const View<T> ghead = view(gup[kLevels - 1]);
      head_conv_->backward(view(std::as_const(up_t_[kLevels - 1])), view(std::as_const(gout)), &ghead);
      for (int j = kLevels; j-- > 0;) {
        const int level = kLevels - 1 - j;
        up_[j].backward(up_t_[j], gup[j]);
        Tensor<T>& gskip = gdown[level];
        for (int i = 0; i < n; ++i) {
          const T* src = gup[j].sample(i) + g * gskip.plane();
          T* dst = gskip.sample(i);
          for (std::size_t q = 0; q < gskip.sample_stride(); ++q) dst[q] += src[q];
        }
        const View<const T> prev = j == 0 ? view(std::as_const(bott_t_), cfg_.down_channels(kLevels), g)
                                          : view(std::as_const(up_t_[j - 1]), up_[j - 1].in_channels(), g);
        const View<T> gprev =
            j == 0 ? view(gbott, cfg_.down_channels(kLevels), g) : view(gup[j - 1], up_[j - 1].in_channels(), g);
        tu_[j].backward(prev, view(std::as_const(gup[j]), 0, g), &gprev);
      }
    }

    bottleneck_->backward(bott_t_, gbott);
    for (int i = kLevels; i-- > 0;) {
      const Tensor<T>& gnext = i + 1 < kLevels ? gdown[i + 1] : gbott;
      td_[i].backward(view(std::as_const(down_t_[i])), view(gnext, 0, cfg_.down_channels(i + 1)), view(gdown[i]));
      down_[i].backward(down_t_[i], gdown[i]);
    }
    stem_->backward(view(std::as_const(input_)), view(std::as_const(gdown[0]), 0, cfg_.initial_features), nullptr);
  }

  /// Pooled bottleneck features of the last classification forward (N x C).
  const RowMatrix<T>& bottleneck_features() const { return pooled_; }

 private:
  int skip_channels(int level) const { return cfg_.down_channels(level) + cfg_.block_growth(); }

  ModelConfig cfg_;
  Rng rng_;
  ParamSet<T> params_;
  std::optional<Conv2d<T>> stem_;
  std::vector<DenseBlock<T>> down_;
  std::vector<TransitionDown<T>> td_;
  std::optional<DenseBlock<T>> bottleneck_;
  std::vector<Conv2d<T>> tu_;
  std::vector<DenseBlock<T>> up_;
  std::optional<Conv2d<T>> head_conv_;
  std::optional<Linear<T>> linear_;

  Tensor<T> input_, bott_t_, output_;
  std::array<Tensor<T>, kLevels> down_t_, up_t_;
  RowMatrix<T> pooled_;
};

}  // namespace lss::nn
