#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <vector>

#include "lss/core/error.hpp"
#include "lss/core/slice.hpp"
#include "lss/model/tensor.hpp"

namespace lss {

/// 0.5 * mean((pred - truth)^2) + 0.5 * mean((M*pred - M*truth)^2). Both means
/// run over all pixels unless `masked_mean` is set, in which case the second
/// one is taken over the masked pixels only.
template <typename T>
double restoration_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& truth, const nn::Tensor<T>& mask,
                        std::type_identity_t<nn::Tensor<T>>* grad = nullptr, bool masked_mean = false) {
  if (!pred.same_shape(truth) || !pred.same_shape(mask)) throw InputError("restoration_loss: shape mismatch");
  const std::size_t n = pred.size();
  if (n == 0) throw InputError("restoration_loss: empty input");
  double mask_count = 0.0;
  for (const T m : mask.data) {
    if (m != T(0) && m != T(1)) throw InputError("restoration_loss: mask must be binary");
    mask_count += double(m);
  }
  const double patch_norm = masked_mean ? mask_count : double(n);
  double mse = 0.0, patch = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = double(pred.data[i]) - double(truth.data[i]);
    const double md = double(mask.data[i]) * d;
    mse += d * d;
    patch += md * md;
  }
  const double loss = 0.5 * mse / double(n) + (patch_norm > 0 ? 0.5 * patch / patch_norm : 0.0);
  if (grad) {
    *grad = nn::Tensor<T>(pred.n, pred.c, pred.h, pred.w);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = double(pred.data[i]) - double(truth.data[i]);
      const double m = double(mask.data[i]);
      grad->data[i] = T(d / double(n) + (patch_norm > 0 ? m * m * d / patch_norm : 0.0));
    }
  }
  return loss;
}

/// Per-pixel softmax over channels.
template <typename T>
nn::Tensor<T> softmax(const nn::Tensor<T>& logits) {
  nn::Tensor<T> p = logits;
  const std::size_t plane = logits.plane();
  for (int i = 0; i < logits.n; ++i) {
    T* s = p.sample(i);
    for (std::size_t q = 0; q < plane; ++q) {
      T mx = s[q];
      for (int c = 1; c < logits.c; ++c) mx = std::max(mx, s[c * plane + q]);
      T sum = 0;
      for (int c = 0; c < logits.c; ++c) sum += s[c * plane + q] = std::exp(s[c * plane + q] - mx);
      for (int c = 0; c < logits.c; ++c) s[c * plane + q] /= sum;
    }
  }
  return p;
}

/// Soft Dice on softmax probabilities, computed jointly over the batch per
/// class and averaged over the classes. `labels` holds N*H*W values.
template <typename T>
double dice_loss(const nn::Tensor<T>& logits, const std::vector<std::uint8_t>& labels, double eps = 1e-5,
                 std::type_identity_t<nn::Tensor<T>>* grad = nullptr) {
  const int C = logits.c;
  const std::size_t plane = logits.plane();
  if (labels.size() != std::size_t(logits.n) * plane) throw InputError("dice_loss: label/logit shape mismatch");
  for (auto l : labels)
    if (l >= C) throw InputError("dice_loss: label outside 0.." + std::to_string(C - 1));
  const nn::Tensor<T> p = softmax(logits);
  std::vector<double> inter(C, 0.0), psum(C, 0.0), gsum(C, 0.0);
  for (int i = 0; i < logits.n; ++i) {
    const T* s = p.sample(i);
    const std::uint8_t* g = labels.data() + std::size_t(i) * plane;
    for (int c = 0; c < C; ++c)
      for (std::size_t q = 0; q < plane; ++q) {
        const double pv = s[c * plane + q];
        psum[c] += pv;
        if (g[q] == c) {
          inter[c] += pv;
          gsum[c] += 1.0;
        }
      }
  }
  double loss = 0.0;
  for (int c = 0; c < C; ++c) loss += 1.0 - (2.0 * inter[c] + eps) / (psum[c] + gsum[c] + eps);
  loss /= C;
  if (grad) {
    *grad = nn::Tensor<T>(logits.n, C, logits.h, logits.w);
    std::vector<double> a(C), b(C);  // dL/dp = a_c when g == c, b_c otherwise
    for (int c = 0; c < C; ++c) {
      const double den = psum[c] + gsum[c] + eps;
      const double num = 2.0 * inter[c] + eps;
      b[c] = num / (den * den) / C;
      a[c] = b[c] - 2.0 / den / C;
    }
    std::vector<double> dp(C);
    for (int i = 0; i < logits.n; ++i) {
      const T* s = p.sample(i);
      T* out = grad->sample(i);
      const std::uint8_t* g = labels.data() + std::size_t(i) * plane;
      for (std::size_t q = 0; q < plane; ++q) {
        double dot = 0.0;
        for (int c = 0; c < C; ++c) {
          dp[c] = g[q] == c ? a[c] : b[c];
          dot += dp[c] * s[c * plane + q];
        }
        for (int c = 0; c < C; ++c) out[c * plane + q] = T(s[c * plane + q] * (dp[c] - dot));
      }
    }
  }
  return loss;
}

/// Mean sigmoid cross-entropy over the batch and both labels. `logits` is
/// (N, 2, 1, 1): channel 0 GGO, channel 1 consolidation.
template <typename T>
double bce_loss(const nn::Tensor<T>& logits, const std::vector<PathologyLabels>& labels,
                std::type_identity_t<nn::Tensor<T>>* grad = nullptr) {
  if (logits.c != 2 || logits.plane() != 1 || std::size_t(logits.n) != labels.size())
    throw InputError("bce_loss: expected (N, 2) logits and N labels");
  const double count = 2.0 * logits.n;
  double loss = 0.0;
  if (grad) *grad = nn::Tensor<T>(logits.n, 2, 1, 1);
  for (int i = 0; i < logits.n; ++i)
    for (int c = 0; c < 2; ++c) {
      const double z = logits.at(i, c, 0, 0);
      const double y = c == 0 ? labels[i].ggo_present : labels[i].cons_present;
      loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
      if (grad) grad->at(i, c, 0, 0) = T((1.0 / (1.0 + std::exp(-z)) - y) / count);
    }
  return loss / count;
}

}  // namespace lss
