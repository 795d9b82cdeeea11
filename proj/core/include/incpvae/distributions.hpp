#pragma once

#include <vector>

#include "incpvae/tensor.hpp"

namespace incpvae {

// Diagonal Gaussian N(mean, diag(exp(log_var))). Batched: mean and log_var
// share a shape whose last axis is the event dimension, so a [N x D] pair
// holds N independent D-dimensional distributions.
class DiagGaussian {
 public:
  DiagGaussian(Tensor mean, Tensor log_var);

  // N(0, I) with the given shape.
  static DiagGaussian standard(const Shape& shape);
  // N(mean, sigma^2 I) with a constant (non-differentiable) log-variance.
  static DiagGaussian isotropic(Tensor mean, double sigma);

  const Tensor& mean() const { return mean_; }
  const Tensor& log_var() const { return log_var_; }
  std::size_t event_dim() const { return mean_.shape().back(); }

 private:
  Tensor mean_;
  Tensor log_var_;
};

// Pixel-wise Bernoulli parameterized by logits.
class BernoulliImage {
 public:
  explicit BernoulliImage(Tensor logits);

  const Tensor& logits() const { return logits_; }
  // sigmoid(logits) clamped to [1e-7, 1 - 1e-7]; diagnostics only.
  std::vector<float> probabilities() const;

 private:
  Tensor logits_;
};

// KL(q || p) summed over the event axis: rank-1 inputs give a scalar,
// [N x D] inputs give [N]. Differentiable with respect to both arguments.
Tensor kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p);

// z = mean + exp(0.5 * log_var) * eps
Tensor reparam_sample(const DiagGaussian& q, const Tensor& eps);

// sum over pixels of x log p + (1 - x) log(1 - p), evaluated as
// x * logit - softplus(logit). x must lie in [0, 1].
Tensor bernoulli_log_prob(const BernoulliImage& dist, const Tensor& x);

// Exact log density, reduced over the event axis like kl_diag_gaussian.
Tensor gaussian_log_prob(const DiagGaussian& q, const Tensor& z);

}  // namespace incpvae
