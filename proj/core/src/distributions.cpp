#include "incpvae/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "incpvae/errors.hpp"
#include "incpvae/ops.hpp"

namespace incpvae {
namespace {

struct EventSplit {
  std::size_t batch;
  std::size_t dim;
  Shape out_shape;
};

EventSplit event_split(const Shape& shape, const char* op) {
  if (shape.empty()) throw ContractError(std::string(op) + ": distribution needs rank >= 1");
  EventSplit s;
  s.dim = shape.back();
  s.batch = shape_numel(shape) / std::max<std::size_t>(s.dim, 1);
  s.out_shape.assign(shape.begin(), shape.end() - 1);
  return s;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

DiagGaussian::DiagGaussian(Tensor mean, Tensor log_var)
    : mean_(std::move(mean)), log_var_(std::move(log_var)) {
  if (mean_.shape() != log_var_.shape()) {
    throw ContractError("DiagGaussian: mean " + shape_string(mean_.shape()) + " and log_var " +
                        shape_string(log_var_.shape()) + " differ");
  }
  if (mean_.rank() == 0) throw ContractError("DiagGaussian: needs rank >= 1");
  for (float v : log_var_.values()) {
    if (!std::isfinite(v)) throw DomainError("DiagGaussian: non-finite log-variance");
  }
}

DiagGaussian DiagGaussian::standard(const Shape& shape) {
  return DiagGaussian(Tensor::zeros(shape), Tensor::zeros(shape));
}

DiagGaussian DiagGaussian::isotropic(Tensor mean, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("isotropic Gaussian needs sigma > 0");
  auto log_var = Tensor::full(mean.shape(), static_cast<float>(2.0 * std::log(sigma)));
  return DiagGaussian(std::move(mean), std::move(log_var));
}

BernoulliImage::BernoulliImage(Tensor logits) : logits_(std::move(logits)) {
  for (float v : logits_.values()) {
    if (std::isnan(v)) throw DomainError("BernoulliImage: NaN logit");
  }
}

std::vector<float> BernoulliImage::probabilities() const {
  std::vector<float> p;
  p.reserve(logits_.numel());
  for (float l : logits_.values()) {
    p.push_back(static_cast<float>(std::clamp(sigmoid(l), 1e-7, 1.0 - 1e-7)));
  }
  return p;
}

// Per dimension, with r = lv_q - lv_p and d = mu_q - mu_p:
//   0.5 * (exp(r) - 1 - r + d^2 exp(-lv_p))
// expm1(r) - r is non-negative and exactly zero at r = 0, so KL(q, q) == 0.
Tensor kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.mean().shape() != p.mean().shape()) {
    throw ContractError("kl_diag_gaussian: dimension mismatch " +
                        shape_string(q.mean().shape()) + " vs " + shape_string(p.mean().shape()));
  }
  const auto split = event_split(q.mean().shape(), "kl_diag_gaussian");
  auto mq = q.mean().values();
  auto lq = q.log_var().values();
  auto mp = p.mean().values();
  auto lp = p.log_var().values();
  std::vector<float> out(split.batch);
  for (std::size_t b = 0; b < split.batch; ++b) {
    double acc = 0.0;
    for (std::size_t i = b * split.dim; i < (b + 1) * split.dim; ++i) {
      const double r = static_cast<double>(lq[i]) - lp[i];
      const double d = static_cast<double>(mq[i]) - mp[i];
      acc += 0.5 * (std::max(std::expm1(r) - r, 0.0) + d * d * std::exp(-static_cast<double>(lp[i])));
    }
    out[b] = static_cast<float>(acc);
  }
  const Tensor q_mean = q.mean(), q_lv = q.log_var(), p_mean = p.mean(), p_lv = p.log_var();
  return make_result("kl_diag_gaussian", split.out_shape, std::move(out),
                     {q_mean, q_lv, p_mean, p_lv},
                     [q_mean, q_lv, p_mean, p_lv, split](std::span<const float> g) {
                       auto mq = q_mean.values();
                       auto lq = q_lv.values();
                       auto mp = p_mean.values();
                       auto lp = p_lv.values();
                       const std::size_t n = mq.size();
                       std::vector<float> d_mq(n), d_lq(n), d_mp(n), d_lp(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double gi = g[i / split.dim];
                         const double inv_var_p = std::exp(-static_cast<double>(lp[i]));
                         const double ratio = std::exp(static_cast<double>(lq[i]) - lp[i]);
                         const double d = static_cast<double>(mq[i]) - mp[i];
                         d_mq[i] = static_cast<float>(gi * d * inv_var_p);
                         d_mp[i] = -d_mq[i];
                         d_lq[i] = static_cast<float>(gi * 0.5 * (ratio - 1.0));
                         d_lp[i] = static_cast<float>(gi * 0.5 * (1.0 - ratio - d * d * inv_var_p));
                       }
                       accumulate_grad(q_mean, d_mq);
                       accumulate_grad(q_lv, d_lq);
                       accumulate_grad(p_mean, d_mp);
                       accumulate_grad(p_lv, d_lp);
                     });
}

Tensor reparam_sample(const DiagGaussian& q, const Tensor& eps) {
  if (eps.shape() != q.mean().shape()) {
    throw ContractError("reparam_sample: eps shape " + shape_string(eps.shape()) +
                        " does not match mean " + shape_string(q.mean().shape()));
  }
  return add(q.mean(), mul(exp(mul(q.log_var(), 0.5f)), eps));
}

Tensor bernoulli_log_prob(const BernoulliImage& dist, const Tensor& x) {
  const Tensor& logits = dist.logits();
  if (x.shape() != logits.shape()) {
    throw ContractError("bernoulli_log_prob: target " + shape_string(x.shape()) +
                        " does not match logits " + shape_string(logits.shape()));
  }
  auto xv = x.values();
  for (float v : xv) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw DomainError("bernoulli_log_prob: target value " + std::to_string(v) +
                        " outside [0, 1]");
    }
  }
  const auto split = event_split(logits.shape(), "bernoulli_log_prob");
  auto lv = logits.values();
  std::vector<float> out(split.batch);
  for (std::size_t b = 0; b < split.batch; ++b) {
    double acc = 0.0;
    for (std::size_t i = b * split.dim; i < (b + 1) * split.dim; ++i) {
      const double l = lv[i];
      acc += static_cast<double>(xv[i]) * l - softplus(l);
    }
    out[b] = static_cast<float>(std::min(acc, 0.0));
  }
  return make_result("bernoulli_log_prob", split.out_shape, std::move(out), {logits, x},
                     [logits, x, split](std::span<const float> g) {
                       auto lv = logits.values();
                       auto xv = x.values();
                       const std::size_t n = lv.size();
                       if (logits.requires_grad()) {
                         std::vector<float> d(n);
                         for (std::size_t i = 0; i < n; ++i) {
                           d[i] = static_cast<float>(g[i / split.dim] * (xv[i] - sigmoid(lv[i])));
                         }
                         accumulate_grad(logits, d);
                       }
                       if (x.requires_grad()) {
                         std::vector<float> d(n);
                         for (std::size_t i = 0; i < n; ++i) d[i] = g[i / split.dim] * lv[i];
                         accumulate_grad(x, d);
                       }
                     });
}

Tensor gaussian_log_prob(const DiagGaussian& q, const Tensor& z) {
  if (z.shape() != q.mean().shape()) {
    throw ContractError("gaussian_log_prob: sample " + shape_string(z.shape()) +
                        " does not match distribution " + shape_string(q.mean().shape()));
  }
  const auto split = event_split(z.shape(), "gaussian_log_prob");
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  auto mv = q.mean().values();
  auto lv = q.log_var().values();
  auto zv = z.values();
  std::vector<float> out(split.batch);
  for (std::size_t b = 0; b < split.batch; ++b) {
    double acc = 0.0;
    for (std::size_t i = b * split.dim; i < (b + 1) * split.dim; ++i) {
      const double d = static_cast<double>(zv[i]) - mv[i];
      acc += -0.5 * (log_two_pi + lv[i] + d * d * std::exp(-static_cast<double>(lv[i])));
    }
    out[b] = static_cast<float>(acc);
  }
  const Tensor mean = q.mean(), log_var = q.log_var();
  return make_result("gaussian_log_prob", split.out_shape, std::move(out), {mean, log_var, z},
                     [mean, log_var, z, split](std::span<const float> g) {
                       auto mv = mean.values();
                       auto lv = log_var.values();
                       auto zv = z.values();
                       const std::size_t n = mv.size();
                       std::vector<float> d_mean(n), d_lv(n), d_z(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double gi = g[i / split.dim];
                         const double inv_var = std::exp(-static_cast<double>(lv[i]));
                         const double d = static_cast<double>(zv[i]) - mv[i];
                         d_mean[i] = static_cast<float>(gi * d * inv_var);
                         d_z[i] = -d_mean[i];
                         d_lv[i] = static_cast<float>(gi * 0.5 * (d * d * inv_var - 1.0));
                       }
                       accumulate_grad(mean, d_mean);
                       accumulate_grad(log_var, d_lv);
                       accumulate_grad(z, d_z);
                     });
}

}  // namespace incpvae
