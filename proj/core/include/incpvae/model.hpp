#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "incpvae/dataset.hpp"
#include "incpvae/distributions.hpp"
#include "incpvae/tensor.hpp"

namespace incpvae {

enum class ArchKind {
  kMlp,          // input -> hidden... -> [mean | log_var]; decoder mirrored
  kConvTable89,  // three 5x5 convs + dense encoder, dense + three transposed convs decoder
};

struct Architecture {
  ArchKind kind = ArchKind::kMlp;
  ImageShape input{1, 14, 14};
  std::vector<std::size_t> hidden{256, 64};  // MLP only
  std::size_t latent = 16;
  float leaky_slope = 0.01f;

  std::size_t pixels() const { return input.pixels(); }

  // e.g. "mlp;c=1;h=14;w=14;hidden=256,64;latent=16;slope=0.01"
  std::string descriptor() const;
  static Architecture parse(std::string_view descriptor);
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

std::string_view to_string(ArchKind kind);

// Fixed layer geometry of the convolutional architecture.
struct ConvLayout {
  static constexpr std::size_t kKernel = 5;
  static constexpr std::size_t kPadding = 2;
  static constexpr std::size_t kEncoderChannels[3] = {256, 32, 32};
  static constexpr std::size_t kEncoderStrides[3] = {2, 2, 1};
  static constexpr std::size_t kDecoderChannels[2] = {32, 256};  // last layer -> image channels
  static constexpr std::size_t kDecoderStrides[3] = {1, 2, 2};
  static constexpr std::size_t kDecoderOutputPadding[3] = {0, 1, 1};

  std::size_t feature_h, feature_w;  // spatial size after the conv stack
  std::size_t flat;                  // 32 * feature_h * feature_w
  std::size_t dense;                 // width of the dense layer, 2 * flat

  static ConvLayout for_input(const ImageShape& input);
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Encoder (theta) and decoder (phi) parameters. Copies are deep.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(Architecture arch, std::vector<NamedTensor> params);
  ModelParams(const ModelParams& other);
  ModelParams& operator=(const ModelParams& other);
  ModelParams(ModelParams&&) noexcept = default;
  ModelParams& operator=(ModelParams&&) noexcept = default;

  // Scaled-uniform fan-in initialization (He-style for leaky-ReLU layers),
  // zero biases, drawn from Rng(seed, Stream::kInit).
  static ModelParams init(const Architecture& arch, std::uint64_t seed);
  static ModelParams zeros(const Architecture& arch);

  const Architecture& arch() const { return arch_; }
  const Tensor& at(std::string_view name) const;
  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  // Deep copy whose tensors do not require gradients; for evaluation.
  ModelParams frozen() const;
  void zero_grad();

 private:
  Architecture arch_;
  std::vector<NamedTensor> params_;
};

// Names and shapes of every parameter, in storage order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const Architecture& arch);

// x: [N x pixels]. Returns q(z|x) with [N x latent] mean and log-variance.
DiagGaussian encode(const ModelParams& params, const Tensor& x);
// z: [N x latent]. Returns [N x pixels] logits.
BernoulliImage decode(const ModelParams& params, const Tensor& z);

struct ElboTerms {
  Tensor reconstruction;  // [N], <= 0
  Tensor kl;              // [N], >= 0
  Tensor elbo;            // [N]
};

// Single-sample ELBO with z = mean + sigma * eps.
ElboTerms elbo_terms(const ModelParams& params, const Tensor& x, const Tensor& eps);
Tensor elbo(const ModelParams& params, const Tensor& x, const Tensor& eps);

// How the mean of the OOD output prior is built from the clean input.
enum class TargetMode {
  kPosteriorMean,    // mean of q(z|x)
  kPosteriorSample,  // one reparameterized draw from q(z|x)
};

std::string_view to_string(TargetMode mode);
TargetMode parse_target_mode(std::string_view name);

struct IncpConfig {
  double gamma = 1.0;
  double sigma_ood = std::exp(0.65);
  TargetMode target = TargetMode::kPosteriorMean;

  void validate() const;
};

// KL(q(z~|x~) || N(target, sigma_ood^2 I)) per sample, where the target is
// built from x with gradients blocked. `target_eps` is required in
// kPosteriorSample mode.
Tensor incp_kl(const ModelParams& params, const Tensor& x, const Tensor& x_noisy,
               const IncpConfig& cfg, const Tensor* target_eps = nullptr);

// Same divergence against an explicit constant target mean.
Tensor incp_kl_to_target(const ModelParams& params, const Tensor& x_noisy,
                         const Tensor& target_mean, double sigma_ood);

// Number of incp_kl evaluations in this process.
std::uint64_t incp_kl_evaluation_count();

struct LossTerms {
  Tensor total;
  double neg_ielbo = 0.0;  // batch mean of -ELBO(x)
  double incp_kl = 0.0;    // batch mean of INCP-KL (0 when gamma == 0)
};

// mean(-ELBO(x)) + gamma * mean(INCP-KL(x, x~)). With gamma == 0 the
// INCP-KL branch is not evaluated and x_noisy may be undefined.
LossTerms incpvae_loss(const ModelParams& params, const Tensor& x, const Tensor& x_noisy,
                       const IncpConfig& cfg, const Tensor& eps,
                       const Tensor* target_eps = nullptr);

}  // namespace incpvae
