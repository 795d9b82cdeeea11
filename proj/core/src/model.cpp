#include "incpvae/model.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "incpvae/errors.hpp"
#include "incpvae/ops.hpp"
#include "incpvae/random.hpp"

namespace incpvae {
namespace {

std::atomic<std::uint64_t> incp_kl_calls{0};

std::size_t parse_size(std::string_view text, std::string_view key) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ContractError("architecture descriptor: bad value '" + std::string(text) + "' for " +
                        std::string(key));
  }
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(sep, start);
    const auto end = pos == std::string_view::npos ? text.size() : pos;
    parts.push_back(text.substr(start, end - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

struct LayerSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;
  bool is_bias;
  bool feeds_activation;
};

std::vector<LayerSpec> layer_specs(const Architecture& arch) {
  std::vector<LayerSpec> specs;
  auto dense = [&](const std::string& name, std::size_t in, std::size_t out, bool act) {
    specs.push_back({name + ".weight", {in, out}, in, false, act});
    specs.push_back({name + ".bias", {out}, in, true, act});
  };
  const std::size_t d = arch.pixels();
  const std::size_t l = arch.latent;
  if (arch.kind == ArchKind::kMlp) {
    std::size_t in = d;
    for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
      dense("enc.fc" + std::to_string(i), in, arch.hidden[i], true);
      in = arch.hidden[i];
    }
    dense("enc.head", in, 2 * l, false);
    in = l;
    for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
      const std::size_t out = arch.hidden[arch.hidden.size() - 1 - i];
      dense("dec.fc" + std::to_string(i), in, out, true);
      in = out;
    }
    dense("dec.out", in, d, false);
    return specs;
  }

  const auto layout = ConvLayout::for_input(arch.input);
  const std::size_t k = ConvLayout::kKernel;
  std::size_t channels = arch.input.channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t out = ConvLayout::kEncoderChannels[i];
    const std::string name = "enc.conv" + std::to_string(i);
    specs.push_back({name + ".weight", {out, channels, k, k}, channels * k * k, false, true});
    specs.push_back({name + ".bias", {out}, channels * k * k, true, true});
    channels = out;
  }
  dense("enc.dense", layout.flat, layout.dense, true);
  dense("enc.head", layout.dense, 2 * l, false);
  dense("dec.dense0", l, layout.dense, true);
  dense("dec.dense1", layout.dense, layout.flat, true);
  channels = ConvLayout::kEncoderChannels[2];
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t out = i < 2 ? ConvLayout::kDecoderChannels[i] : arch.input.channels;
    const std::string name = "dec.tconv" + std::to_string(i);
    const bool act = i < 2;
    specs.push_back({name + ".weight", {channels, out, k, k}, channels * k * k, false, act});
    specs.push_back({name + ".bias", {out}, channels * k * k, true, act});
    channels = out;
  }
  return specs;
}

Tensor flatten_rows(const Tensor& t) {
  const std::size_t n = t.dim(0);
  return reshape(t, Shape{n, t.numel() / n});
}

void require_width(const Tensor& t, std::size_t width, const char* what) {
  if (t.rank() != 2 || t.dim(1) != width) {
    throw ContractError(std::string(what) + ": expected [N x " + std::to_string(width) +
                        "], got " + shape_string(t.shape()));
  }
  if (t.dim(0) == 0) throw ContractError(std::string(what) + ": empty batch");
}

}  // namespace

std::string_view to_string(ArchKind kind) {
  return kind == ArchKind::kMlp ? "mlp" : "conv_table8_9";
}

std::string Architecture::descriptor() const {
  std::ostringstream os;
  os << to_string(kind) << ";c=" << input.channels << ";h=" << input.height
     << ";w=" << input.width;
  if (kind == ArchKind::kMlp) {
    os << ";hidden=";
    for (std::size_t i = 0; i < hidden.size(); ++i) os << (i ? "," : "") << hidden[i];
  }
  os << ";latent=" << latent << ";slope=" << leaky_slope;
  return os.str();
}

Architecture Architecture::parse(std::string_view descriptor) {
  auto parts = split(descriptor, ';');
  Architecture arch;
  if (parts.empty()) throw ContractError("empty architecture descriptor");
  if (parts[0] == "mlp") {
    arch.kind = ArchKind::kMlp;
  } else if (parts[0] == "conv_table8_9") {
    arch.kind = ArchKind::kConvTable89;
    arch.hidden.clear();
  } else {
    throw ContractError("unknown architecture '" + std::string(parts[0]) + "'");
  }
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string_view::npos) {
      throw ContractError("architecture descriptor: malformed field '" + std::string(parts[i]) +
                          "'");
    }
    const auto key = parts[i].substr(0, eq);
    const auto value = parts[i].substr(eq + 1);
    if (key == "c") {
      arch.input.channels = parse_size(value, key);
    } else if (key == "h") {
      arch.input.height = parse_size(value, key);
    } else if (key == "w") {
      arch.input.width = parse_size(value, key);
    } else if (key == "latent") {
      arch.latent = parse_size(value, key);
    } else if (key == "hidden") {
      arch.hidden.clear();
      if (!value.empty()) {
        for (auto v : split(value, ',')) arch.hidden.push_back(parse_size(v, key));
      }
    } else if (key == "slope") {
      arch.leaky_slope = std::stof(std::string(value));
    } else {
      throw ContractError("architecture descriptor: unknown field '" + std::string(key) + "'");
    }
  }
  arch.validate();
  return arch;
}

void Architecture::validate() const {
  if (input.pixels() == 0) throw ContractError("architecture input must be non-empty");
  if (latent == 0) throw ContractError("latent dimension must be positive");
  if (!(leaky_slope >= 0.0f && leaky_slope < 1.0f)) {
    throw ContractError("leaky_relu slope must lie in [0, 1)");
  }
  if (kind == ArchKind::kMlp) {
    for (auto h : hidden) {
      if (h == 0) throw ContractError("hidden widths must be positive");
    }
  } else {
    ConvLayout::for_input(input);
  }
}

ConvLayout ConvLayout::for_input(const ImageShape& input) {
  if (input.height % 4 != 0 || input.width % 4 != 0 || input.height < 4 || input.width < 4) {
    throw DimensionError("conv_table8_9 needs image sides divisible by 4, got " +
                         std::to_string(input.height) + "x" + std::to_string(input.width));
  }
  ConvLayout layout{};
  std::size_t h = input.height, w = input.width;
  for (std::size_t stride : kEncoderStrides) {
    h = conv_output_size(h, kKernel, stride, kPadding);
    w = conv_output_size(w, kKernel, stride, kPadding);
  }
  layout.feature_h = h;
  layout.feature_w = w;
  layout.flat = kEncoderChannels[2] * h * w;
  layout.dense = 2 * layout.flat;
  return layout;
}

ModelParams::ModelParams(Architecture arch, std::vector<NamedTensor> params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  const auto layout = parameter_layout(arch_);
  if (layout.size() != params_.size()) {
    throw ContractError("architecture " + arch_.descriptor() + " expects " +
                        std::to_string(layout.size()) + " parameters, got " +
                        std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].first != params_[i].name || layout[i].second != params_[i].value.shape()) {
      throw ContractError("parameter " + std::to_string(i) + ": expected " + layout[i].first +
                          shape_string(layout[i].second) + ", got " + params_[i].name +
                          shape_string(params_[i].value.shape()));
    }
  }
}

ModelParams::ModelParams(const ModelParams& other) : arch_(other.arch_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) {
    auto v = p.value.values();
    params_.push_back({p.name, Tensor(p.value.shape(), std::vector<float>(v.begin(), v.end()),
                                      p.value.requires_grad())});
  }
}

ModelParams& ModelParams::operator=(const ModelParams& other) {
  if (this != &other) *this = ModelParams(other);
  return *this;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const Architecture& arch) {
  std::vector<std::pair<std::string, Shape>> out;
  for (auto& s : layer_specs(arch)) out.emplace_back(s.name, s.shape);
  return out;
}

ModelParams ModelParams::init(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed, Stream::kInit);
  std::vector<NamedTensor> params;
  for (const auto& spec : layer_specs(arch)) {
    std::vector<float> values(shape_numel(spec.shape), 0.0f);
    if (!spec.is_bias) {
      const double slope = arch.leaky_slope;
      const double gain_sq = spec.feeds_activation ? 2.0 / (1.0 + slope * slope) : 1.0;
      const double bound = std::sqrt(3.0 * gain_sq / static_cast<double>(spec.fan_in));
      for (auto& v : values) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    }
    params.push_back({spec.name, Tensor(spec.shape, std::move(values), true)});
  }
  return ModelParams(arch, std::move(params));
}

ModelParams ModelParams::zeros(const Architecture& arch) {
  arch.validate();
  std::vector<NamedTensor> params;
  for (const auto& [name, shape] : parameter_layout(arch)) {
    params.push_back({name, Tensor::zeros(shape, true)});
  }
  return ModelParams(arch, std::move(params));
}

const Tensor& ModelParams::at(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

ModelParams ModelParams::frozen() const {
  ModelParams copy(*this);
  for (auto& p : copy.params_) {
    auto v = p.value.values();
    p.value = Tensor(p.value.shape(), std::vector<float>(v.begin(), v.end()), false);
  }
  return copy;
}

void ModelParams::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

DiagGaussian encode(const ModelParams& params, const Tensor& x) {
  const auto& arch = params.arch();
  require_width(x, arch.pixels(), "encode");
  const std::size_t n = x.dim(0);
  const float slope = arch.leaky_slope;
  Tensor h;
  if (arch.kind == ArchKind::kMlp) {
    h = x;
    for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
      const std::string name = "enc.fc" + std::to_string(i);
      h = leaky_relu(linear(h, params.at(name + ".weight"), params.at(name + ".bias")), slope);
    }
  } else {
    h = reshape(x, Shape{n, arch.input.channels, arch.input.height, arch.input.width});
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string name = "enc.conv" + std::to_string(i);
      h = leaky_relu(conv2d(h, params.at(name + ".weight"), params.at(name + ".bias"),
                            ConvLayout::kEncoderStrides[i], ConvLayout::kPadding),
                     slope);
    }
    h = leaky_relu(
        linear(flatten_rows(h), params.at("enc.dense.weight"), params.at("enc.dense.bias")),
        slope);
  }
  auto out = linear(h, params.at("enc.head.weight"), params.at("enc.head.bias"));
  const std::size_t l = arch.latent;
  return DiagGaussian(slice_columns(out, 0, l), slice_columns(out, l, 2 * l));
}

BernoulliImage decode(const ModelParams& params, const Tensor& z) {
  const auto& arch = params.arch();
  require_width(z, arch.latent, "decode");
  const std::size_t n = z.dim(0);
  const float slope = arch.leaky_slope;
  if (arch.kind == ArchKind::kMlp) {
    Tensor h = z;
    for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
      const std::string name = "dec.fc" + std::to_string(i);
      h = leaky_relu(linear(h, params.at(name + ".weight"), params.at(name + ".bias")), slope);
    }
    return BernoulliImage(linear(h, params.at("dec.out.weight"), params.at("dec.out.bias")));
  }
  const auto layout = ConvLayout::for_input(arch.input);
  Tensor h = leaky_relu(linear(z, params.at("dec.dense0.weight"), params.at("dec.dense0.bias")),
                        slope);
  h = leaky_relu(linear(h, params.at("dec.dense1.weight"), params.at("dec.dense1.bias")), slope);
  h = reshape(h, Shape{n, ConvLayout::kEncoderChannels[2], layout.feature_h, layout.feature_w});
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name = "dec.tconv" + std::to_string(i);
    h = conv_transpose2d(h, params.at(name + ".weight"), params.at(name + ".bias"),
                         ConvLayout::kDecoderStrides[i], ConvLayout::kPadding,
                         ConvLayout::kDecoderOutputPadding[i]);
    if (i < 2) h = leaky_relu(h, slope);
  }
  if (h.dim(2) != arch.input.height || h.dim(3) != arch.input.width) {
    throw DimensionError("decoder produced " + shape_string(h.shape()) + " for input " +
                         std::to_string(arch.input.height) + "x" +
                         std::to_string(arch.input.width));
  }
  return BernoulliImage(flatten_rows(h));
}

ElboTerms elbo_terms(const ModelParams& params, const Tensor& x, const Tensor& eps) {
  const auto q = encode(params, x);
  const auto z = reparam_sample(q, eps);
  const auto px = decode(params, z);
  ElboTerms terms;
  terms.reconstruction = bernoulli_log_prob(px, x);
  terms.kl = kl_diag_gaussian(q, DiagGaussian::standard(q.mean().shape()));
  terms.elbo = sub(terms.reconstruction, terms.kl);
  return terms;
}

Tensor elbo(const ModelParams& params, const Tensor& x, const Tensor& eps) {
  return elbo_terms(params, x, eps).elbo;
}

std::string_view to_string(TargetMode mode) {
  return mode == TargetMode::kPosteriorMean ? "mean" : "sample";
}

TargetMode parse_target_mode(std::string_view name) {
  if (name == "mean") return TargetMode::kPosteriorMean;
  if (name == "sample") return TargetMode::kPosteriorSample;
  throw ContractError("unknown target mode '" + std::string(name) + "' (expected mean|sample)");
}

void IncpConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ContractError("gamma must be finite and >= 0");
  }
  if (!(sigma_ood > 0.0) || !std::isfinite(sigma_ood)) {
    throw ContractError("sigma_ood must be finite and > 0");
  }
}

Tensor incp_kl_to_target(const ModelParams& params, const Tensor& x_noisy,
                         const Tensor& target_mean, double sigma_ood) {
  incp_kl_calls.fetch_add(1, std::memory_order_relaxed);
  const auto q_noisy = encode(params, x_noisy);
  const auto prior = DiagGaussian::isotropic(target_mean.detach(), sigma_ood);
  return kl_diag_gaussian(q_noisy, prior);
}

Tensor incp_kl(const ModelParams& params, const Tensor& x, const Tensor& x_noisy,
               const IncpConfig& cfg, const Tensor* target_eps) {
  cfg.validate();
  if (!x_noisy.defined() || x.shape() != x_noisy.shape()) {
    throw ContractError("incp_kl: clean and noisy batches are not paired (" +
                        shape_string(x.shape()) + " vs " +
                        (x_noisy.defined() ? shape_string(x_noisy.shape()) : "undefined") + ")");
  }
  const auto q_clean = encode(params, x);
  Tensor target;
  if (cfg.target == TargetMode::kPosteriorMean) {
    target = q_clean.mean().detach();
  } else {
    if (target_eps == nullptr) throw ContractError("incp_kl: sample target needs target_eps");
    target = reparam_sample(q_clean, *target_eps).detach();
  }
  return incp_kl_to_target(params, x_noisy, target, cfg.sigma_ood);
}

std::uint64_t incp_kl_evaluation_count() { return incp_kl_calls.load(); }

LossTerms incpvae_loss(const ModelParams& params, const Tensor& x, const Tensor& x_noisy,
                       const IncpConfig& cfg, const Tensor& eps, const Tensor* target_eps) {
  cfg.validate();
  if (x.rank() != 2 || x.dim(0) == 0) throw ContractError("incpvae_loss: empty batch");
  LossTerms terms;
  const Tensor neg_elbo = mean(negate(elbo(params, x, eps)));
  terms.neg_ielbo = neg_elbo.item();
  if (cfg.gamma == 0.0) {
    terms.total = neg_elbo;
    return terms;
  }
  const Tensor kl = mean(incp_kl(params, x, x_noisy, cfg, target_eps));
  terms.incp_kl = kl.item();
  terms.total = add(neg_elbo, mul(kl, static_cast<float>(cfg.gamma)));
  return terms;
}

}  // namespace incpvae
