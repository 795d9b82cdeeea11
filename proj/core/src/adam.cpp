#include "incpvae/adam.hpp"

#include <cmath>

#include "incpvae/errors.hpp"

namespace incpvae {

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractError("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ContractError("Adam epsilon must be > 0");
}

AdamState AdamState::for_params(const ModelParams& params) {
  AdamState state;
  for (const auto& p : params.parameters()) {
    state.m.emplace_back(p.value.numel(), 0.0);
    state.v.emplace_back(p.value.numel(), 0.0);
  }
  return state;
}

void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg) {
  auto& list = params.parameters();
  if (state.m.size() != list.size() || state.v.size() != list.size()) {
    throw ContractError("Adam state does not match the parameter list");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < list.size(); ++k) {
    auto& tensor = list[k].value;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != tensor.numel()) {
      throw ContractError("Adam state size mismatch for " + list[k].name);
    }
    const auto grad = tensor.grad();
    auto values = tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] = static_cast<float>(values[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

}  // namespace incpvae
