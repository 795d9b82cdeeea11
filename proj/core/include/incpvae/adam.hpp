#pragma once

#include <cstdint>
#include <vector>

#include "incpvae/model.hpp"

namespace incpvae {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// First and second moment estimates, one buffer per parameter tensor.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  static AdamState for_params(const ModelParams& params);
};

// One bias-corrected Adam update using the gradients currently held by the
// parameters. Parameters without a gradient buffer are treated as having a
// zero gradient.
void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg);

}  // namespace incpvae
