#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "incpvae/adam.hpp"
#include "incpvae/dataset.hpp"
#include "incpvae/model.hpp"

namespace incpvae {

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // 0: no limit
  std::optional<std::filesystem::path> checkpoint_path;
  std::size_t checkpoint_interval = 0;  // epochs between checkpoints; 0: final only

  void validate() const;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double neg_ielbo = 0.0;
  double incp_kl = 0.0;
  double total = 0.0;
};

// Per-epoch means over the steps of that epoch.
struct EpochRecord {
  std::size_t epoch = 0;
  double neg_ielbo = 0.0;
  double incp_kl = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

// Mini-batch Adam on incpvae_loss. `ood` holds the noisy counterpart of each
// item of `id` (same size and order); it may be empty when cfg.gamma == 0.
// Batch order comes from Rng(seed, kShuffle), reparameterization noise from
// Rng(seed, kReparam) and, in posterior-sample target mode, target noise
// from Rng(seed, kTarget). Throws NumericalError on a non-finite loss.
TrainResult train(ModelParams init, const Dataset& id, const Dataset& ood,
                  const IncpConfig& cfg, const TrainConfig& tcfg);

// CSV with header epoch,neg_ielbo,incp_kl,total.
std::string trace_csv(const std::vector<EpochRecord>& epochs);
void write_trace_csv(const std::vector<EpochRecord>& epochs, const std::filesystem::path& path);

}  // namespace incpvae
