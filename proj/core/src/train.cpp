#include "incpvae/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "incpvae/checkpoint.hpp"
#include "incpvae/errors.hpp"
#include "incpvae/random.hpp"

namespace incpvae {
namespace {

Tensor normal_tensor(Shape shape, Rng& rng) {
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<float>(rng.normal());
  return Tensor(std::move(shape), std::move(values));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  adam.validate();
  if (batch_size == 0) throw ContractError("batch size must be >= 1");
}

TrainResult train(ModelParams init, const Dataset& id, const Dataset& ood,
                  const IncpConfig& cfg, const TrainConfig& tcfg) {
  cfg.validate();
  tcfg.validate();
  if (id.empty()) throw ContractError("train: empty in-distribution dataset");
  if (id.item_size() != init.arch().pixels()) {
    throw ContractError("train: dataset items have " + std::to_string(id.item_size()) +
                        " values, architecture expects " + std::to_string(init.arch().pixels()));
  }
  const bool use_incp = cfg.gamma != 0.0;
  if (use_incp && (ood.size() != id.size() || ood.item_size() != id.item_size())) {
    throw ContractError("train: OOD set must pair one-to-one with the ID set (" +
                        std::to_string(ood.size()) + " vs " + std::to_string(id.size()) + ")");
  }

  TrainResult result{std::move(init), {}, {}};
  ModelParams& params = result.params;
  AdamState state = AdamState::for_params(params);
  Rng shuffle_rng(tcfg.seed, Stream::kShuffle);
  Rng reparam_rng(tcfg.seed, Stream::kReparam);
  Rng target_rng(tcfg.seed, Stream::kTarget);
  const std::size_t latent = params.arch().latent;

  std::vector<std::size_t> order(id.size());
  std::size_t step = 0;
  bool stop = false;
  for (std::size_t epoch = 1; epoch <= tcfg.epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, shuffle_rng);
    EpochRecord sums{epoch, 0.0, 0.0, 0.0};
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += tcfg.batch_size) {
      if (tcfg.max_steps != 0 && step >= tcfg.max_steps) {
        stop = true;
        break;
      }
      const std::size_t end = std::min(begin + tcfg.batch_size, order.size());
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor x = id.batch(idx);
      const Tensor x_noisy = use_incp ? ood.batch(idx) : Tensor();
      const Tensor eps = normal_tensor({idx.size(), latent}, reparam_rng);
      Tensor target_eps;
      if (use_incp && cfg.target == TargetMode::kPosteriorSample) {
        target_eps = normal_tensor({idx.size(), latent}, target_rng);
      }

      params.zero_grad();
      LossTerms loss;
      try {
        loss = incpvae_loss(params, x, x_noisy, cfg, eps,
                            target_eps.defined() ? &target_eps : nullptr);
      } catch (const DomainError& e) {
        // NaN activations surface as domain errors inside the forward pass.
        throw NumericalError("forward pass failed at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batches) + ": " + e.what());
      }
      const double total = loss.total.item();
      if (!std::isfinite(total) || !std::isfinite(loss.neg_ielbo) ||
          !std::isfinite(loss.incp_kl)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch " << batches
           << ": neg_ielbo=" << loss.neg_ielbo << " incp_kl=" << loss.incp_kl
           << " total=" << total;
        throw NumericalError(os.str());
      }
      loss.total.backward();
      adam_step(params, state, tcfg.adam);

      result.steps.push_back({epoch, batches, loss.neg_ielbo, loss.incp_kl, total});
      sums.neg_ielbo += loss.neg_ielbo;
      sums.incp_kl += loss.incp_kl;
      sums.total += total;
      ++batches;
      ++step;
    }
    if (batches > 0) {
      const double n = static_cast<double>(batches);
      result.epochs.push_back({epoch, sums.neg_ielbo / n, sums.incp_kl / n, sums.total / n});
    }
    if (tcfg.checkpoint_path && tcfg.checkpoint_interval != 0 &&
        epoch % tcfg.checkpoint_interval == 0) {
      save_checkpoint(params, *tcfg.checkpoint_path);
    }
  }
  params.zero_grad();
  if (tcfg.checkpoint_path) save_checkpoint(params, *tcfg.checkpoint_path);
  return result;
}

std::string trace_csv(const std::vector<EpochRecord>& epochs) {
  std::string out = "epoch,neg_ielbo,incp_kl,total\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.neg_ielbo) + "," +
           format_double(e.incp_kl) + "," + format_double(e.total) + "\n";
  }
  return out;
}

void write_trace_csv(const std::vector<EpochRecord>& epochs, const std::filesystem::path& path) {
  const auto text = trace_csv(epochs);
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace incpvae
