#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "incpvae/dataset.hpp"
#include "incpvae/model.hpp"

namespace incpvae {

// Every item is evaluated with the same latent noise vector, drawn once from
// Rng(seed, kEval). Per-item results therefore do not depend on batch size,
// thread count or dataset order.
struct EvalOptions {
  std::uint64_t seed = 0;
  std::size_t batch_size = 256;
  std::size_t threads = 1;
};

std::vector<float> eval_eps(std::size_t latent, std::uint64_t seed);

// ELBO per item.
std::vector<double> evaluate_elbo(const ModelParams& params, const Dataset& data,
                                  const EvalOptions& opts);

// INCP-KL per item, item i of `noisy` against the posterior mean of item i of
// `source`. Pass the same dataset twice for self-pairing.
std::vector<double> evaluate_incp_kl(const ModelParams& params, const Dataset& source,
                                     const Dataset& noisy, double sigma_ood,
                                     const EvalOptions& opts);

struct Calibration {
  double ielbo_max = 0.0;    // largest ELBO over the ID test set
  double dkl_ood_max = 0.0;  // largest INCP-KL over the OOD calibration set
  std::size_t ielbo_argmax = 0;
  std::size_t dkl_ood_argmax = 0;
  bool sign_degenerate = false;  // ielbo_max >= 0, so U no longer grows with uncertainty
};

// Calibration from precomputed per-item values; argmax is the first index
// attaining the maximum. An empty ID set throws ContractError, non-finite
// values NumericalError. An empty `ood_kl` leaves the INCP-KL constants at 0
// (ELBO-only calibration).
Calibration calibrate_from(std::span<const double> id_elbo, std::span<const double> ood_kl);
Calibration calibrate(const ModelParams& params, const Dataset& id_test,
                      const Dataset& ood_source, const Dataset& ood_cal, double sigma_ood,
                      const EvalOptions& opts);

// U = elbo / ielbo_max. Throws DegenerateCalibrationError if ielbo_max == 0.
double elbo_ratio(double elbo, const Calibration& cal);

struct DetectionResult {
  double klr = 0.0;
  int label = 0;  // 1 = OOD (klr <= 1)
  double incp_kl = 0.0;
};

// Throws DegenerateCalibrationError if dkl_ood_max <= 0.
DetectionResult klr_detect(double incp_kl, const Calibration& cal);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  double sem = 0.0;  // std / sqrt(n)
  std::size_t n = 0;
};
Summary summarize(std::span<const double> values);

// Probability that a positive outranks a negative, ties counted one half.
double auroc(std::span<const double> pos, std::span<const double> neg);
// Average precision: sum over distinct thresholds, descending, of
// (recall_t - recall_prev) * precision_t, predicting positive for score >= t.
double auprc(std::span<const double> pos, std::span<const double> neg);

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  std::size_t count = 0;
};
// Equal-width bins over [min, max]; the last bin is closed on the right.
std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins);

std::string histogram_csv(const std::vector<HistogramBin>& bins);
std::string scores_csv(std::span<const double> scores, std::span<const int> labels);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace incpvae
