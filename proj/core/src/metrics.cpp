#include "incpvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "incpvae/distributions.hpp"
#include "incpvae/errors.hpp"
#include "incpvae/random.hpp"

namespace incpvae {
namespace {

Tensor repeat_rows(const std::vector<float>& row, std::size_t n) {
  std::vector<float> values;
  values.reserve(row.size() * n);
  for (std::size_t i = 0; i < n; ++i) values.insert(values.end(), row.begin(), row.end());
  return Tensor(Shape{n, row.size()}, std::move(values));
}

// Splits [0, n) into contiguous shards, one frozen model copy per thread;
// `f(model, begin, end, out)` fills out[begin, end).
template <typename F>
std::vector<double> sharded(const ModelParams& params, std::size_t n, const EvalOptions& opts,
                            F f) {
  if (opts.batch_size == 0) throw ContractError("evaluation batch size must be >= 1");
  std::vector<double> out(n);
  const std::size_t threads = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(n, 1));
  auto run = [&](std::size_t begin, std::size_t end) {
    const ModelParams model = params.frozen();
    for (std::size_t b = begin; b < end; b += opts.batch_size) {
      f(model, b, std::min(b + opts.batch_size, end), out);
    }
  };
  if (threads == 1) {
    run(0, n);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(n, t * chunk), end = std::min(n, begin + chunk);
    pool.emplace_back([&, t, begin, end] {
      try {
        run(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void check_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericalError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<float> eval_eps(std::size_t latent, std::uint64_t seed) {
  Rng rng(seed, Stream::kEval);
  std::vector<float> eps(latent);
  for (auto& e : eps) e = static_cast<float>(rng.normal());
  return eps;
}

std::vector<double> evaluate_elbo(const ModelParams& params, const Dataset& data,
                                  const EvalOptions& opts) {
  const auto eps = eval_eps(params.arch().latent, opts.seed);
  return sharded(params, data.size(), opts,
                 [&](const ModelParams& model, std::size_t begin, std::size_t end,
                     std::vector<double>& out) {
                   const auto e = elbo(model, data.range(begin, end), repeat_rows(eps, end - begin));
                   auto v = e.values();
                   for (std::size_t i = 0; i < v.size(); ++i) out[begin + i] = v[i];
                 });
}

std::vector<double> evaluate_incp_kl(const ModelParams& params, const Dataset& source,
                                     const Dataset& noisy, double sigma_ood,
                                     const EvalOptions& opts) {
  if (source.size() != noisy.size() || source.item_size() != noisy.item_size()) {
    throw ContractError("evaluate_incp_kl: source and noisy sets are not paired");
  }
  if (!(sigma_ood > 0.0)) throw ContractError("sigma_ood must be > 0");
  return sharded(params, noisy.size(), opts,
                 [&](const ModelParams& model, std::size_t begin, std::size_t end,
                     std::vector<double>& out) {
                   const Tensor target = encode(model, source.range(begin, end)).mean();
                   const auto kl =
                       incp_kl_to_target(model, noisy.range(begin, end), target, sigma_ood);
                   auto v = kl.values();
                   for (std::size_t i = 0; i < v.size(); ++i) out[begin + i] = v[i];
                 });
}

Calibration calibrate_from(std::span<const double> id_elbo, std::span<const double> ood_kl) {
  if (id_elbo.empty()) throw ContractError("calibrate: empty ID test set");
  check_finite(id_elbo, "calibrate (ELBO)");
  check_finite(ood_kl, "calibrate (INCP-KL)");
  Calibration cal;
  cal.ielbo_argmax = static_cast<std::size_t>(
      std::max_element(id_elbo.begin(), id_elbo.end()) - id_elbo.begin());
  cal.ielbo_max = id_elbo[cal.ielbo_argmax];
  if (!ood_kl.empty()) {
    cal.dkl_ood_argmax =
        static_cast<std::size_t>(std::max_element(ood_kl.begin(), ood_kl.end()) - ood_kl.begin());
    cal.dkl_ood_max = ood_kl[cal.dkl_ood_argmax];
  }
  cal.sign_degenerate = cal.ielbo_max >= 0.0;
  return cal;
}

Calibration calibrate(const ModelParams& params, const Dataset& id_test,
                      const Dataset& ood_source, const Dataset& ood_cal, double sigma_ood,
                      const EvalOptions& opts) {
  if (id_test.empty() || ood_cal.empty()) throw ContractError("calibrate: empty dataset");
  const auto e = evaluate_elbo(params, id_test, opts);
  const auto k = evaluate_incp_kl(params, ood_source, ood_cal, sigma_ood, opts);
  return calibrate_from(e, k);
}

double elbo_ratio(double elbo, const Calibration& cal) {
  if (cal.ielbo_max == 0.0) {
    throw DegenerateCalibrationError("ELBO ratio undefined: calibration ELBO maximum is 0");
  }
  return elbo / cal.ielbo_max;
}

DetectionResult klr_detect(double incp_kl, const Calibration& cal) {
  if (!(cal.dkl_ood_max > 0.0)) {
    throw DegenerateCalibrationError("INCP-KL ratio undefined: calibration maximum " +
                                     std::to_string(cal.dkl_ood_max) + " is not positive");
  }
  DetectionResult r;
  r.incp_kl = incp_kl;
  r.klr = incp_kl / cal.dkl_ood_max;
  r.label = r.klr <= 1.0 ? 1 : 0;
  return r;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.sem = s.std / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

double auroc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw ContractError("auroc: both score sets must be non-empty");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(pos.size() + neg.size());
  for (double s : pos) items.push_back({s, true});
  for (double s : neg) items.push_back({s, false});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  // Mann-Whitney U from midranks; ranks are 1-based.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < items.size() && items[j].score == items[i].score) {
      pos_in_group += items[j].positive;
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += midrank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auprc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw ContractError("auprc: both score sets must be non-empty");
  std::vector<std::pair<double, bool>> items;
  items.reserve(pos.size() + neg.size());
  for (double s : pos) items.emplace_back(s, true);
  for (double s : neg) items.emplace_back(s, false);
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const double np = static_cast<double>(pos.size());
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].first == items[i].first) {
      (items[j].second ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / np;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw ContractError("histogram needs at least one bin");
  if (values.empty()) throw ContractError("histogram of an empty set");
  check_finite(values, "histogram");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].left = lo + width * static_cast<double>(b);
    out[b].right = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
  }
  for (double v : values) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((v - lo) / width) : 0;
    out[std::min(b, bins - 1)].count++;
  }
  return out;
}

std::string histogram_csv(const std::vector<HistogramBin>& bins) {
  std::string out = "bin_left,bin_right,count\n";
  for (const auto& b : bins) {
    out += format_double(b.left) + "," + format_double(b.right) + "," + std::to_string(b.count) +
           "\n";
  }
  return out;
}

std::string scores_csv(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("scores_csv: length mismatch");
  std::string out = "score,label\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out += format_double(scores[i]) + "," + std::to_string(labels[i]) + "\n";
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace incpvae
