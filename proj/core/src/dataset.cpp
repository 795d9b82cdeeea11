#include "incpvae/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>

#include "incpvae/errors.hpp"
#include "incpvae/random.hpp"

namespace incpvae {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw FormatError("truncated header", offset);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void check_unit_range(std::span<const float> pixels) {
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (!(pixels[i] >= 0.0f && pixels[i] <= 1.0f)) {
      throw DomainError("dataset value " + std::to_string(pixels[i]) + " at index " +
                        std::to_string(i) + " outside [0, 1]");
    }
  }
}

std::uint8_t to_byte(float v) {
  const float scaled = v * 255.0f;
  const float rounded = std::nearbyint(scaled);
  if (rounded < 0.0f || rounded > 255.0f) throw DomainError("pixel outside [0, 1]");
  return static_cast<std::uint8_t>(rounded);
}

}  // namespace

std::string_view to_string(Source source) {
  switch (source) {
    case Source::kFashionMnist: return "fashionmnist";
    case Source::kMnist: return "mnist";
    case Source::kCifar10: return "cifar10";
    case Source::kSvhn: return "svhn";
    case Source::kSynthetic2d: return "synthetic2d";
  }
  return "unknown";
}

std::string_view to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Source parse_source(std::string_view name) {
  for (auto s : {Source::kFashionMnist, Source::kMnist, Source::kCifar10, Source::kSvhn,
                 Source::kSynthetic2d}) {
    if (to_string(s) == name) return s;
  }
  throw ContractError("unknown dataset '" + std::string(name) + "'");
}

Dataset::Dataset(ImageShape shape, std::vector<float> pixels, Source source, Split split,
                 std::vector<std::uint8_t> labels)
    : Dataset(Unchecked{}, shape, std::move(pixels), source, split, std::move(labels)) {
  check_unit_range(pixels_);
}

Dataset::Dataset(Unchecked, ImageShape shape, std::vector<float> pixels, Source source,
                 Split split, std::vector<std::uint8_t> labels)
    : shape_(shape),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)),
      source_(source),
      split_(split) {
  const std::size_t d = shape_.pixels();
  if (d == 0 || pixels_.size() % d != 0) {
    throw DimensionError("dataset of " + std::to_string(pixels_.size()) +
                         " values is not a whole number of " + std::to_string(d) + "-value items");
  }
  size_ = pixels_.size() / d;
  if (!labels_.empty() && labels_.size() != size_) {
    throw DimensionError("dataset has " + std::to_string(size_) + " items but " +
                         std::to_string(labels_.size()) + " labels");
  }
}

std::span<const float> Dataset::item(std::size_t index) const {
  if (index >= size_) {
    throw ContractError("item " + std::to_string(index) + " out of range (size " +
                        std::to_string(size_) + ")");
  }
  return std::span<const float>(pixels_).subspan(index * item_size(), item_size());
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t d = item_size();
  std::vector<float> values(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = item(indices[r]);
    std::copy(src.begin(), src.end(), values.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return Tensor(Shape{indices.size(), d}, std::move(values));
}

Tensor Dataset::range(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size_) throw ContractError("dataset range out of bounds");
  const std::size_t d = item_size();
  std::vector<float> values(pixels_.begin() + static_cast<std::ptrdiff_t>(begin * d),
                            pixels_.begin() + static_cast<std::ptrdiff_t>(end * d));
  return Tensor(Shape{end - begin, d}, std::move(values));
}

Dataset Dataset::take(std::size_t n) const {
  n = std::min(n, size_);
  std::vector<float> values(pixels_.begin(),
                            pixels_.begin() + static_cast<std::ptrdiff_t>(n * item_size()));
  std::vector<std::uint8_t> labels;
  if (!labels_.empty()) labels.assign(labels_.begin(), labels_.begin() + static_cast<std::ptrdiff_t>(n));
  return Dataset(Unchecked{}, shape_, std::move(values), source_, split_, std::move(labels));
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
  std::vector<float> values;
  values.reserve(indices.size() * item_size());
  std::vector<std::uint8_t> labels;
  for (auto i : indices) {
    auto src = item(i);
    values.insert(values.end(), src.begin(), src.end());
    if (!labels_.empty()) labels.push_back(labels_[i]);
  }
  return Dataset(Unchecked{}, shape_, std::move(values), source_, split_, std::move(labels));
}

Dataset Dataset::with_labels(std::vector<std::uint8_t> labels) const {
  return Dataset(Unchecked{}, shape_, pixels_, source_, split_, std::move(labels));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Dataset decode_idx(std::span<const std::uint8_t> bytes, Source source, Split split) {
  const std::uint32_t magic = read_be32(bytes, 0);
  const std::uint32_t ndims = magic & 0xFFu;
  if ((magic & 0xFFFF0000u) != 0 || (ndims != 3 && ndims != 4)) {
    throw FormatError("bad IDX image magic 0x" + [&] {
      char buf[9];
      std::snprintf(buf, sizeof buf, "%08X", magic);
      return std::string(buf);
    }(), 0);
  }
  const auto type = static_cast<std::uint8_t>((magic >> 8) & 0xFFu);
  if (type != static_cast<std::uint8_t>(IdxType::kUnsigned8) &&
      type != static_cast<std::uint8_t>(IdxType::kFloat32)) {
    throw FormatError("unsupported IDX element type " + std::to_string(type), 2);
  }
  // N x rows x cols, or N x channels x rows x cols.
  const std::size_t header = 4 + 4 * ndims;
  const std::size_t count = read_be32(bytes, 4);
  const std::size_t channels = ndims == 4 ? read_be32(bytes, 8) : 1;
  const std::size_t rows = read_be32(bytes, header - 8);
  const std::size_t cols = read_be32(bytes, header - 4);
  const std::size_t element = type == static_cast<std::uint8_t>(IdxType::kFloat32) ? 4 : 1;
  const std::size_t item = channels * rows * cols;
  const std::size_t expected = header + count * item * element;
  if (bytes.size() < expected) {
    throw FormatError("truncated IDX payload: expected " + std::to_string(expected) +
                          " bytes, file has " + std::to_string(bytes.size()),
                      bytes.size());
  }
  if (bytes.size() > expected) throw FormatError("trailing bytes after IDX payload", expected);
  std::vector<float> pixels(count * item);
  if (element == 1) {
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = bytes[header + i] / 255.0f;
  } else {
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      const std::uint32_t raw = read_be32(bytes, header + 4 * i);
      pixels[i] = std::bit_cast<float>(raw);
      if (!(pixels[i] >= 0.0f && pixels[i] <= 1.0f)) {
        throw FormatError("float pixel outside [0, 1]", header + 4 * i);
      }
    }
  }
  return Dataset(ImageShape{channels, rows, cols}, std::move(pixels), source, split);
}

Dataset load_idx(const std::filesystem::path& path, Source source, Split split) {
  return decode_idx(read_file(path), source, split);
}

std::vector<std::uint8_t> decode_idx_labels(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelMagic) throw FormatError("bad IDX label magic", 0);
  const std::size_t count = read_be32(bytes, 4);
  if (bytes.size() != 8 + count) {
    throw FormatError("IDX label payload size mismatch", std::min(bytes.size(), 8 + count));
  }
  return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.end());
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  return decode_idx_labels(read_file(path));
}

std::vector<std::uint8_t> encode_idx(const Dataset& dataset, IdxType type) {
  const bool multi = dataset.shape().channels != 1;
  std::vector<std::uint8_t> out;
  const std::size_t element = type == IdxType::kFloat32 ? 4 : 1;
  out.reserve(20 + dataset.pixels().size() * element);
  write_be32(out, (multi ? 4u : 3u) | (static_cast<std::uint32_t>(type) << 8));
  write_be32(out, static_cast<std::uint32_t>(dataset.size()));
  if (multi) write_be32(out, static_cast<std::uint32_t>(dataset.shape().channels));
  write_be32(out, static_cast<std::uint32_t>(dataset.shape().height));
  write_be32(out, static_cast<std::uint32_t>(dataset.shape().width));
  for (float v : dataset.pixels()) {
    if (type == IdxType::kFloat32) {
      write_be32(out, std::bit_cast<std::uint32_t>(v));
    } else {
      out.push_back(to_byte(v));
    }
  }
  return out;
}

void save_idx(const Dataset& dataset, const std::filesystem::path& path, IdxType type) {
  write_file(path, encode_idx(dataset, type));
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  write_be32(out, kIdxLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

Dataset decode_cifar_binary(std::span<const std::uint8_t> bytes, Source source, Split split) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR binary size " + std::to_string(bytes.size()) +
                          " is not a multiple of " + std::to_string(kCifarRecordBytes),
                      bytes.size() - bytes.size() % kCifarRecordBytes);
  }
  const std::size_t count = bytes.size() / kCifarRecordBytes;
  std::vector<float> pixels(count * 3072);
  std::vector<std::uint8_t> labels(count);
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint8_t* record = bytes.data() + r * kCifarRecordBytes;
    labels[r] = record[0];
    for (std::size_t i = 0; i < 3072; ++i) pixels[r * 3072 + i] = record[1 + i] / 255.0f;
  }
  return Dataset(ImageShape{3, 32, 32}, std::move(pixels), source, split, std::move(labels));
}

Dataset load_cifar_binary(const std::filesystem::path& path, Source source, Split split) {
  return decode_cifar_binary(read_file(path), source, split);
}

std::vector<std::uint8_t> encode_cifar_binary(const Dataset& dataset) {
  if (!(dataset.shape() == ImageShape{3, 32, 32})) {
    throw ContractError("CIFAR binary records hold 3 x 32 x 32 images");
  }
  std::vector<std::uint8_t> out;
  out.reserve(dataset.size() * kCifarRecordBytes);
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    out.push_back(dataset.labels().empty() ? 0 : dataset.labels()[r]);
    for (float v : dataset.item(r)) out.push_back(to_byte(v));
  }
  return out;
}

std::array<std::array<double, 2>, kSyntheticComponents> synthetic2d_centers() {
  std::array<std::array<double, 2>, kSyntheticComponents> centers{};
  for (std::size_t k = 0; k < kSyntheticComponents; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / kSyntheticComponents;
    centers[k] = {0.5 + kSyntheticRadius * std::cos(angle),
                  0.5 + kSyntheticRadius * std::sin(angle)};
  }
  return centers;
}

Dataset make_synthetic2d(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("make_synthetic2d: n must be positive");
  const auto centers = synthetic2d_centers();
  Rng rng(seed, Stream::kSynthetic);
  std::vector<float> pixels(2 * n);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(rng.uniform_index(kSyntheticComponents));
    labels[i] = static_cast<std::uint8_t>(k);
    for (std::size_t c = 0; c < 2; ++c) {
      const double v = centers[k][c] + kSyntheticStd * rng.normal();
      pixels[2 * i + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return Dataset(ImageShape{1, 1, 2}, std::move(pixels), Source::kSynthetic2d, Split::kTrain,
                 std::move(labels));
}

Dataset make_uniform2d(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("make_uniform2d: n must be positive");
  Rng rng(seed, Stream::kSynthetic, 1);
  std::vector<float> pixels(2 * n);
  for (auto& v : pixels) v = static_cast<float>(rng.uniform());
  return Dataset(ImageShape{1, 1, 2}, std::move(pixels), Source::kSynthetic2d, Split::kTest);
}

void NoiseSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ContractError("noise sigma must be finite and >= 0, got " + std::to_string(sigma));
  }
}

Dataset add_noise(const Dataset& dataset, const NoiseSpec& spec) {
  spec.validate();
  std::vector<float> pixels(dataset.pixels().begin(), dataset.pixels().end());
  if (spec.sigma > 0.0) {
    Rng rng(spec.seed, Stream::kNoise);
    for (auto& v : pixels) {
      const double noisy = static_cast<double>(v) + spec.sigma * rng.normal();
      v = static_cast<float>(spec.clamp ? std::clamp(noisy, 0.0, 1.0) : noisy);
    }
  }
  return Dataset(Dataset::Unchecked{}, dataset.shape(), std::move(pixels), dataset.source(),
                 dataset.split(), dataset.labels());
}

Dataset downsample(const Dataset& dataset, std::size_t factor) {
  if (factor == 0) throw ContractError("downsample factor must be positive");
  if (factor == 1) return dataset;
  const auto& s = dataset.shape();
  if (s.height % factor != 0 || s.width % factor != 0) {
    throw DimensionError("downsample factor " + std::to_string(factor) +
                         " does not divide image size " + std::to_string(s.height) + "x" +
                         std::to_string(s.width));
  }
  const ImageShape out_shape{s.channels, s.height / factor, s.width / factor};
  const double scale = 1.0 / static_cast<double>(factor * factor);
  std::vector<float> out(dataset.size() * out_shape.pixels());
  for (std::size_t n = 0; n < dataset.size(); ++n) {
    auto src = dataset.item(n);
    float* dst = out.data() + n * out_shape.pixels();
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t h = 0; h < out_shape.height; ++h) {
        for (std::size_t w = 0; w < out_shape.width; ++w) {
          double acc = 0.0;
          for (std::size_t i = 0; i < factor; ++i) {
            for (std::size_t j = 0; j < factor; ++j) {
              acc += src[(c * s.height + h * factor + i) * s.width + w * factor + j];
            }
          }
          dst[(c * out_shape.height + h) * out_shape.width + w] =
              static_cast<float>(std::clamp(acc * scale, 0.0, 1.0));
        }
      }
    }
  }
  return Dataset(out_shape, std::move(out), dataset.source(), dataset.split(), dataset.labels());
}

std::array<double, 3> uncertainty_noise_levels(Source source) {
  switch (source) {
    case Source::kFashionMnist: return {0.0001, 0.00028, 0.1};
    case Source::kMnist: return {0.001, 0.008, 0.010};
    case Source::kCifar10: return {0.01, 0.05, 0.10};
    case Source::kSvhn: return {0.001, 0.009, 0.010};
    case Source::kSynthetic2d: return {0.01, 0.03, 0.1};
  }
  return {0.0, 0.0, 0.0};
}

// Only FashionMNIST and CIFAR10 have published detection levels; MNIST and
// SVHN reuse those of their image family.
std::array<double, 2> detection_noise_levels(Source source) {
  switch (source) {
    case Source::kFashionMnist:
    case Source::kMnist: return {0.00028, 0.00050};
    case Source::kCifar10:
    case Source::kSvhn: return {0.05, 0.09};
    case Source::kSynthetic2d: return {0.05, 0.09};
  }
  return {0.0, 0.0};
}

double default_sigma_ood(Source source) {
  switch (source) {
    case Source::kCifar10:
    case Source::kSvhn: return std::exp(1.00);
    default: return std::exp(0.65);
  }
}

}  // namespace incpvae
