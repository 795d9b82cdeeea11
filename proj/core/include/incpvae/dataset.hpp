#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "incpvae/tensor.hpp"

namespace incpvae {

enum class Source { kFashionMnist, kMnist, kCifar10, kSvhn, kSynthetic2d };
enum class Split { kTrain, kTest };

std::string_view to_string(Source source);
std::string_view to_string(Split split);
// Throws ContractError for unknown names.
Source parse_source(std::string_view name);

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t pixels() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

// Immutable collection of equally shaped samples with values in [0, 1].
// Pixels are stored contiguously, item-major, each item channel-major
// (C x H x W).
class Dataset {
 public:
  struct Unchecked {};

  Dataset() = default;
  Dataset(ImageShape shape, std::vector<float> pixels, Source source, Split split,
          std::vector<std::uint8_t> labels = {});
  // Skips the [0, 1] range check; used for unclamped noise.
  Dataset(Unchecked, ImageShape shape, std::vector<float> pixels, Source source, Split split,
          std::vector<std::uint8_t> labels = {});

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  const ImageShape& shape() const { return shape_; }
  std::size_t item_size() const { return shape_.pixels(); }
  Source source() const { return source_; }
  Split split() const { return split_; }
  const std::vector<std::uint8_t>& labels() const { return labels_; }

  std::span<const float> pixels() const { return pixels_; }
  std::span<const float> item(std::size_t index) const;

  // [indices.size() x item_size()] constant tensor.
  Tensor batch(std::span<const std::size_t> indices) const;
  // Items [begin, end) as a [end - begin x item_size()] tensor.
  Tensor range(std::size_t begin, std::size_t end) const;

  Dataset take(std::size_t n) const;
  Dataset select(std::span<const std::size_t> indices) const;
  Dataset with_labels(std::vector<std::uint8_t> labels) const;

 private:
  ImageShape shape_;
  std::vector<float> pixels_;
  std::vector<std::uint8_t> labels_;
  std::size_t size_ = 0;
  Source source_ = Source::kSynthetic2d;
  Split split_ = Split::kTrain;
};

// IDX container element types (third magic byte).
enum class IdxType : std::uint8_t { kUnsigned8 = 0x08, kFloat32 = 0x0D };

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Image files: magic 0x00000803 (uint8, scaled by 1/255) or 0x00000D03
// (big-endian float32, already in [0, 1]), followed by N, rows, cols.
// A fourth dimension (magic ...04) is read as N, channels, rows, cols.
Dataset decode_idx(std::span<const std::uint8_t> bytes, Source source, Split split);
Dataset load_idx(const std::filesystem::path& path, Source source, Split split);
std::vector<std::uint8_t> decode_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

// Multi-channel datasets use the 4-dimensional form. kUnsigned8 requires every value to be an
// exact multiple of 1/255 after rounding.
std::vector<std::uint8_t> encode_idx(const Dataset& dataset, IdxType type);
void save_idx(const Dataset& dataset, const std::filesystem::path& path, IdxType type);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

// CIFAR-10 binary layout: 3073-byte records, one label byte then 1024 red,
// 1024 green and 1024 blue bytes (row-major 32 x 32). SVHN is ingested from
// the same layout after offline conversion.
inline constexpr std::size_t kCifarRecordBytes = 3073;
Dataset decode_cifar_binary(std::span<const std::uint8_t> bytes, Source source, Split split);
Dataset load_cifar_binary(const std::filesystem::path& path, Source source, Split split);
std::vector<std::uint8_t> encode_cifar_binary(const Dataset& dataset);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Eight isotropic Gaussians on a ring of radius 0.3 around (0.5, 0.5).
inline constexpr std::size_t kSyntheticComponents = 8;
inline constexpr double kSyntheticRadius = 0.3;
inline constexpr double kSyntheticStd = 0.03;
std::array<std::array<double, 2>, kSyntheticComponents> synthetic2d_centers();
// n points (shape 1 x 1 x 2), component index stored as the label.
Dataset make_synthetic2d(std::size_t n, std::uint64_t seed);
// Uniform points on the unit square; the foreign set for synthetic2d.
Dataset make_uniform2d(std::size_t n, std::uint64_t seed);

// Additive Gaussian noise x~ = x + eps, eps ~ N(0, sigma^2). The noise mean
// is fixed at zero.
struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;
  bool clamp = true;

  void validate() const;
};

// Item i of the result is derived from item i of the input.
Dataset add_noise(const Dataset& dataset, const NoiseSpec& spec);

// Average pooling by an integer factor over height and width.
Dataset downsample(const Dataset& dataset, std::size_t factor);

// Noise levels for the uncertainty experiments (sigma0 < sigma1 < sigma2).
std::array<double, 3> uncertainty_noise_levels(Source source);
// Noise levels for the detection experiments (sigma3, sigma4).
std::array<double, 2> detection_noise_levels(Source source);
// Scale of the OOD output prior.
double default_sigma_ood(Source source);

}  // namespace incpvae
