#include "incpvae/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "incpvae/dataset.hpp"
#include "incpvae/errors.hpp"

namespace incpvae {
namespace {

constexpr char kMagic[4] = {'I', 'N', 'C', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | s[i];
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  const auto desc = params.arch().descriptor();
  put_u32(out, static_cast<std::uint32_t>(desc.size()));
  out.insert(out.end(), desc.begin(), desc.end());
  for (const auto& p : params.parameters()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : p.value.values()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("not an INCP checkpoint", 0);
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const auto desc_len = r.u32("descriptor length");
  auto desc = r.take(desc_len, "descriptor");
  const Architecture arch =
      Architecture::parse(std::string(reinterpret_cast<const char*>(desc.data()), desc.size()));

  std::vector<NamedTensor> params;
  while (!r.done()) {
    const auto name_len = r.u32("name length");
    auto name = r.take(name_len, "name");
    const auto rank_offset = r.pos();
    const auto rank = r.u32("rank");
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), rank_offset);
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(r.u32("dimension"));
      numel *= shape.back();
    }
    const auto values_offset = r.pos();
    if ((bytes.size() - values_offset) / 4 < numel) {
      throw FormatError("checkpoint truncated while reading values", values_offset);
    }
    std::vector<float> values(numel);
    for (auto& v : values) v = std::bit_cast<float>(r.u32("value"));
    params.push_back({std::string(reinterpret_cast<const char*>(name.data()), name.size()),
                      Tensor(std::move(shape), std::move(values), true)});
  }
  return ModelParams(arch, std::move(params));
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace incpvae
