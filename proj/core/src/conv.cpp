#include <string>

#include "incpvae/errors.hpp"
#include "incpvae/ops.hpp"

namespace incpvae {
namespace {

struct ConvGeometry {
  std::size_t batch, in_channels, in_h, in_w;
  std::size_t out_channels, out_h, out_w;
  std::size_t kernel_h, kernel_w, stride, padding;
};

void check_bias(const std::optional<Tensor>& bias, std::size_t channels, const char* op) {
  if (bias && (bias->rank() != 1 || bias->dim(0) != channels)) {
    throw DimensionError(std::string(op) + ": bias shape " + shape_string(bias->shape()) +
                         " does not match " + std::to_string(channels) + " output channels");
  }
}

// Visits every (output position, kernel tap) pair that lands inside the
// input: f(in_index, out_index, weight_index). The weight index assumes the
// conv2d layout [O x C x kh x kw]; the transposed op remaps it.
template <typename F>
void for_each_tap(const ConvGeometry& g, F&& f) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          const std::size_t out_index = ((n * g.out_channels + o) * g.out_h + oh) * g.out_w + ow;
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - pad;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - pad;
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                const std::size_t in_index =
                    ((n * g.in_channels + c) * g.in_h + static_cast<std::size_t>(ih)) * g.in_w +
                    static_cast<std::size_t>(iw);
                const std::size_t w_index =
                    ((o * g.in_channels + c) * g.kernel_h + ki) * g.kernel_w + kj;
                f(in_index, out_index, w_index, c, o, ki, kj);
              }
            }
          }
        }
      }
    }
  }
}

std::vector<float> bias_grad(std::span<const float> g, std::size_t batch, std::size_t channels,
                             std::size_t plane) {
  std::vector<double> acc(channels, 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float* p = g.data() + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc[c] += p[i];
    }
  }
  return std::vector<float>(acc.begin(), acc.end());
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  if (stride == 0) throw DimensionError("convolution stride must be positive");
  const auto span = static_cast<std::ptrdiff_t>(in + 2 * padding) -
                    static_cast<std::ptrdiff_t>(kernel);
  if (span < 0) {
    throw DimensionError("convolution output size would be non-positive: input " +
                         std::to_string(in) + ", kernel " + std::to_string(kernel) +
                         ", padding " + std::to_string(padding));
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                       std::size_t padding, std::size_t output_padding) {
  if (stride == 0 || in == 0) throw DimensionError("transposed convolution: empty geometry");
  if (output_padding >= stride && output_padding > 0) {
    throw DimensionError("transposed convolution: output_padding must be smaller than stride");
  }
  const auto size = static_cast<std::ptrdiff_t>((in - 1) * stride + kernel + output_padding) -
                    static_cast<std::ptrdiff_t>(2 * padding);
  if (size <= 0) {
    throw DimensionError("transposed convolution output size would be non-positive");
  }
  return static_cast<std::size_t>(size);
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              std::size_t stride, std::size_t padding) {
  if (input.rank() != 4 || weight.rank() != 4 || weight.dim(1) != input.dim(1)) {
    throw DimensionError("conv2d: input " + shape_string(input.shape()) + " and weight " +
                         shape_string(weight.shape()) + " are incompatible");
  }
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_channels = weight.dim(0);
  g.kernel_h = weight.dim(2);
  g.kernel_w = weight.dim(3);
  g.stride = stride;
  g.padding = padding;
  g.out_h = conv_output_size(g.in_h, g.kernel_h, stride, padding);
  g.out_w = conv_output_size(g.in_w, g.kernel_w, stride, padding);
  check_bias(bias, g.out_channels, "conv2d");

  const std::size_t plane = g.out_h * g.out_w;
  std::vector<double> acc(g.batch * g.out_channels * plane, 0.0);
  auto x = input.values();
  auto w = weight.values();
  for_each_tap(g, [&](std::size_t i, std::size_t o, std::size_t k, auto...) {
    acc[o] += static_cast<double>(x[i]) * w[k];
  });
  std::vector<float> out(acc.size());
  for (std::size_t idx = 0; idx < acc.size(); ++idx) {
    const std::size_t channel = (idx / plane) % g.out_channels;
    out[idx] = static_cast<float>(acc[idx] + (bias ? bias->values()[channel] : 0.0f));
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  return make_result("conv2d", Shape{g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out),
                     std::move(inputs), [input, weight, bias, g, plane](std::span<const float> dy) {
                       auto x = input.values();
                       auto w = weight.values();
                       if (input.requires_grad()) {
                         std::vector<double> dx(x.size(), 0.0);
                         for_each_tap(g, [&](std::size_t i, std::size_t o, std::size_t k, auto...) {
                           dx[i] += static_cast<double>(dy[o]) * w[k];
                         });
                         accumulate_grad(input, std::vector<float>(dx.begin(), dx.end()));
                       }
                       if (weight.requires_grad()) {
                         std::vector<double> dw(w.size(), 0.0);
                         for_each_tap(g, [&](std::size_t i, std::size_t o, std::size_t k, auto...) {
                           dw[k] += static_cast<double>(dy[o]) * x[i];
                         });
                         accumulate_grad(weight, std::vector<float>(dw.begin(), dw.end()));
                       }
                       if (bias && bias->requires_grad()) {
                         accumulate_grad(*bias, bias_grad(dy, g.batch, g.out_channels, plane));
                       }
                     });
}

// The transposed convolution is expressed through the conv2d geometry with
// the roles of input and output swapped: its output is the conv2d "input"
// and its input is the conv2d "output".
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight,
                        const std::optional<Tensor>& bias, std::size_t stride,
                        std::size_t padding, std::size_t output_padding) {
  if (input.rank() != 4 || weight.rank() != 4 || weight.dim(0) != input.dim(1)) {
    throw DimensionError("conv_transpose2d: input " + shape_string(input.shape()) +
                         " and weight " + shape_string(weight.shape()) + " are incompatible");
  }
  const std::size_t batch = input.dim(0), in_c = input.dim(1), in_h = input.dim(2),
                    in_w = input.dim(3);
  const std::size_t out_c = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  const std::size_t out_h = conv_transpose_output_size(in_h, kh, stride, padding, output_padding);
  const std::size_t out_w = conv_transpose_output_size(in_w, kw, stride, padding, output_padding);
  check_bias(bias, out_c, "conv_transpose2d");

  // conv2d geometry mapping [batch x out_c x out_h x out_w] -> [batch x in_c x in_h x in_w]
  ConvGeometry g{};
  g.batch = batch;
  g.in_channels = out_c;
  g.in_h = out_h;
  g.in_w = out_w;
  g.out_channels = in_c;
  g.out_h = in_h;
  g.out_w = in_w;
  g.kernel_h = kh;
  g.kernel_w = kw;
  g.stride = stride;
  g.padding = padding;
  // conv2d weight index ((o*C + c)*kh + ki)*kw + kj with o = our input
  // channel and c = our output channel, which is exactly the [C_in x C_out x
  // kh x kw] layout of the transposed weight.

  const std::size_t plane = out_h * out_w;
  auto x = input.values();
  auto w = weight.values();
  std::vector<double> acc(batch * out_c * plane, 0.0);
  for_each_tap(g, [&](std::size_t y_idx, std::size_t x_idx, std::size_t k, auto...) {
    acc[y_idx] += static_cast<double>(x[x_idx]) * w[k];
  });
  std::vector<float> out(acc.size());
  for (std::size_t idx = 0; idx < acc.size(); ++idx) {
    const std::size_t channel = (idx / plane) % out_c;
    out[idx] = static_cast<float>(acc[idx] + (bias ? bias->values()[channel] : 0.0f));
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  return make_result(
      "conv_transpose2d", Shape{batch, out_c, out_h, out_w}, std::move(out), std::move(inputs),
      [input, weight, bias, g, batch, out_c, plane](std::span<const float> dy) {
        auto x = input.values();
        auto w = weight.values();
        if (input.requires_grad()) {
          std::vector<double> dx(x.size(), 0.0);
          for_each_tap(g, [&](std::size_t y_idx, std::size_t x_idx, std::size_t k, auto...) {
            dx[x_idx] += static_cast<double>(dy[y_idx]) * w[k];
          });
          accumulate_grad(input, std::vector<float>(dx.begin(), dx.end()));
        }
        if (weight.requires_grad()) {
          std::vector<double> dw(w.size(), 0.0);
          for_each_tap(g, [&](std::size_t y_idx, std::size_t x_idx, std::size_t k, auto...) {
            dw[k] += static_cast<double>(dy[y_idx]) * x[x_idx];
          });
          accumulate_grad(weight, std::vector<float>(dw.begin(), dw.end()));
        }
        if (bias && bias->requires_grad()) {
          accumulate_grad(*bias, bias_grad(dy, batch, out_c, plane));
        }
      });
}

}  // namespace incpvae
