#include "incpvae/ops.hpp"

#include <cmath>
#include <string>

#include "incpvae/errors.hpp"

namespace incpvae {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_string(t.shape()));
  }
}

// C[m x n] = A[m x k] * B[k x n]
std::vector<float> gemm_nn(std::span<const float> a, std::span<const float> b, std::size_t m,
                           std::size_t k, std::size_t n) {
  std::vector<float> c(m * n);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* a_row = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a_row[p];
      if (av == 0.0) continue;
      const float* b_row = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * b_row[j];
    }
    float* c_row = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] = static_cast<float>(acc[j]);
  }
  return c;
}

// dA[m x k] = dC[m x n] * B[k x n]^T
std::vector<float> gemm_nt(std::span<const float> dc, std::span<const float> b, std::size_t m,
                           std::size_t k, std::size_t n) {
  std::vector<float> out(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    const float* dc_row = dc.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float* b_row = b.data() + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(dc_row[j]) * b_row[j];
      out[i * k + p] = static_cast<float>(acc);
    }
  }
  return out;
}

// dB[k x n] = A[m x k]^T * dC[m x n]
std::vector<float> gemm_tn(std::span<const float> a, std::span<const float> dc, std::size_t m,
                           std::size_t k, std::size_t n) {
  std::vector<double> acc(k * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const float* a_row = a.data() + i * k;
    const float* dc_row = dc.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a_row[p];
      if (av == 0.0) continue;
      double* acc_row = acc.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc_row[j] += av * dc_row[j];
    }
  }
  return std::vector<float>(acc.begin(), acc.end());
}

template <typename F, typename DF>
Tensor unary(const char* name, const Tensor& t, F f, DF df) {
  auto in = t.values();
  std::vector<float> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  auto result = make_result(name, t.shape(), std::move(out), {t}, {});
  if (result.requires_grad()) {
    // The closure may not hold `result` itself (that would be a cycle), so it
    // keeps a weak reference for derivatives written in terms of the output.
    std::weak_ptr<detail::Node> self = result.node();
    result.node()->backward = [t, self, df](std::span<const float> g) {
      auto node = self.lock();
      auto x = t.values();
      std::vector<float> dx(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] = g[i] * df(x[i], node->values[i]);
      accumulate_grad(t, dx);
    };
  }
  return result;
}

enum class BinaryOp { kAdd, kSub, kMul };

Tensor binary(BinaryOp op, const Tensor& a, const Tensor& b) {
  const char* name = op == BinaryOp::kAdd ? "add" : op == BinaryOp::kSub ? "sub" : "mul";
  const bool a_scalar = a.rank() == 0;
  const bool b_scalar = b.rank() == 0;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw DimensionError(std::string(name) + ": incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  const Shape out_shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  auto av = a.values();
  auto bv = b.values();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float x = av[a_scalar ? 0 : i];
    const float y = bv[b_scalar ? 0 : i];
    out[i] = op == BinaryOp::kAdd ? x + y : op == BinaryOp::kSub ? x - y : x * y;
  }
  return make_result(name, out_shape, std::move(out), {a, b},
                     [op, a, b, a_scalar, b_scalar, n](std::span<const float> g) {
                       auto av = a.values();
                       auto bv = b.values();
                       auto reduce = [&](const Tensor& target, bool is_scalar, auto&& deriv) {
                         if (!target.requires_grad()) return;
                         if (is_scalar) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < n; ++i) acc += g[i] * deriv(i);
                           accumulate_grad(target, std::vector<float>{static_cast<float>(acc)});
                         } else {
                           std::vector<float> d(n);
                           for (std::size_t i = 0; i < n; ++i) d[i] = g[i] * deriv(i);
                           accumulate_grad(target, d);
                         }
                       };
                       auto a_at = [&](std::size_t i) { return av[a_scalar ? 0 : i]; };
                       auto b_at = [&](std::size_t i) { return bv[b_scalar ? 0 : i]; };
                       switch (op) {
                         case BinaryOp::kAdd:
                           reduce(a, a_scalar, [](std::size_t) { return 1.0f; });
                           reduce(b, b_scalar, [](std::size_t) { return 1.0f; });
                           break;
                         case BinaryOp::kSub:
                           reduce(a, a_scalar, [](std::size_t) { return 1.0f; });
                           reduce(b, b_scalar, [](std::size_t) { return -1.0f; });
                           break;
                         case BinaryOp::kMul:
                           reduce(a, a_scalar, b_at);
                           reduce(b, b_scalar, a_at);
                           break;
                       }
                     });
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Tensor reduce_axis(const Tensor& t, std::size_t axis, bool average) {
  if (axis >= t.rank()) {
    throw DimensionError("reduction axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(t.shape()));
  }
  const auto split = split_axis(t.shape(), axis);
  Shape out_shape = t.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const double scale = average ? 1.0 / static_cast<double>(split.extent) : 1.0;
  auto in = t.values();
  std::vector<float> out(split.outer * split.inner);
  std::vector<double> acc(split.inner);
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t e = 0; e < split.extent; ++e) {
      const float* row = in.data() + (o * split.extent + e) * split.inner;
      for (std::size_t i = 0; i < split.inner; ++i) acc[i] += row[i];
    }
    for (std::size_t i = 0; i < split.inner; ++i) {
      out[o * split.inner + i] = static_cast<float>(acc[i] * scale);
    }
  }
  return make_result(average ? "mean_axis" : "sum_axis", std::move(out_shape), std::move(out), {t},
                     [t, split, scale](std::span<const float> g) {
                       std::vector<float> d(t.numel());
                       for (std::size_t o = 0; o < split.outer; ++o) {
                         for (std::size_t e = 0; e < split.extent; ++e) {
                           float* row = d.data() + (o * split.extent + e) * split.inner;
                           for (std::size_t i = 0; i < split.inner; ++i) {
                             row[i] = static_cast<float>(g[o * split.inner + i] * scale);
                           }
                         }
                       }
                       accumulate_grad(t, d);
                     });
}

Tensor reduce_all(const Tensor& t, bool average) {
  auto in = t.values();
  double acc = 0.0;
  for (float v : in) acc += v;
  const double scale = average ? 1.0 / static_cast<double>(in.size()) : 1.0;
  return make_result(average ? "mean" : "sum", Shape{}, {static_cast<float>(acc * scale)}, {t},
                     [t, scale](std::span<const float> g) {
                       accumulate_grad(t, std::vector<float>(t.numel(),
                                                             static_cast<float>(g[0] * scale)));
                     });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  return make_result("matmul", Shape{m, n}, gemm_nn(a.values(), b.values(), m, k, n), {a, b},
                     [a, b, m, k, n](std::span<const float> g) {
                       if (a.requires_grad()) accumulate_grad(a, gemm_nt(g, b.values(), m, k, n));
                       if (b.requires_grad()) accumulate_grad(b, gemm_tn(a.values(), g, m, k, n));
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  require_rank(bias, 1, "linear");
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k || bias.dim(0) != n) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + ", weight " +
                         shape_string(w.shape()) + ", bias " + shape_string(bias.shape()));
  }
  auto out = gemm_nn(x.values(), w.values(), m, k, n);
  auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  return make_result("linear", Shape{m, n}, std::move(out), {x, w, bias},
                     [x, w, bias, m, k, n](std::span<const float> g) {
                       if (x.requires_grad()) accumulate_grad(x, gemm_nt(g, w.values(), m, k, n));
                       if (w.requires_grad()) accumulate_grad(w, gemm_tn(x.values(), g, m, k, n));
                       if (bias.requires_grad()) {
                         std::vector<double> acc(n, 0.0);
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < n; ++j) acc[j] += g[i * n + j];
                         }
                         accumulate_grad(bias, std::vector<float>(acc.begin(), acc.end()));
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryOp::kMul, a, b); }
Tensor add(const Tensor& a, float b) { return add(a, Tensor::scalar(b)); }
Tensor mul(const Tensor& a, float b) { return mul(a, Tensor::scalar(b)); }

Tensor negate(const Tensor& t) {
  return unary("negate", t, [](float x) { return -x; }, [](float, float) { return -1.0f; });
}

Tensor square(const Tensor& t) {
  return unary("square", t, [](float x) { return x * x; },
               [](float x, float) { return 2.0f * x; });
}

Tensor exp(const Tensor& t) {
  return unary("exp", t, [](float x) { return std::exp(x); }, [](float, float y) { return y; });
}

Tensor log(const Tensor& t) {
  for (float v : t.values()) {
    if (!(v > 0.0f)) {
      throw DomainError("log: non-positive input " + std::to_string(v));
    }
  }
  return unary("log", t, [](float x) { return std::log(x); },
               [](float x, float) { return 1.0f / x; });
}

Tensor sigmoid(const Tensor& t) {
  return unary(
      "sigmoid", t,
      [](float x) {
        if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
        const float e = std::exp(x);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor softplus(const Tensor& t) {
  return unary(
      "softplus", t,
      [](float x) { return std::max(x, 0.0f) + std::log1p(std::exp(-std::abs(x))); },
      [](float x, float) {
        if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
        const float e = std::exp(x);
        return e / (1.0f + e);
      });
}

Tensor leaky_relu(const Tensor& t, float slope) {
  return unary("leaky_relu", t, [slope](float x) { return x > 0.0f ? x : slope * x; },
               [slope](float x, float) { return x > 0.0f ? 1.0f : slope; });
}

Tensor sum(const Tensor& t) { return reduce_all(t, false); }
Tensor mean(const Tensor& t) {
  if (t.numel() == 0) throw DimensionError("mean of an empty tensor");
  return reduce_all(t, true);
}
Tensor sum(const Tensor& t, std::size_t axis) { return reduce_axis(t, axis, false); }
Tensor mean(const Tensor& t, std::size_t axis) { return reduce_axis(t, axis, true); }

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(t.shape()) + " as " +
                         shape_string(shape));
  }
  std::vector<float> values(t.values().begin(), t.values().end());
  return make_result("reshape", std::move(shape), std::move(values), {t},
                     [t](std::span<const float> g) { accumulate_grad(t, g); });
}

Tensor slice_columns(const Tensor& t, std::size_t begin, std::size_t end) {
  require_rank(t, 2, "slice_columns");
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  if (begin >= end || end > cols) {
    throw DimensionError("slice_columns: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for shape " + shape_string(t.shape()));
  }
  const std::size_t width = end - begin;
  auto in = t.values();
  std::vector<float> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(in.data() + r * cols + begin, width, out.data() + r * width);
  }
  return make_result("slice_columns", Shape{rows, width}, std::move(out), {t},
                     [t, rows, cols, begin, width](std::span<const float> g) {
                       std::vector<float> d(rows * cols, 0.0f);
                       for (std::size_t r = 0; r < rows; ++r) {
                         std::copy_n(g.data() + r * width, width, d.data() + r * cols + begin);
                       }
                       accumulate_grad(t, d);
                     });
}

}  // namespace incpvae
