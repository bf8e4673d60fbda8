#include "rgc/diffcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "rgc/common/error.hpp"

namespace rgc::diffcore {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

CMapR cmat(const Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return CMapR(t.raw() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MapR mmat(Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MapR(t.raw() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void expect_rank(const Tensor& t, std::size_t rank, const char* op) {
  require(t.rank() == rank, ErrorKind::kDimension,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
              shape_string(t.shape()));
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorKind::kDimension,
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
              shape_string(b.shape()));
}

Tape& same_tape(Var a, Var b) {
  require(&a.tape() == &b.tape(), ErrorKind::kInvariant, "operands live on different tapes");
  return a.tape();
}

// Elementwise unary op helper: forward f(x), backward g * df(x, y).
template <typename F, typename DF>
Var unary(Var x, F f, DF df, std::uint64_t flops_per_elem) {
  const Tensor& xv = x.value();
  Tensor out = Tensor::uninitialized(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
  return x.tape().record(
      std::move(out), {x},
      [x, df](Tape& tape, const Tensor& y, const Tensor& g) {
        const Tensor& xv = tape.value(x);
        Tensor& gx = tape.grad_buffer(x);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * df(xv[i], y[i]);
      },
      flops_per_elem * xv.numel());
}

}  // namespace

// --- dense products ---------------------------------------------------------

Var matmul_affine(Var input, Var weight, Var bias) {
  Tape& tape = same_tape(input, weight);
  same_tape(input, bias);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  expect_rank(x, 2, "matmul_affine input");
  expect_rank(w, 2, "matmul_affine weight");
  expect_rank(b, 1, "matmul_affine bias");
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(1);
  require(w.dim(0) == din && b.dim(0) == dout, ErrorKind::kDimension,
          "matmul_affine: input " + shape_string(x.shape()) + ", weight " + shape_string(w.shape()) +
              ", bias " + shape_string(b.shape()));

  Tensor out = Tensor::uninitialized({n, dout});
  auto y = mmat(out, n, dout);
  y.noalias() = cmat(x, n, din) * cmat(w, din, dout);
  y.rowwise() += cmat(b, 1, dout).row(0);

  return tape.record(
      std::move(out), {input, weight, bias},
      [input, weight, bias, n, din, dout](Tape& tape, const Tensor&, const Tensor& g) {
        const auto gy = cmat(g, n, dout);
        if (tape.requires_grad(input))
          mmat(tape.grad_buffer(input), n, din).noalias() += gy * cmat(weight.value(), din, dout).transpose();
        if (tape.requires_grad(weight))
          mmat(tape.grad_buffer(weight), din, dout).noalias() += cmat(input.value(), n, din).transpose() * gy;
        if (tape.requires_grad(bias))
          mmat(tape.grad_buffer(bias), 1, dout) += gy.colwise().sum();
      },
      2ULL * n * din * dout + n * dout);
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  expect_rank(av, 2, "matmul lhs");
  expect_rank(bv, 2, "matmul rhs");
  const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  require(bv.dim(0) == k, ErrorKind::kDimension,
          "matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  Tensor out = Tensor::uninitialized({n, m});
  mmat(out, n, m).noalias() = cmat(av, n, k) * cmat(bv, k, m);
  return tape.record(
      std::move(out), {a, b},
      [a, b, n, k, m](Tape& tape, const Tensor&, const Tensor& g) {
        const auto gy = cmat(g, n, m);
        if (tape.requires_grad(a))
          mmat(tape.grad_buffer(a), n, k).noalias() += gy * cmat(b.value(), k, m).transpose();
        if (tape.requires_grad(b))
          mmat(tape.grad_buffer(b), k, m).noalias() += cmat(a.value(), n, k).transpose() * gy;
      },
      2ULL * n * k * m);
}

Var batched_matmul(Var a, Var b, bool transpose_b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  expect_rank(av, 3, "batched_matmul lhs");
  expect_rank(bv, 3, "batched_matmul rhs");
  const std::size_t groups = av.dim(0), p = av.dim(1), q = av.dim(2);
  const std::size_t r = transpose_b ? bv.dim(1) : bv.dim(2);
  const std::size_t bq = transpose_b ? bv.dim(2) : bv.dim(1);
  require(bv.dim(0) == groups && bq == q, ErrorKind::kDimension,
          "batched_matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()) +
              (transpose_b ? " (transposed)" : ""));

  Tensor out = Tensor::uninitialized({groups, p, r});
  for (std::size_t g = 0; g < groups; ++g) {
    auto y = mmat(out, p, r, g * p * r);
    const auto A = cmat(av, p, q, g * p * q);
    if (transpose_b)
      y.noalias() = A * cmat(bv, r, q, g * r * q).transpose();
    else
      y.noalias() = A * cmat(bv, q, r, g * q * r);
  }
  return tape.record(
      std::move(out), {a, b},
      [a, b, groups, p, q, r, transpose_b](Tape& tape, const Tensor&, const Tensor& gout) {
        const bool ga = tape.requires_grad(a), gb = tape.requires_grad(b);
        for (std::size_t g = 0; g < groups; ++g) {
          const auto gy = cmat(gout, p, r, g * p * r);
          if (transpose_b) {
            // y = A B^T: dA = dY B, dB = dY^T A
            if (ga) mmat(tape.grad_buffer(a), p, q, g * p * q).noalias() += gy * cmat(b.value(), r, q, g * r * q);
            if (gb)
              mmat(tape.grad_buffer(b), r, q, g * r * q).noalias() +=
                  gy.transpose() * cmat(a.value(), p, q, g * p * q);
          } else {
            if (ga)
              mmat(tape.grad_buffer(a), p, q, g * p * q).noalias() +=
                  gy * cmat(b.value(), q, r, g * q * r).transpose();
            if (gb)
              mmat(tape.grad_buffer(b), q, r, g * q * r).noalias() +=
                  cmat(a.value(), p, q, g * p * q).transpose() * gy;
          }
        }
      },
      2ULL * groups * p * q * r);
}

// --- shape and elementwise ----------------------------------------------------

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(
      std::move(out), {x},
      [x](Tape& tape, const Tensor&, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
      },
      0);
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  expect_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.accumulate(b.value());
  return tape.record(
      std::move(out), {a, b},
      [a, b](Tape& tape, const Tensor&, const Tensor& g) {
        if (tape.requires_grad(a)) tape.grad_buffer(a).accumulate(g);
        if (tape.requires_grad(b)) tape.grad_buffer(b).accumulate(g);
      },
      a.value().numel());
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  expect_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return tape.record(
      std::move(out), {a, b},
      [a, b](Tape& tape, const Tensor&, const Tensor& g) {
        if (tape.requires_grad(a)) tape.grad_buffer(a).accumulate(g);
        if (tape.requires_grad(b)) {
          Tensor& gb = tape.grad_buffer(b);
          for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
      },
      a.value().numel());
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  expect_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return tape.record(
      std::move(out), {a, b},
      [a, b](Tape& tape, const Tensor&, const Tensor& g) {
        if (tape.requires_grad(a)) {
          Tensor& ga = tape.grad_buffer(a);
          const Tensor& bv = b.value();
          for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
        }
        if (tape.requires_grad(b)) {
          Tensor& gb = tape.grad_buffer(b);
          const Tensor& av = a.value();
          for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
        }
      },
      a.value().numel());
}

Var scale(Var x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; }, 1);
}

Var scale_last_axis(Var x, std::vector<double> factors) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 1 && xv.shape().back() == factors.size(), ErrorKind::kDimension,
          "scale_last_axis: " + std::to_string(factors.size()) + " factors for shape " +
              shape_string(xv.shape()));
  const std::size_t k = factors.size();
  Tensor out = xv;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= factors[i % k];
  return x.tape().record(
      std::move(out), {x},
      [x, factors = std::move(factors)](Tape& tape, const Tensor&, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        const std::size_t k = factors.size();
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * factors[i % k];
      },
      xv.numel());
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, 1);
}

Var square(Var x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; }, 1);
}

Var log(Var x) {
  const Tensor& xv = x.value();
  for (double v : xv.data())
    require(v > 0.0, ErrorKind::kInvariant, "log of non-positive value " + std::to_string(v));
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; }, 1);
}

Var concat_cols(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  expect_rank(av, 2, "concat_cols lhs");
  expect_rank(bv, 2, "concat_cols rhs");
  const std::size_t n = av.dim(0), p = av.dim(1), q = bv.dim(1);
  require(bv.dim(0) == n, ErrorKind::kDimension,
          "concat_cols: row mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Tensor out = Tensor::uninitialized({n, p + q});
  auto y = mmat(out, n, p + q);
  y.leftCols(static_cast<Eigen::Index>(p)) = cmat(av, n, p);
  y.rightCols(static_cast<Eigen::Index>(q)) = cmat(bv, n, q);
  return tape.record(
      std::move(out), {a, b},
      [a, b, n, p, q](Tape& tape, const Tensor&, const Tensor& g) {
        const auto gy = cmat(g, n, p + q);
        if (tape.requires_grad(a)) mmat(tape.grad_buffer(a), n, p) += gy.leftCols(static_cast<Eigen::Index>(p));
        if (tape.requires_grad(b)) mmat(tape.grad_buffer(b), n, q) += gy.rightCols(static_cast<Eigen::Index>(q));
      },
      0);
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  expect_rank(xv, 2, "slice_cols");
  const std::size_t n = xv.dim(0), k = xv.dim(1);
  require(begin < end && end <= k, ErrorKind::kDimension,
          "slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " + shape_string(xv.shape()));
  const std::size_t w = end - begin;
  Tensor out = Tensor::uninitialized({n, w});
  mmat(out, n, w) = cmat(xv, n, k).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(w));
  return x.tape().record(
      std::move(out), {x},
      [x, n, k, begin, w](Tape& tape, const Tensor&, const Tensor& g) {
        mmat(tape.grad_buffer(x), n, k).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(w)) +=
            cmat(g, n, w);
      },
      0);
}

// --- normalisation and reductions ---------------------------------------------

Var softmax(Var logits) {
  const Tensor& xv = logits.value();
  require(xv.rank() >= 1 && xv.numel() > 0, ErrorKind::kEmptyInput, "softmax of an empty tensor");
  const std::size_t n = xv.shape().back();
  const std::size_t rows = xv.numel() / n;
  Tensor out = Tensor::uninitialized(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = xv.raw() + r * n;
    double* y = out.raw() + r * n;
    const double mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (y[i] = std::exp(x[i] - mx));
    for (std::size_t i = 0; i < n; ++i) y[i] /= total;
  }
  return logits.tape().record(
      std::move(out), {logits},
      [logits, n, rows](Tape& tape, const Tensor& y, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(logits);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t o = r * n;
          double dotp = 0.0;
          for (std::size_t i = 0; i < n; ++i) dotp += g[o + i] * y[o + i];
          for (std::size_t i = 0; i < n; ++i) gx[o + i] += y[o + i] * (g[o + i] - dotp);
        }
      },
      4ULL * xv.numel());
}

Var log_softmax(Var logits) {
  const Tensor& xv = logits.value();
  require(xv.rank() >= 1 && xv.numel() > 0, ErrorKind::kEmptyInput, "log_softmax of an empty tensor");
  const std::size_t n = xv.shape().back();
  const std::size_t rows = xv.numel() / n;
  Tensor out = Tensor::uninitialized(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = xv.raw() + r * n;
    double* y = out.raw() + r * n;
    const double mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::exp(x[i] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - lse;
  }
  return logits.tape().record(
      std::move(out), {logits},
      [logits, n, rows](Tape& tape, const Tensor& y, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(logits);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t o = r * n;
          double gsum = 0.0;
          for (std::size_t i = 0; i < n; ++i) gsum += g[o + i];
          for (std::size_t i = 0; i < n; ++i) gx[o + i] += g[o + i] - std::exp(y[o + i]) * gsum;
        }
      },
      4ULL * xv.numel());
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double total = 0.0;
  for (double v : xv.data()) total += v;
  return x.tape().record(
      Tensor::scalar(total), {x},
      [x](Tape& tape, const Tensor&, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        const double s = g[0];
        for (double& v : gx.data()) v += s;
      },
      xv.numel());
}

Var mean(Var x) {
  const std::size_t n = x.value().numel();
  require(n > 0, ErrorKind::kEmptyInput, "mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var mean_last(Var x) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 1 && xv.numel() > 0, ErrorKind::kEmptyInput, "mean_last of an empty tensor");
  const std::size_t n = xv.shape().back();
  const std::size_t rows = xv.numel() / n;
  Shape shape(xv.shape().begin(), xv.shape().end() - 1);
  Tensor out = Tensor::uninitialized(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += xv[r * n + i];
    out[r] = total / static_cast<double>(n);
  }
  return x.tape().record(
      std::move(out), {x},
      [x, n, rows](Tape& tape, const Tensor&, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += g[r] * inv;
      },
      xv.numel());
}

Var weighted_sum(Var x, const Tensor& weights) {
  expect_same_shape(x.value(), weights, "weighted_sum");
  const Tensor& xv = x.value();
  double total = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) total += weights[i] * xv[i];
  return x.tape().record(
      Tensor::scalar(total), {x},
      [x, weights](Tape& tape, const Tensor&, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g[0] * weights[i];
      },
      2ULL * xv.numel());
}

// --- convolution --------------------------------------------------------------

std::size_t conv_output_extent(std::size_t in, std::size_t k, const Conv2dSpec& spec) {
  require(spec.stride >= 1, ErrorKind::kConfig, "conv2d stride must be >= 1");
  require(in + 2 * spec.padding >= k, ErrorKind::kConfig,
          "conv2d kernel " + std::to_string(k) + " larger than padded input " +
              std::to_string(in + 2 * spec.padding));
  return (in + 2 * spec.padding - k) / spec.stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, k, oh, ow, stride, pad;
  std::size_t patch() const { return cin * k * k; }
  std::size_t opix() const { return oh * ow; }
};

// Output columns ox whose input column ox*s + kx - pad lies inside [0, w).
struct ColumnRange {
  std::size_t lo, hi;
};

ColumnRange valid_columns(const ConvGeometry& g, std::size_t kx) {
  const long s = static_cast<long>(g.stride), off = static_cast<long>(kx) - static_cast<long>(g.pad);
  long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  long hi = (static_cast<long>(g.w) - 1 - off) / s + 1;
  if (static_cast<long>(g.w) - 1 - off < 0) hi = 0;
  hi = std::min(hi, static_cast<long>(g.ow));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// cols[(c*k + ky)*k + kx][oy*ow + ox] = input[c][oy*s + ky - pad][ox*s + kx - pad]
void im2col(const double* in, const ConvGeometry& g, double* cols) {
  const std::size_t opix = g.opix();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * opix;
        const ColumnRange cr = valid_columns(g, kx);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = in + (c * g.h + static_cast<std::size_t>(iy)) * g.w + kx;
          std::fill(dst, dst + cr.lo, 0.0);
          if (g.stride == 1) {
            std::copy(src + cr.lo - g.pad, src + cr.hi - g.pad, dst + cr.lo);
          } else {
            for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) dst[ox] = src[ox * g.stride - g.pad];
          }
          std::fill(dst + cr.hi, dst + g.ow, 0.0);
        }
      }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* in_grad) {
  const std::size_t opix = g.opix();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * opix;
        const ColumnRange cr = valid_columns(g, kx);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = in_grad + (c * g.h + static_cast<std::size_t>(iy)) * g.w + kx;
          const double* src = row + oy * g.ow;
          for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) dst[ox * g.stride - g.pad] += src[ox];
        }
      }
}

}  // namespace

Var conv2d(Var input, Var kernels, const Conv2dSpec& spec, std::optional<Var> bias) {
  Tape& tape = same_tape(input, kernels);
  const Tensor& x = input.value();
  const Tensor& kv = kernels.value();
  require(x.rank() == 3 || x.rank() == 4, ErrorKind::kDimension,
          "conv2d input must be [c x h x w] or [b x c x h x w], got " + shape_string(x.shape()));
  expect_rank(kv, 4, "conv2d kernels");
  const bool batched = x.rank() == 4;
  ConvGeometry g{};
  g.batch = batched ? x.dim(0) : 1;
  g.cin = x.dim(batched ? 1 : 0);
  g.h = x.dim(batched ? 2 : 1);
  g.w = x.dim(batched ? 3 : 2);
  g.cout = kv.dim(0);
  g.k = kv.dim(2);
  g.stride = spec.stride;
  g.pad = spec.padding;
  require(kv.dim(1) == g.cin && kv.dim(3) == g.k, ErrorKind::kDimension,
          "conv2d: kernels " + shape_string(kv.shape()) + " for input " + shape_string(x.shape()));
  require(g.k % 2 == 1, ErrorKind::kConfig, "conv2d kernel size must be odd");
  g.oh = conv_output_extent(g.h, g.k, spec);
  g.ow = conv_output_extent(g.w, g.k, spec);
  if (bias) {
    same_tape(input, *bias);
    require(bias->value().rank() == 1 && bias->value().dim(0) == g.cout, ErrorKind::kDimension,
            "conv2d bias must be [" + std::to_string(g.cout) + "]");
  }

  const std::size_t patch = g.patch(), opix = g.opix();
  std::shared_ptr<double[]> cols = AlignedBuffer::make(g.batch * patch * opix);
  Shape out_shape = batched ? Shape{g.batch, g.cout, g.oh, g.ow} : Shape{g.cout, g.oh, g.ow};
  Tensor out = Tensor::uninitialized(out_shape);
  const auto kmat = cmat(kv, g.cout, patch);
  for (std::size_t b = 0; b < g.batch; ++b) {
    double* cb = cols.get() + b * patch * opix;
    im2col(x.raw() + b * g.cin * g.h * g.w, g, cb);
    auto y = mmat(out, g.cout, opix, b * g.cout * opix);
    y.noalias() = kmat * CMapR(cb, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(opix));
    if (bias) y.colwise() += CVecMap(bias->value().raw(), static_cast<Eigen::Index>(g.cout));
  }

  std::uint64_t flops = 2ULL * g.batch * g.cout * patch * opix + (bias ? g.batch * g.cout * opix : 0);
  auto backward = [input, kernels, bias, g, cols](Tape& tape, const Tensor&, const Tensor& gout) {
    const std::size_t patch = g.patch(), opix = g.opix();
    const bool gi = tape.requires_grad(input), gk = tape.requires_grad(kernels);
    const bool gb = bias && tape.requires_grad(*bias);
    std::shared_ptr<double[]> dcols = gi ? AlignedBuffer::make(patch * opix) : nullptr;
    for (std::size_t b = 0; b < g.batch; ++b) {
      const auto gy = cmat(gout, g.cout, opix, b * g.cout * opix);
      const CMapR cb(cols.get() + b * patch * opix, static_cast<Eigen::Index>(patch),
                     static_cast<Eigen::Index>(opix));
      if (gk) mmat(tape.grad_buffer(kernels), g.cout, patch).noalias() += gy * cb.transpose();
      if (gb) VecMap(tape.grad_buffer(*bias).raw(), static_cast<Eigen::Index>(g.cout)) += gy.rowwise().sum();
      if (gi) {
        MapR(dcols.get(), static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(opix)).noalias() =
            cmat(kernels.value(), g.cout, patch).transpose() * gy;
        col2im_add(dcols.get(), g, tape.grad_buffer(input).raw() + b * g.cin * g.h * g.w);
      }
    }
  };
  if (bias) return tape.record(std::move(out), {input, kernels, *bias}, std::move(backward), flops);
  return tape.record(std::move(out), {input, kernels}, std::move(backward), flops);
}

// --- keypoint primitives ------------------------------------------------------

Var spatial_softmax(Var maps) {
  const Tensor& hv = maps.value();
  require(hv.rank() >= 2, ErrorKind::kDimension, "spatial_softmax needs [..., h, w], got " + shape_string(hv.shape()));
  const std::size_t h = hv.dim(hv.rank() - 2), w = hv.dim(hv.rank() - 1);
  require(h > 0 && w > 0, ErrorKind::kEmptyInput, "spatial_softmax of an empty map");
  const std::size_t count = hv.numel() / (h * w);
  Shape shape(hv.shape().begin(), hv.shape().end() - 2);
  shape.push_back(2);
  Tensor out = Tensor::uninitialized(shape);
  auto probs = std::make_shared<std::vector<double>>(hv.numel());
  for (std::size_t m = 0; m < count; ++m) {
    const double* x = hv.raw() + m * h * w;
    double* p = probs->data() + m * h * w;
    const double mx = *std::max_element(x, x + h * w);
    double total = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) total += (p[i] = std::exp(x[i] - mx));
    double ex = 0.0, ey = 0.0;
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        double& pi = p[r * w + c];
        pi /= total;
        ex += pi * static_cast<double>(c);
        ey += pi * static_cast<double>(r);
      }
    out[2 * m] = ex;
    out[2 * m + 1] = ey;
  }
  return maps.tape().record(
      std::move(out), {maps},
      [maps, probs, h, w, count](Tape& tape, const Tensor& y, const Tensor& g) {
        Tensor& gh = tape.grad_buffer(maps);
        for (std::size_t m = 0; m < count; ++m) {
          const double* p = probs->data() + m * h * w;
          double* d = gh.raw() + m * h * w;
          const double ex = y[2 * m], ey = y[2 * m + 1], gx = g[2 * m], gy = g[2 * m + 1];
          for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
              const std::size_t i = r * w + c;
              d[i] += p[i] * (gx * (static_cast<double>(c) - ex) + gy * (static_cast<double>(r) - ey));
            }
        }
      },
      6ULL * hv.numel());
}

Var gaussian_heatmap(Var points, double sigma, std::size_t height, std::size_t width) {
  require(sigma > 0.0, ErrorKind::kConfig, "gaussian_heatmap sigma must be positive");
  const Tensor& pv = points.value();
  require((pv.rank() == 2 || pv.rank() == 3) && pv.shape().back() == 2, ErrorKind::kDimension,
          "gaussian_heatmap points must be [m x 2] or [b x m x 2], got " + shape_string(pv.shape()));
  const bool batched = pv.rank() == 3;
  const std::size_t batch = batched ? pv.dim(0) : 1;
  const std::size_t m = pv.dim(batched ? 1 : 0);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  // Separable: G[r, c] = sum_i ey_i[r] * ex_i[c], i.e. G = EY^T EX.
  auto ex = std::make_shared<std::vector<double>>(batch * m * width);
  auto ey = std::make_shared<std::vector<double>>(batch * m * height);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i) {
      const double px = pv[(b * m + i) * 2], py = pv[(b * m + i) * 2 + 1];
      for (std::size_t c = 0; c < width; ++c) {
        const double d = static_cast<double>(c) - px;
        (*ex)[(b * m + i) * width + c] = std::exp(-d * d * inv2s2);
      }
      for (std::size_t r = 0; r < height; ++r) {
        const double d = static_cast<double>(r) - py;
        (*ey)[(b * m + i) * height + r] = std::exp(-d * d * inv2s2);
      }
    }
  Tensor out = Tensor::uninitialized(batched ? Shape{batch, height, width} : Shape{height, width});
  for (std::size_t b = 0; b < batch; ++b) {
    const CMapR EX(ex->data() + b * m * width, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(width));
    const CMapR EY(ey->data() + b * m * height, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(height));
    mmat(out, height, width, b * height * width).noalias() = EY.transpose() * EX;
  }

  return points.tape().record(
      std::move(out), {points},
      [points, ex, ey, batch, m, height, width, sigma](Tape& tape, const Tensor&, const Tensor& g) {
        const Tensor& pv = points.value();
        Tensor& gp = tape.grad_buffer(points);
        const double inv_s2 = 1.0 / (sigma * sigma);
        MatR dex(m, width), dey(m, height);
        for (std::size_t b = 0; b < batch; ++b) {
          const CMapR EX(ex->data() + b * m * width, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(width));
          const CMapR EY(ey->data() + b * m * height, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(height));
          // d exp(-(c - x)^2 / 2s^2) / dx = exp(.) * (c - x) / s^2
          for (std::size_t i = 0; i < m; ++i) {
            const double px = pv[(b * m + i) * 2], py = pv[(b * m + i) * 2 + 1];
            for (std::size_t c = 0; c < width; ++c)
              dex(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                  EX(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) * (static_cast<double>(c) - px) * inv_s2;
            for (std::size_t r = 0; r < height; ++r)
              dey(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) =
                  EY(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) * (static_cast<double>(r) - py) * inv_s2;
          }
          const auto G = cmat(g, height, width, b * height * width);
          const MatR t_x = G * dex.transpose();  // [h x m]
          const MatR t_y = G.transpose() * dey.transpose();  // [w x m]
          for (std::size_t i = 0; i < m; ++i) {
            gp[(b * m + i) * 2] += EY.row(static_cast<Eigen::Index>(i)).dot(t_x.col(static_cast<Eigen::Index>(i)));
            gp[(b * m + i) * 2 + 1] += EX.row(static_cast<Eigen::Index>(i)).dot(t_y.col(static_cast<Eigen::Index>(i)));
          }
        }
      },
      2ULL * batch * m * height * width + 4ULL * batch * m * (height + width));
}

}  // namespace rgc::diffcore
