#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "rgc/diffcore/tape.hpp"

namespace rgc::diffcore {

// Differentiable primitives. Every op checks operand shapes and throws
// Error(kDimension) on mismatch, records its forward FLOPs on the tape, and
// accumulates parent gradients during Tape::backward.

/// out[i,j] = sum_k input[i,k] * weight[k,j] + bias[j]
Var matmul_affine(Var input, Var weight, Var bias);
Var matmul(Var a, Var b);
/// Per-group product of [G x p x q] and [G x q x r] (or [G x r x q] with
/// transpose_b) giving [G x p x r].
Var batched_matmul(Var a, Var b, bool transpose_b = false);

Var reshape(Var x, Shape shape);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// Multiplies each slice along the last axis elementwise by `factors`.
Var scale_last_axis(Var x, std::vector<double> factors);
Var relu(Var x);
Var square(Var x);
Var log(Var x);

/// [n x p] ++ [n x q] -> [n x (p+q)]
Var concat_cols(Var a, Var b);
/// Columns [begin, end) of a rank-2 tensor.
Var slice_cols(Var x, std::size_t begin, std::size_t end);

/// Softmax over the last axis with max subtraction.
Var softmax(Var logits);
/// log(softmax(logits)) over the last axis, computed as x - max - log(sum exp).
Var log_softmax(Var logits);

Var sum(Var x);
Var mean(Var x);
/// Mean over the last axis: [..., n] -> [...].
Var mean_last(Var x);
/// sum_i weights[i] * x[i]; weights must have x's shape.
Var weighted_sum(Var x, const Tensor& weights);

struct Conv2dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Output extent floor((in + 2*padding - k) / stride) + 1.
std::size_t conv_output_extent(std::size_t in, std::size_t k, const Conv2dSpec& spec);

/// Cross-correlation of [c_in x h x w] (or a batch [b x c_in x h x w]) with
/// kernels [c_out x c_in x k x k], plus an optional per-channel bias [c_out].
Var conv2d(Var input, Var kernels, const Conv2dSpec& spec, std::optional<Var> bias = std::nullopt);

/// Expected pixel coordinate of each map under softmax(map):
/// [..., h, w] -> [..., 2] holding (x = column, y = row).
Var spatial_softmax(Var maps);

/// Sum of isotropic Gaussians exp(-|p - p_i|^2 / (2 sigma^2)) evaluated at
/// every pixel p = (column, row): points [m x 2] -> [h x w], or a batch
/// [b x m x 2] -> [b x h x w]. Differentiable w.r.t. the points.
Var gaussian_heatmap(Var points, double sigma, std::size_t height, std::size_t width);

}  // namespace rgc::diffcore
