#pragma once

#include "cred/tensor.hpp"

#include <optional>
#include <span>
#include <vector>

// Differentiable operations over cred::Tensor. All ops are pure: they return
// new tensors and record a backward closure when any input requires grad.
// Every op fails fast with NonFiniteError if it produces NaN or Inf.
namespace cred::ops {

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Applies W[in,out] (and optional bias[out]) along `axis` of x. Equivalent to
// moving `axis` last, multiplying by W, and moving it back.
Tensor axis_linear(const Tensor& x, std::size_t axis, const Tensor& w, const std::optional<Tensor>& b = std::nullopt);

Tensor transpose(const Tensor& x);  // rank-2 only

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor neg(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);

// Adds a rank-1 vector along the last axis of x (bias broadcast).
Tensor add_row(const Tensor& x, const Tensor& row);

// --- reductions / normalization -------------------------------------------

Tensor sum(const Tensor& x);   // -> [1]
Tensor mean(const Tensor& x);  // -> [1]
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

// Normalizes every slice along `axis` to zero mean and unit (biased)
// variance, then applies gamma/beta. gamma and beta have the axis extent.
Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta, double eps);
// Same normalization without the affine step.
Tensor normalize(const Tensor& x, std::size_t axis, double eps);

// --- data movement ---------------------------------------------------------

// out[i] = x[index[i]]; backward scatters. Shared engine of every pure
// permutation/selection op below.
Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::size_t> index, const char* op = "gather");

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::span<const std::size_t> axes);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor index_select(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices);
Tensor concat(std::span<const Tensor> xs, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> xs, std::size_t axis);

// [C,H,W] -> [C*s*s, H/s, W/s]; channel c*s*s + (dy*s + dx) holds x[c, y*s+dy, x*s+dx].
Tensor space_to_depth(const Tensor& x, std::size_t s);
Tensor depth_to_space(const Tensor& x, std::size_t s);

// [C,H,W] -> [N_g, g*g, C]; grid j is row-major over the (H/g, W/g) lattice,
// cells row-major inside the grid.
Tensor grid_partition(const Tensor& x, std::size_t g);
// Inverse of grid_partition: [N_g, K, C] with K = g*g -> [C,H,W].
Tensor grid_merge(const Tensor& q, std::size_t height, std::size_t width, std::size_t g);

// Bilinear resampling of [C,H,W] with half-pixel centres
// (src = (i + 0.5) * H / H2 - 0.5, clamped to the valid range).
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

// [C,H,W] -> [H*W, C] token layout, and back.
Tensor to_tokens(const Tensor& x);
Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width);

}  // namespace cred::ops
