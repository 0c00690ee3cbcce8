#pragma once

#include <memory>
#include <type_traits>
#include <vector>

#include "cml/autodiff/graph.hpp"

namespace cml::ad {

/// Non-deduced scalar parameter, so `scale(v, 0.5)` works for Var<float>.
template <typename S>
using Id = std::type_identity_t<S>;

// Elementwise arithmetic. Shapes must match exactly; use broadcast_to for
// row/column expansion.
template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> mul(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> scale(const Var<S>& a, Id<S> factor);
/// alpha * a + beta
template <typename S> Var<S> affine(const Var<S>& a, Id<S> alpha, Id<S> beta);

template <typename S> Var<S> matmul(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> transpose(const Var<S>& a);

template <typename S> Var<S> relu(const Var<S>& a);
template <typename S> Var<S> sigmoid(const Var<S>& a);
/// Natural log. Throws on non-positive entries; callers that need a floor
/// apply clamp_min first.
template <typename S> Var<S> log(const Var<S>& a);
template <typename S> Var<S> exp(const Var<S>& a);
/// Elementwise power with a constant exponent. Throws if the result is not
/// finite.
template <typename S> Var<S> pow(const Var<S>& a, Id<S> exponent);
/// max(a, floor); the gradient is zero where the floor is active.
template <typename S> Var<S> clamp_min(const Var<S>& a, Id<S> floor);

/// Sum of all entries as a 1x1 tensor.
template <typename S> Var<S> sum(const Var<S>& a);
/// Sum along an axis: 0 collapses rows (1xC result), 1 collapses columns (Rx1).
template <typename S> Var<S> sum(const Var<S>& a, int axis);
template <typename S> Var<S> mean(const Var<S>& a);
template <typename S> Var<S> mean(const Var<S>& a, int axis);

/// Expands a 1x1, 1xC or Rx1 tensor to rows x cols.
template <typename S> Var<S> broadcast_to(const Var<S>& a, Index rows, Index cols);
/// Adjoint of broadcast_to: sums a rows x cols tensor down to the target shape.
template <typename S> Var<S> sum_to(const Var<S>& a, Index rows, Index cols);

template <typename S> Var<S> block(const Var<S>& a, Index row, Index col, Index rows, Index cols);
/// Places `a` at (row, col) inside a zero tensor of shape rows x cols.
template <typename S> Var<S> embed(const Var<S>& a, Index row, Index col, Index rows, Index cols);
template <typename S> Var<S> concat(const Var<S>& a, const Var<S>& b, int axis);

/// Flat row-major source index for each output entry; -1 yields zero.
using IndexMap = std::shared_ptr<const std::vector<Index>>;

template <typename S> Var<S> gather(const Var<S>& a, IndexMap map, Index rows, Index cols);
/// Adjoint of gather: entry k of `a` is added into flat output index map[k].
template <typename S> Var<S> scatter_add(const Var<S>& a, IndexMap map, Index rows, Index cols);
template <typename S> Var<S> select_rows(const Var<S>& a, const std::vector<Index>& rows);

/// Row-wise softmax.
template <typename S> Var<S> softmax(const Var<S>& a);
/// Euclidean norm along an axis (same convention as sum).
template <typename S> Var<S> l2_norm(const Var<S>& a, int axis);
/// Matrix of cosine similarities between rows of a (MxD) and rows of b (NxD).
/// Throws DegenerateVector if any row has zero norm.
template <typename S> Var<S> cosine_similarity(const Var<S>& a, const Var<S>& b);
/// Matrix of squared Euclidean distances between rows of a and rows of b.
template <typename S> Var<S> squared_distance(const Var<S>& a, const Var<S>& b);

/// Normalizes each column with statistics of the current batch, then
/// applies gamma/beta (both 1xC). A single-row batch is standardized across
/// its own features instead.
template <typename S>
Var<S> batch_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, Id<S> eps = Id<S>(1e-5));

/// Spatial layout used by the convolutional ops: a batch of B images of
/// size HxW with C channels is a (B*H*W) x C matrix, one row per pixel.
struct ImageShape {
    Index batch = 0;
    Index height = 0;
    Index width = 0;
    Index channels = 0;
};

/// Stride-1 convolution with zero padding `pad`. `weight` is
/// (C*k*k) x C_out, `bias` is 1 x C_out. Returns the output in spatial
/// layout and updates `shape` to the output geometry.
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const Var<S>& bias, ImageShape& shape, Index kernel,
              Index pad);
/// 2x2 max pooling, stride 2 (trailing odd row/column dropped).
template <typename S> Var<S> max_pool2x2(const Var<S>& x, ImageShape& shape);
/// B x (C*H*W) channel-major images into spatial layout.
template <typename S> Var<S> to_spatial(const Var<S>& x, const ImageShape& shape);
/// Spatial layout into B x (H*W*C) feature rows.
template <typename S> Var<S> flatten_spatial(const Var<S>& x, const ImageShape& shape);

template <typename S> Var<S> operator+(const Var<S>& a, const Var<S>& b) { return add(a, b); }
template <typename S> Var<S> operator-(const Var<S>& a, const Var<S>& b) { return sub(a, b); }
template <typename S> Var<S> operator-(const Var<S>& a) { return scale(a, S(-1)); }
template <typename S> Var<S> operator*(Id<S> factor, const Var<S>& a) { return scale(a, factor); }

} // namespace cml::ad
