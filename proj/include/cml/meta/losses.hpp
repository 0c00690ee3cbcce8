#pragma once

#include <vector>

#include "cml/autodiff/ops.hpp"

namespace cml::meta {

using ad::Index;
using ad::Matrix;
using ad::Var;

/// Floor applied to probabilities before every log in the losses.
inline constexpr double kLogFloor = 1e-12;

/// binary: per-class BCE over the one-hot expansion, summed over classes.
/// categorical: -log p_y.
enum class LossKind { binary, categorical };

inline const char* to_string(LossKind kind)
{
    return kind == LossKind::binary ? "binary" : "categorical";
}

/// One-hot rows for `targets` in [0, ways).
template <typename S>
Matrix<S> one_hot(const std::vector<int>& targets, Index ways);

/// Throws InvalidArgument unless every row of `y` is one-hot.
template <typename S>
void check_one_hot(const Matrix<S>& y);

/// Per-example student loss (B x 1) for probabilities p (B x N).
template <typename S>
Var<S> student_loss_terms(const Var<S>& p, const Matrix<S>& y, LossKind kind = LossKind::binary);

/// Mean of student_loss_terms over the batch.
template <typename S>
Var<S> student_loss(const Var<S>& p, const Matrix<S>& y, LossKind kind = LossKind::binary);

/// log D(M_t) for each row (B x 1).
template <typename S>
Var<S> disc_positive(const Var<S>& d_teacher);
/// log(1 - D(M_s)) for each row (B x 1).
template <typename S>
Var<S> disc_negative(const Var<S>& d_student);
/// mean over rows of -(log D(M_t) + log(1 - D(M_s))).
template <typename S>
Var<S> discriminator_loss(const Var<S>& d_teacher, const Var<S>& d_student);

/// Fraction of rows whose argmax matches the target.
template <typename S>
double accuracy(const Matrix<S>& scores, const std::vector<int>& targets);

} // namespace cml::meta
