#pragma once

#include <cstdint>

#include "cml/episodes/dataset.hpp"
#include "cml/nn/network.hpp"

namespace cml::nn {

/// Desk-scale defaults: teacher d->128->128->z, student d->128->z,
/// discriminator z->z/2 (bn, relu)->1 (sigmoid).
NetworkSpec default_teacher_spec(const std::vector<Index>& input_shape, Index z);
NetworkSpec default_student_spec(const std::vector<Index>& input_shape, Index z);
NetworkSpec default_discriminator_spec(Index z);

/// Teacher features with frozen parameters: θ_t enters the graph as
/// constants, so no gradient can reach it.
template <typename S>
ad::Var<S> teacher_forward(const NetworkSpec& spec, const ad::ParameterSet<S>& theta_t, const ad::Var<S>& x);

/// Student features; gradients flow into `theta_s`.
template <typename S>
ad::Var<S> student_forward(const NetworkSpec& spec, const ad::VarSet<S>& theta_s, const ad::Var<S>& x);

/// Probability (B x 1) that each feature row came from the teacher.
template <typename S>
ad::Var<S> discriminator_forward(const NetworkSpec& spec, const ad::VarSet<S>& theta_d, const ad::Var<S>& m);

/// Row-wise softmax(scale * cos(M_i, V_l)). Throws DegenerateVector on a
/// zero row in either argument.
template <typename S>
ad::Var<S> classify(const ad::Var<S>& m, const ad::Var<S>& v, ad::Id<S> scale = ad::Id<S>(1));

/// Teacher pre-training budget. Minibatch SGD with momentum on softmax
/// cross-entropy over a temporary linear head.
struct PretrainConfig {
    int epochs = 200;
    Index batch_size = 64;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 1;
};

template <typename S>
struct PretrainResult {
    ad::ParameterSet<S> theta_t; // body only, head discarded
    double train_accuracy = 0.0; // of body+head on the training rows
};

/// Trains `spec` plus a head over the classes of `rows`, then drops the
/// head. Rejects empty or single-class data and specs using batch norm (a
/// frozen teacher must give per-example features).
template <typename S>
PretrainResult<S> pretrain_teacher(const episodes::Dataset& data, const std::vector<Index>& rows,
                                   const NetworkSpec& spec, const PretrainConfig& config);

/// Teacher features for every dataset row, computed once.
template <typename S>
class TeacherCache {
public:
    TeacherCache() = default;
    TeacherCache(const NetworkSpec& spec, const ad::ParameterSet<S>& theta_t, const episodes::Dataset& data);

    Matrix<S> rows(std::span<const Index> indices) const;
    const Matrix<S>& all() const { return features_; }
    Index dim() const { return features_.cols(); }

private:
    Matrix<S> features_;
};

} // namespace cml::nn
