#include "cml/meta/losses.hpp"

#include <string>

#include "cml/error.hpp"

namespace cml::meta {

template <typename S>
Matrix<S> one_hot(const std::vector<int>& targets, Index ways)
{
    Matrix<S> y = Matrix<S>::Zero(static_cast<Index>(targets.size()), ways);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] < 0 || targets[i] >= ways) {
            throw InvalidArgument("target " + std::to_string(targets[i]) + " outside [0, " + std::to_string(ways) +
                                  ")");
        }
        y(static_cast<Index>(i), targets[i]) = S(1);
    }
    return y;
}

template <typename S>
void check_one_hot(const Matrix<S>& y)
{
    for (Index i = 0; i < y.rows(); ++i) {
        Index ones = 0;
        for (Index j = 0; j < y.cols(); ++j) {
            if (y(i, j) == S(1)) {
                ++ones;
            } else if (y(i, j) != S(0)) {
                ones = -1;
                break;
            }
        }
        if (ones != 1) {
            throw InvalidArgument("label row " + std::to_string(i) + " is not one-hot");
        }
    }
}

namespace {

template <typename S>
Var<S> safe_log(const Var<S>& p)
{
    return ad::log(ad::clamp_min(p, S(kLogFloor)));
}

} // namespace

template <typename S>
Var<S> student_loss_terms(const Var<S>& p, const Matrix<S>& y, LossKind kind)
{
    if (p.rows() != y.rows() || p.cols() != y.cols()) {
        throw ShapeError("student loss: probabilities " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                         " vs labels " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()));
    }
    check_one_hot(y);
    auto& g = *p.graph();
    const auto yv = g.constant(y);
    auto ll = ad::mul(yv, safe_log(p));
    if (kind == LossKind::binary) {
        const auto not_y = g.constant(Matrix<S>(Matrix<S>::Ones(y.rows(), y.cols()) - y));
        ll = ad::add(ll, ad::mul(not_y, safe_log(ad::affine(p, S(-1), S(1)))));
    }
    return ad::scale(ad::sum(ll, 1), S(-1));
}

template <typename S>
Var<S> student_loss(const Var<S>& p, const Matrix<S>& y, LossKind kind)
{
    return ad::mean(student_loss_terms(p, y, kind));
}

template <typename S>
Var<S> disc_positive(const Var<S>& d_teacher)
{
    return safe_log(d_teacher);
}

template <typename S>
Var<S> disc_negative(const Var<S>& d_student)
{
    return safe_log(ad::affine(d_student, S(-1), S(1)));
}

template <typename S>
Var<S> discriminator_loss(const Var<S>& d_teacher, const Var<S>& d_student)
{
    if (d_teacher.rows() != d_student.rows()) {
        throw ShapeError("discriminator loss: teacher and student batches differ");
    }
    return ad::scale(ad::mean(ad::add(disc_positive(d_teacher), disc_negative(d_student))), S(-1));
}

template <typename S>
double accuracy(const Matrix<S>& scores, const std::vector<int>& targets)
{
    if (static_cast<Index>(targets.size()) != scores.rows() || targets.empty()) {
        throw ShapeError("accuracy: " + std::to_string(scores.rows()) + " score rows vs " +
                         std::to_string(targets.size()) + " targets");
    }
    Index correct = 0;
    for (Index i = 0; i < scores.rows(); ++i) {
        Index best = 0;
        scores.row(i).maxCoeff(&best);
        correct += best == targets[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

#define CML_INSTANTIATE_LOSSES(S)                                                                                  \
    template Matrix<S> one_hot<S>(const std::vector<int>&, Index);                                                  \
    template void check_one_hot<S>(const Matrix<S>&);                                                               \
    template Var<S> student_loss_terms<S>(const Var<S>&, const Matrix<S>&, LossKind);                               \
    template Var<S> student_loss<S>(const Var<S>&, const Matrix<S>&, LossKind);                                     \
    template Var<S> disc_positive<S>(const Var<S>&);                                                                \
    template Var<S> disc_negative<S>(const Var<S>&);                                                                \
    template Var<S> discriminator_loss<S>(const Var<S>&, const Var<S>&);                                            \
    template double accuracy<S>(const Matrix<S>&, const std::vector<int>&);

CML_INSTANTIATE_LOSSES(float)
CML_INSTANTIATE_LOSSES(double)

} // namespace cml::meta
