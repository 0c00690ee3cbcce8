#include "cml/nn/models.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "cml/error.hpp"

namespace cml::nn {

NetworkSpec default_teacher_spec(const std::vector<Index>& input_shape, Index z)
{
    if (input_shape.size() == 3) {
        return conv_spec(input_shape, 16, 2, z, false);
    }
    auto spec = mlp_spec(input_shape.at(0), {128, 128, z}, Activation::relu, Activation::none);
    return spec;
}

NetworkSpec default_student_spec(const std::vector<Index>& input_shape, Index z)
{
    if (input_shape.size() == 3) {
        return conv_spec(input_shape, 16, 2, z, true);
    }
    return mlp_spec(input_shape.at(0), {128, z}, Activation::relu, Activation::none);
}

NetworkSpec default_discriminator_spec(Index z)
{
    NetworkSpec spec;
    spec.input_shape = {z};
    spec.layers.push_back({LayerKind::linear, std::max<Index>(1, z / 2), 3, 1, true, Activation::relu});
    spec.layers.push_back({LayerKind::linear, 1, 3, 1, false, Activation::sigmoid});
    return spec;
}

template <typename S>
ad::Var<S> teacher_forward(const NetworkSpec& spec, const ad::ParameterSet<S>& theta_t, const ad::Var<S>& x)
{
    auto& g = *x.graph();
    return forward(spec, ad::bind(g, theta_t, false), x);
}

template <typename S>
ad::Var<S> student_forward(const NetworkSpec& spec, const ad::VarSet<S>& theta_s, const ad::Var<S>& x)
{
    return forward(spec, theta_s, x);
}

template <typename S>
ad::Var<S> discriminator_forward(const NetworkSpec& spec, const ad::VarSet<S>& theta_d, const ad::Var<S>& m)
{
    auto out = forward(spec, theta_d, m);
    if (out.cols() != 1) {
        throw ShapeError("discriminator must end in one unit, got " + std::to_string(out.cols()));
    }
    return out;
}

template <typename S>
ad::Var<S> classify(const ad::Var<S>& m, const ad::Var<S>& v, ad::Id<S> scale)
{
    auto logits = ad::cosine_similarity(m, v);
    if (scale != S(1)) {
        logits = ad::scale(logits, scale);
    }
    return ad::softmax(logits);
}

template <typename S>
PretrainResult<S> pretrain_teacher(const episodes::Dataset& data, const std::vector<Index>& rows,
                                   const NetworkSpec& spec, const PretrainConfig& config)
{
    if (rows.empty()) {
        throw InvalidArgument("pretrain: empty dataset");
    }
    if (uses_batch_norm(spec)) {
        throw InvalidArgument("pretrain: teacher may not use batch norm (features must not depend on the batch)");
    }
    if (config.epochs < 1 || config.batch_size < 1 || !(config.learning_rate > 0.0)) {
        throw InvalidArgument("pretrain: epochs, batch size and learning rate must be positive");
    }
    std::map<int, int> class_of;
    for (Index r : rows) {
        class_of.emplace(data.labels()[static_cast<std::size_t>(r)], 0);
    }
    if (class_of.size() < 2) {
        throw InvalidArgument("pretrain: need at least 2 classes, got " + std::to_string(class_of.size()));
    }
    int next = 0;
    for (auto& [label, idx] : class_of) {
        idx = next++;
    }
    const Index classes = static_cast<Index>(class_of.size());

    NetworkSpec full = spec;
    full.layers.push_back({LayerKind::linear, classes});
    auto params = init_parameters<S>(full, config.seed);

    const Matrix<S> x_all = data.rows(rows).template cast<S>();
    Matrix<S> y_all = Matrix<S>::Zero(static_cast<Index>(rows.size()), classes);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        y_all(static_cast<Index>(i), class_of.at(data.labels()[static_cast<std::size_t>(rows[i])])) = S(1);
    }

    auto velocity = params.zeros_like();
    std::mt19937_64 rng(config.seed ^ 0x7e4c3a1bULL);
    std::vector<Index> order(rows.size());
    std::iota(order.begin(), order.end(), Index{0});
    const auto lr = static_cast<S>(config.learning_rate);
    const auto mu = static_cast<S>(config.momentum);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const auto stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const Index b = static_cast<Index>(stop - start);
            Matrix<S> xb(b, x_all.cols());
            Matrix<S> yb(b, classes);
            for (Index i = 0; i < b; ++i) {
                xb.row(i) = x_all.row(order[start + static_cast<std::size_t>(i)]);
                yb.row(i) = y_all.row(order[start + static_cast<std::size_t>(i)]);
            }
            ad::Graph<S> g(ad::Mode::first_order);
            const auto vars = ad::bind(g, params);
            const auto p = ad::softmax(forward(full, vars, g.constant(xb)));
            const auto ll = ad::mul(g.constant(yb), ad::log(ad::clamp_min(p, S(1e-12))));
            const auto loss = ad::scale(ad::sum(ll), S(-1) / static_cast<S>(b));
            const auto grads = ad::values(ad::grad(loss, vars));
            for (std::size_t k = 0; k < params.size(); ++k) {
                velocity[k].value = mu * velocity[k].value + grads[k].value;
                params[k].value -= lr * velocity[k].value;
            }
        }
    }

    const Matrix<S> scores = evaluate(full, params, x_all);
    Index correct = 0;
    for (Index i = 0; i < scores.rows(); ++i) {
        Index pred = 0;
        Index truth = 0;
        scores.row(i).maxCoeff(&pred);
        y_all.row(i).maxCoeff(&truth);
        correct += pred == truth;
    }

    PretrainResult<S> result;
    const std::string head = "l" + std::to_string(spec.layers.size()) + ".";
    for (const auto& e : params) {
        if (e.name.rfind(head, 0) != 0) {
            result.theta_t.add(e.name, e.value);
        }
    }
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(scores.rows());
    return result;
}

template <typename S>
TeacherCache<S>::TeacherCache(const NetworkSpec& spec, const ad::ParameterSet<S>& theta_t,
                              const episodes::Dataset& data)
{
    if (uses_batch_norm(spec)) {
        throw InvalidArgument("teacher cache: batch-norm teacher features depend on the batch");
    }
    check_parameters(spec, theta_t);
    features_ = evaluate(spec, theta_t, Matrix<S>(data.features().template cast<S>()));
}

template <typename S>
Matrix<S> TeacherCache<S>::rows(std::span<const Index> indices) const
{
    Matrix<S> out(static_cast<Index>(indices.size()), features_.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.row(static_cast<Index>(i)) = features_.row(indices[i]);
    }
    return out;
}

#define CML_INSTANTIATE_MODELS(S)                                                                                  \
    template ad::Var<S> teacher_forward<S>(const NetworkSpec&, const ad::ParameterSet<S>&, const ad::Var<S>&);      \
    template ad::Var<S> student_forward<S>(const NetworkSpec&, const ad::VarSet<S>&, const ad::Var<S>&);            \
    template ad::Var<S> discriminator_forward<S>(const NetworkSpec&, const ad::VarSet<S>&, const ad::Var<S>&);      \
    template ad::Var<S> classify<S>(const ad::Var<S>&, const ad::Var<S>&, ad::Id<S>);                               \
    template PretrainResult<S> pretrain_teacher<S>(const episodes::Dataset&, const std::vector<Index>&,             \
                                                   const NetworkSpec&, const PretrainConfig&);                      \
    template class TeacherCache<S>;

CML_INSTANTIATE_MODELS(float)
CML_INSTANTIATE_MODELS(double)

} // namespace cml::nn
