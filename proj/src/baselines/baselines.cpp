#include "cml/baselines/baselines.hpp"

#include <cmath>
#include <functional>
#include <string>

#include "cml/error.hpp"
#include "cml/parallel.hpp"

namespace cml::baselines {

using meta::LossKind;

template <typename S>
Episode<S> plain_episode(const episodes::Task& task, const episodes::Dataset& data)
{
    Episode<S> ep;
    ep.id = task.id;
    ep.ways = static_cast<Index>(task.labels.size());
    ep.labels = task.labels;
    ep.support_x = data.rows(task.support).template cast<S>();
    ep.query_x = data.rows(task.query).template cast<S>();
    ep.support_targets = task.support_targets();
    ep.query_targets = task.query_targets();
    return ep;
}

nn::NetworkSpec with_head(const nn::NetworkSpec& spec, Index ways)
{
    if (ways < 2) {
        throw InvalidArgument("classifier head needs at least 2 ways");
    }
    auto out = spec;
    nn::LayerSpec head;
    head.kind = nn::LayerKind::linear;
    head.out = ways;
    head.activation = nn::Activation::none;
    out.layers.push_back(head);
    nn::layer_shapes(out);
    return out;
}

template <typename S>
ad::ParameterSet<S> init_maml(const BaselineConfig& config, std::uint64_t seed)
{
    return nn::init_parameters<S>(with_head(config.net, config.ways), seed);
}

template <typename S>
ad::ParameterSet<S> init_embedding(const BaselineConfig& config, std::uint64_t seed)
{
    return nn::init_parameters<S>(config.net, seed);
}

template <typename S>
Var<S> classifier_loss(const BaselineConfig& config, const ad::VarSet<S>& theta, const Matrix<S>& x,
                       const std::vector<int>& targets)
{
    auto& g = *theta[0].graph();
    const auto logits = nn::forward(with_head(config.net, config.ways), theta, g.constant(x));
    return meta::student_loss(ad::softmax(logits), meta::one_hot<S>(targets, config.ways), LossKind::categorical);
}

template <typename S>
double classifier_accuracy(const BaselineConfig& config, const ad::ParameterSet<S>& theta, const Matrix<S>& x,
                           const std::vector<int>& targets)
{
    return meta::accuracy(nn::evaluate(with_head(config.net, config.ways), theta, x), targets);
}

namespace {

void check_ways(const BaselineConfig& config, Index ways)
{
    if (ways != config.ways) {
        throw ShapeError("episode has " + std::to_string(ways) + " ways, classifier head " +
                         std::to_string(config.ways));
    }
}

template <typename S>
using TaskGradientFn = std::function<ad::ParameterSet<S>(const ad::ParameterSet<S>&, const Episode<S>&, double*)>;

// Batching, order-stable summation and step decay shared by MAML and PN.
template <typename S>
std::vector<double> train_loop(ad::ParameterSet<S>& theta, const BaselineConfig& config,
                               const episodes::TaskSampler& sampler, std::uint64_t iterations, std::uint64_t start,
                               const TaskGradientFn<S>& task_gradient)
{
    if (iterations == 0) {
        throw InvalidArgument("meta-train: iteration count must be >= 1");
    }
    if (config.batch_tasks < 1 || config.epoch_length < 1 || !(config.decay > 0.0) || !(config.beta >= 0.0)) {
        throw InvalidArgument("meta-train: batch size and epoch length must be >= 1, decay > 0, beta >= 0");
    }
    const auto batch = static_cast<std::uint64_t>(config.batch_tasks);
    std::vector<double> losses;
    for (std::uint64_t it = start; it < start + iterations; ++it) {
        std::vector<Episode<S>> eps;
        for (std::uint64_t b = 0; b < batch; ++b) {
            eps.push_back(plain_episode<S>(sampler.sample(it * batch + b), sampler.dataset()));
        }
        std::vector<ad::ParameterSet<S>> grads(eps.size());
        std::vector<double> task_loss(eps.size());
        parallel_for(eps.size(), config.threads,
                     [&](std::size_t i) { grads[i] = task_gradient(theta, eps[i], &task_loss[i]); });
        auto total = grads[0];
        double loss = task_loss[0];
        for (std::size_t i = 1; i < grads.size(); ++i) {
            ad::accumulate(total, grads[i]);
            loss += task_loss[i];
        }
        const double beta =
            config.beta * std::pow(config.decay, static_cast<double>(it / static_cast<std::uint64_t>(config.epoch_length)));
        ad::apply_step(theta, total, static_cast<S>(beta));
        losses.push_back(loss / static_cast<double>(grads.size()));
    }
    return losses;
}

} // namespace

template <typename S>
ad::ParameterSet<S> maml_task_gradient(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                       const Episode<S>& ep, double* loss)
{
    check_ways(config, ep.ways);
    ad::Graph<S> g(config.mode);
    const auto vars = ad::bind(g, theta);
    const meta::LossFn<S> inner = [&](const ad::VarSet<S>& p) {
        return classifier_loss(config, p, ep.support_x, ep.support_targets);
    };
    const auto adapted =
        meta::adapt(vars, inner, config.alpha, config.inner_steps, config.mode == ad::Mode::second_order);
    const auto outer = classifier_loss(config, adapted.params, ep.query_x, ep.query_targets);
    if (loss != nullptr) {
        *loss = static_cast<double>(outer.item());
    }
    return ad::values(ad::grad(outer, vars));
}

template <typename S>
std::vector<double> maml_meta_train(ad::ParameterSet<S>& theta, const BaselineConfig& config,
                                    const episodes::TaskSampler& sampler, std::uint64_t iterations,
                                    std::uint64_t start)
{
    return train_loop<S>(theta, config, sampler, iterations, start,
                         [&](const ad::ParameterSet<S>& p, const Episode<S>& ep, double* loss) {
                             return maml_task_gradient(config, p, ep, loss);
                         });
}

template <typename S>
ad::ParameterSet<S> finetune(const BaselineConfig& config, const ad::ParameterSet<S>& theta, const Episode<S>& ep)
{
    check_ways(config, ep.ways);
    if (config.finetune_steps < 0) {
        throw InvalidArgument("fine-tune step count must be >= 0");
    }
    ad::Graph<S> g(ad::Mode::first_order);
    const meta::LossFn<S> loss = [&](const ad::VarSet<S>& p) {
        return classifier_loss(config, p, ep.support_x, ep.support_targets);
    };
    return ad::values(meta::adapt(ad::bind(g, theta), loss, config.alpha, config.finetune_steps, false).params);
}

namespace {

template <typename S>
void evaluate_seen(AccuracyTable& table, Index j, const BaselineConfig& config,
                   const ad::ParameterSet<S>& theta, const std::vector<Episode<S>>& sequence)
{
    std::vector<double> acc(static_cast<std::size_t>(j + 1));
    parallel_for(acc.size(), config.threads, [&](std::size_t i) {
        acc[i] = classifier_accuracy(config, theta, sequence[i].query_x, sequence[i].query_targets);
    });
    for (Index i = 0; i <= j; ++i) {
        table.set(i, j, acc[static_cast<std::size_t>(i)]);
    }
}

} // namespace

template <typename S>
AccuracyTable maml_ft_sequential(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                 const std::vector<Episode<S>>& sequence)
{
    if (sequence.empty()) {
        throw InvalidArgument("meta-test: empty task sequence");
    }
    AccuracyTable table(static_cast<Index>(sequence.size()));
    auto current = theta;
    for (std::size_t j = 0; j < sequence.size(); ++j) {
        current = finetune(config, current, sequence[j]);
        evaluate_seen(table, static_cast<Index>(j), config, current, sequence);
    }
    return table;
}

template <typename S>
ImportanceMap<S> mas_importance(const BaselineConfig& config, const ad::ParameterSet<S>& theta, const Matrix<S>& x)
{
    if (x.rows() == 0) {
        throw InvalidArgument("mas-importance: no samples");
    }
    const auto spec = with_head(config.net, config.ways);
    auto omega = theta.zeros_like();
    // One sample at a time: the absolute value is taken per sample.
    for (Index r = 0; r < x.rows(); ++r) {
        ad::Graph<S> g(ad::Mode::first_order);
        const auto vars = ad::bind(g, theta);
        const auto y = nn::forward(spec, vars, g.constant(Matrix<S>(x.row(r))));
        const auto grads = ad::grad(ad::sum(ad::mul(y, y)), vars);
        for (std::size_t k = 0; k < omega.size(); ++k) {
            omega[k].value += grads[k].value().cwiseAbs();
        }
    }
    for (auto& e : omega) {
        e.value /= static_cast<S>(x.rows());
    }
    return omega;
}

template <typename S>
double mas_penalty(const ad::ParameterSet<S>& theta, const ad::ParameterSet<S>& anchor,
                   const ImportanceMap<S>& omega, double lambda)
{
    double total = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const auto d = (theta[k].value - anchor[k].value).template cast<double>().array();
        total += (omega[k].value.template cast<double>().array() * d * d).sum();
    }
    return lambda * total;
}

template <typename S>
ad::ParameterSet<S> finetune_mas(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                 const Episode<S>& ep, const ad::ParameterSet<S>& anchor,
                                 const ImportanceMap<S>& omega, double lambda)
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw InvalidArgument("mas: lambda must be finite and >= 0");
    }
    if (lambda == 0.0) {
        return finetune(config, theta, ep);
    }
    check_ways(config, ep.ways);
    auto current = theta;
    const auto alpha = static_cast<S>(config.alpha);
    for (int k = 0; k < config.finetune_steps; ++k) {
        ad::Graph<S> g(ad::Mode::first_order);
        const auto vars = ad::bind(g, current);
        const auto grads = ad::grad(classifier_loss(config, vars, ep.support_x, ep.support_targets), vars);
        for (std::size_t i = 0; i < current.size(); ++i) {
            // argmin_t  λΩ(t - θ*)² + (t - u)² / 2α  with u the plain step
            const auto w = (omega[i].value.array() * static_cast<S>(2.0 * config.alpha * lambda)).eval();
            const auto u = (current[i].value - alpha * grads[i].value()).array();
            current[i].value = ((u + w * anchor[i].value.array()) / (S(1) + w)).matrix();
        }
    }
    return current;
}

template <typename S>
AccuracyTable maml_mas_sequential(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                  const std::vector<Episode<S>>& sequence, double lambda)
{
    if (sequence.empty()) {
        throw InvalidArgument("meta-test: empty task sequence");
    }
    if (lambda == 0.0) {
        return maml_ft_sequential(config, theta, sequence);
    }
    AccuracyTable table(static_cast<Index>(sequence.size()));
    auto current = theta;
    auto omega = theta.zeros_like();
    for (std::size_t j = 0; j < sequence.size(); ++j) {
        const auto anchor = current;
        current = finetune_mas(config, current, sequence[j], anchor, omega, lambda);
        evaluate_seen(table, static_cast<Index>(j), config, current, sequence);
        ad::accumulate(omega, mas_importance(config, current, sequence[j].support_x));
    }
    return table;
}

template <typename S>
Var<S> prototype_probabilities(const Var<S>& embedded, const Var<S>& protos)
{
    return ad::softmax(ad::scale(ad::squared_distance(embedded, protos), S(-1)));
}

template <typename S>
PrototypeSet<S> prototypes(const BaselineConfig& config, const ad::ParameterSet<S>& theta, const Episode<S>& ep)
{
    ad::Graph<S> g(ad::Mode::first_order);
    const auto e = nn::forward(config.net, ad::bind(g, theta, false), g.constant(ep.support_x));
    return {meta::class_vectors(e, ep.support_targets, ep.ways).value(), ep.labels};
}

template <typename S>
ad::ParameterSet<S> pn_task_gradient(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                     const Episode<S>& ep, double* loss)
{
    ad::Graph<S> g(ad::Mode::first_order);
    const auto vars = ad::bind(g, theta);
    const auto protos =
        meta::class_vectors(nn::forward(config.net, vars, g.constant(ep.support_x)), ep.support_targets, ep.ways);
    const auto p = prototype_probabilities(nn::forward(config.net, vars, g.constant(ep.query_x)), protos);
    const auto l = meta::student_loss(p, meta::one_hot<S>(ep.query_targets, ep.ways), LossKind::categorical);
    if (loss != nullptr) {
        *loss = static_cast<double>(l.item());
    }
    return ad::values(ad::grad(l, vars));
}

template <typename S>
std::vector<double> pn_train(ad::ParameterSet<S>& theta, const BaselineConfig& config,
                             const episodes::TaskSampler& sampler, std::uint64_t iterations, std::uint64_t start)
{
    return train_loop<S>(theta, config, sampler, iterations, start,
                         [&](const ad::ParameterSet<S>& p, const Episode<S>& ep, double* loss) {
                             return pn_task_gradient(config, p, ep, loss);
                         });
}

template <typename S>
double pn_accuracy(const BaselineConfig& config, const ad::ParameterSet<S>& theta, const Episode<S>& ep,
                   const PrototypeSet<S>& protos)
{
    ad::Graph<S> g(ad::Mode::first_order);
    const auto e = nn::forward(config.net, ad::bind(g, theta, false), g.constant(ep.query_x));
    return meta::accuracy(prototype_probabilities(e, g.constant(protos.vectors)).value(), ep.query_targets);
}

template <typename S>
AccuracyTable pn_csm_sequential(const BaselineConfig& config, const ad::ParameterSet<S>& theta,
                                const std::vector<Episode<S>>& sequence, meta::ClassStorage<S>& csm)
{
    if (sequence.empty()) {
        throw InvalidArgument("meta-test: empty task sequence");
    }
    AccuracyTable table(static_cast<Index>(sequence.size()));
    for (std::size_t j = 0; j < sequence.size(); ++j) {
        csm.store(sequence[j].id, prototypes(config, theta, sequence[j]));
        for (std::size_t i = 0; i <= j; ++i) {
            const auto& old = sequence[i];
            table.set(static_cast<Index>(i), static_cast<Index>(j), pn_accuracy(config, theta, old, csm.retrieve(old.id)));
        }
    }
    return table;
}

#define CML_INSTANTIATE_BASELINES(S)                                                                               \
    template Episode<S> plain_episode<S>(const episodes::Task&, const episodes::Dataset&);                          \
    template ad::ParameterSet<S> init_maml<S>(const BaselineConfig&, std::uint64_t);                                \
    template ad::ParameterSet<S> init_embedding<S>(const BaselineConfig&, std::uint64_t);                           \
    template Var<S> classifier_loss<S>(const BaselineConfig&, const ad::VarSet<S>&, const Matrix<S>&,              \
                                       const std::vector<int>&);                                                    \
    template double classifier_accuracy<S>(const BaselineConfig&, const ad::ParameterSet<S>&, const Matrix<S>&,    \
                                           const std::vector<int>&);                                                \
    template ad::ParameterSet<S> maml_task_gradient<S>(const BaselineConfig&, const ad::ParameterSet<S>&,           \
                                                       const Episode<S>&, double*);                                 \
    template std::vector<double> maml_meta_train<S>(ad::ParameterSet<S>&, const BaselineConfig&,                    \
                                                    const episodes::TaskSampler&, std::uint64_t, std::uint64_t);    \
    template ad::ParameterSet<S> finetune<S>(const BaselineConfig&, const ad::ParameterSet<S>&, const Episode<S>&); \
    template AccuracyTable maml_ft_sequential<S>(const BaselineConfig&, const ad::ParameterSet<S>&,                 \
                                                 const std::vector<Episode<S>>&);                                   \
    template ImportanceMap<S> mas_importance<S>(const BaselineConfig&, const ad::ParameterSet<S>&,                  \
                                                const Matrix<S>&);                                                  \
    template double mas_penalty<S>(const ad::ParameterSet<S>&, const ad::ParameterSet<S>&, const ImportanceMap<S>&, \
                                   double);                                                                         \
    template ad::ParameterSet<S> finetune_mas<S>(const BaselineConfig&, const ad::ParameterSet<S>&,                 \
                                                 const Episode<S>&, const ad::ParameterSet<S>&,                     \
                                                 const ImportanceMap<S>&, double);                                  \
    template AccuracyTable maml_mas_sequential<S>(const BaselineConfig&, const ad::ParameterSet<S>&,                \
                                                  const std::vector<Episode<S>>&, double);                          \
    template Var<S> prototype_probabilities<S>(const Var<S>&, const Var<S>&);                                       \
    template PrototypeSet<S> prototypes<S>(const BaselineConfig&, const ad::ParameterSet<S>&, const Episode<S>&);   \
    template ad::ParameterSet<S> pn_task_gradient<S>(const BaselineConfig&, const ad::ParameterSet<S>&,             \
                                                     const Episode<S>&, double*);                                   \
    template std::vector<double> pn_train<S>(ad::ParameterSet<S>&, const BaselineConfig&,                           \
                                             const episodes::TaskSampler&, std::uint64_t, std::uint64_t);           \
    template double pn_accuracy<S>(const BaselineConfig&, const ad::ParameterSet<S>&, const Episode<S>&,            \
                                   const PrototypeSet<S>&);                                                         \
    template AccuracyTable pn_csm_sequential<S>(const BaselineConfig&, const ad::ParameterSet<S>&,                  \
                                                const std::vector<Episode<S>>&, meta::ClassStorage<S>&);

CML_INSTANTIATE_BASELINES(float)
CML_INSTANTIATE_BASELINES(double)

} // namespace cml::baselines
