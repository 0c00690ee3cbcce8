#include "cml/meta/learner.hpp"

#include <cmath>
#include <string>

#include "cml/error.hpp"
#include "cml/parallel.hpp"

namespace cml::meta {

template <typename S>
void MetaState<S>::validate() const
{
    for (double step : {alpha_s, alpha_d, beta_s, beta_d}) {
        if (!(step >= 0.0) || !std::isfinite(step)) {
            throw InvalidArgument("meta state: step sizes must be finite and non-negative");
        }
    }
    if (inner_steps < 1) {
        throw InvalidArgument("meta state: inner step count must be >= 1, got " + std::to_string(inner_steps));
    }
}

template <typename S>
MetaState<S> init_state(const CmlConfig& config, std::uint64_t seed)
{
    const Index z_t = nn::output_dim(config.teacher);
    const Index z_s = nn::output_dim(config.student);
    if (z_t != z_s) {
        throw ShapeError("teacher emits " + std::to_string(z_t) + " features, student " + std::to_string(z_s));
    }
    if (nn::input_dim(config.discriminator) != z_s || nn::output_dim(config.discriminator) != 1) {
        throw ShapeError("discriminator must map " + std::to_string(z_s) + " features to 1 output");
    }
    MetaState<S> state;
    state.theta_s = nn::init_parameters<S>(config.student, seed);
    state.theta_d = nn::init_parameters<S>(config.discriminator, seed * 0x9e3779b97f4a7c15ULL + 1);
    return state;
}

template <typename S>
Episode<S> make_episode(const episodes::Task& task, const episodes::Dataset& data, const nn::TeacherCache<S>& teacher)
{
    Episode<S> ep;
    ep.id = task.id;
    ep.ways = static_cast<Index>(task.labels.size());
    ep.labels = task.labels;
    ep.support_x = data.rows(task.support).template cast<S>();
    ep.query_x = data.rows(task.query).template cast<S>();
    ep.support_t = teacher.rows(task.support);
    ep.query_t = teacher.rows(task.query);
    ep.support_targets = task.support_targets();
    ep.query_targets = task.query_targets();
    return ep;
}

template <typename S>
Adapted<S> adapt(const ad::VarSet<S>& params, const LossFn<S>& loss, double alpha, int steps, bool create_graph)
{
    Adapted<S> out{params, {}};
    for (int k = 0; k < steps; ++k) {
        const auto l = loss(out.params);
        out.losses.push_back(static_cast<double>(l.item()));
        if (alpha == 0.0) {
            continue;
        }
        const auto g = ad::grad(l, out.params, create_graph);
        out.params = ad::sgd_step(out.params, g, static_cast<S>(alpha));
    }
    return out;
}

template <typename S>
std::pair<Var<S>, Var<S>> discriminate(const CmlConfig& config, const ad::VarSet<S>& theta_d, const Var<S>& teacher,
                                       const Var<S>& student)
{
    if (teacher.rows() != student.rows()) {
        throw ShapeError("discriminate: teacher and student batches differ");
    }
    const Index b = teacher.rows();
    const auto d = nn::discriminator_forward(config.discriminator, theta_d, ad::concat(teacher, student, 0));
    return {ad::block(d, 0, 0, b, 1), ad::block(d, b, 0, b, 1)};
}

namespace {

template <typename S>
Var<S> support_loss(const CmlConfig& config, const Episode<S>& ep, const Var<S>& features, const Matrix<S>& y)
{
    auto& g = *features.graph();
    const auto v = class_vectors(features, ep.support_targets, ep.ways);
    const auto p = nn::classify(g.constant(ep.support_t), v, static_cast<S>(config.scale));
    return student_loss(p, y, config.loss);
}

} // namespace

template <typename S>
FastLearned<S> fast_learn(const MetaState<S>& state, const CmlConfig& config, const Episode<S>& ep,
                          const ad::VarSet<S>& theta_s, const ad::VarSet<S>& theta_d, bool train_discriminator)
{
    state.validate();
    if (theta_s.empty()) {
        throw InvalidArgument("fast-learn: empty student parameters");
    }
    auto& g = *theta_s[0].graph();
    const bool create = config.mode == ad::Mode::second_order;
    const auto xs = g.constant(ep.support_x);
    const auto ts = g.constant(ep.support_t);
    const auto y = one_hot<S>(ep.support_targets, ep.ways);
    const auto alpha_s = static_cast<S>(state.alpha_s);
    const auto alpha_d = static_cast<S>(state.alpha_d);

    FastLearned<S> out;
    out.theta_s = theta_s;
    if (train_discriminator) {
        if (theta_d.empty()) {
            throw InvalidArgument("fast-learn: discriminator training needs discriminator parameters");
        }
        out.theta_d = theta_d;
    }
    for (int k = 0; k < state.inner_steps; ++k) {
        const auto ms = nn::student_forward(config.student, out.theta_s, xs);
        const auto ls = support_loss(config, ep, ms, y);
        out.train_losses.push_back(static_cast<double>(ls.item()));
        ad::VarSet<S> next_d;
        if (train_discriminator) {
            const auto [dt, ds] = discriminate(config, out.theta_d, ts, ms.detach());
            const auto ld = discriminator_loss(dt, ds);
            next_d = alpha_d == S(0) ? out.theta_d
                                     : ad::sgd_step(out.theta_d, ad::grad(ld, out.theta_d, create), alpha_d);
        }
        if (alpha_s != S(0)) {
            out.theta_s = ad::sgd_step(out.theta_s, ad::grad(ls, out.theta_s, create), alpha_s);
        }
        if (train_discriminator) {
            out.theta_d = next_d;
        }
    }
    out.v = class_vectors(nn::student_forward(config.student, out.theta_s, xs), ep.support_targets, ep.ways);
    return out;
}

template <typename S>
Adaptation<S> fast_learn_values(const MetaState<S>& state, const CmlConfig& config, const Episode<S>& ep)
{
    ad::Graph<S> g(ad::Mode::first_order);
    CmlConfig plain = config;
    plain.mode = ad::Mode::first_order;
    const auto fl = fast_learn(state, plain, ep, ad::bind(g, state.theta_s), {}, false);
    Adaptation<S> out;
    out.theta_s = ad::values(fl.theta_s);
    out.v.vectors = fl.v.value();
    out.v.labels = ep.labels;
    out.train_losses = fl.train_losses;
    return out;
}

template <typename S>
Var<S> student_outer_loss(const CmlConfig& config, const Episode<S>& ep, const ad::VarSet<S>& theta_s_adapted,
                          const Var<S>& v, const ad::ParameterSet<S>* theta_d_fixed)
{
    auto& g = *v.graph();
    const auto tq = g.constant(ep.query_t);
    const auto mq = nn::student_forward(config.student, theta_s_adapted, g.constant(ep.query_x));
    const auto p = nn::classify(tq, v, static_cast<S>(config.scale));
    auto terms = student_loss_terms(p, one_hot<S>(ep.query_targets, ep.ways), config.loss);
    if (config.use_discriminator && theta_d_fixed != nullptr) {
        const auto theta_d = ad::bind(g, *theta_d_fixed, false);
        const auto [dt, ds] = discriminate(config, theta_d, tq, mq);
        terms = ad::add(terms, disc_negative(ds));
    }
    return ad::mean(terms);
}

template <typename S>
Var<S> discriminator_outer_loss(const CmlConfig& config, const Episode<S>& ep, const ad::VarSet<S>& theta_d_adapted,
                                const Var<S>& student_features)
{
    auto& g = *student_features.graph();
    const auto [dt, ds] = discriminate(config, theta_d_adapted, g.constant(ep.query_t), student_features.detach());
    return discriminator_loss(dt, ds);
}

template <typename S>
TaskGradients<S> task_meta_gradients(const MetaState<S>& state, const CmlConfig& config, const Episode<S>& ep)
{
    ad::Graph<S> g(config.mode);
    const auto theta_s = ad::bind(g, state.theta_s);
    const bool use_d = config.use_discriminator;
    const auto theta_d = use_d ? ad::bind(g, state.theta_d) : ad::VarSet<S>{};
    const auto fl = fast_learn(state, config, ep, theta_s, theta_d, use_d);

    TaskGradients<S> out;
    const auto theta_d_adapted = use_d ? ad::values(fl.theta_d) : ad::ParameterSet<S>{};
    const auto ls = student_outer_loss(config, ep, fl.theta_s, fl.v, use_d ? &theta_d_adapted : nullptr);
    out.student_loss = static_cast<double>(ls.item());
    out.theta_s = ad::values(ad::grad(ls, theta_s));
    if (use_d) {
        const auto mq = nn::student_forward(config.student, fl.theta_s, g.constant(ep.query_x));
        const auto ld = discriminator_outer_loss(config, ep, fl.theta_d, mq);
        out.discriminator_loss = static_cast<double>(ld.item());
        out.theta_d = ad::values(ad::grad(ld, theta_d));
    } else {
        out.theta_d = state.theta_d.zeros_like();
    }
    return out;
}

template <typename S>
UpdateStats meta_update(MetaState<S>& state, const CmlConfig& config, std::span<const Episode<S>> batch)
{
    if (batch.empty()) {
        throw InvalidArgument("meta-update: empty task batch");
    }
    state.validate();
    std::vector<TaskGradients<S>> grads(batch.size());
    parallel_for(batch.size(), config.threads,
                 [&](std::size_t i) { grads[i] = task_meta_gradients(state, config, batch[i]); });
    // Summed in task order so the result does not depend on the thread count.
    auto sum_s = grads[0].theta_s;
    auto sum_d = grads[0].theta_d;
    UpdateStats stats{grads[0].student_loss, grads[0].discriminator_loss};
    for (std::size_t i = 1; i < grads.size(); ++i) {
        ad::accumulate(sum_s, grads[i].theta_s);
        ad::accumulate(sum_d, grads[i].theta_d);
        stats.student_loss += grads[i].student_loss;
        stats.discriminator_loss += grads[i].discriminator_loss;
    }
    ad::apply_step(state.theta_s, sum_s, static_cast<S>(state.beta_s));
    if (config.use_discriminator) {
        ad::apply_step(state.theta_d, sum_d, static_cast<S>(state.beta_d));
    }
    stats.student_loss /= static_cast<double>(batch.size());
    stats.discriminator_loss /= static_cast<double>(batch.size());
    return stats;
}

template <typename S>
TrainLog meta_train(MetaState<S>& state, const CmlConfig& config, const episodes::TaskSampler& sampler,
                    const nn::TeacherCache<S>& teacher, std::uint64_t iterations)
{
    if (iterations == 0) {
        throw InvalidArgument("meta-train: iteration count must be >= 1");
    }
    if (config.batch_tasks < 1 || config.epoch_length < 1 || !(config.decay > 0.0)) {
        throw InvalidArgument("meta-train: batch size and epoch length must be >= 1, decay > 0");
    }
    TrainLog log;
    const auto batch = static_cast<std::uint64_t>(config.batch_tasks);
    for (std::uint64_t it = 0; it < iterations; ++it) {
        std::vector<Episode<S>> episodes;
        for (std::uint64_t b = 0; b < batch; ++b) {
            episodes.push_back(make_episode(sampler.sample(state.iteration * batch + b), sampler.dataset(), teacher));
        }
        const auto stats = meta_update(state, config, std::span<const Episode<S>>(episodes));
        log.student_loss.push_back(stats.student_loss);
        log.discriminator_loss.push_back(stats.discriminator_loss);
        ++state.iteration;
        if (state.iteration % static_cast<std::uint64_t>(config.epoch_length) == 0) {
            state.beta_s *= config.decay;
            state.beta_d *= config.decay;
        }
    }
    return log;
}

template <typename S>
double query_accuracy(const CmlConfig& config, const Episode<S>& ep, const AllClassMatrix<S>& v)
{
    ad::Graph<S> g(ad::Mode::first_order);
    const auto p = nn::classify(g.constant(ep.query_t), g.constant(v.vectors), static_cast<S>(config.scale));
    return accuracy(p.value(), ep.query_targets);
}

template <typename S>
double evaluate_tasks(const MetaState<S>& state, const CmlConfig& config, std::span<const Episode<S>> tasks)
{
    if (tasks.empty()) {
        throw InvalidArgument("evaluate: no tasks");
    }
    std::vector<double> acc(tasks.size());
    parallel_for(tasks.size(), config.threads, [&](std::size_t i) {
        acc[i] = query_accuracy(config, tasks[i], fast_learn_values(state, config, tasks[i]).v);
    });
    double total = 0.0;
    for (double a : acc) {
        total += a;
    }
    return total / static_cast<double>(acc.size());
}

#define CML_INSTANTIATE_LEARNER(S)                                                                                 \
    template struct MetaState<S>;                                                                                   \
    template MetaState<S> init_state<S>(const CmlConfig&, std::uint64_t);                                           \
    template Episode<S> make_episode<S>(const episodes::Task&, const episodes::Dataset&,                            \
                                        const nn::TeacherCache<S>&);                                                \
    template Adapted<S> adapt<S>(const ad::VarSet<S>&, const LossFn<S>&, double, int, bool);                        \
    template std::pair<Var<S>, Var<S>> discriminate<S>(const CmlConfig&, const ad::VarSet<S>&, const Var<S>&,       \
                                                       const Var<S>&);                                              \
    template FastLearned<S> fast_learn<S>(const MetaState<S>&, const CmlConfig&, const Episode<S>&,                 \
                                          const ad::VarSet<S>&, const ad::VarSet<S>&, bool);                        \
    template Adaptation<S> fast_learn_values<S>(const MetaState<S>&, const CmlConfig&, const Episode<S>&);          \
    template Var<S> student_outer_loss<S>(const CmlConfig&, const Episode<S>&, const ad::VarSet<S>&, const Var<S>&, \
                                          const ad::ParameterSet<S>*);                                              \
    template Var<S> discriminator_outer_loss<S>(const CmlConfig&, const Episode<S>&, const ad::VarSet<S>&,          \
                                                const Var<S>&);                                                     \
    template TaskGradients<S> task_meta_gradients<S>(const MetaState<S>&, const CmlConfig&, const Episode<S>&);     \
    template UpdateStats meta_update<S>(MetaState<S>&, const CmlConfig&, std::span<const Episode<S>>);              \
    template TrainLog meta_train<S>(MetaState<S>&, const CmlConfig&, const episodes::TaskSampler&,                  \
                                    const nn::TeacherCache<S>&, std::uint64_t);                                     \
    template double query_accuracy<S>(const CmlConfig&, const Episode<S>&, const AllClassMatrix<S>&);               \
    template double evaluate_tasks<S>(const MetaState<S>&, const CmlConfig&, std::span<const Episode<S>>);

CML_INSTANTIATE_LEARNER(float)
CML_INSTANTIATE_LEARNER(double)

} // namespace cml::meta
