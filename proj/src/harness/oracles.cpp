#include "cml/harness/oracles.hpp"

#include <algorithm>
#include <memory>

#include "cml/episodes/synthetic.hpp"
#include "cml/meta/learner.hpp"

namespace cml::harness {

using namespace cml::ad;

namespace {

Matrix<double> random_matrix(std::mt19937_64& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix<double> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng);
    }
    return m;
}

/// Reduces a tensor to a scalar through fixed random weights so every output
/// entry contributes to the checked gradient.
Var<double> weighted_sum(const Var<double>& v)
{
    std::mt19937_64 rng(99);
    auto weights = v.graph()->constant(random_matrix(rng, v.rows(), v.cols()));
    return sum(mul(v, weights));
}

/// Entries in [0.05, 1] with random sign: away from relu/clamp kinks.
Matrix<double> away_from_zero(std::mt19937_64& rng, Index rows, Index cols)
{
    Matrix<double> m = random_matrix(rng, rows, cols, 0.05, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (Index i = 0; i < m.size(); ++i) {
        if (sign(rng)) {
            m.data()[i] = -m.data()[i];
        }
    }
    return m;
}

ParameterSet<double> two(Matrix<double> a, Matrix<double> b)
{
    ParameterSet<double> p;
    p.add("a", std::move(a));
    p.add("b", std::move(b));
    return p;
}

ParameterSet<double> one(Matrix<double> a)
{
    ParameterSet<double> p;
    p.add("a", std::move(a));
    return p;
}

} // namespace

std::vector<GradCase> primitive_cases()
{
    using P = VarSet<double>;
    std::vector<GradCase> cases;
    auto rnd = [](Index r, Index c) {
        return [r, c](std::mt19937_64& rng) { return one(random_matrix(rng, r, c)); };
    };
    auto rnd2 = [](Index r1, Index c1, Index r2, Index c2) {
        return [=](std::mt19937_64& rng) { return two(random_matrix(rng, r1, c1), random_matrix(rng, r2, c2)); };
    };
    auto positive = [](Index r, Index c) {
        return [r, c](std::mt19937_64& rng) { return one(random_matrix(rng, r, c, 0.2, 2.0)); };
    };
    auto kinked = [](Index r, Index c) {
        return [r, c](std::mt19937_64& rng) { return one(away_from_zero(rng, r, c)); };
    };

    cases.push_back({"add", rnd2(3, 4, 3, 4), [](Graph<double>&, const P& p) { return weighted_sum(add(p[0], p[1])); }});
    cases.push_back({"sub", rnd2(3, 4, 3, 4), [](Graph<double>&, const P& p) { return weighted_sum(sub(p[0], p[1])); }});
    cases.push_back({"mul", rnd2(3, 4, 3, 4), [](Graph<double>&, const P& p) { return weighted_sum(mul(p[0], p[1])); }});
    cases.push_back({"scale", rnd(2, 3), [](Graph<double>&, const P& p) { return weighted_sum(scale(p[0], -1.7)); }});
    cases.push_back({"affine", rnd(2, 3), [](Graph<double>&, const P& p) { return weighted_sum(affine(p[0], 0.3, 2.0)); }});
    cases.push_back({"matmul", rnd2(3, 4, 4, 2), [](Graph<double>&, const P& p) { return weighted_sum(matmul(p[0], p[1])); }});
    cases.push_back({"transpose", rnd(3, 5), [](Graph<double>&, const P& p) { return weighted_sum(transpose(p[0])); }});
    cases.push_back({"relu", kinked(4, 4), [](Graph<double>&, const P& p) { return weighted_sum(relu(p[0])); }});
    cases.push_back({"sigmoid", rnd(3, 3), [](Graph<double>&, const P& p) { return weighted_sum(sigmoid(p[0])); }});
    cases.push_back({"log", positive(3, 3), [](Graph<double>&, const P& p) { return weighted_sum(log(p[0])); }});
    cases.push_back({"exp", rnd(3, 3), [](Graph<double>&, const P& p) { return weighted_sum(exp(p[0])); }});
    cases.push_back({"pow", positive(3, 3), [](Graph<double>&, const P& p) { return weighted_sum(pow(p[0], 1.7)); }});
    cases.push_back({"pow-neg", positive(3, 3), [](Graph<double>&, const P& p) { return weighted_sum(pow(p[0], -0.5)); }});
    cases.push_back({"clamp_min", kinked(4, 3), [](Graph<double>&, const P& p) { return weighted_sum(clamp_min(p[0], 0.0)); }});
    cases.push_back({"sum", rnd(3, 4), [](Graph<double>&, const P& p) { return scale(sum(p[0]), 1.3); }});
    cases.push_back({"sum-axis0", rnd(3, 4), [](Graph<double>&, const P& p) { return weighted_sum(sum(p[0], 0)); }});
    cases.push_back({"sum-axis1", rnd(3, 4), [](Graph<double>&, const P& p) { return weighted_sum(sum(p[0], 1)); }});
    cases.push_back({"mean-axis0", rnd(3, 4), [](Graph<double>&, const P& p) { return weighted_sum(mean(p[0], 0)); }});
    cases.push_back({"mean", rnd(3, 4), [](Graph<double>&, const P& p) { return mean(mul(p[0], p[0])); }});
    cases.push_back({"broadcast-row", rnd(1, 4), [](Graph<double>&, const P& p) { return weighted_sum(broadcast_to(p[0], 3, 4)); }});
    cases.push_back({"broadcast-col", rnd(3, 1), [](Graph<double>&, const P& p) { return weighted_sum(broadcast_to(p[0], 3, 4)); }});
    cases.push_back({"block", rnd(4, 5), [](Graph<double>&, const P& p) { return weighted_sum(block(p[0], 1, 2, 2, 3)); }});
    cases.push_back({"embed", rnd(2, 2), [](Graph<double>&, const P& p) { return weighted_sum(embed(p[0], 1, 1, 4, 3)); }});
    cases.push_back({"concat0", rnd2(2, 3, 4, 3), [](Graph<double>&, const P& p) { return weighted_sum(concat(p[0], p[1], 0)); }});
    cases.push_back({"concat1", rnd2(2, 3, 2, 1), [](Graph<double>&, const P& p) { return weighted_sum(concat(p[0], p[1], 1)); }});
    cases.push_back({"gather", rnd(3, 3), [](Graph<double>&, const P& p) {
        auto map = std::make_shared<const std::vector<Index>>(std::vector<Index>{0, 4, 4, -1, 8, 2, 7, 7});
        return weighted_sum(gather(p[0], map, 2, 4));
    }});
    cases.push_back({"scatter_add", rnd(2, 3), [](Graph<double>&, const P& p) {
        auto map = std::make_shared<const std::vector<Index>>(std::vector<Index>{0, 3, 3, -1, 1, 0});
        return weighted_sum(scatter_add(p[0], map, 2, 2));
    }});
    cases.push_back({"select_rows", rnd(4, 2), [](Graph<double>&, const P& p) { return weighted_sum(select_rows(p[0], {3, 0, 3})); }});
    cases.push_back({"softmax", rnd(3, 5), [](Graph<double>&, const P& p) { return weighted_sum(softmax(p[0])); }});
    cases.push_back({"l2_norm", rnd(3, 4), [](Graph<double>&, const P& p) { return weighted_sum(l2_norm(p[0], 1)); }});
    cases.push_back({"cosine_similarity", rnd2(3, 4, 2, 4), [](Graph<double>&, const P& p) { return weighted_sum(cosine_similarity(p[0], p[1])); }});
    cases.push_back({"squared_distance", rnd2(3, 4, 2, 4), [](Graph<double>&, const P& p) { return weighted_sum(squared_distance(p[0], p[1])); }});
    cases.push_back({"batch_norm", [](std::mt19937_64& rng) {
        ParameterSet<double> p;
        p.add("x", random_matrix(rng, 5, 3));
        p.add("gamma", random_matrix(rng, 1, 3, 0.5, 1.5));
        p.add("beta", random_matrix(rng, 1, 3));
        return p;
    }, [](Graph<double>&, const P& p) { return weighted_sum(batch_norm(p[0], p[1], p[2])); }});
    cases.push_back({"batch_norm-single-row", [](std::mt19937_64& rng) {
        ParameterSet<double> p;
        p.add("x", random_matrix(rng, 1, 4));
        p.add("gamma", random_matrix(rng, 1, 4, 0.5, 1.5));
        p.add("beta", random_matrix(rng, 1, 4));
        return p;
    }, [](Graph<double>&, const P& p) { return weighted_sum(batch_norm(p[0], p[1], p[2])); }});
    cases.push_back({"conv2d", [](std::mt19937_64& rng) {
        ParameterSet<double> p;
        p.add("x", random_matrix(rng, 2 * 4 * 4, 2));
        p.add("w", random_matrix(rng, 2 * 3 * 3, 3));
        p.add("b", random_matrix(rng, 1, 3));
        return p;
    }, [](Graph<double>&, const P& p) {
        ImageShape shape{2, 4, 4, 2};
        return weighted_sum(conv2d(p[0], p[1], p[2], shape, 3, 1));
    }});
    cases.push_back({"max_pool2x2", rnd(1 * 4 * 4, 2), [](Graph<double>&, const P& p) {
        ImageShape shape{1, 4, 4, 2};
        return weighted_sum(max_pool2x2(p[0], shape));
    }});
    cases.push_back({"to_spatial+flatten", rnd(2, 3 * 2 * 2), [](Graph<double>&, const P& p) {
        const ImageShape shape{2, 2, 2, 3};
        return weighted_sum(flatten_spatial(to_spatial(p[0], shape), shape));
    }});
    return cases;
}

std::vector<OracleResult> primitive_oracles(std::uint64_t seed, int trials)
{
    std::mt19937_64 rng(seed);
    std::vector<OracleResult> out;
    for (const auto& c : primitive_cases()) {
        double worst = 0.0;
        for (int t = 0; t < trials; ++t) {
            worst = std::max(worst, finite_difference_check(c.f, c.params(rng), 1e-5).max_relative_error);
        }
        out.push_back({c.name, worst, 1e-5});
    }
    return out;
}

namespace {

// Small CML problem shared by the loss and meta-gradient oracles: random
// (sigmoid) teacher so no feature row is exactly zero.
struct SmallProblem {
    episodes::Dataset data;
    meta::CmlConfig config;
    nn::TeacherCache<double> teacher;
    meta::MetaState<double> state;

    explicit SmallProblem(std::uint64_t seed)
      : data(episodes::synth_blobs({12, 12, 8, 0.2, seed}))
    {
        config.teacher = nn::mlp_spec(8, {10, 6}, nn::Activation::sigmoid, nn::Activation::none);
        config.student = nn::mlp_spec(8, {12, 6}, nn::Activation::relu, nn::Activation::none);
        config.discriminator = nn::default_discriminator_spec(6);
        config.scale = 3.0;
        teacher = nn::TeacherCache<double>(config.teacher, nn::init_parameters<double>(config.teacher, seed + 100), data);
        state = meta::init_state<double>(config, seed);
        state.alpha_s = 0.1;
        state.alpha_d = 0.1;
    }

    meta::Episode<double> episode(std::uint64_t position) const
    {
        const episodes::TaskSampler sampler(data, data.classes(), {3, 1, 4}, 3);
        return meta::make_episode(sampler.sample(position), data, teacher);
    }
};

} // namespace

std::vector<OracleResult> loss_oracles(std::uint64_t seed, int trials)
{
    std::vector<OracleResult> out;
    double bce = 0.0;
    double ce = 0.0;
    double disc = 0.0;
    for (int t = 0; t < trials; ++t) {
        const SmallProblem pb(seed + static_cast<std::uint64_t>(t));
        const auto ep = pb.episode(static_cast<std::uint64_t>(t));
        for (auto kind : {meta::LossKind::binary, meta::LossKind::categorical}) {
            const ScalarFunction ls = [&](Graph<double>& g, const VarSet<double>& s) {
                const auto m = nn::student_forward(pb.config.student, s, g.constant(ep.support_x));
                const auto v = meta::class_vectors(m, ep.support_targets, ep.ways);
                const auto p = nn::classify(g.constant(ep.query_t), v, 3.0);
                return meta::student_loss(p, meta::one_hot<double>(ep.query_targets, ep.ways), kind);
            };
            double& worst = kind == meta::LossKind::binary ? bce : ce;
            worst = std::max(worst, finite_difference_check(ls, pb.state.theta_s, 1e-6).max_relative_error);
        }
        // ℓ_d w.r.t. θ_d and, through the student half, θ_s.
        auto both = pb.state.theta_d;
        for (const auto& e : pb.state.theta_s) {
            both.add("s." + e.name, e.value);
        }
        const auto nd = pb.state.theta_d.size();
        const ScalarFunction ld = [&](Graph<double>& g, const VarSet<double>& p) {
            VarSet<double> d;
            VarSet<double> s;
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (i < nd) {
                    d.add(p.name(i), p[i]);
                } else {
                    s.add(p.name(i).substr(2), p[i]);
                }
            }
            const auto ms = nn::student_forward(pb.config.student, s, g.constant(ep.query_x));
            const auto [dt, ds] = meta::discriminate(pb.config, d, g.constant(ep.query_t), ms);
            return meta::discriminator_loss(dt, ds);
        };
        disc = std::max(disc, finite_difference_check(ld, both, 1e-6).max_relative_error);
    }
    out.push_back({"student-loss-binary", bce, 1e-4});
    out.push_back({"student-loss-categorical", ce, 1e-4});
    out.push_back({"discriminator-loss", disc, 1e-4});
    return out;
}

std::vector<OracleResult> meta_gradient_oracles(std::uint64_t seed)
{
    std::vector<OracleResult> out;
    for (int steps = 1; steps <= 3; ++steps) {
        SmallProblem pb(seed);
        pb.state.inner_steps = steps;
        const auto ep = pb.episode(2);
        // The adapted discriminator only scores the student; hold it at its
        // value for the unperturbed θ_s.
        Graph<double> g0;
        const auto base = meta::fast_learn(pb.state, pb.config, ep, bind(g0, pb.state.theta_s),
                                           bind(g0, pb.state.theta_d), true);
        const auto theta_d = values(base.theta_d);
        const ScalarFunction outer = [&](Graph<double>&, const VarSet<double>& s) {
            const auto fl = meta::fast_learn(pb.state, pb.config, ep, s, {}, false);
            return meta::student_outer_loss(pb.config, ep, fl.theta_s, fl.v, &theta_d);
        };
        const auto numeric = numeric_gradient(outer, pb.state.theta_s, 1e-5);
        const auto analytic = meta::task_meta_gradients(pb.state, pb.config, ep).theta_s;
        double worst = 0.0;
        for (std::size_t k = 0; k < numeric.size(); ++k) {
            const auto diff = (analytic[k].value - numeric[k].value).cwiseAbs().array();
            const auto denom = numeric[k].value.cwiseAbs().array().max(1.0);
            worst = std::max(worst, (diff / denom).maxCoeff());
        }
        out.push_back({"meta-gradient-" + std::to_string(steps) + "-step", worst, 1e-3});
    }
    return out;
}

std::vector<double> first_order_gaps(std::uint64_t seed, const std::vector<double>& alphas)
{
    SmallProblem pb(seed);
    pb.state.inner_steps = 1;
    pb.config.scale = 1.0;
    const auto ep = pb.episode(0);
    auto fo = pb.config;
    fo.mode = Mode::first_order;
    std::vector<double> gaps;
    for (double alpha : alphas) {
        pb.state.alpha_s = alpha;
        pb.state.alpha_d = alpha;
        const auto so_g = meta::task_meta_gradients(pb.state, pb.config, ep).theta_s;
        const auto fo_g = meta::task_meta_gradients(pb.state, fo, ep).theta_s;
        double gap = 0.0;
        for (std::size_t k = 0; k < so_g.size(); ++k) {
            gap = std::max(gap, (so_g[k].value - fo_g[k].value).cwiseAbs().maxCoeff());
        }
        gaps.push_back(gap);
    }
    return gaps;
}

} // namespace cml::harness
