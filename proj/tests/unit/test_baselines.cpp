#include <doctest.h>

#include <cmath>
#include <random>

#include "cml/autodiff/gradcheck.hpp"
#include "cml/baselines/baselines.hpp"
#include "cml/episodes/synthetic.hpp"
#include "cml/error.hpp"
#include "test_util.hpp"

using namespace cml;
using namespace cml::baselines;
using cml::testing::random_matrix;
using cml::testing::row;

namespace {

struct Blobs {
    episodes::Dataset data;
    BaselineConfig config;

    explicit Blobs(std::uint64_t seed = 1, double spread = 0.3, ad::Index ways = 3)
      : data(episodes::synth_blobs({16, 12, 8, spread, seed}))
    {
        config.net = nn::mlp_spec(8, {16, 6}, nn::Activation::relu, nn::Activation::none);
        config.ways = ways;
        config.alpha = 0.1;
        config.inner_steps = 2;
        config.finetune_steps = 5;
        config.batch_tasks = 2;
    }

    episodes::TaskSampler sampler(std::uint64_t seed = 3, ad::Index queries = 5) const
    {
        return episodes::TaskSampler(data, data.classes(), {config.ways, 1, queries}, seed);
    }

    template <typename S = double>
    std::vector<Episode<S>> sequence(std::uint64_t position, ad::Index length, std::uint64_t seed = 3) const
    {
        std::vector<Episode<S>> out;
        for (const auto& t : sampler(seed).sample_sequence(position, length, false)) {
            out.push_back(plain_episode<S>(t, data));
        }
        return out;
    }
};

} // namespace

TEST_CASE("maml: zero outer step leaves the initialization unchanged")
{
    Blobs b;
    b.config.beta = 0.0;
    auto theta = init_maml<double>(b.config, 1);
    const auto before = theta;
    maml_meta_train(theta, b.config, b.sampler(), 3);
    CHECK(theta == before);
}

TEST_CASE("maml: meta-gradient matches finite differences")
{
    // Two-parameter toy: 1-d input, one linear layer into a 2-way head.
    BaselineConfig c;
    c.net.input_shape = {1};
    c.ways = 2;
    c.alpha = 0.3;
    Episode<double> ep;
    ep.ways = 2;
    ep.support_x = Matrix<double>(2, 1);
    ep.support_x << 1.0, -0.5;
    ep.support_targets = {0, 1};
    ep.query_x = Matrix<double>(3, 1);
    ep.query_x << 0.7, -1.2, 0.2;
    ep.query_targets = {0, 1, 1};
    ad::ParameterSet<double> theta;
    theta.add("l0.weight", Matrix<double>(1, 2));
    theta.at("l0.weight") << 0.4, -0.3;
    theta.add("l0.bias", Matrix<double>::Zero(1, 2));
    for (int steps = 1; steps <= 3; ++steps) {
        c.inner_steps = steps;
        const ad::ScalarFunction f = [&](ad::Graph<double>&, const ad::VarSet<double>& p) {
            const meta::LossFn<double> inner = [&](const ad::VarSet<double>& q) {
                return classifier_loss(c, q, ep.support_x, ep.support_targets);
            };
            const auto adapted = meta::adapt(p, inner, c.alpha, c.inner_steps, true);
            return classifier_loss(c, adapted.params, ep.query_x, ep.query_targets);
        };
        const auto numeric = ad::numeric_gradient(f, theta, 1e-6);
        const auto analytic = maml_task_gradient(c, theta, ep);
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const double scale = std::max(1e-8, numeric[k].value.cwiseAbs().maxCoeff());
            CHECK((analytic[k].value - numeric[k].value).cwiseAbs().maxCoeff() / scale < 1e-3);
        }
    }
}

TEST_CASE("maml: training on blobs lifts accuracy above chance")
{
    Blobs b(2, 0.3, 3);
    auto theta = init_maml<double>(b.config, 5);
    const auto losses = maml_meta_train(theta, b.config, b.sampler(), 60);
    CHECK(losses.back() < losses.front());
    double acc = 0.0;
    const auto fresh = b.sampler(77);
    for (std::uint64_t p = 0; p < 20; ++p) {
        const auto ep = plain_episode<double>(fresh.sample(p), b.data);
        acc += classifier_accuracy(b.config, finetune(b.config, theta, ep), ep.query_x, ep.query_targets);
    }
    CHECK(acc / 20 > 0.5);
}

TEST_CASE("maml-ft: single task equals plain adaptation")
{
    Blobs b;
    const auto theta = init_maml<double>(b.config, 2);
    const auto seq = b.sequence(0, 1);
    const auto table = maml_ft_sequential(b.config, theta, seq);
    const auto adapted = finetune(b.config, theta, seq[0]);
    CHECK(table.at(0, 0) == classifier_accuracy(b.config, adapted, seq[0].query_x, seq[0].query_targets));
}

TEST_CASE("maml-ft: zero fine-tune steps keep rows constant")
{
    Blobs b;
    b.config.finetune_steps = 0;
    const auto table = maml_ft_sequential(b.config, init_maml<double>(b.config, 2), b.sequence(1, 4));
    for (ad::Index i = 0; i < 4; ++i) {
        for (ad::Index j = i; j < 4; ++j) {
            CHECK(table.at(i, j) == table.at(i, i));
        }
    }
}

TEST_CASE("maml-ft forgets earlier tasks")
{
    // The shared head is repurposed by every new task.
    Blobs b(4, 0.2, 3);
    b.config.finetune_steps = 20;
    auto theta = init_maml<double>(b.config, 3);
    maml_meta_train(theta, b.config, b.sampler(), 40);
    double first = 0.0;
    double last = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto table = maml_ft_sequential(b.config, theta, b.sequence(s, 4, 91));
        first += table.at(0, 0);
        last += table.at(0, 3);
    }
    CHECK(last < first);
}

TEST_CASE("mas importance")
{
    BaselineConfig c;
    c.net.input_shape = {3};
    c.ways = 2;
    // Head-only network: y = x W + b.
    ad::ParameterSet<double> theta;
    theta.add("l0.weight", Matrix<double>::Zero(3, 2));
    theta.add("l0.bias", Matrix<double>::Zero(1, 2));
    std::mt19937_64 rng(3);
    const auto x = random_matrix<double>(rng, 4, 3);
    // Zero output everywhere: Ω ≡ 0.
    for (const auto& e : mas_importance(c, theta, x)) {
        CHECK(e.value.isZero(0.0));
    }

    // One neuron y = w·x (second head column and biases held at zero):
    // Ω_w = mean |2 (w·x) x|.
    theta.at("l0.weight").col(0) = row({0.5, -1.0, 2.0}).transpose();
    const auto omega = mas_importance(c, theta, x);
    Matrix<double> expected = Matrix<double>::Zero(3, 1);
    for (ad::Index r = 0; r < x.rows(); ++r) {
        const double y = x.row(r).dot(theta.at("l0.weight").col(0).transpose());
        expected += (2.0 * y * x.row(r).transpose()).cwiseAbs();
    }
    expected /= 4.0;
    CHECK((omega.at("l0.weight").col(0) - expected).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(omega.at("l0.weight").col(1).isZero(0.0));

    CHECK_THROWS_AS(mas_importance(c, theta, Matrix<double>(0, 3)), InvalidArgument);
}

TEST_CASE("mas importance is non-negative on random networks")
{
    Blobs b;
    std::mt19937_64 rng(5);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto omega = mas_importance(b.config, init_maml<double>(b.config, seed), random_matrix<double>(rng, 6, 8));
        for (const auto& e : omega) {
            CHECK((e.value.array() >= 0.0).all());
        }
    }
}

TEST_CASE("mas penalty")
{
    Blobs b;
    const auto anchor = init_maml<double>(b.config, 1);
    auto omega = anchor.zeros_like();
    omega[0].value(0, 0) = 0.5;
    CHECK(mas_penalty(anchor, anchor, omega, 3.0) == 0.0);
    auto moved = anchor;
    moved[0].value(0, 0) += 0.1;
    CHECK(mas_penalty(moved, anchor, omega, 3.0) == doctest::Approx(3.0 * 0.5 * 0.01).epsilon(1e-12));
    // Moving a coordinate with zero importance costs nothing.
    moved = anchor;
    moved[0].value(0, 1) += 1.0;
    CHECK(mas_penalty(moved, anchor, omega, 3.0) == 0.0);
}

TEST_CASE("maml-mas: lambda 0 reproduces maml-ft")
{
    Blobs b;
    const auto theta = init_maml<double>(b.config, 2);
    const auto seq = b.sequence(2, 4);
    CHECK(maml_mas_sequential(b.config, theta, seq, 0.0) == maml_ft_sequential(b.config, theta, seq));
    CHECK_THROWS_AS(maml_mas_sequential(b.config, theta, seq, -1.0), InvalidArgument);
}

TEST_CASE("maml-mas: huge lambda pins important parameters")
{
    Blobs b;
    const auto theta = init_maml<double>(b.config, 2);
    const auto seq = b.sequence(2, 2);
    const auto first = finetune(b.config, theta, seq[0]);
    const auto omega = mas_importance(b.config, first, seq[0].support_x);
    const auto second = finetune_mas(b.config, first, seq[1], first, omega, 1e6);
    const auto free = finetune(b.config, first, seq[1]);
    double moved = 0.0;
    double free_moved = 0.0;
    for (std::size_t k = 0; k < first.size(); ++k) {
        const auto important = (omega[k].value.array() > 1e-3).template cast<double>();
        moved = std::max(moved, ((second[k].value - first[k].value).array().abs() * important).maxCoeff());
        free_moved = std::max(free_moved, ((free[k].value - first[k].value).array().abs() * important).maxCoeff());
    }
    CHECK(moved < 1e-3);
    CHECK(free_moved > 1e-2);
}

TEST_CASE("prototype classifier")
{
    ad::Graph<double> g;
    Matrix<double> protos(3, 2);
    protos << 0, 0, 10, 0, 0, 10;
    const auto p = prototype_probabilities(g.constant(Matrix<double>(protos.row(1))), g.constant(protos));
    Eigen::Index arg = 0;
    p.value().row(0).maxCoeff(&arg);
    CHECK(arg == 1);

    // Equidistant from prototypes 1 and 2.
    const auto q = prototype_probabilities(g.constant(row({5, 5})), g.constant(protos));
    CHECK(std::abs(q.value()(0, 1) - q.value()(0, 2)) < 1e-6);
}

TEST_CASE("pn training lowers the episode loss")
{
    Blobs b(2, 0.3);
    auto theta = init_embedding<double>(b.config, 4);
    const auto losses = pn_train(theta, b.config, b.sampler(), 40);
    double early = 0.0;
    double late = 0.0;
    for (int i = 0; i < 10; ++i) {
        early += losses[static_cast<std::size_t>(i)];
        late += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
    }
    CHECK(late < early);
}

TEST_CASE("pn-csm: stored prototypes keep old accuracies fixed")
{
    Blobs b;
    const auto theta = init_embedding<double>(b.config, 4);
    for (std::uint64_t s = 0; s < 3; ++s) {
        meta::ClassStorage<double> csm;
        const auto seq = b.sequence(s, 4);
        const auto table = pn_csm_sequential(b.config, theta, seq, csm);
        for (ad::Index i = 0; i < 4; ++i) {
            for (ad::Index j = i; j < 4; ++j) {
                CHECK(table.at(i, j) == table.at(i, i));
            }
            CHECK(csm.retrieve(seq[static_cast<std::size_t>(i)].id) ==
                  prototypes(b.config, theta, seq[static_cast<std::size_t>(i)]));
        }
    }
}

TEST_CASE("baselines reject mismatched ways")
{
    Blobs b(1, 0.3, 3);
    auto c = b.config;
    c.ways = 4;
    const auto seq = b.sequence(0, 1);
    CHECK_THROWS_AS(finetune(c, init_maml<double>(c, 1), seq[0]), ShapeError);
    CHECK_THROWS_AS(maml_task_gradient(c, init_maml<double>(c, 1), seq[0]), ShapeError);
    CHECK_THROWS_AS(with_head(b.config.net, 1), InvalidArgument);
}

TEST_CASE("baseline training does not depend on the worker count")
{
    Blobs b;
    auto one = init_maml<float>(b.config, 9);
    auto four = one;
    auto c4 = b.config;
    c4.threads = 4;
    c4.batch_tasks = 6;
    auto c1 = c4;
    c1.threads = 1;
    maml_meta_train(one, c1, b.sampler(), 2);
    maml_meta_train(four, c4, b.sampler(), 2);
    CHECK(one == four);
}
