#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "cml/episodes/synthetic.hpp"
#include "cml/error.hpp"
#include "cml/nn/models.hpp"
#include "test_util.hpp"

using namespace cml;
using namespace cml::nn;
using cml::testing::random_matrix;
using cml::testing::row;
using ad::Graph;
using ad::Matrix;

namespace {

// Straight-line loop evaluation, no Eigen products.
using Rows = std::vector<std::vector<double>>;

Rows to_rows(const Matrix<double>& m)
{
    Rows r(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            r[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
        }
    }
    return r;
}

Rows ref_linear(const Rows& x, const Matrix<double>& w, const Matrix<double>& b)
{
    Rows y(x.size(), std::vector<double>(static_cast<std::size_t>(w.cols())));
    for (std::size_t n = 0; n < x.size(); ++n) {
        for (Index o = 0; o < w.cols(); ++o) {
            double acc = b(0, o);
            for (Index i = 0; i < w.rows(); ++i) {
                acc += x[n][static_cast<std::size_t>(i)] * w(i, o);
            }
            y[n][static_cast<std::size_t>(o)] = acc;
        }
    }
    return y;
}

void ref_batch_norm(Rows& y, const Matrix<double>& gamma, const Matrix<double>& beta)
{
    const double n = static_cast<double>(y.size());
    for (std::size_t c = 0; c < y[0].size(); ++c) {
        double mu = 0;
        for (const auto& r : y) {
            mu += r[c];
        }
        mu /= n;
        double var = 0;
        for (const auto& r : y) {
            var += (r[c] - mu) * (r[c] - mu);
        }
        var /= n;
        for (auto& r : y) {
            r[c] = (r[c] - mu) / std::sqrt(var + 1e-5) * gamma(0, static_cast<Index>(c)) + beta(0, static_cast<Index>(c));
        }
    }
}

Rows ref_mlp(const NetworkSpec& spec, const ad::ParameterSet<double>& p, const Matrix<double>& x)
{
    Rows h = to_rows(x);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto pre = "l" + std::to_string(i) + ".";
        h = ref_linear(h, p.at(pre + "weight"), p.at(pre + "bias"));
        if (spec.layers[i].batch_norm) {
            ref_batch_norm(h, p.at(pre + "gamma"), p.at(pre + "beta"));
        }
        for (auto& r : h) {
            for (double& v : r) {
                if (spec.layers[i].activation == Activation::relu) {
                    v = v > 0 ? v : 0;
                } else if (spec.layers[i].activation == Activation::sigmoid) {
                    v = 1 / (1 + std::exp(-v));
                }
            }
        }
    }
    return h;
}

double max_gap(const Matrix<double>& a, const Rows& b)
{
    double gap = 0;
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) {
            gap = std::max(gap, std::abs(a(i, j) - b[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
        }
    }
    return gap;
}

ad::ParameterSet<double> randomized(const NetworkSpec& spec, std::mt19937_64& rng)
{
    auto p = init_parameters<double>(spec, rng());
    for (auto& e : p) {
        e.value = random_matrix<double>(rng, e.value.rows(), e.value.cols(), -1.0, 1.0);
    }
    return p;
}

} // namespace

TEST_CASE("identity teacher returns its input")
{
    NetworkSpec spec{{3}, {{LayerKind::linear, 3}}};
    ad::ParameterSet<double> p;
    p.add("l0.weight", Matrix<double>::Identity(3, 3));
    p.add("l0.bias", Matrix<double>::Zero(1, 3));
    Graph<double> g;
    const auto m = teacher_forward(spec, p, g.constant(row({1, 2, 3})));
    CHECK(m.value() == row({1, 2, 3}));
    CHECK_FALSE(m.requires_grad());

    const auto vars = ad::bind(g, p);
    const auto s = student_forward(spec, vars, g.constant(row({1, 2, 3})));
    CHECK(s.value() == row({1, 2, 3}));
    CHECK(s.requires_grad());
}

TEST_CASE("zero input through a bias-free network gives zero")
{
    const auto spec = mlp_spec(4, {6, 5, 3}, Activation::relu, Activation::none);
    const auto p = init_parameters<double>(spec, 3);
    const auto out = evaluate(spec, p, Matrix<double>(Matrix<double>::Zero(2, 4)));
    CHECK(out.isZero(0.0));
}

TEST_CASE("teacher and student match a straight-line reference forward")
{
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const auto spec = mlp_spec(5, {7, 4}, Activation::relu, Activation::none);
        const auto p = randomized(spec, rng);
        const Matrix<double> x = random_matrix<double>(rng, 3, 5, -2.0, 2.0);
        Graph<double> g;
        const auto t = teacher_forward(spec, p, g.constant(x));
        CHECK(max_gap(t.value(), ref_mlp(spec, p, x)) < 1e-5);
        const auto s = student_forward(spec, ad::bind(g, p), g.constant(x));
        CHECK(max_gap(s.value(), ref_mlp(spec, p, x)) < 1e-5);

        // 32-bit path against the same 64-bit reference.
        Graph<float> gf;
        const auto tf = teacher_forward(spec, p.cast<float>(), gf.constant(Matrix<float>(x.cast<float>())));
        CHECK(max_gap(tf.value().cast<double>(), ref_mlp(spec, p, x)) < 1e-5);
    }
}

TEST_CASE("discriminator outputs")
{
    const auto spec = default_discriminator_spec(6);
    auto p = init_parameters<double>(spec, 1).zeros_like();
    Graph<double> g;
    std::mt19937_64 rng(2);
    const auto m = g.constant(random_matrix<double>(rng, 4, 6, -1.0, 1.0));
    const auto d = discriminator_forward(spec, ad::bind(g, p), m);
    CHECK(d.rows() == 4);
    CHECK(d.cols() == 1);
    for (Index i = 0; i < 4; ++i) {
        CHECK(d.value()(i, 0) == 0.5);
    }

    // Logit 0 by construction: the last layer's weights are zero.
    auto q = randomized(spec, rng);
    q.at("l1.weight").setZero();
    q.at("l1.bias").setZero();
    CHECK(evaluate(spec, q, m.value()).isConstant(0.5, 0.0));

    for (int trial = 0; trial < 20; ++trial) {
        const auto r = randomized(spec, rng);
        const Matrix<double> x = random_matrix<double>(rng, 5, 6, -2.0, 2.0);
        const auto out = evaluate(spec, r, x);
        CHECK(max_gap(out, ref_mlp(spec, r, x)) < 1e-5);
        CHECK((out.array() > 0.0).all());
        CHECK((out.array() < 1.0).all());
    }
}

TEST_CASE("conv network matches a loop reference")
{
    std::mt19937_64 rng(5);
    const auto spec = conv_spec({2, 4, 5}, 3, 1, 4, false);
    CHECK(output_dim(spec) == 4);
    const auto p = randomized(spec, rng);
    const Matrix<double> x = random_matrix<double>(rng, 2, 40, -1.0, 1.0);
    const auto out = evaluate(spec, p, x);

    const auto& w = p.at("l0.weight");
    const auto& b = p.at("l0.bias");
    const Index C = 2, H = 4, W = 5, O = 3;
    Rows flat(2);
    for (Index n = 0; n < 2; ++n) {
        // conv 3x3 pad 1, relu
        std::vector<double> act(static_cast<std::size_t>(H * W * O));
        for (Index y = 0; y < H; ++y) {
            for (Index xx = 0; xx < W; ++xx) {
                for (Index o = 0; o < O; ++o) {
                    double acc = b(0, o);
                    for (Index ky = 0; ky < 3; ++ky) {
                        for (Index kx = 0; kx < 3; ++kx) {
                            const Index iy = y + ky - 1;
                            const Index ix = xx + kx - 1;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
                                continue;
                            }
                            for (Index c = 0; c < C; ++c) {
                                acc += x(n, (c * H + iy) * W + ix) * w((ky * 3 + kx) * C + c, o);
                            }
                        }
                    }
                    act[static_cast<std::size_t>((y * W + xx) * O + o)] = std::max(acc, 0.0);
                }
            }
        }
        // 2x2 max pool -> 2x2 grid, pixel-major flatten
        for (Index y = 0; y < 2; ++y) {
            for (Index xx = 0; xx < 2; ++xx) {
                for (Index o = 0; o < O; ++o) {
                    double m = -1e300;
                    for (Index dy = 0; dy < 2; ++dy) {
                        for (Index dx = 0; dx < 2; ++dx) {
                            m = std::max(m, act[static_cast<std::size_t>(((2 * y + dy) * W + 2 * xx + dx) * O + o)]);
                        }
                    }
                    flat[static_cast<std::size_t>(n)].push_back(m);
                }
            }
        }
    }
    const auto expected = ref_linear(flat, p.at("l3.weight"), p.at("l3.bias"));
    CHECK(max_gap(out, expected) < 1e-12);
}

TEST_CASE("classify examples")
{
    Graph<double> g;
    const auto v = g.constant(Matrix<double>::Identity(2, 2));
    const auto p = classify(g.constant(row({1, 0})), v);
    CHECK(p.value()(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
    CHECK(p.value()(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-14));

    const auto u = classify(g.constant(row({1, 1, 1})), g.constant(Matrix<double>::Identity(3, 3)));
    for (Index l = 0; l < 3; ++l) {
        CHECK(u.value()(0, l) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }

    std::mt19937_64 rng(8);
    const Matrix<double> m = random_matrix<double>(rng, 1, 6, -1.0, 1.0);
    const auto vv = g.constant(random_matrix<double>(rng, 5, 6, -1.0, 1.0));
    const auto a = classify(g.constant(m), vv).value();
    const auto b = classify(g.constant(Matrix<double>(7.3 * m)), vv).value();
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(a.sum() == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(classify(g.constant(row({0, 0})), v), DegenerateVector);
    CHECK_THROWS_AS(classify(g.constant(row({1, 0})), g.constant(row({0, 0}))), DegenerateVector);
}

TEST_CASE("classify is invariant to row scaling of V")
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> pos(0.1, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        Graph<double> g;
        const Matrix<double> m = random_matrix<double>(rng, 3, 4, -1.0, 1.0);
        Matrix<double> v = random_matrix<double>(rng, 5, 4, -1.0, 1.0);
        const auto a = classify(g.constant(m), g.constant(v)).value();
        for (Index r = 0; r < v.rows(); ++r) {
            v.row(r) *= pos(rng);
        }
        const auto b = classify(g.constant(m), g.constant(v)).value();
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("pretraining separates two blobs")
{
    const auto data = episodes::synth_blobs({2, 100, 8, 0.3, 4});
    std::vector<Index> rows(static_cast<std::size_t>(data.size()));
    std::iota(rows.begin(), rows.end(), Index{0});
    const auto spec = mlp_spec(8, {16, 4}, Activation::relu, Activation::none);
    PretrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 200;
    const auto result = pretrain_teacher<float>(data, rows, spec, cfg);
    CHECK(result.train_accuracy >= 0.95);
    // The classification head is gone.
    CHECK(result.theta_t.size() == 4);
    CHECK_FALSE(result.theta_t.contains("l2.weight"));
    CHECK_NOTHROW(check_parameters(spec, result.theta_t));
}

TEST_CASE("pretraining preconditions")
{
    const auto data = episodes::synth_blobs({3, 10, 4, 0.1, 1});
    const auto spec = mlp_spec(4, {5}, Activation::none, Activation::none);
    CHECK_THROWS_WITH(pretrain_teacher<double>(data, {0, 1, 2}, spec, {}), doctest::Contains("at least 2 classes"));
    CHECK_THROWS_WITH(pretrain_teacher<double>(data, {}, spec, {}), doctest::Contains("empty"));
    const auto bn = mlp_spec(4, {5, 3}, Activation::relu, Activation::none, true);
    CHECK_THROWS_WITH(pretrain_teacher<double>(data, {0, 10}, bn, {}), doctest::Contains("batch norm"));
}

TEST_CASE("teacher parameters never receive gradients")
{
    std::mt19937_64 rng(3);
    const auto spec = mlp_spec(4, {5, 3}, Activation::relu, Activation::none);
    const auto theta_t = randomized(spec, rng);
    const auto theta_s = randomized(spec, rng);
    Graph<double> g;
    const auto x = g.constant(random_matrix<double>(rng, 2, 4, -1.0, 1.0));
    const auto s = ad::bind(g, theta_s);
    const auto loss = ad::sum(ad::mul(teacher_forward(spec, theta_t, x), student_forward(spec, s, x)));
    const auto grads = ad::grad(loss, s);
    CHECK(grads.size() == theta_s.size());
    for (std::size_t i = 0; i < grads.size(); ++i) {
        CHECK(grads.name(i) == theta_s[i].name);
    }
    CHECK_FALSE(teacher_forward(spec, theta_t, x).requires_grad());
}

TEST_CASE("teacher cache equals per-row forward")
{
    const auto data = episodes::synth_blobs({3, 4, 6, 0.1, 2});
    const auto spec = default_teacher_spec({6}, 5);
    const auto p = init_parameters<double>(spec, 9);
    const TeacherCache<double> cache(spec, p, data);
    CHECK(cache.dim() == 5);
    for (Index r = 0; r < data.size(); ++r) {
        const auto one = evaluate(spec, p, Matrix<double>(data.features().row(r)));
        CHECK((one - cache.rows(std::vector<Index>{r})).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK_THROWS(TeacherCache<double>(default_student_spec({6}, 5), p, data));
}

TEST_CASE("spec validation")
{
    CHECK_THROWS_AS(layer_shapes({{3}, {}}), InvalidArgument);
    CHECK_THROWS_AS(layer_shapes({{3}, {{LayerKind::conv, 2}}}), ShapeError);
    CHECK_THROWS_AS(layer_shapes({{1, 4, 4}, {{LayerKind::linear, 2}}}), ShapeError);
    CHECK_THROWS_AS(layer_shapes({{1, 4, 4}, {{LayerKind::conv, 2}}}), ShapeError);
    CHECK(output_dim(default_teacher_spec({3, 8, 8}, 7)) == 7);
    const auto spec = mlp_spec(3, {2}, Activation::none, Activation::none);
    auto p = init_parameters<double>(spec, 1);
    CHECK_NOTHROW(check_parameters(spec, p));
    p.at("l0.weight") = Matrix<double>::Zero(2, 2);
    CHECK_THROWS_AS(check_parameters(spec, p), ShapeError);
    Graph<double> g;
    CHECK_THROWS_AS(forward(spec, ad::bind(g, init_parameters<double>(spec, 1)), g.constant(row({1, 2}))), ShapeError);
}
