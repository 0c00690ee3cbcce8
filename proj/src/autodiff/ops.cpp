#include "cml/autodiff/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace cml::ad {

namespace {

template <typename S>
using Grads = std::array<Var<S>, 2>;

template <typename S>
std::string shape_of(const Var<S>& v)
{
    return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
}

template <typename S>
Graph<S>& graph_of(const char* op, const Var<S>& a)
{
    if (!a.valid()) {
        throw Error("invalid-var", std::string(op) + ": empty input");
    }
    return *a.graph();
}

template <typename S>
Graph<S>& graph_of(const char* op, const Var<S>& a, const Var<S>& b)
{
    auto& g = graph_of(op, a);
    graph_of(op, b);
    if (a.graph() != b.graph()) {
        throw Error("graph-mismatch", std::string(op) + ": inputs belong to different graphs");
    }
    return g;
}

template <typename S>
void require_same_shape(const char* op, const Var<S>& a, const Var<S>& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": " + shape_of(a) + " vs " + shape_of(b));
    }
}

template <typename S>
void require_finite(const char* op, const Matrix<S>& v)
{
    if (!v.allFinite()) {
        throw Error("non-finite", std::string(op) + ": result is not finite");
    }
}

void require_axis(const char* op, int axis)
{
    if (axis != 0 && axis != 1) {
        throw InvalidArgument(std::string(op) + ": axis must be 0 or 1, got " + std::to_string(axis));
    }
}

IndexMap make_map(std::vector<Index> indices)
{
    return std::make_shared<const std::vector<Index>>(std::move(indices));
}

} // namespace

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b)
{
    auto& g = graph_of("add", a, b);
    require_same_shape("add", a, b);
    return g.record("add", a.value() + b.value(), {a, b}, [](const BackwardContext<S>& c) -> Grads<S> {
        return {c.grad(), c.grad()};
    });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b)
{
    auto& g = graph_of("sub", a, b);
    require_same_shape("sub", a, b);
    return g.record("sub", a.value() - b.value(), {a, b}, [](const BackwardContext<S>& c) -> Grads<S> {
        return {c.grad(), c.needs(1) ? scale(c.grad(), S(-1)) : Var<S>()};
    });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b)
{
    auto& g = graph_of("mul", a, b);
    require_same_shape("mul", a, b);
    return g.record("mul", a.value().cwiseProduct(b.value()), {a, b}, [](const BackwardContext<S>& c) -> Grads<S> {
        return {c.needs(0) ? mul(c.grad(), c.input(1)) : Var<S>(),
                c.needs(1) ? mul(c.grad(), c.input(0)) : Var<S>()};
    });
}

template <typename S>
Var<S> scale(const Var<S>& a, Id<S> factor)
{
    auto& g = graph_of("scale", a);
    return g.record("scale", a.value() * factor, {a}, [factor](const BackwardContext<S>& c) -> Grads<S> {
        return {scale(c.grad(), factor), Var<S>()};
    });
}

template <typename S>
Var<S> affine(const Var<S>& a, Id<S> alpha, Id<S> beta)
{
    auto& g = graph_of("affine", a);
    Matrix<S> v = (a.value().array() * alpha + beta).matrix();
    return g.record("affine", std::move(v), {a}, [alpha](const BackwardContext<S>& c) -> Grads<S> {
        return {scale(c.grad(), alpha), Var<S>()};
    });
}

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b)
{
    auto& g = graph_of("matmul", a, b);
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_of(a) + " * " + shape_of(b));
    }
    Matrix<S> v = a.value() * b.value();
    return g.record("matmul", std::move(v), {a, b}, [](const BackwardContext<S>& c) -> Grads<S> {
        return {c.needs(0) ? matmul(c.grad(), transpose(c.input(1))) : Var<S>(),
                c.needs(1) ? matmul(transpose(c.input(0)), c.grad()) : Var<S>()};
    });
}

template <typename S>
Var<S> transpose(const Var<S>& a)
{
    auto& g = graph_of("transpose", a);
    Matrix<S> v = a.value().transpose();
    return g.record("transpose", std::move(v), {a}, [](const BackwardContext<S>& c) -> Grads<S> {
        return {transpose(c.grad()), Var<S>()};
    });
}

template <typename S>
Var<S> relu(const Var<S>& a)
{
    auto& g = graph_of("relu", a);
    return g.record("relu", a.value().cwiseMax(S(0)), {a}, [](const BackwardContext<S>& c) -> Grads<S> {
        Matrix<S> mask = (c.input(0).value().array() > S(0)).template cast<S>().matrix();
        return {mul(c.grad(), c.graph().constant(std::move(mask))), Var<S>()};
    });
}

template <typename S>
Var<S> sigmoid(const Var<S>& a)
{
    auto& g = graph_of("sigmoid", a);
    // Evaluated through exp(-|x|) so neither branch overflows.
    Matrix<S> v = a.value().unaryExpr([](S x) {
        const S e = std::exp(-std::abs(x));
        return x >= S(0) ? S(1) / (S(1) + e) : e / (S(1) + e);
    });
    return g.record("sigmoid", std::move(v), {a}, [](const BackwardContext<S>& c) -> Grads<S> {
        const auto s = c.output();
        return {mul(c.grad(), mul(s, affine(s, S(-1), S(1)))), Var<S>()};
    });
}

template <typename S>
Var<S> log(const Var<S>& a)
{
    auto& g = graph_of("log", a);
    if ((a.value().array() <= S(0)).any()) {
        throw Error("domain-error", "log: non-positive entry in a " + shape_of(a) + " tensor");
    }
    Matrix<S> v = a.value().array().log().matrix();
    require_finite("log", v);
    return g.record("log", std::move(v), {a}, [](const BackwardContext<S>& c) -> Grads<S> {
        return {mul(c.grad(), pow(c.input(0), S(-1))), Var<S>()};
    });
}

template <typename S>
Var<S> exp(const Var<S>& a)
{
    auto& g = graph_of("exp", a);
    Matrix<S> v = a.value().array().exp().matrix();
    require_finite("exp", v);
    return g.record("exp", std::move(v), {a}, [](const BackwardContext<S>& c) -> Grads<S> {
        return {mul(c.grad(), c.output()), Var<S>()};
    });
}

template <typename S>
Var<S> pow(const Var<S>& a, Id<S> exponent)
{
    auto& g = graph_of("pow", a);
    Matrix<S> v = a.value().array().pow(exponent).matrix();
    require_finite("pow", v);
    return g.record("pow", std::move(v), {a}, [exponent](const BackwardContext<S>& c) -> Grads<S> {
        if (exponent == S(0)) {
            return {scale(c.grad(), S(0)), Var<S>()};
        }
        if (exponent == S(1)) {
            return {c.grad(), Var<S>()};
        }
        return {mul(c.grad(), scale(pow(c.input(0), exponent - S(1)), exponent)), Var<S>()};
    });
}

template <typename S>
Var<S> clamp_min(const Var<S>& a, Id<S> floor)
{
    auto& g = graph_of("clamp_min", a);
    return g.record("clamp_min", a.value().cwiseMax(floor), {a}, [floor](const BackwardContext<S>& c) -> Grads<S> {
        Matrix<S> mask = (c.input(0).value().array() >= floor).template cast<S>().matrix();
        return {mul(c.grad(), c.graph().constant(std::move(mask))), Var<S>()};
    });
}

template <typename S>
Var<S> broadcast_to(const Var<S>& a, Index rows, Index cols)
{
    auto& g = graph_of("broadcast_to", a);
    const Index r = a.rows();
    const Index k = a.cols();
    if ((r != 1 && r != rows) || (k != 1 && k != cols)) {
        throw ShapeError("broadcast_to: " + shape_of(a) + " -> " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (r == rows && k == cols) {
        return a;
    }
    Matrix<S> v = a.value().replicate(rows / r, cols / k);
    return g.record("broadcast_to", std::move(v), {a}, [r, k](const BackwardContext<S>& c) -> Grads<S> {
        return {sum_to(c.grad(), r, k), Var<S>()};
    });
}

template <typename S>
Var<S> sum_to(const Var<S>& a, Index rows, Index cols)
{
    auto& g = graph_of("sum_to", a);
    const Index r = a.rows();
    const Index k = a.cols();
    if ((rows != 1 && rows != r) || (cols != 1 && cols != k)) {
        throw ShapeError("sum_to: " + shape_of(a) + " -> " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (r == rows && k == cols) {
        return a;
    }
    Matrix<S> v;
    if (rows == 1 && cols == 1) {
        v = Matrix<S>::Constant(1, 1, a.value().sum());
    } else if (rows == 1) {
        v = a.value().colwise().sum();
    } else {
        v = a.value().rowwise().sum();
    }
    return g.record("sum_to", std::move(v), {a}, [r, k](const BackwardContext<S>& c) -> Grads<S> {
        return {broadcast_to(c.grad(), r, k), Var<S>()};
    });
}

template <typename S>
Var<S> sum(const Var<S>& a)
{
    graph_of("sum", a);
    if (a.rows() == 1 && a.cols() == 1) {
        return scale(a, S(1));
    }
    return sum_to(a, 1, 1);
}

template <typename S>
Var<S> sum(const Var<S>& a, int axis)
{
    graph_of("sum", a);
    require_axis("sum", axis);
    return axis == 0 ? sum_to(a, 1, a.cols()) : sum_to(a, a.rows(), 1);
}

template <typename S>
Var<S> mean(const Var<S>& a)
{
    graph_of("mean", a);
    if (a.value().size() == 0) {
        throw ShapeError("mean: empty tensor");
    }
    return scale(sum(a), S(1) / static_cast<S>(a.value().size()));
}

template <typename S>
Var<S> mean(const Var<S>& a, int axis)
{
    graph_of("mean", a);
    require_axis("mean", axis);
    const Index n = axis == 0 ? a.rows() : a.cols();
    if (n == 0) {
        throw ShapeError("mean: empty axis");
    }
    return scale(sum(a, axis), S(1) / static_cast<S>(n));
}

template <typename S>
Var<S> block(const Var<S>& a, Index row, Index col, Index rows, Index cols)
{
    auto& g = graph_of("block", a);
    if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() || col + cols > a.cols()) {
        throw ShapeError("block: (" + std::to_string(row) + "," + std::to_string(col) + ")+" + std::to_string(rows) +
                         "x" + std::to_string(cols) + " out of " + shape_of(a));
    }
    Matrix<S> v = a.value().block(row, col, rows, cols);
    const Index full_rows = a.rows();
    const Index full_cols = a.cols();
    return g.record("block", std::move(v), {a}, [=](const BackwardContext<S>& c) -> Grads<S> {
        return {embed(c.grad(), row, col, full_rows, full_cols), Var<S>()};
    });
}

template <typename S>
Var<S> embed(const Var<S>& a, Index row, Index col, Index rows, Index cols)
{
    auto& g = graph_of("embed", a);
    if (row < 0 || col < 0 || row + a.rows() > rows || col + a.cols() > cols) {
        throw ShapeError("embed: " + shape_of(a) + " at (" + std::to_string(row) + "," + std::to_string(col) +
                         ") into " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix<S> v = Matrix<S>::Zero(rows, cols);
    v.block(row, col, a.rows(), a.cols()) = a.value();
    const Index r = a.rows();
    const Index k = a.cols();
    return g.record("embed", std::move(v), {a}, [=](const BackwardContext<S>& c) -> Grads<S> {
        return {block(c.grad(), row, col, r, k), Var<S>()};
    });
}

template <typename S>
Var<S> concat(const Var<S>& a, const Var<S>& b, int axis)
{
    auto& g = graph_of("concat", a, b);
    require_axis("concat", axis);
    Matrix<S> v;
    if (axis == 0) {
        if (a.cols() != b.cols()) {
            throw ShapeError("concat(axis=0): " + shape_of(a) + " vs " + shape_of(b));
        }
        v.resize(a.rows() + b.rows(), a.cols());
        v << a.value(), b.value();
    } else {
        if (a.rows() != b.rows()) {
            throw ShapeError("concat(axis=1): " + shape_of(a) + " vs " + shape_of(b));
        }
        v.resize(a.rows(), a.cols() + b.cols());
        v << a.value(), b.value();
    }
    const Index ar = a.rows();
    const Index ac = a.cols();
    const Index br = b.rows();
    const Index bc = b.cols();
    return g.record("concat", std::move(v), {a, b}, [=](const BackwardContext<S>& c) -> Grads<S> {
        if (axis == 0) {
            return {c.needs(0) ? block(c.grad(), 0, 0, ar, ac) : Var<S>(),
                    c.needs(1) ? block(c.grad(), ar, 0, br, bc) : Var<S>()};
        }
        return {c.needs(0) ? block(c.grad(), 0, 0, ar, ac) : Var<S>(),
                c.needs(1) ? block(c.grad(), 0, ac, br, bc) : Var<S>()};
    });
}

template <typename S>
Var<S> gather(const Var<S>& a, IndexMap map, Index rows, Index cols)
{
    auto& g = graph_of("gather", a);
    if (!map || static_cast<Index>(map->size()) != rows * cols) {
        throw ShapeError("gather: map size does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    const Index n = a.value().size();
    Matrix<S> v(rows, cols);
    const S* src = a.value().data();
    S* dst = v.data();
    for (std::size_t k = 0; k < map->size(); ++k) {
        const Index idx = (*map)[k];
        if (idx >= n) {
            throw ShapeError("gather: index " + std::to_string(idx) + " out of " + shape_of(a));
        }
        dst[k] = idx >= 0 ? src[idx] : S(0);
    }
    const Index r = a.rows();
    const Index k = a.cols();
    return g.record("gather", std::move(v), {a}, [map, r, k](const BackwardContext<S>& c) -> Grads<S> {
        return {scatter_add(c.grad(), map, r, k), Var<S>()};
    });
}

template <typename S>
Var<S> scatter_add(const Var<S>& a, IndexMap map, Index rows, Index cols)
{
    auto& g = graph_of("scatter_add", a);
    if (!map || static_cast<Index>(map->size()) != a.value().size()) {
        throw ShapeError("scatter_add: map size does not match " + shape_of(a));
    }
    Matrix<S> v = Matrix<S>::Zero(rows, cols);
    const S* src = a.value().data();
    S* dst = v.data();
    for (std::size_t k = 0; k < map->size(); ++k) {
        const Index idx = (*map)[k];
        if (idx >= rows * cols) {
            throw ShapeError("scatter_add: index " + std::to_string(idx) + " out of range");
        }
        if (idx >= 0) {
            dst[idx] += src[k];
        }
    }
    const Index r = a.rows();
    const Index k = a.cols();
    return g.record("scatter_add", std::move(v), {a}, [map, r, k](const BackwardContext<S>& c) -> Grads<S> {
        return {gather(c.grad(), map, r, k), Var<S>()};
    });
}

template <typename S>
Var<S> select_rows(const Var<S>& a, const std::vector<Index>& rows)
{
    graph_of("select_rows", a);
    const Index cols = a.cols();
    std::vector<Index> map;
    map.reserve(rows.size() * static_cast<std::size_t>(cols));
    for (Index r : rows) {
        if (r < 0 || r >= a.rows()) {
            throw ShapeError("select_rows: row " + std::to_string(r) + " out of " + shape_of(a));
        }
        for (Index j = 0; j < cols; ++j) {
            map.push_back(r * cols + j);
        }
    }
    return gather(a, make_map(std::move(map)), static_cast<Index>(rows.size()), cols);
}

template <typename S>
Var<S> softmax(const Var<S>& a)
{
    auto& g = graph_of("softmax", a);
    Matrix<S> v = a.value();
    for (Index i = 0; i < v.rows(); ++i) {
        v.row(i).array() -= v.row(i).maxCoeff();
        v.row(i) = v.row(i).array().exp().matrix();
        v.row(i) /= v.row(i).sum();
    }
    return g.record("softmax", std::move(v), {a}, [](const BackwardContext<S>& c) -> Grads<S> {
        const auto s = c.output();
        const Index rows = s.rows();
        const Index cols = s.cols();
        const auto inner = sum_to(mul(c.grad(), s), rows, 1);
        return {mul(s, sub(c.grad(), broadcast_to(inner, rows, cols))), Var<S>()};
    });
}

template <typename S>
Var<S> l2_norm(const Var<S>& a, int axis)
{
    return pow(sum(mul(a, a), axis), S(0.5));
}

template <typename S>
Var<S> cosine_similarity(const Var<S>& a, const Var<S>& b)
{
    graph_of("cosine_similarity", a, b);
    if (a.cols() != b.cols()) {
        throw ShapeError("cosine_similarity: " + shape_of(a) + " vs " + shape_of(b));
    }
    const auto check = [](const Var<S>& m, const char* which) {
        for (Index i = 0; i < m.rows(); ++i) {
            if (!(m.value().row(i).squaredNorm() > S(0))) {
                throw DegenerateVector(std::string("cosine_similarity: row ") + std::to_string(i) + " of " + which +
                                       " has zero norm");
            }
        }
    };
    check(a, "lhs");
    check(b, "rhs");
    const auto unit = [](const Var<S>& m) {
        const auto inv = pow(sum(mul(m, m), 1), S(-0.5));
        return mul(m, broadcast_to(inv, m.rows(), m.cols()));
    };
    return matmul(unit(a), transpose(unit(b)));
}

template <typename S>
Var<S> squared_distance(const Var<S>& a, const Var<S>& b)
{
    graph_of("squared_distance", a, b);
    if (a.cols() != b.cols()) {
        throw ShapeError("squared_distance: " + shape_of(a) + " vs " + shape_of(b));
    }
    const Index m = a.rows();
    const Index n = b.rows();
    const auto aa = broadcast_to(sum(mul(a, a), 1), m, n);
    const auto bb = broadcast_to(transpose(sum(mul(b, b), 1)), m, n);
    const auto ab = matmul(a, transpose(b));
    return sub(add(aa, bb), scale(ab, S(2)));
}

template <typename S>
Var<S> batch_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, Id<S> eps)
{
    graph_of("batch_norm", x, gamma);
    graph_of("batch_norm", x, beta);
    const Index rows = x.rows();
    const Index cols = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != cols || beta.rows() != 1 || beta.cols() != cols) {
        throw ShapeError("batch_norm: x " + shape_of(x) + ", gamma " + shape_of(gamma) + ", beta " + shape_of(beta));
    }
    // Statistics per column over the batch, or across features for a
    // single-row batch.
    const int axis = rows >= 2 ? 0 : 1;
    const auto mu = broadcast_to(mean(x, axis), rows, cols);
    const auto centered = sub(x, mu);
    const auto var = mean(mul(centered, centered), axis);
    const auto inv_std = broadcast_to(pow(affine(var, S(1), eps), S(-0.5)), rows, cols);
    const auto normalized = mul(centered, inv_std);
    return add(mul(normalized, broadcast_to(gamma, rows, cols)), broadcast_to(beta, rows, cols));
}

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const Var<S>& bias, ImageShape& shape, Index kernel, Index pad)
{
    graph_of("conv2d", x, weight);
    graph_of("conv2d", x, bias);
    const Index b = shape.batch;
    const Index h = shape.height;
    const Index w = shape.width;
    const Index ch = shape.channels;
    if (x.rows() != b * h * w || x.cols() != ch) {
        throw ShapeError("conv2d: input " + shape_of(x) + " does not match image geometry");
    }
    if (kernel < 1 || pad < 0) {
        throw InvalidArgument("conv2d: kernel must be >= 1 and pad >= 0");
    }
    const Index ho = h + 2 * pad - kernel + 1;
    const Index wo = w + 2 * pad - kernel + 1;
    if (ho < 1 || wo < 1) {
        throw ShapeError("conv2d: kernel larger than padded input");
    }
    const Index patch = ch * kernel * kernel;
    if (weight.rows() != patch || bias.rows() != 1 || bias.cols() != weight.cols()) {
        throw ShapeError("conv2d: weight " + shape_of(weight) + ", bias " + shape_of(bias) + " for patch size " +
                         std::to_string(patch));
    }
    std::vector<Index> map;
    map.reserve(static_cast<std::size_t>(b * ho * wo * patch));
    for (Index n = 0; n < b; ++n) {
        for (Index oy = 0; oy < ho; ++oy) {
            for (Index ox = 0; ox < wo; ++ox) {
                for (Index ky = 0; ky < kernel; ++ky) {
                    for (Index kx = 0; kx < kernel; ++kx) {
                        const Index iy = oy + ky - pad;
                        const Index ix = ox + kx - pad;
                        const bool inside = iy >= 0 && iy < h && ix >= 0 && ix < w;
                        for (Index c = 0; c < ch; ++c) {
                            map.push_back(inside ? ((n * h + iy) * w + ix) * ch + c : Index(-1));
                        }
                    }
                }
            }
        }
    }
    const auto columns = gather(x, make_map(std::move(map)), b * ho * wo, patch);
    const auto out = matmul(columns, weight);
    shape.height = ho;
    shape.width = wo;
    shape.channels = weight.cols();
    return add(out, broadcast_to(bias, out.rows(), out.cols()));
}

template <typename S>
Var<S> max_pool2x2(const Var<S>& x, ImageShape& shape)
{
    graph_of("max_pool2x2", x);
    const Index b = shape.batch;
    const Index h = shape.height;
    const Index w = shape.width;
    const Index ch = shape.channels;
    if (x.rows() != b * h * w || x.cols() != ch) {
        throw ShapeError("max_pool2x2: input does not match image geometry");
    }
    const Index ho = h / 2;
    const Index wo = w / 2;
    if (ho < 1 || wo < 1) {
        throw ShapeError("max_pool2x2: input smaller than 2x2");
    }
    const S* data = x.value().data();
    std::vector<Index> map;
    map.reserve(static_cast<std::size_t>(b * ho * wo * ch));
    for (Index n = 0; n < b; ++n) {
        for (Index oy = 0; oy < ho; ++oy) {
            for (Index ox = 0; ox < wo; ++ox) {
                for (Index c = 0; c < ch; ++c) {
                    Index best = ((n * h + 2 * oy) * w + 2 * ox) * ch + c;
                    for (Index dy = 0; dy < 2; ++dy) {
                        for (Index dx = 0; dx < 2; ++dx) {
                            const Index idx = ((n * h + 2 * oy + dy) * w + 2 * ox + dx) * ch + c;
                            if (data[idx] > data[best]) {
                                best = idx;
                            }
                        }
                    }
                    map.push_back(best);
                }
            }
        }
    }
    shape.height = ho;
    shape.width = wo;
    return gather(x, make_map(std::move(map)), b * ho * wo, ch);
}

template <typename S>
Var<S> to_spatial(const Var<S>& x, const ImageShape& shape)
{
    graph_of("to_spatial", x);
    const Index b = shape.batch;
    const Index h = shape.height;
    const Index w = shape.width;
    const Index ch = shape.channels;
    if (x.rows() != b || x.cols() != ch * h * w) {
        throw ShapeError("to_spatial: " + shape_of(x) + " does not match image geometry");
    }
    std::vector<Index> map;
    map.reserve(static_cast<std::size_t>(b * h * w * ch));
    for (Index n = 0; n < b; ++n) {
        for (Index y = 0; y < h; ++y) {
            for (Index xx = 0; xx < w; ++xx) {
                for (Index c = 0; c < ch; ++c) {
                    map.push_back(n * ch * h * w + (c * h + y) * w + xx);
                }
            }
        }
    }
    return gather(x, make_map(std::move(map)), b * h * w, ch);
}

template <typename S>
Var<S> flatten_spatial(const Var<S>& x, const ImageShape& shape)
{
    graph_of("flatten_spatial", x);
    const Index b = shape.batch;
    const Index n = x.value().size();
    if (x.rows() != b * shape.height * shape.width || x.cols() != shape.channels) {
        throw ShapeError("flatten_spatial: input does not match image geometry");
    }
    // Row-major storage of the spatial matrix is already the flattened order.
    std::vector<Index> map(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) {
        map[static_cast<std::size_t>(k)] = k;
    }
    return gather(x, make_map(std::move(map)), b, n / b);
}

#define CML_INSTANTIATE_OPS(S)                                                                                        \
    template Var<S> add(const Var<S>&, const Var<S>&);                                                                \
    template Var<S> sub(const Var<S>&, const Var<S>&);                                                                \
    template Var<S> mul(const Var<S>&, const Var<S>&);                                                                \
    template Var<S> scale(const Var<S>&, Id<S>);                                                                      \
    template Var<S> affine(const Var<S>&, Id<S>, Id<S>);                                                              \
    template Var<S> matmul(const Var<S>&, const Var<S>&);                                                             \
    template Var<S> transpose(const Var<S>&);                                                                         \
    template Var<S> relu(const Var<S>&);                                                                              \
    template Var<S> sigmoid(const Var<S>&);                                                                           \
    template Var<S> log(const Var<S>&);                                                                               \
    template Var<S> exp(const Var<S>&);                                                                               \
    template Var<S> pow(const Var<S>&, Id<S>);                                                                        \
    template Var<S> clamp_min(const Var<S>&, Id<S>);                                                                  \
    template Var<S> sum(const Var<S>&);                                                                               \
    template Var<S> sum(const Var<S>&, int);                                                                          \
    template Var<S> mean(const Var<S>&);                                                                              \
    template Var<S> mean(const Var<S>&, int);                                                                         \
    template Var<S> broadcast_to(const Var<S>&, Index, Index);                                                        \
    template Var<S> sum_to(const Var<S>&, Index, Index);                                                              \
    template Var<S> block(const Var<S>&, Index, Index, Index, Index);                                                 \
    template Var<S> embed(const Var<S>&, Index, Index, Index, Index);                                                 \
    template Var<S> concat(const Var<S>&, const Var<S>&, int);                                                        \
    template Var<S> gather(const Var<S>&, IndexMap, Index, Index);                                                    \
    template Var<S> scatter_add(const Var<S>&, IndexMap, Index, Index);                                               \
    template Var<S> select_rows(const Var<S>&, const std::vector<Index>&);                                            \
    template Var<S> softmax(const Var<S>&);                                                                           \
    template Var<S> l2_norm(const Var<S>&, int);                                                                      \
    template Var<S> cosine_similarity(const Var<S>&, const Var<S>&);                                                  \
    template Var<S> squared_distance(const Var<S>&, const Var<S>&);                                                   \
    template Var<S> batch_norm(const Var<S>&, const Var<S>&, const Var<S>&, Id<S>);                                   \
    template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, ImageShape&, Index, Index);                   \
    template Var<S> max_pool2x2(const Var<S>&, ImageShape&);                                                          \
    template Var<S> to_spatial(const Var<S>&, const ImageShape&);                                                     \
    template Var<S> flatten_spatial(const Var<S>&, const ImageShape&);

CML_INSTANTIATE_OPS(float)
CML_INSTANTIATE_OPS(double)

#undef CML_INSTANTIATE_OPS

} // namespace cml::ad
