#include "cml/nn/network.hpp"

#include <cmath>
#include <random>

#include "cml/error.hpp"

namespace cml::nn {

std::string to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::linear: return "linear";
    case LayerKind::conv: return "conv";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::flatten: return "flatten";
    }
    return "?";
}

std::string to_string(Activation act)
{
    switch (act) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

LayerKind parse_layer_kind(const std::string& s)
{
    for (auto k : {LayerKind::linear, LayerKind::conv, LayerKind::max_pool, LayerKind::flatten}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw InvalidArgument("unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s)
{
    for (auto a : {Activation::none, Activation::relu, Activation::sigmoid}) {
        if (to_string(a) == s) {
            return a;
        }
    }
    throw InvalidArgument("unknown activation '" + s + "'");
}

namespace {

std::string shape_str(const std::vector<Index>& s)
{
    std::string out = "{";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += (i ? "," : "") + std::to_string(s[i]);
    }
    return out + "}";
}

std::string where(std::size_t i, const LayerSpec& l)
{
    return "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
}

} // namespace

std::vector<LayerShape> layer_shapes(const NetworkSpec& spec)
{
    if (spec.layers.empty()) {
        throw InvalidArgument("network has no layers");
    }
    if (spec.input_shape.size() != 1 && spec.input_shape.size() != 3) {
        throw ShapeError("network input shape must be {d} or {C,H,W}, got " + shape_str(spec.input_shape));
    }
    for (Index e : spec.input_shape) {
        if (e < 1) {
            throw ShapeError("network input shape " + shape_str(spec.input_shape) + " has a non-positive extent");
        }
    }
    std::vector<LayerShape> shapes;
    auto cur = spec.input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        LayerShape s;
        s.in = cur;
        switch (l.kind) {
        case LayerKind::linear:
            if (cur.size() != 1) {
                throw ShapeError(where(i, l) + ": needs flat input, got " + shape_str(cur));
            }
            if (l.out < 1) {
                throw InvalidArgument(where(i, l) + ": out must be >= 1");
            }
            s.fan_in = cur[0];
            s.fan_out = l.out;
            cur = {l.out};
            break;
        case LayerKind::conv: {
            if (cur.size() != 3) {
                throw ShapeError(where(i, l) + ": needs image input, got " + shape_str(cur));
            }
            if (l.out < 1 || l.kernel < 1 || l.pad < 0) {
                throw InvalidArgument(where(i, l) + ": bad out/kernel/pad");
            }
            const Index h = cur[1] + 2 * l.pad - l.kernel + 1;
            const Index w = cur[2] + 2 * l.pad - l.kernel + 1;
            if (h < 1 || w < 1) {
                throw ShapeError(where(i, l) + ": kernel larger than padded input " + shape_str(cur));
            }
            s.fan_in = cur[0] * l.kernel * l.kernel;
            s.fan_out = l.out * l.kernel * l.kernel;
            cur = {l.out, h, w};
            break;
        }
        case LayerKind::max_pool:
            if (cur.size() != 3 || cur[1] < 2 || cur[2] < 2) {
                throw ShapeError(where(i, l) + ": needs image input of at least 2x2, got " + shape_str(cur));
            }
            cur = {cur[0], cur[1] / 2, cur[2] / 2};
            break;
        case LayerKind::flatten:
            if (cur.size() != 3) {
                throw ShapeError(where(i, l) + ": needs image input, got " + shape_str(cur));
            }
            cur = {cur[0] * cur[1] * cur[2]};
            break;
        }
        if ((l.batch_norm || l.activation != Activation::none) &&
            (l.kind == LayerKind::max_pool || l.kind == LayerKind::flatten)) {
            throw InvalidArgument(where(i, l) + ": batch norm and activation apply to linear/conv only");
        }
        s.out = cur;
        shapes.push_back(std::move(s));
    }
    if (cur.size() != 1) {
        throw ShapeError("network output must be flat, got " + shape_str(cur));
    }
    return shapes;
}

Index input_dim(const NetworkSpec& spec)
{
    Index n = 1;
    for (Index e : spec.input_shape) {
        n *= e;
    }
    return n;
}

Index output_dim(const NetworkSpec& spec)
{
    return layer_shapes(spec).back().out[0];
}

bool uses_batch_norm(const NetworkSpec& spec)
{
    for (const auto& l : spec.layers) {
        if (l.batch_norm) {
            return true;
        }
    }
    return false;
}

NetworkSpec mlp_spec(Index input, const std::vector<Index>& widths, Activation hidden_act, Activation last_act, bool bn)
{
    NetworkSpec spec;
    spec.input_shape = {input};
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const bool last = i + 1 == widths.size();
        spec.layers.push_back(
            {LayerKind::linear, widths[i], 3, 1, bn && !last, last ? last_act : hidden_act});
    }
    return spec;
}

NetworkSpec conv_spec(const std::vector<Index>& image_shape, Index channels, Index modules, Index z, bool bn)
{
    NetworkSpec spec;
    spec.input_shape = image_shape;
    for (Index m = 0; m < modules; ++m) {
        spec.layers.push_back({LayerKind::conv, channels, 3, 1, bn, Activation::relu});
        spec.layers.push_back({LayerKind::max_pool});
    }
    spec.layers.push_back({LayerKind::flatten});
    spec.layers.push_back({LayerKind::linear, z});
    return spec;
}

namespace {

std::string pname(std::size_t i, const char* what)
{
    return "l" + std::to_string(i) + "." + what;
}

bool has_params(const LayerSpec& l)
{
    return l.kind == LayerKind::linear || l.kind == LayerKind::conv;
}

} // namespace

template <typename S>
ad::ParameterSet<S> init_parameters(const NetworkSpec& spec, std::uint64_t seed)
{
    const auto shapes = layer_shapes(spec);
    std::mt19937_64 rng(seed);
    ad::ParameterSet<S> params;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (!has_params(l)) {
            continue;
        }
        const auto& s = shapes[i];
        const Index rows = l.kind == LayerKind::linear ? s.fan_in : s.in[0] * l.kernel * l.kernel;
        const double bound = std::sqrt(6.0 / static_cast<double>(s.fan_in + s.fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix<S> w(rows, l.out);
        for (Index k = 0; k < w.size(); ++k) {
            w.data()[k] = static_cast<S>(dist(rng));
        }
        params.add(pname(i, "weight"), std::move(w));
        params.add(pname(i, "bias"), Matrix<S>::Zero(1, l.out));
        if (l.batch_norm) {
            params.add(pname(i, "gamma"), Matrix<S>::Ones(1, l.out));
            params.add(pname(i, "beta"), Matrix<S>::Zero(1, l.out));
        }
    }
    return params;
}

template <typename S>
void check_parameters(const NetworkSpec& spec, const ad::ParameterSet<S>& params)
{
    const auto reference = init_parameters<S>(spec, 0);
    if (reference.size() != params.size()) {
        throw ShapeError("parameter set has " + std::to_string(params.size()) + " tensors, network expects " +
                         std::to_string(reference.size()));
    }
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const auto& r = reference[i];
        const auto& p = params[i];
        if (r.name != p.name || r.value.rows() != p.value.rows() || r.value.cols() != p.value.cols()) {
            throw ShapeError("parameter " + std::to_string(i) + ": expected " + r.name + " " +
                             std::to_string(r.value.rows()) + "x" + std::to_string(r.value.cols()) + ", got " +
                             p.name + " " + std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()));
        }
    }
}

template <typename S>
ad::Var<S> forward(const NetworkSpec& spec, const ad::VarSet<S>& params, const ad::Var<S>& x)
{
    const auto shapes = layer_shapes(spec);
    if (x.cols() != input_dim(spec)) {
        throw ShapeError("network input: expected " + std::to_string(input_dim(spec)) + " features, got " +
                         std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    }
    const Index batch = x.rows();
    ad::Var<S> h = x;
    ad::ImageShape image;
    if (spec.input_shape.size() == 3) {
        image = {batch, spec.input_shape[1], spec.input_shape[2], spec.input_shape[0]};
        h = ad::to_spatial(h, image);
    }
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        switch (l.kind) {
        case LayerKind::linear: {
            const auto& b = params.at(pname(i, "bias"));
            h = ad::matmul(h, params.at(pname(i, "weight")));
            h = ad::add(h, ad::broadcast_to(b, h.rows(), h.cols()));
            break;
        }
        case LayerKind::conv:
            h = ad::conv2d(h, params.at(pname(i, "weight")), params.at(pname(i, "bias")), image, l.kernel, l.pad);
            break;
        case LayerKind::max_pool:
            h = ad::max_pool2x2(h, image);
            break;
        case LayerKind::flatten:
            h = ad::flatten_spatial(h, image);
            break;
        }
        if (l.batch_norm) {
            h = ad::batch_norm(h, params.at(pname(i, "gamma")), params.at(pname(i, "beta")));
        }
        if (l.activation == Activation::relu) {
            h = ad::relu(h);
        } else if (l.activation == Activation::sigmoid) {
            h = ad::sigmoid(h);
        }
    }
    return h;
}

template <typename S>
Matrix<S> evaluate(const NetworkSpec& spec, const ad::ParameterSet<S>& params, const Matrix<S>& x)
{
    ad::Graph<S> g(ad::Mode::first_order);
    const auto vars = ad::bind(g, params, false);
    return forward(spec, vars, g.constant(x)).value();
}

#define CML_INSTANTIATE_NETWORK(S)                                                                                 \
    template ad::ParameterSet<S> init_parameters<S>(const NetworkSpec&, std::uint64_t);                             \
    template void check_parameters<S>(const NetworkSpec&, const ad::ParameterSet<S>&);                              \
    template ad::Var<S> forward<S>(const NetworkSpec&, const ad::VarSet<S>&, const ad::Var<S>&);                    \
    template Matrix<S> evaluate<S>(const NetworkSpec&, const ad::ParameterSet<S>&, const Matrix<S>&);

CML_INSTANTIATE_NETWORK(float)
CML_INSTANTIATE_NETWORK(double)

} // namespace cml::nn
