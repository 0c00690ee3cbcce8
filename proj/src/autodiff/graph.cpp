#include "cml/autodiff/graph.hpp"

#include "cml/autodiff/ops.hpp"

namespace cml::ad {

template <typename Scalar>
Var<Scalar> Graph<Scalar>::constant(Matrix<Scalar> value)
{
    Node node;
    node.value = std::move(value);
    node.op = "constant";
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, static_cast<int>(nodes_.size() - 1), false);
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::constant(Index rows, Index cols, Scalar fill)
{
    return constant(Matrix<Scalar>::Constant(rows, cols, fill));
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::variable(Matrix<Scalar> value)
{
    Node node;
    node.value = std::move(value);
    node.op = "variable";
    node.requires_grad = true;
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, static_cast<int>(nodes_.size() - 1), false);
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::record(std::string_view op, Matrix<Scalar> value,
                                  std::initializer_list<Var<Scalar>> inputs, BackwardFn<Scalar> backward)
{
    Node node;
    node.value = std::move(value);
    node.op = op;
    int k = 0;
    for (const auto& in : inputs) {
        if (in.graph() != this) {
            throw Error("graph-mismatch", std::string(op) + ": input belongs to a different graph");
        }
        node.inputs[k] = in.id();
        if (in.requires_grad()) {
            node.linked[k] = true;
            node.requires_grad = true;
        }
        ++k;
    }
    if (node.requires_grad) {
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, static_cast<int>(nodes_.size() - 1), false);
}

template <typename Scalar>
std::vector<Var<Scalar>> grad(const Var<Scalar>& output, std::span<const Var<Scalar>> wrt, bool create_graph)
{
    if (!output.valid()) {
        throw Error("invalid-var", "grad: empty output");
    }
    Graph<Scalar>& g = *output.graph();
    if (output.value().size() != 1) {
        throw ShapeError("grad: output must be scalar, got " + std::to_string(output.rows()) + "x" +
                         std::to_string(output.cols()));
    }
    if (create_graph && g.mode() == Mode::first_order) {
        throw Error("first-order-graph", "grad: create_graph requested on a first-order graph");
    }

    const int out = output.id();
    std::vector<char> needed(static_cast<std::size_t>(out) + 1, 0);
    for (const auto& w : wrt) {
        if (w.graph() != &g) {
            throw Error("graph-mismatch", "grad: wrt variable belongs to a different graph");
        }
        if (w.id() <= out) {
            needed[static_cast<std::size_t>(w.id())] = 1;
        }
    }
    for (int i = 0; i <= out; ++i) {
        const auto& node = g.nodes_[static_cast<std::size_t>(i)];
        for (int k = 0; k < 2; ++k) {
            if (node.linked[k] && needed[static_cast<std::size_t>(node.inputs[k])]) {
                needed[static_cast<std::size_t>(i)] = 1;
            }
        }
    }

    std::vector<Var<Scalar>> grads(static_cast<std::size_t>(out) + 1);
    if (!output.detached()) {
        grads[static_cast<std::size_t>(out)] = g.constant(1, 1, Scalar(1));
    }
    for (int i = out; i >= 0; --i) {
        const auto ui = static_cast<std::size_t>(i);
        if (!needed[ui] || !grads[ui].valid()) {
            continue;
        }
        // Backward closures append to the deque; references to existing
        // nodes stay valid.
        const auto& node = g.nodes_[ui];
        if (!node.backward) {
            continue;
        }
        const BackwardContext<Scalar> ctx(g, i, grads[ui], create_graph);
        const auto input_grads = node.backward(ctx);
        for (std::size_t k = 0; k < 2; ++k) {
            if (!node.linked[k] || !input_grads[k].valid()) {
                continue;
            }
            const auto j = static_cast<std::size_t>(node.inputs[k]);
            if (!needed[j]) {
                continue;
            }
            grads[j] = grads[j].valid() ? add(grads[j], input_grads[k]) : input_grads[k];
        }
    }

    std::vector<Var<Scalar>> result;
    result.reserve(wrt.size());
    for (const auto& w : wrt) {
        const auto id = static_cast<std::size_t>(w.id());
        if (w.id() <= out && grads[id].valid()) {
            result.push_back(create_graph ? grads[id] : grads[id].detach());
        } else {
            result.push_back(g.constant(Matrix<Scalar>::Zero(w.rows(), w.cols())));
        }
    }
    return result;
}

template class Graph<float>;
template class Graph<double>;
template std::vector<Var<float>> grad(const Var<float>&, std::span<const Var<float>>, bool);
template std::vector<Var<double>> grad(const Var<double>&, std::span<const Var<double>>, bool);

} // namespace cml::ad
