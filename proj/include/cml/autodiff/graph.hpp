#pragma once

#include <Eigen/Dense>

#include <array>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cml/error.hpp"

namespace cml::ad {

/// Dense row-major tensor. Every value in a graph is a matrix; scalars are
/// 1x1, vectors are 1xN rows, and batches are one example per row.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

/// In first-order graphs `grad(..., create_graph=true)` is rejected, so inner
/// gradients are always constants.
enum class Mode { first_order, second_order };

template <typename Scalar>
class Graph;

template <typename Scalar>
class BackwardContext;

/// Handle to a node in a Graph. A detached handle refers to the same value
/// but is treated as a constant by every op it is passed to.
template <typename Scalar>
class Var {
public:
    Var() = default;

    Graph<Scalar>* graph() const { return graph_; }
    int id() const { return id_; }
    bool valid() const { return graph_ != nullptr && id_ >= 0; }
    bool detached() const { return detached_; }

    const Matrix<Scalar>& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    Scalar item() const;

    bool requires_grad() const;
    Var detach() const { return Var(graph_, id_, true); }

private:
    friend class Graph<Scalar>;
    friend class BackwardContext<Scalar>;
    template <typename S>
    friend std::vector<Var<S>> grad(const Var<S>&, std::span<const Var<S>>, bool);
    Var(Graph<Scalar>* graph, int id, bool detached)
      : graph_(graph), id_(id), detached_(detached)
    { }

    Graph<Scalar>* graph_ = nullptr;
    int id_ = -1;
    bool detached_ = false;
};

template <typename Scalar>
using BackwardFn = std::function<std::array<Var<Scalar>, 2>(const BackwardContext<Scalar>&)>;

/// Append-only computation graph. Node inputs always precede the node.
/// Vars keep a pointer to their graph, so graphs are neither copyable nor
/// movable.
template <typename Scalar>
class Graph {
public:
    explicit Graph(Mode mode = Mode::second_order) : mode_(mode) { }
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Mode mode() const { return mode_; }
    std::size_t size() const { return nodes_.size(); }

    Var<Scalar> constant(Matrix<Scalar> value);
    Var<Scalar> constant(Index rows, Index cols, Scalar fill);
    /// A differentiable input (parameter or leaf).
    Var<Scalar> variable(Matrix<Scalar> value);

    const Matrix<Scalar>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
    std::string_view op(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }

    /// Appends an op node. Inputs that do not require grad are not linked,
    /// and no backward closure is stored when no input requires grad.
    Var<Scalar> record(std::string_view op, Matrix<Scalar> value,
                       std::initializer_list<Var<Scalar>> inputs, BackwardFn<Scalar> backward);

private:
    struct Node {
        Matrix<Scalar> value;
        std::array<int, 2> inputs{-1, -1};
        // Inputs that required grad when the node was recorded.
        std::array<bool, 2> linked{false, false};
        bool requires_grad = false;
        std::string_view op;
        BackwardFn<Scalar> backward;
    };

    friend class BackwardContext<Scalar>;
    template <typename S>
    friend std::vector<Var<S>> grad(const Var<S>&, std::span<const Var<S>>, bool);

    std::deque<Node> nodes_;
    Mode mode_;
};

/// What an op's backward closure sees: the upstream gradient and accessors
/// for its inputs and output. When `create_graph()` is false the accessors
/// return detached handles, so every node built from them is a constant.
template <typename Scalar>
class BackwardContext {
public:
    BackwardContext(Graph<Scalar>& graph, int node, Var<Scalar> grad, bool create_graph)
      : graph_(graph), node_(node), grad_(grad), create_graph_(create_graph)
    { }

    Graph<Scalar>& graph() const { return graph_; }
    const Var<Scalar>& grad() const { return grad_; }
    bool create_graph() const { return create_graph_; }
    /// True when input `k` is linked and needs a gradient.
    bool needs(int k) const { return graph_.nodes_[node_].linked[k]; }
    Var<Scalar> input(int k) const
    {
        const auto& node = graph_.nodes_[node_];
        return Var<Scalar>(&graph_, node.inputs[k], !create_graph_ || !node.linked[k]);
    }
    Var<Scalar> output() const { return Var<Scalar>(&graph_, node_, !create_graph_); }

private:
    Graph<Scalar>& graph_;
    int node_;
    Var<Scalar> grad_;
    bool create_graph_;
};

/// Reverse-mode gradient of a scalar `output` with respect to each of `wrt`.
/// Entries of `wrt` that do not influence `output` receive zeros. With
/// `create_graph` the returned gradients are themselves differentiable.
template <typename Scalar>
std::vector<Var<Scalar>> grad(const Var<Scalar>& output, std::span<const Var<Scalar>> wrt,
                              bool create_graph = false);

template <typename Scalar>
const Matrix<Scalar>& Var<Scalar>::value() const
{
    if (!valid()) {
        throw Error("invalid-var", "access through an empty Var");
    }
    return graph_->value(id_);
}

template <typename Scalar>
Scalar Var<Scalar>::item() const
{
    const auto& v = value();
    if (v.size() != 1) {
        throw ShapeError("item() on a " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + " tensor");
    }
    return v(0, 0);
}

template <typename Scalar>
bool Var<Scalar>::requires_grad() const
{
    return valid() && !detached_ && graph_->requires_grad(id_);
}

} // namespace cml::ad
