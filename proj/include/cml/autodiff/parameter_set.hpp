#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cml/autodiff/graph.hpp"
#include "cml/autodiff/ops.hpp"

namespace cml::ad {

/// Named trainable tensors of one network, in definition order.
template <typename Scalar>
class ParameterSet {
public:
    struct Entry {
        std::string name;
        Matrix<Scalar> value;
    };

    void add(std::string name, Matrix<Scalar> value)
    {
        if (contains(name)) {
            throw InvalidArgument("parameter '" + name + "' defined twice");
        }
        entries_.push_back({std::move(name), std::move(value)});
    }

    bool contains(const std::string& name) const { return find(name) != entries_.end(); }

    const Matrix<Scalar>& at(const std::string& name) const
    {
        auto it = find(name);
        if (it == entries_.end()) {
            throw InvalidArgument("unknown parameter '" + name + "'");
        }
        return it->value;
    }

    Matrix<Scalar>& at(const std::string& name)
    {
        return const_cast<Matrix<Scalar>&>(std::as_const(*this).at(name));
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }
    Entry& operator[](std::size_t i) { return entries_[i]; }

    /// Total number of scalar entries.
    Index scalar_count() const
    {
        Index n = 0;
        for (const auto& e : entries_) {
            n += e.value.size();
        }
        return n;
    }

    template <typename Other>
    ParameterSet<Other> cast() const
    {
        ParameterSet<Other> out;
        for (const auto& e : entries_) {
            out.add(e.name, e.value.template cast<Other>());
        }
        return out;
    }

    /// Same names and shapes, all zeros.
    ParameterSet zeros_like() const
    {
        ParameterSet out;
        for (const auto& e : entries_) {
            out.add(e.name, Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
        }
        return out;
    }

    friend bool operator==(const ParameterSet& a, const ParameterSet& b)
    {
        if (a.size() != b.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i].name != b[i].name || a[i].value.rows() != b[i].value.rows() ||
                a[i].value.cols() != b[i].value.cols() || a[i].value != b[i].value) {
                return false;
            }
        }
        return true;
    }

private:
    auto find(const std::string& name) const
    {
        return std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
    }

    std::vector<Entry> entries_;
};

/// Parameters bound into a graph, aligned with the ParameterSet they came from.
template <typename Scalar>
class VarSet {
public:
    void add(std::string name, Var<Scalar> var) { entries_.emplace_back(std::move(name), var); }

    const Var<Scalar>& at(const std::string& name) const
    {
        for (const auto& [n, v] : entries_) {
            if (n == name) {
                return v;
            }
        }
        throw InvalidArgument("unknown parameter '" + name + "'");
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::string& name(std::size_t i) const { return entries_[i].first; }
    const Var<Scalar>& operator[](std::size_t i) const { return entries_[i].second; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    std::vector<Var<Scalar>> vars() const
    {
        std::vector<Var<Scalar>> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) {
            out.push_back(e.second);
        }
        return out;
    }

    VarSet detach() const
    {
        VarSet out;
        for (const auto& [n, v] : entries_) {
            out.add(n, v.detach());
        }
        return out;
    }

private:
    std::vector<std::pair<std::string, Var<Scalar>>> entries_;
};

/// Copies parameter values into `graph`, as variables or as constants.
template <typename Scalar>
VarSet<Scalar> bind(Graph<Scalar>& graph, const ParameterSet<Scalar>& params, bool trainable = true)
{
    VarSet<Scalar> out;
    for (const auto& e : params) {
        out.add(e.name, trainable ? graph.variable(e.value) : graph.constant(e.value));
    }
    return out;
}

template <typename Scalar>
ParameterSet<Scalar> values(const VarSet<Scalar>& vars)
{
    ParameterSet<Scalar> out;
    for (const auto& [n, v] : vars) {
        out.add(n, v.value());
    }
    return out;
}

/// Gradients of `output` keyed like `wrt`.
template <typename Scalar>
VarSet<Scalar> grad(const Var<Scalar>& output, const VarSet<Scalar>& wrt, bool create_graph = false)
{
    const auto vars = wrt.vars();
    const auto grads = grad(output, std::span<const Var<Scalar>>(vars), create_graph);
    VarSet<Scalar> out;
    for (std::size_t i = 0; i < wrt.size(); ++i) {
        out.add(wrt.name(i), grads[i]);
    }
    return out;
}

/// params - step * grads, recorded in the graph.
template <typename Scalar>
VarSet<Scalar> sgd_step(const VarSet<Scalar>& params, const VarSet<Scalar>& grads, Id<Scalar> step)
{
    VarSet<Scalar> out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        out.add(params.name(i), step == Scalar(0) ? params[i] : sub(params[i], scale(grads[i], step)));
    }
    return out;
}

/// In-place value update: params -= step * grads.
template <typename Scalar>
void apply_step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads, Scalar step)
{
    if (step == Scalar(0)) {
        return;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].value -= step * grads[i].value;
    }
}

/// a += b, entrywise over matching parameter sets.
template <typename Scalar>
void accumulate(ParameterSet<Scalar>& a, const ParameterSet<Scalar>& b)
{
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i].value += b[i].value;
    }
}

} // namespace cml::ad
