#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cml/autodiff/ops.hpp"
#include "cml/autodiff/parameter_set.hpp"

namespace cml::nn {

using ad::Index;
using ad::Matrix;

enum class LayerKind { linear, conv, max_pool, flatten };
enum class Activation { none, relu, sigmoid };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind parse_layer_kind(const std::string& s);
Activation parse_activation(const std::string& s);

/// One layer. Fan-in is implied by the previous layer's output shape.
/// linear/conv: affine map, then optional batch norm, then the activation.
struct LayerSpec {
    LayerKind kind = LayerKind::linear;
    Index out = 0;    // units (linear) or output channels (conv)
    Index kernel = 3; // conv only
    Index pad = 1;    // conv only
    bool batch_norm = false;
    Activation activation = Activation::none;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// `input_shape` is {d} for feature vectors or {C, H, W} for images.
struct NetworkSpec {
    std::vector<Index> input_shape;
    std::vector<LayerSpec> layers;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Shape after each layer: {d} when flat, {C, H, W} when spatial.
struct LayerShape {
    std::vector<Index> in;
    std::vector<Index> out;
    Index fan_in = 0;
    Index fan_out = 0;
};

/// Propagates shapes; throws ShapeError/InvalidArgument on a bad stack
/// (linear on images without flatten, conv on flat input, empty net, ...).
std::vector<LayerShape> layer_shapes(const NetworkSpec& spec);

Index input_dim(const NetworkSpec& spec);
/// Width of the final (flat) output.
Index output_dim(const NetworkSpec& spec);
bool uses_batch_norm(const NetworkSpec& spec);

/// Plain MLP: hidden layers use `hidden_act` (+ batch norm when `bn`), the
/// last layer has `last_act` and no batch norm.
NetworkSpec mlp_spec(Index input, const std::vector<Index>& widths, Activation hidden_act, Activation last_act,
                     bool bn = false);

/// `modules` x [conv3x3 -> (bn) -> relu -> maxpool], flatten, linear to z.
NetworkSpec conv_spec(const std::vector<Index>& image_shape, Index channels, Index modules, Index z, bool bn);

/// Weights uniform in +-sqrt(6/(fan_in+fan_out)), zero biases, gamma 1, beta 0.
/// Names are "l{i}.weight", "l{i}.bias", "l{i}.gamma", "l{i}.beta".
template <typename S>
ad::ParameterSet<S> init_parameters(const NetworkSpec& spec, std::uint64_t seed);

/// Checks names and shapes of `params` against `spec`.
template <typename S>
void check_parameters(const NetworkSpec& spec, const ad::ParameterSet<S>& params);

/// Forward pass of a batch (one example per row of `x`).
template <typename S>
ad::Var<S> forward(const NetworkSpec& spec, const ad::VarSet<S>& params, const ad::Var<S>& x);

/// Convenience: constant-parameter forward in a throwaway graph.
template <typename S>
Matrix<S> evaluate(const NetworkSpec& spec, const ad::ParameterSet<S>& params, const Matrix<S>& x);

} // namespace cml::nn
