#pragma once

#include <functional>
#include <string>

#include "cml/autodiff/parameter_set.hpp"

namespace cml::ad {

/// Builds a scalar loss from parameters bound in a fresh graph.
using ScalarFunction = std::function<Var<double>(Graph<double>&, const VarSet<double>&)>;

struct GradCheckReport {
    /// max over entries of |analytic - numeric| / max(1, |numeric|)
    double max_relative_error = 0.0;
    std::string worst_parameter;
    Index worst_index = -1;
};

/// Compares reverse-mode gradients against central differences
/// (f(p + h e_i) - f(p - h e_i)) / 2h, entry by entry. Always 64-bit.
GradCheckReport finite_difference_check(const ScalarFunction& f, const ParameterSet<double>& params, double step);

/// Central-difference gradient of f alone.
ParameterSet<double> numeric_gradient(const ScalarFunction& f, const ParameterSet<double>& params, double step);

} // namespace cml::ad
