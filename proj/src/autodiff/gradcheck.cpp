#include "cml/autodiff/gradcheck.hpp"

#include <cmath>

namespace cml::ad {

namespace {

double evaluate(const ScalarFunction& f, const ParameterSet<double>& params)
{
    // Trainable binding so functions that differentiate internally still see
    // their parameters.
    Graph<double> g(Mode::second_order);
    const auto bound = bind(g, params, true);
    const double value = f(g, bound).item();
    if (!std::isfinite(value)) {
        throw Error("non-finite", "finite-difference probe produced a non-finite value");
    }
    return value;
}

} // namespace

ParameterSet<double> numeric_gradient(const ScalarFunction& f, const ParameterSet<double>& params, double step)
{
    if (!(step > 0.0)) {
        throw InvalidArgument("finite-difference step must be positive");
    }
    for (const auto& e : params) {
        if (!e.value.allFinite()) {
            throw InvalidArgument("parameter '" + e.name + "' is not finite");
        }
    }
    ParameterSet<double> probe = params;
    ParameterSet<double> out = params.zeros_like();
    for (std::size_t p = 0; p < probe.size(); ++p) {
        auto& value = probe[p].value;
        for (Index k = 0; k < value.size(); ++k) {
            const double original = value.data()[k];
            value.data()[k] = original + step;
            const double plus = evaluate(f, probe);
            value.data()[k] = original - step;
            const double minus = evaluate(f, probe);
            value.data()[k] = original;
            out[p].value.data()[k] = (plus - minus) / (2.0 * step);
        }
    }
    return out;
}

GradCheckReport finite_difference_check(const ScalarFunction& f, const ParameterSet<double>& params, double step)
{
    const auto numeric = numeric_gradient(f, params, step);

    Graph<double> g(Mode::second_order);
    const auto bound = bind(g, params, true);
    const auto output = f(g, bound);
    if (!std::isfinite(output.item())) {
        throw Error("non-finite", "function value is not finite");
    }
    const auto analytic = values(grad(output, bound));

    GradCheckReport report;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const auto& a = analytic[p].value;
        const auto& n = numeric[p].value;
        for (Index k = 0; k < a.size(); ++k) {
            const double err = std::abs(a.data()[k] - n.data()[k]) / std::max(1.0, std::abs(n.data()[k]));
            if (err > report.max_relative_error || report.worst_index < 0) {
                report.max_relative_error = std::max(report.max_relative_error, err);
                report.worst_parameter = params[p].name;
                report.worst_index = k;
            }
        }
    }
    return report;
}

} // namespace cml::ad
