#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cml/autodiff/gradcheck.hpp"

namespace cml::harness {

/// One finite-difference comparison.
struct OracleResult {
    std::string name;
    double error = 0.0; // max relative error
    double tolerance = 0.0;
    bool passed() const { return error < tolerance; }
};

/// A randomized gradient case: fresh parameters from an rng, and the
/// scalar function of them.
struct GradCase {
    std::string name;
    std::function<ad::ParameterSet<double>(std::mt19937_64&)> params;
    ad::ScalarFunction f;
};

/// Every autodiff primitive, each reduced to a scalar through fixed random
/// weights.
std::vector<GradCase> primitive_cases();

/// `trials` random draws per primitive; tolerance 1e-5.
std::vector<OracleResult> primitive_oracles(std::uint64_t seed, int trials = 3);

/// Student loss (binary and categorical) and discriminator loss on small
/// random networks, w.r.t. their parameters; tolerance 1e-4.
std::vector<OracleResult> loss_oracles(std::uint64_t seed, int trials = 3);

/// Second-order meta-gradient of the student's outer loss w.r.t. θ_s for
/// a 2-layer student and 1..3 inner steps; tolerance 1e-3.
std::vector<OracleResult> meta_gradient_oracles(std::uint64_t seed);

/// max|g_first_order - g_second_order| of the student meta-gradient at the
/// given inner step sizes (α_s = α_d = alpha), one entry per alpha.
std::vector<double> first_order_gaps(std::uint64_t seed, const std::vector<double>& alphas);

} // namespace cml::harness
