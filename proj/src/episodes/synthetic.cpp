#include "cml/episodes/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "cml/error.hpp"

namespace cml::episodes {

namespace {

void check_common(Index classes, Index per_class, double spread)
{
    if (classes < 2) {
        throw InvalidArgument("synthetic: need at least 2 classes, got " + std::to_string(classes));
    }
    if (per_class < 1) {
        throw InvalidArgument("synthetic: per-class count must be >= 1, got " + std::to_string(per_class));
    }
    if (!(spread > 0.0) || !std::isfinite(spread)) {
        throw InvalidArgument("synthetic: spread must be positive and finite");
    }
}

} // namespace

Dataset synth_blobs_from_means(const ad::Matrix<double>& means, Index per_class, double spread, std::uint64_t seed)
{
    check_common(means.rows(), per_class, spread);
    for (Index a = 0; a < means.rows(); ++a) {
        for (Index b = a + 1; b < means.rows(); ++b) {
            if (means.row(a) == means.row(b)) {
                throw InvalidArgument("synthetic: classes " + std::to_string(a) + " and " + std::to_string(b) +
                                      " have identical means");
            }
        }
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, spread);
    const Index n = means.rows() * per_class;
    Dataset::Features x(n, means.cols());
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index c = 0; c < means.rows(); ++c) {
        for (Index i = 0; i < per_class; ++i) {
            const Index r = c * per_class + i;
            for (Index j = 0; j < means.cols(); ++j) {
                x(r, j) = means(c, j) + noise(rng);
            }
            labels[static_cast<std::size_t>(r)] = static_cast<int>(c);
        }
    }
    return Dataset(std::move(x), std::move(labels));
}

Dataset synth_blobs(const BlobConfig& config)
{
    check_common(config.classes, config.per_class, config.spread);
    if (config.dim < 1) {
        throw InvalidArgument("synthetic: dimension must be >= 1");
    }
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    ad::Matrix<double> means(config.classes, config.dim);
    for (Index c = 0; c < config.classes; ++c) {
        do {
            for (Index j = 0; j < config.dim; ++j) {
                means(c, j) = gauss(rng);
            }
        } while (means.row(c).norm() == 0.0);
        means.row(c).normalize();
    }
    return synth_blobs_from_means(means, config.per_class, config.spread, rng());
}

Dataset synth_images(const ImageConfig& config)
{
    check_common(config.classes, config.per_class, config.spread);
    if (config.channels < 1 || config.size < 2) {
        throw InvalidArgument("synthetic: images need >= 1 channel and size >= 2");
    }
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> freq(0.5, 3.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> tint(-0.5, 0.5);
    std::normal_distribution<double> noise(0.0, config.spread);

    const Index c_count = config.channels;
    const Index side = config.size;
    const Index dim = c_count * side * side;
    ad::Matrix<double> templates(config.classes, dim);
    for (Index c = 0; c < config.classes; ++c) {
        for (Index ch = 0; ch < c_count; ++ch) {
            const double fx = freq(rng);
            const double fy = freq(rng);
            const double ph = phase(rng);
            const double offset = tint(rng);
            for (Index y = 0; y < side; ++y) {
                for (Index x = 0; x < side; ++x) {
                    const double u = 2.0 * std::numbers::pi * static_cast<double>(x) / static_cast<double>(side);
                    const double v = 2.0 * std::numbers::pi * static_cast<double>(y) / static_cast<double>(side);
                    templates(c, (ch * side + y) * side + x) = std::sin(fx * u + fy * v + ph) + offset;
                }
            }
        }
    }

    const Index n = config.classes * config.per_class;
    Dataset::Features images(n, dim);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index c = 0; c < config.classes; ++c) {
        for (Index i = 0; i < config.per_class; ++i) {
            const Index r = c * config.per_class + i;
            for (Index j = 0; j < dim; ++j) {
                images(r, j) = templates(c, j) + noise(rng);
            }
            labels[static_cast<std::size_t>(r)] = static_cast<int>(c);
        }
    }
    return Dataset(std::move(images), std::move(labels), {c_count, side, side});
}

} // namespace cml::episodes
