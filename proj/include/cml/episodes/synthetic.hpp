#pragma once

#include <cstdint>

#include "cml/episodes/dataset.hpp"

namespace cml::episodes {

/// Isotropic Gaussian classes around random points on the unit sphere.
struct BlobConfig {
    Index classes = 100;
    Index per_class = 60;
    Index dim = 32;
    /// Per-coordinate standard deviation; controls the Bayes error.
    double spread = 0.1;
    std::uint64_t seed = 1;
};

Dataset synth_blobs(const BlobConfig& config);

/// Blobs around caller-supplied means (one row per class). Rejects
/// duplicate means.
Dataset synth_blobs_from_means(const ad::Matrix<double>& means, Index per_class, double spread, std::uint64_t seed);

/// Small procedural images: each class is a fixed random colored wave
/// pattern plus per-pixel Gaussian noise. Stored flattened channel-major.
struct ImageConfig {
    Index classes = 100;
    Index per_class = 60;
    Index channels = 3;
    Index size = 16;
    double spread = 0.3;
    std::uint64_t seed = 1;
};

Dataset synth_images(const ImageConfig& config);

} // namespace cml::episodes
