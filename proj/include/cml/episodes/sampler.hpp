#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "cml/episodes/dataset.hpp"

namespace cml::episodes {

/// Three pairwise disjoint class pools.
struct MetaSplit {
    std::vector<int> train;
    std::vector<int> validation;
    std::vector<int> test;
};

/// Shuffles the dataset's classes with `seed`, then takes the first
/// counts[0] for meta-train, the next counts[1] for validation and the next
/// counts[2] for meta-test.
MetaSplit split_meta_sets(const Dataset& dataset, std::array<Index, 3> counts, std::uint64_t seed);

/// N-way K-shot with Q queries per class.
struct EpisodeShape {
    Index ways = 5;
    Index shots = 1;
    Index queries = 15;
};

/// One episode. Support and query rows are class-major: the examples of
/// labels[l] occupy [l*K, (l+1)*K) in `support` and [l*Q, (l+1)*Q) in `query`.
struct Task {
    std::uint64_t id = 0;
    EpisodeShape shape;
    std::vector<int> labels;
    std::vector<Index> support;
    std::vector<Index> query;

    /// Position in `labels` of each support (query) row.
    std::vector<int> support_targets() const;
    std::vector<int> query_targets() const;
};

/// Deterministic episode sampler over one class pool: the task at a given
/// stream position depends only on (seed, position).
class TaskSampler {
public:
    TaskSampler(const Dataset& dataset, std::vector<int> classes, EpisodeShape shape, std::uint64_t seed);

    const Dataset& dataset() const { return *dataset_; }
    const EpisodeShape& shape() const { return shape_; }
    const std::vector<int>& classes() const { return classes_; }

    /// Task with id == position.
    Task sample(std::uint64_t position) const;

    /// `length` tasks with ids position*length .. position*length+length-1.
    /// With `disjoint` no class appears in two tasks of the sequence.
    std::vector<Task> sample_sequence(std::uint64_t position, Index length, bool disjoint) const;

private:
    std::mt19937_64 stream(std::uint64_t position, std::uint64_t tag) const;
    Task sample_with_labels(std::mt19937_64& rng, std::uint64_t id, std::vector<int> labels) const;

    const Dataset* dataset_;
    std::vector<int> classes_;
    EpisodeShape shape_;
    std::uint64_t seed_;
};

} // namespace cml::episodes
