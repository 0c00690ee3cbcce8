#pragma once

#include <cstdint>
#include <map>
#include <shared_mutex>
#include <span>
#include <utility>
#include <vector>

#include "cml/autodiff/ops.hpp"

namespace cml::meta {

using ad::Index;
using ad::Matrix;
using ad::Var;

/// N x z class vectors, row l belonging to labels[l].
template <typename S>
struct AllClassMatrix {
    Matrix<S> vectors;
    std::vector<int> labels;

    Index ways() const { return vectors.rows(); }
    /// N >= 2, one row per label, distinct labels, finite nonzero rows.
    void validate() const;

    friend bool operator==(const AllClassMatrix& a, const AllClassMatrix& b)
    {
        return a.labels == b.labels && a.vectors.rows() == b.vectors.rows() &&
               a.vectors.cols() == b.vectors.cols() && a.vectors == b.vectors;
    }
};

/// Class vectors from features of a support set: row l is the mean of the
/// rows whose target is l. Every target in [0, ways) must occur the same
/// number of times. With one example per class the rows are copied exactly.
template <typename S>
Var<S> class_vectors(const Var<S>& features, const std::vector<int>& targets, Index ways);

/// Persistent (task id, label) -> class vector store with a per-task label
/// registry. Concurrent readers, exclusive writers.
template <typename S>
class ClassStorage {
public:
    ClassStorage() = default;
    ClassStorage(const ClassStorage& other);
    ClassStorage& operator=(const ClassStorage& other);

    /// Throws on a duplicate task id or an invalid matrix.
    void store(std::uint64_t task_id, const AllClassMatrix<S>& v);
    /// Rows in the task's original label order. Throws on an unknown id.
    AllClassMatrix<S> retrieve(std::uint64_t task_id) const;
    bool contains(std::uint64_t task_id) const;
    std::size_t task_count() const;

    /// Stored record of one task: u64 id, u32 N, u32 z, N x i32 labels,
    /// N*z raw scalars.
    std::vector<std::uint8_t> serialize_task(std::uint64_t task_id) const;
    std::size_t task_bytes(std::uint64_t task_id) const { return serialize_task(task_id).size(); }

    /// Whole store: magic, scalar size, task count, then task records.
    std::vector<std::uint8_t> serialize() const;
    static ClassStorage deserialize(std::span<const std::uint8_t> bytes);

private:
    mutable std::shared_mutex mutex_;
    std::map<std::pair<std::uint64_t, int>, Matrix<S>> entries_;
    std::map<std::uint64_t, std::vector<int>> registry_;
};

} // namespace cml::meta
