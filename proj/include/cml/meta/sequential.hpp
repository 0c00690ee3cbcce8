#pragma once

#include <filesystem>
#include <vector>

#include "cml/meta/learner.hpp"

namespace cml::meta {

/// Lower-triangular accuracy matrix: at(i, j) is the accuracy on task i
/// after task j has arrived; entries with i > j are absent.
class AccuracyTable {
public:
    AccuracyTable() = default;
    explicit AccuracyTable(Index tasks);

    Index size() const { return n_; }
    bool present(Index i, Index j) const { return i <= j && j < n_; }
    double at(Index i, Index j) const;
    void set(Index i, Index j, double accuracy);
    /// Mean over tasks of the last column (the "Average" column).
    double final_average() const;

    /// Compares present cells only (absent ones are NaN).
    friend bool operator==(const AccuracyTable& a, const AccuracyTable& b);

private:
    Index n_ = 0;
    std::vector<double> cells_;
};

/// Sequential meta-testing with the class storage module: every arriving
/// task is fast-learned from the same θ_s (no discriminator), its class
/// vectors are stored, and all tasks seen so far are evaluated from the
/// stored vectors.
template <typename S>
AccuracyTable meta_test_sequential(const MetaState<S>& state, const CmlConfig& config,
                                   const std::vector<Episode<S>>& sequence, ClassStorage<S>& csm);

/// Versioned binary record of a MetaState (bit-exact round trip).
template <typename S>
std::vector<std::uint8_t> encode_state(const MetaState<S>& state);
template <typename S>
MetaState<S> decode_state(std::span<const std::uint8_t> bytes);

template <typename S>
void save_checkpoint(const MetaState<S>& state, const std::filesystem::path& path);
template <typename S>
MetaState<S> load_checkpoint(const std::filesystem::path& path);

} // namespace cml::meta
