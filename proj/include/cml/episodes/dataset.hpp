#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "cml/autodiff/graph.hpp"

namespace cml::episodes {

using ad::Index;

/// Labeled examples, one feature row per example. Images are stored
/// flattened channel-major with `input_shape` = {C, H, W}; plain feature
/// vectors have `input_shape` = {d}. Immutable after construction.
class Dataset {
public:
    using Features = ad::Matrix<double>;

    Dataset() = default;
    Dataset(Features features, std::vector<int> labels, std::vector<Index> input_shape = {});

    Index size() const { return features_.rows(); }
    Index dim() const { return features_.cols(); }
    const Features& features() const { return features_; }
    const std::vector<int>& labels() const { return labels_; }
    const std::vector<Index>& input_shape() const { return input_shape_; }

    /// Distinct labels in ascending order.
    std::vector<int> classes() const;
    Index num_classes() const { return static_cast<Index>(index_.size()); }
    const std::vector<Index>& examples_of(int label) const;
    Index min_class_count() const;

    /// Copies the given example rows, in order.
    Features rows(std::span<const Index> indices) const;

    friend bool operator==(const Dataset& a, const Dataset& b)
    {
        return a.labels_ == b.labels_ && a.input_shape_ == b.input_shape_ &&
               a.features_.rows() == b.features_.rows() && a.features_.cols() == b.features_.cols() &&
               a.features_ == b.features_;
    }

private:
    Features features_;
    std::vector<int> labels_;
    std::vector<Index> input_shape_;
    std::map<int, std::vector<Index>> index_;
};

/// Current version of the sidecar metadata format.
inline constexpr int kDatasetFormatVersion = 1;

/// `data/train.csv` -> `data/train.meta.json`
std::filesystem::path sidecar_path(const std::filesystem::path& csv);

/// Reads `label,f0,...,f{d-1}` CSV. The sidecar, when present, supplies the
/// input shape and is checked against the data.
Dataset load_dataset(const std::filesystem::path& csv);

/// Writes the CSV (shortest round-trip number formatting) and its sidecar.
void save_dataset(const Dataset& dataset, const std::filesystem::path& csv);

} // namespace cml::episodes
