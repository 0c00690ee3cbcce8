#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cml/episodes/synthetic.hpp"
#include "cml/meta/losses.hpp"
#include "cml/nn/models.hpp"

namespace cml::harness {

using ad::Index;

enum class DataKind { blobs, images, file };
enum class Precision { float32, float64 };

std::string to_string(DataKind kind);
std::string to_string(Precision precision);

struct DataSource {
    DataKind kind = DataKind::blobs;
    episodes::BlobConfig blobs;
    episodes::ImageConfig images;
    std::filesystem::path file;
};

inline const std::vector<std::string>& method_names()
{
    static const std::vector<std::string> names{"cml", "cml-no-d", "maml-ft", "maml-mas", "pn-csm"};
    return names;
}

struct ExperimentConfig {
    DataSource data;
    std::array<Index, 3> split{64, 16, 20};
    Index ways = 5;
    Index shots = 1;
    Index queries = 15;
    std::string method = "cml";

    // networks
    Index z = 64;
    std::vector<Index> teacher_hidden{128, 128};
    std::vector<Index> student_hidden{128};
    bool student_batch_norm = false;

    // meta-training
    double alpha_s = 0.01;
    double alpha_d = 0.01;
    double beta_s = 0.1;
    double beta_d = 0.001;
    double decay = 0.9;
    Index epoch_length = 100;
    int inner_steps = 5;
    std::uint64_t iterations = 500;
    Index batch_tasks = 4;
    bool first_order = false;
    double scale = 1.0;
    meta::LossKind loss = meta::LossKind::binary;

    nn::PretrainConfig pretrain;

    // baselines
    double baseline_alpha = 0.01;
    double baseline_beta = 0.1;
    int finetune_steps = 5;
    double mas_lambda = 1.0;

    // evaluation
    Index sequence_length = 4;
    Index sequences = 20;
    bool disjoint_sequence = false;

    std::uint64_t seed = 1;
    Precision precision = Precision::float32;
    std::filesystem::path out = "runs/default";

    /// Cross-field checks; throws ConfigError naming the offending field.
    void validate() const;
};

/// Strict reader: unknown keys and wrong types are ConfigErrors carrying the
/// JSON path of the field. Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Full config, every field present, keys in a fixed order.
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);

/// Network specs derived from the config and the dataset's input shape.
nn::NetworkSpec teacher_spec(const ExperimentConfig& config, const std::vector<Index>& input_shape);
nn::NetworkSpec student_spec(const ExperimentConfig& config, const std::vector<Index>& input_shape);

/// "key=value,key=value" synthetic parameters as used by gen-data; keys are
/// kind (blobs|images) plus the fields of the matching generator config.
DataSource parse_synthetic(const std::string& params);

} // namespace cml::harness
