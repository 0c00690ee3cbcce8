#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cml/harness/config.hpp"
#include "cml/harness/metrics.hpp"

namespace cml::harness {

inline constexpr int kResultSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

struct RunResult {
    ExperimentConfig config;
    std::vector<AccuracyTable> tables; // one per evaluation sequence
    Aggregate summary;
    std::vector<double> train_loss;                                  // per meta-iteration
    double teacher_accuracy = std::numeric_limits<double>::quiet_NaN(); // cml only
    std::vector<std::uint8_t> checkpoint;
    double wall_seconds = 0.0;
};

/// Dataset named by the config (generated or loaded).
episodes::Dataset load_data(const ExperimentConfig& config);

/// Derived stream seed; distinct tags give independent streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// Pretrains the teacher (cml methods), meta-trains the selected method,
/// then runs `sequences` independent task sequences over the meta-test
/// classes. `threads` bounds the workers used for per-task work.
RunResult run_experiment(const ExperimentConfig& config, int threads);

/// FNV-1a over the canonical config JSON without the output path, as hex.
std::string config_hash(const ExperimentConfig& config);

nlohmann::ordered_json results_json(const RunResult& result);

/// config.json, results.json, tables.csv, timeline.csv, checkpoint.bin;
/// each written atomically.
void write_outputs(const RunResult& result, const std::filesystem::path& dir);

/// With/without-discriminator comparison on the same seed: runs cml-no-d and
/// cml into <out>/cml-no-d and <out>/cml, then writes <out>/ablation.csv
/// with rows "CML wo D", "CML w. D" and their difference.
std::string ablation_csv(const RunResult& without_d, const RunResult& with_d);
void run_ablation(const ExperimentConfig& config, int threads, const std::filesystem::path& out);

} // namespace cml::harness
