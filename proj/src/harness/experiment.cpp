#include "cml/harness/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "cml/baselines/baselines.hpp"
#include "cml/error.hpp"
#include "cml/io.hpp"
#include "cml/parallel.hpp"

namespace cml::harness {

using nlohmann::ordered_json;

episodes::Dataset load_data(const ExperimentConfig& config)
{
    switch (config.data.kind) {
    case DataKind::blobs: return episodes::synth_blobs(config.data.blobs);
    case DataKind::images: return episodes::synth_images(config.data.images);
    case DataKind::file: return episodes::load_dataset(config.data.file);
    }
    throw InvalidArgument("unknown data source");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag)
{
    // splitmix64 finalizer over (seed, tag)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

enum Stream : std::uint64_t { split_stream = 1, train_stream, test_stream, init_stream, pretrain_stream };

template <typename S>
std::vector<meta::Episode<S>> sequence_episodes(const ExperimentConfig& c, const episodes::TaskSampler& sampler,
                                                std::uint64_t s, const nn::TeacherCache<S>* teacher)
{
    std::vector<meta::Episode<S>> out;
    for (const auto& t : sampler.sample_sequence(s, c.sequence_length, c.disjoint_sequence)) {
        out.push_back(teacher != nullptr ? meta::make_episode(t, sampler.dataset(), *teacher)
                                         : baselines::plain_episode<S>(t, sampler.dataset()));
    }
    return out;
}

template <typename S>
void run_cml(const ExperimentConfig& c, int threads, const episodes::Dataset& data, const episodes::MetaSplit& split,
             const episodes::TaskSampler& train, const episodes::TaskSampler& test, RunResult& result)
{
    meta::CmlConfig cc;
    cc.teacher = teacher_spec(c, data.input_shape());
    cc.student = student_spec(c, data.input_shape());
    cc.discriminator = nn::default_discriminator_spec(c.z);
    cc.scale = c.scale;
    cc.loss = c.loss;
    cc.mode = c.first_order ? ad::Mode::first_order : ad::Mode::second_order;
    cc.use_discriminator = c.method == "cml";
    cc.batch_tasks = c.batch_tasks;
    cc.decay = c.decay;
    cc.epoch_length = c.epoch_length;
    cc.threads = threads;

    std::vector<Index> rows;
    for (int label : split.train) {
        const auto& ex = data.examples_of(label);
        rows.insert(rows.end(), ex.begin(), ex.end());
    }
    auto pc = c.pretrain;
    pc.seed = derive_seed(c.seed, pretrain_stream + 16 * c.pretrain.seed);
    const auto pretrained = nn::pretrain_teacher<S>(data, rows, cc.teacher, pc);
    result.teacher_accuracy = pretrained.train_accuracy;
    const nn::TeacherCache<S> teacher(cc.teacher, pretrained.theta_t, data);

    auto state = meta::init_state<S>(cc, derive_seed(c.seed, init_stream));
    state.alpha_s = c.alpha_s;
    state.alpha_d = c.alpha_d;
    state.beta_s = c.beta_s;
    state.beta_d = c.beta_d;
    state.inner_steps = c.inner_steps;
    result.train_loss = meta::meta_train(state, cc, train, teacher, c.iterations).student_loss;

    auto eval = cc;
    eval.threads = 1;
    result.tables.resize(static_cast<std::size_t>(c.sequences));
    parallel_for(result.tables.size(), threads, [&](std::size_t s) {
        meta::ClassStorage<S> csm;
        result.tables[s] = meta::meta_test_sequential(state, eval, sequence_episodes(c, test, s, &teacher), csm);
    });
    result.checkpoint = meta::encode_state(state);
}

template <typename S>
void run_baseline(const ExperimentConfig& c, int threads, const episodes::Dataset& data,
                  const episodes::TaskSampler& train, const episodes::TaskSampler& test, RunResult& result)
{
    baselines::BaselineConfig bc;
    bc.net = student_spec(c, data.input_shape());
    bc.ways = c.ways;
    bc.alpha = c.baseline_alpha;
    bc.beta = c.baseline_beta;
    bc.inner_steps = c.inner_steps;
    bc.finetune_steps = c.finetune_steps;
    bc.mas_lambda = c.mas_lambda;
    bc.mode = c.first_order ? ad::Mode::first_order : ad::Mode::second_order;
    bc.batch_tasks = c.batch_tasks;
    bc.decay = c.decay;
    bc.epoch_length = c.epoch_length;
    bc.threads = threads;

    const bool pn = c.method == "pn-csm";
    const auto seed = derive_seed(c.seed, init_stream);
    auto theta = pn ? baselines::init_embedding<S>(bc, seed) : baselines::init_maml<S>(bc, seed);
    result.train_loss = pn ? baselines::pn_train(theta, bc, train, c.iterations)
                           : baselines::maml_meta_train(theta, bc, train, c.iterations);

    auto eval = bc;
    eval.threads = 1;
    result.tables.resize(static_cast<std::size_t>(c.sequences));
    parallel_for(result.tables.size(), threads, [&](std::size_t s) {
        const auto eps = sequence_episodes<S>(c, test, s, nullptr);
        if (pn) {
            meta::ClassStorage<S> csm;
            result.tables[s] = baselines::pn_csm_sequential(eval, theta, eps, csm);
        } else if (c.method == "maml-mas") {
            result.tables[s] = baselines::maml_mas_sequential(eval, theta, eps, c.mas_lambda);
        } else {
            result.tables[s] = baselines::maml_ft_sequential(eval, theta, eps);
        }
    });

    // Same record as CML; the baseline has no discriminator.
    meta::MetaState<S> state;
    state.theta_s = theta;
    state.alpha_s = bc.alpha;
    state.alpha_d = 0.0;
    state.beta_s = bc.beta * std::pow(bc.decay, static_cast<double>(c.iterations / static_cast<std::uint64_t>(bc.epoch_length)));
    state.beta_d = 0.0;
    state.inner_steps = bc.inner_steps;
    state.iteration = c.iterations;
    result.checkpoint = meta::encode_state(state);
}

template <typename S>
RunResult run_typed(const ExperimentConfig& c, int threads)
{
    RunResult result;
    result.config = c;
    const auto data = load_data(c);
    const auto split = episodes::split_meta_sets(data, c.split, derive_seed(c.seed, split_stream));
    const episodes::EpisodeShape shape{c.ways, c.shots, c.queries};
    const episodes::TaskSampler train(data, split.train, shape, derive_seed(c.seed, train_stream));
    const episodes::TaskSampler test(data, split.test, shape, derive_seed(c.seed, test_stream));
    if (c.method == "cml" || c.method == "cml-no-d") {
        run_cml<S>(c, threads, data, split, train, test, result);
    } else {
        run_baseline<S>(c, threads, data, train, test, result);
    }
    result.summary = aggregate(result.tables);
    return result;
}

ordered_json number(double v)
{
    return std::isfinite(v) ? ordered_json(round6(v)) : ordered_json(nullptr);
}

ordered_json interval(const Interval& i)
{
    return {{"mean", number(i.mean)}, {"ci_half_width", number(i.half_width)}};
}

ordered_json table_json(const AccuracyTable& t)
{
    auto rows = ordered_json::array();
    for (Index i = 0; i < t.size(); ++i) {
        auto row = ordered_json::array();
        for (Index j = 0; j < t.size(); ++j) {
            row.push_back(t.present(i, j) ? number(t.at(i, j)) : ordered_json(nullptr));
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace

RunResult run_experiment(const ExperimentConfig& config, int threads)
{
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    auto result = config.precision == Precision::float32 ? run_typed<float>(config, std::max(1, threads))
                                                         : run_typed<double>(config, std::max(1, threads));
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string config_hash(const ExperimentConfig& config)
{
    // Where the outputs go does not change what they contain.
    auto j = config_to_json(config);
    j.erase("out");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : j.dump()) {
        h = (h ^ ch) * 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ordered_json results_json(const RunResult& r)
{
    ordered_json j;
    j["schema_version"] = kResultSchemaVersion;
    j["method"] = r.config.method;
    j["config_hash"] = config_hash(r.config);
    j["version"] = kVersion;
    j["seed"] = r.config.seed;
    j["precision"] = to_string(r.config.precision);
    j["teacher_train_accuracy"] = number(r.teacher_accuracy);
    auto losses = ordered_json::array();
    for (double l : r.train_loss) {
        losses.push_back(number(l));
    }
    j["train_loss"] = losses;

    const auto& s = r.summary;
    auto mean = ordered_json::array();
    auto half = ordered_json::array();
    for (Index i = 0; i < s.n; ++i) {
        auto mrow = ordered_json::array();
        auto hrow = ordered_json::array();
        for (Index k = 0; k < s.n; ++k) {
            mrow.push_back(k >= i ? number(s.at(i, k).mean) : ordered_json(nullptr));
            hrow.push_back(k >= i ? number(s.at(i, k).half_width) : ordered_json(nullptr));
        }
        mean.push_back(mrow);
        half.push_back(hrow);
    }
    j["summary"] = {{"sequences", s.sequences},
                    {"tasks", s.n},
                    {"mean", mean},
                    {"ci_half_width", half},
                    {"final_average", interval(s.final_average)},
                    {"fresh_task_accuracy", interval(s.fresh_accuracy)}};
    auto tables = ordered_json::array();
    for (const auto& t : r.tables) {
        tables.push_back(table_json(t));
    }
    j["tables"] = tables;
    j["metadata"] = {{"wall_time_seconds", number(r.wall_seconds)}};
    return j;
}

void write_outputs(const RunResult& r, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    io::atomic_write(dir / "config.json", config_to_json(r.config).dump(2) + "\n");
    io::atomic_write(dir / "results.json", results_json(r).dump(2) + "\n");
    io::atomic_write(dir / "tables.csv", tables_csv(r.config.method, r.summary));
    io::atomic_write(dir / "timeline.csv", timeline_csv(r.config.method, r.summary));
    io::atomic_write(dir / "checkpoint.bin", std::span<const std::uint8_t>(r.checkpoint));
}

std::string ablation_csv(const RunResult& without_d, const RunResult& with_d)
{
    const Index n = with_d.summary.n;
    if (without_d.summary.n != n) {
        throw ShapeError("ablation: runs have different sequence lengths");
    }
    std::string out = "method";
    for (Index i = 0; i < n; ++i) {
        out += ",T" + std::to_string(i + 1);
    }
    out += ",average,ci_half_width\n";
    const auto line = [&](const std::string& name, const Aggregate& a) {
        out += name;
        for (Index i = 0; i < n; ++i) {
            out += "," + format6(a.at(i, n - 1).mean);
        }
        out += "," + format6(a.final_average.mean) + "," +
               (std::isnan(a.final_average.half_width) ? std::string() : format6(a.final_average.half_width)) + "\n";
    };
    line("CML wo D", without_d.summary);
    line("CML w. D", with_d.summary);
    out += "w. D - wo D";
    for (Index i = 0; i < n; ++i) {
        out += "," + format6(with_d.summary.at(i, n - 1).mean - without_d.summary.at(i, n - 1).mean);
    }
    out += "," + format6(with_d.summary.final_average.mean - without_d.summary.final_average.mean) + ",\n";
    return out;
}

void run_ablation(const ExperimentConfig& config, int threads, const std::filesystem::path& out)
{
    auto without = config;
    without.method = "cml-no-d";
    without.out = out / "cml-no-d";
    auto with = config;
    with.method = "cml";
    with.out = out / "cml";
    const auto a = run_experiment(without, threads);
    write_outputs(a, without.out);
    const auto b = run_experiment(with, threads);
    write_outputs(b, with.out);
    io::atomic_write(out / "ablation.csv", ablation_csv(a, b));
}

} // namespace cml::harness
