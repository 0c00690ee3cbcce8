// Command-line front end: run, ablate, gradcheck, gen-data.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "cml/error.hpp"
#include "cml/harness/experiment.hpp"
#include "cml/harness/oracles.hpp"
#include "cml/parallel.hpp"

using namespace cml;
using namespace cml::harness;

namespace {

struct RunFlags {
    std::string config;
    std::optional<std::string> method;
    std::optional<std::uint64_t> seed;
    bool first_order = false;
    bool disjoint = false;
    std::optional<std::string> out;
};

ExperimentConfig resolve(const RunFlags& f)
{
    auto c = load_config(f.config);
    if (f.method) {
        c.method = *f.method;
    }
    if (f.seed) {
        c.seed = *f.seed;
    }
    if (f.first_order) {
        c.first_order = true;
    }
    if (f.disjoint) {
        c.disjoint_sequence = true;
    }
    if (f.out) {
        c.out = *f.out;
    }
    c.validate();
    return c;
}

void print_summary(const RunResult& r)
{
    const auto& s = r.summary;
    std::printf("%s: %lld sequences x %lld tasks, final average %.4f", r.config.method.c_str(),
                static_cast<long long>(s.sequences), static_cast<long long>(s.n), s.final_average.mean);
    if (!std::isnan(s.final_average.half_width)) {
        std::printf(" +- %.4f", s.final_average.half_width);
    }
    std::printf(", fresh-task accuracy %.4f (%.1fs)\n", s.fresh_accuracy.mean, r.wall_seconds);
}

int gradcheck(std::uint64_t seed)
{
    bool ok = true;
    const auto report = [&](const std::vector<OracleResult>& rs) {
        for (const auto& r : rs) {
            std::printf("%s %-28s %.3e (tol %.0e)\n", r.passed() ? "PASS" : "FAIL", r.name.c_str(), r.error,
                        r.tolerance);
            ok = ok && r.passed();
        }
    };
    report(primitive_oracles(seed));
    report(loss_oracles(seed));
    report(meta_gradient_oracles(seed));
    const auto gaps = first_order_gaps(seed, {1e-2, 5e-3});
    std::printf("info first-order gap ratio when alpha halves: %.3f\n", gaps[0] / gaps[1]);
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Continual meta-learner: experiments, gradient oracles and data generation"};
    app.require_subcommand(1);

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "Meta-train one method and evaluate it on task sequences");
    run->add_option("--config", run_flags.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--method", run_flags.method, "Method to run")
        ->check(CLI::IsMember(method_names()));
    run->add_option("--seed", run_flags.seed, "Overrides the config seed");
    run->add_flag("--first-order", run_flags.first_order, "First-order meta-gradients");
    run->add_flag("--disjoint-sequence", run_flags.disjoint, "No class reused within a test sequence");
    run->add_option("--out", run_flags.out, "Output directory");

    RunFlags ablate_flags;
    auto* ablate = app.add_subcommand("ablate", "CML with and without the discriminator on the same seed");
    ablate->add_option("--config", ablate_flags.config, "Experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    ablate->add_option("--seed", ablate_flags.seed, "Overrides the config seed");
    ablate->add_flag("--first-order", ablate_flags.first_order, "First-order meta-gradients");
    ablate->add_flag("--disjoint-sequence", ablate_flags.disjoint, "No class reused within a test sequence");
    ablate->add_option("--out", ablate_flags.out, "Output directory");

    std::uint64_t check_seed = 1;
    auto* check = app.add_subcommand("gradcheck", "Finite-difference oracle suite");
    check->add_option("--seed", check_seed, "Random seed");

    std::string synthetic;
    std::string data_out;
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset (CSV plus sidecar)");
    gen->add_option("--synthetic", synthetic, "kind=blobs|images,key=value,...")->required();
    gen->add_option("--out", data_out, "CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const int threads = env_threads();
        if (*run) {
            const auto config = resolve(run_flags);
            const auto result = run_experiment(config, threads);
            write_outputs(result, config.out);
            print_summary(result);
            std::printf("wrote %s\n", config.out.string().c_str());
        } else if (*ablate) {
            auto config = resolve(ablate_flags);
            if (!ablate_flags.out) {
                config.out /= "ablation";
            }
            run_ablation(config, threads, config.out);
            std::printf("wrote %s\n", (config.out / "ablation.csv").string().c_str());
        } else if (*check) {
            return gradcheck(check_seed);
        } else if (*gen) {
            const auto source = parse_synthetic(synthetic);
            ExperimentConfig c;
            c.data = source;
            const auto data = load_data(c);
            episodes::save_dataset(data, data_out);
            std::printf("wrote %s (%lld rows, %lld classes)\n", data_out.c_str(), static_cast<long long>(data.size()),
                        static_cast<long long>(data.num_classes()));
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
