// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failing criteria not listed with --known-red.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cml/harness/experiment.hpp"
#include "cml/harness/oracles.hpp"
#include "cml/meta/class_storage.hpp"
#include "cml/nn/models.hpp"
#include "cml/parallel.hpp"

using namespace cml;
using namespace cml::harness;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool passed;
    std::string detail;
};

double max_error(const std::vector<OracleResult>& rs, bool* all_passed)
{
    double worst = 0.0;
    for (const auto& r : rs) {
        worst = std::max(worst, r.error);
        *all_passed = *all_passed && r.passed();
    }
    return worst;
}

std::string fmt(const char* f, auto... args)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool horizontal(const std::vector<AccuracyTable>& tables)
{
    for (const auto& t : tables) {
        for (Index i = 0; i < t.size(); ++i) {
            for (Index j = i; j < t.size(); ++j) {
                if (t.at(i, j) != t.at(i, i)) {
                    return false;
                }
            }
        }
    }
    return true;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string results_without_wall_time(const fs::path& dir)
{
    auto j = nlohmann::ordered_json::parse(slurp(dir / "results.json"));
    j.erase("metadata");
    return j.dump();
}

// Runs shared by criteria 3, 4, 5 and 9.
struct Benchmark {
    RunResult cml;
    RunResult pn;
    RunResult maml_ft;
    double cml_seconds = 0.0;
    double maml_ft_seconds = 0.0;
};

Benchmark run_benchmark(const ExperimentConfig& base)
{
    Benchmark b;
    auto timed = [&](const std::string& method, double* secs) {
        auto c = base;
        c.method = method;
        const auto start = Clock::now();
        auto r = run_experiment(c, 1);
        if (secs) {
            *secs = seconds_since(start);
        }
        return r;
    };
    b.cml = timed("cml", &b.cml_seconds);
    b.maml_ft = timed("maml-ft", &b.maml_ft_seconds);
    b.pn = timed("pn-csm", nullptr);
    return b;
}

Outcome oracle_suite()
{
    const auto start = Clock::now();
    bool ok = true;
    const double prim = max_error(primitive_oracles(1), &ok);
    const double loss = max_error(loss_oracles(1), &ok);
    const double secs = seconds_since(start);
    return {ok && secs < 60.0, fmt("primitives %.2e (< 1e-5), losses %.2e (< 1e-4), %.1fs (< 60s)", prim, loss, secs)};
}

Outcome meta_gradient()
{
    bool ok = true;
    const double err = max_error(meta_gradient_oracles(1), &ok);
    const auto gaps = first_order_gaps(1, {1e-2, 5e-3});
    const double ratio = gaps[0] / gaps[1];
    return {ok && ratio >= 4.0,
            fmt("finite-difference %.2e (< 1e-3) %s; first-order gap ratio on halving alpha %.3f (>= 4)", err,
                ok ? "ok" : "FAILED", ratio)};
}

Outcome zero_forgetting(const Benchmark& b)
{
    const bool cml = horizontal(b.cml.tables);
    const bool pn = horizontal(b.pn.tables);
    return {cml && pn, fmt("cml %s, pn-csm %s over %zu sequences", cml ? "exact" : "drifts",
                           pn ? "exact" : "drifts", b.cml.tables.size())};
}

Outcome forgetting_pattern(const Benchmark& b)
{
    const auto& ft = b.maml_ft.summary;
    const Index last = ft.n - 1;
    const double drop = 100.0 * (ft.at(0, 0).mean - ft.at(0, last).mean);
    const double gap = 100.0 * (b.cml.summary.final_average.mean - ft.final_average.mean);
    const double secs = b.cml_seconds + b.maml_ft_seconds;
    return {drop >= 5.0 && gap >= 10.0 && secs < 600.0,
            fmt("maml-ft T1 drop %.1f pts (>= 5), cml %.4f vs maml-ft %.4f final average, gap %.1f pts (>= 10), "
                "%.0fs (< 600s)",
                drop, b.cml.summary.final_average.mean, ft.final_average.mean, gap, secs)};
}

Outcome above_chance(const Benchmark& b)
{
    const double acc = b.cml.summary.fresh_accuracy.mean;
    return {acc >= 0.60 && b.cml.config.iterations == 500,
            fmt("fresh-task accuracy %.4f (>= 0.60) after %lld iterations", acc,
                static_cast<long long>(b.cml.config.iterations))};
}

Outcome csm_footprint()
{
    std::mt19937_64 rng(3);
    std::normal_distribution<float> normal;
    meta::AllClassMatrix<float> v;
    v.vectors.resize(5, 512);
    for (Index i = 0; i < v.vectors.size(); ++i) {
        v.vectors.data()[i] = normal(rng);
    }
    v.labels = {0, 1, 2, 3, 4};
    meta::ClassStorage<float> csm;
    csm.store(1, v);
    const auto bytes = csm.task_bytes(1);
    return {bytes <= 2 * 12 * 1024, fmt("%zu bytes per task at N=5, z=512, float32 (<= 24576)", bytes)};
}

Outcome classifier_invariance()
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> entry(-1.0, 1.0);
    std::uniform_real_distribution<double> log_scale(-6.0, 6.0);
    std::uniform_int_distribution<Index> dim(2, 32);
    std::uniform_int_distribution<Index> ways(2, 10);
    auto argmaxes = [](const ad::Matrix<double>& p) {
        std::vector<Index> out;
        for (Index r = 0; r < p.rows(); ++r) {
            Index c = 0;
            p.row(r).maxCoeff(&c);
            out.push_back(c);
        }
        return out;
    };
    int violations = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        const Index z = dim(rng);
        const ad::Matrix<double> m = ad::Matrix<double>::NullaryExpr(5, z, [&] { return entry(rng); });
        ad::Matrix<double> v = ad::Matrix<double>::NullaryExpr(ways(rng), z, [&] { return entry(rng); });
        ad::Graph<double> g;
        const auto before = argmaxes(nn::classify(g.constant(m), g.constant(v)).value());
        const double c = std::exp(log_scale(rng));
        for (Index r = 0; r < v.rows(); ++r) {
            v.row(r) *= std::exp(log_scale(rng));
        }
        const auto after = argmaxes(nn::classify(g.constant(ad::Matrix<double>(m * c)), g.constant(v)).value());
        violations += before != after;
    }
    return {violations == 0, fmt("%d violations in %d trials", violations, trials)};
}

Outcome ablation(const ExperimentConfig& sample, const fs::path& scratch)
{
    const auto dir = scratch / "ablation";
    run_ablation(sample, env_threads(), dir);
    std::istringstream csv(slurp(dir / "ablation.csv"));
    std::vector<std::string> lines;
    for (std::string line; std::getline(csv, line);) {
        lines.push_back(line);
    }
    std::string header = "method";
    for (Index i = 1; i <= sample.sequence_length; ++i) {
        header += ",T" + std::to_string(i);
    }
    header += ",average,ci_half_width";
    const auto fields = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
    bool ok = lines.size() == 4 && lines[0] == header && lines[1].starts_with("CML wo D,") &&
              lines[2].starts_with("CML w. D,") && lines[3].starts_with("w. D - wo D,");
    for (const auto& l : lines) {
        ok = ok && fields(l) == fields(header);
    }
    return {ok, fmt("%zu lines, header '%s'", lines.size(), lines.empty() ? "" : lines[0].c_str())};
}

Outcome determinism(const Benchmark& b, const fs::path& scratch)
{
    // the benchmark run used one worker; repeat with the environment's count
    const auto again = run_experiment(b.cml.config, std::max(2, env_threads()));
    write_outputs(b.cml, scratch / "det_a");
    write_outputs(again, scratch / "det_b");
    const bool same = results_without_wall_time(scratch / "det_a") == results_without_wall_time(scratch / "det_b");
    const bool ckpt = slurp(scratch / "det_a" / "checkpoint.bin") == slurp(scratch / "det_b" / "checkpoint.bin");
    return {same, fmt("results.json %s, checkpoint %s", same ? "identical" : "DIFFERS", ckpt ? "identical" : "differs")};
}

} // namespace

int main(int argc, char** argv)
{
    std::set<int> known_red;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--known-red" && i + 1 < argc) {
            known_red.insert(std::atoi(argv[++i]));
        } else {
            std::fprintf(stderr, "usage: %s [--known-red N]...\n", argv[0]);
            return 2;
        }
    }

    const fs::path configs = fs::path(CML_SOURCE_DIR) / "configs";
    const auto scratch = fs::temp_directory_path() / "cml_acceptance";
    fs::remove_all(scratch);

    const auto start = Clock::now();
    const auto benchmark = run_benchmark(load_config(configs / "default.json"));
    const auto sample = load_config(configs / "sample.json");

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient oracle suite", oracle_suite},
        {"meta-gradient oracle", meta_gradient},
        {"zero-forgetting invariants", [&] { return zero_forgetting(benchmark); }},
        {"forgetting pattern", [&] { return forgetting_pattern(benchmark); }},
        {"learning above chance", [&] { return above_chance(benchmark); }},
        {"CSM footprint", csm_footprint},
        {"classifier invariance", classifier_invariance},
        {"ablation harness", [&] { return ablation(sample, scratch); }},
        {"determinism", [&] { return determinism(benchmark, scratch); }},
    };

    int failing = 0;
    int tolerated = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        Outcome o{false, ""};
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.detail = std::string("threw: ") + e.what();
        }
        const bool red_ok = !o.passed && known_red.contains(id);
        std::printf("%s %d %-28s %s%s\n", o.passed ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                    red_ok ? " [known red]" : "");
        std::fflush(stdout);
        failing += !o.passed && !red_ok;
        tolerated += red_ok;
    }
    std::printf("%d failing, %d known red, %.0fs total\n", failing, tolerated, seconds_since(start));
    return failing;
}
