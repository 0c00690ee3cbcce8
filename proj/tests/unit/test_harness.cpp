#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cml/error.hpp"
#include "cml/harness/experiment.hpp"
#include "cml/io.hpp"

using namespace cml;
using namespace cml::harness;
using nlohmann::json;

namespace {

ExperimentConfig tiny(const std::string& method = "cml")
{
    ExperimentConfig c;
    c.data.blobs = {20, 8, 8, 0.15, 5};
    c.split = {8, 2, 10};
    c.ways = 3;
    c.queries = 3;
    c.method = method;
    c.z = 8;
    c.teacher_hidden = {16};
    c.student_hidden = {16};
    c.iterations = 3;
    c.batch_tasks = 2;
    c.inner_steps = 2;
    c.pretrain.epochs = 20;
    c.sequences = 3;
    c.sequence_length = 3;
    c.precision = Precision::float64;
    return c;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string without_wall_time(json j)
{
    j.erase("metadata");
    return j.dump();
}

AccuracyTable table(std::initializer_list<std::initializer_list<double>> rows)
{
    AccuracyTable t(static_cast<Index>(rows.size()));
    Index i = 0;
    for (const auto& r : rows) {
        Index j = 0;
        for (double v : r) {
            if (j >= i) {
                t.set(i, j, v);
            }
            ++j;
        }
        ++i;
    }
    return t;
}

} // namespace

TEST_CASE("confidence interval")
{
    const std::vector<double> same{0.4, 0.4, 0.4};
    CHECK(confidence_interval(same).mean == doctest::Approx(0.4));
    CHECK(confidence_interval(same).half_width == 0.0);
    const std::vector<double> two{0.0, 1.0};
    CHECK(confidence_interval(two).mean == 0.5);
    CHECK(confidence_interval(two).half_width == doctest::Approx(0.98).epsilon(1e-12));
    const std::vector<double> one{0.3};
    CHECK_THROWS_AS(confidence_interval(one), InvalidArgument);
}

TEST_CASE("six significant digits")
{
    CHECK(round6(0.123456789) == 0.123457);
    CHECK(format6(2.0 / 3.0) == "0.666667");
    CHECK(round6(round6(1.0 / 7.0)) == round6(1.0 / 7.0));
}

TEST_CASE("timeline puts zeros before arrival")
{
    const std::vector<AccuracyTable> tables{
        table({{0.5, 0.4, 0.3, 0.2}, {0, 0.6, 0.5, 0.4}, {0, 0, 0.7, 0.6}, {0, 0, 0, 0.8}}),
        table({{0.5, 0.4, 0.3, 0.2}, {0, 0.6, 0.5, 0.4}, {0, 0, 0.9, 0.8}, {0, 0, 0, 0.8}}),
    };
    const auto agg = aggregate(tables);
    std::vector<double> t3;
    for (const auto& p : timeline(agg)) {
        if (p.task == 2) {
            t3.push_back(p.accuracy);
        }
    }
    CHECK(t3 == std::vector<double>{0, 0, agg.at(2, 2).mean, agg.at(2, 3).mean});
    CHECK(agg.at(2, 2).mean == doctest::Approx(0.8));
    CHECK(agg.final_average.mean == doctest::Approx((0.2 + 0.4 + 0.6 + 0.8 + 0.2 + 0.4 + 0.8 + 0.8) / 8));

    const std::vector<AccuracyTable> single{table({{0.7}})};
    const auto one = aggregate(single);
    CHECK(timeline(one).size() == 1);
    CHECK(std::isnan(one.final_average.half_width));
    const auto csv = timeline_csv("cml", one);
    CHECK(csv == "method,task,time_step,accuracy,ci_half_width\ncml,1,1,0.7,\n");
}

TEST_CASE("config reader is strict")
{
    CHECK_THROWS_WITH(config_from_json(json::parse(R"({"meta": {"alpa_s": 0.1}})")),
                      doctest::Contains("meta.alpa_s: unknown key"));
    CHECK_THROWS_WITH(config_from_json(json::parse(R"({"episode": {"ways": "five"}})")),
                      doctest::Contains("episode.ways: expected an integer"));
    CHECK_THROWS_WITH(config_from_json(json::parse(R"({"method": "lwf"})")), doctest::Contains("method"));
    CHECK_THROWS_WITH(config_from_json(json::parse(R"({"data": {"synthetic": {"kind": "blobs", "per_class": 10}}})")),
                      doctest::Contains("data.synthetic.per_class"));
    CHECK_THROWS_WITH(config_from_json(json::parse(R"({"data": {}})")), doctest::Contains("data"));
    CHECK_THROWS_WITH(config_from_json(json::parse(R"({"network": {"student_hidden": [8, 0]}})")),
                      doctest::Contains("network.student_hidden[1]"));
    CHECK_THROWS_WITH(config_from_json(json::parse(R"({"meta": {"inner_steps": 0}})")),
                      doctest::Contains("meta.inner_steps"));
    CHECK_THROWS_AS(config_from_json(json::parse("[1, 2]")), ConfigError);
}

TEST_CASE("config round trips through JSON")
{
    const auto c = tiny("maml-mas");
    const auto j = config_to_json(c);
    const auto back = config_to_json(config_from_json(json::parse(j.dump())));
    CHECK(back.dump() == j.dump());
    const auto defaults = config_from_json(json::object());
    CHECK(defaults.alpha_s == 0.01);
    CHECK(defaults.beta_s == 0.1);
    CHECK(defaults.beta_d == 0.001);
    CHECK(defaults.ways == 5);
}

TEST_CASE("shipped configs load")
{
    for (const char* name : {"default.json", "sample.json"}) {
        const auto c = load_config(std::filesystem::path(CML_SOURCE_DIR) / "configs" / name);
        CHECK(c.method == "cml");
    }
    const auto sample = load_config(std::filesystem::path(CML_SOURCE_DIR) / "configs" / "sample.json");
    CHECK(std::filesystem::exists(sample.data.file));
}

TEST_CASE("synthetic parameter strings")
{
    const auto d = parse_synthetic("kind=images,classes=6,per_class=4,size=8,spread=0.5");
    CHECK(d.kind == DataKind::images);
    CHECK(d.images.size == 8);
    CHECK(d.images.spread == 0.5);
    CHECK(parse_synthetic("dim=4").blobs.dim == 4);
    CHECK_THROWS_WITH(parse_synthetic("dims=4"), doctest::Contains("--synthetic.dims: unknown key"));
    CHECK_THROWS_WITH(parse_synthetic("dim=four"), doctest::Contains("expected a number"));
}

TEST_CASE("one task, one sequence gives a 1x1 table")
{
    auto c = tiny();
    c.sequence_length = 1;
    c.sequences = 1;
    const auto r = run_experiment(c, 1);
    REQUIRE(r.tables.size() == 1);
    CHECK(r.tables[0].size() == 1);
    CHECK(r.summary.n == 1);
    CHECK(results_json(r)["summary"]["final_average"]["ci_half_width"].is_null());
}

TEST_CASE("every method runs and zero-forgetting methods give horizontal lines")
{
    for (const auto& method : method_names()) {
        const auto r = run_experiment(tiny(method), 2);
        CHECK(r.tables.size() == 3);
        CHECK(r.train_loss.size() == 3);
        if (method == "cml" || method == "cml-no-d" || method == "pn-csm") {
            for (const auto& t : r.tables) {
                for (Index i = 0; i < t.size(); ++i) {
                    for (Index j = i; j < t.size(); ++j) {
                        CHECK(t.at(i, j) == t.at(i, i));
                    }
                }
            }
        }
    }
}

TEST_CASE("same config and seed give byte-identical results")
{
    auto c = tiny("cml");
    c.precision = Precision::float32;
    const auto a = run_experiment(c, 1);
    const auto b = run_experiment(c, 3);
    CHECK(without_wall_time(results_json(a)) == without_wall_time(results_json(b)));
    CHECK(a.checkpoint == b.checkpoint);

    auto other = c;
    other.seed = 2;
    CHECK(without_wall_time(results_json(run_experiment(other, 1))) != without_wall_time(results_json(a)));
}

TEST_CASE("outputs are written")
{
    auto c = tiny("pn-csm");
    const auto dir = std::filesystem::temp_directory_path() / "cml_harness_outputs";
    std::filesystem::remove_all(dir);
    const auto r = run_experiment(c, 1);
    write_outputs(r, dir);
    for (const char* f : {"config.json", "results.json", "tables.csv", "timeline.csv", "checkpoint.bin"}) {
        CHECK(std::filesystem::exists(dir / f));
    }
    const auto results = json::parse(slurp(dir / "results.json"));
    CHECK(results["schema_version"] == kResultSchemaVersion);
    CHECK(results["config_hash"] == config_hash(c));
    CHECK(config_to_json(config_from_json(json::parse(slurp(dir / "config.json")))).dump() ==
          config_to_json(c).dump());
    const auto state = meta::decode_state<double>(io::read_bytes(dir / "checkpoint.bin"));
    CHECK(state.iteration == c.iterations);
    CHECK(slurp(dir / "timeline.csv").starts_with("method,task,time_step,accuracy,ci_half_width\n"));
}

TEST_CASE("ablation table")
{
    const auto dir = std::filesystem::temp_directory_path() / "cml_harness_ablation";
    std::filesystem::remove_all(dir);
    run_ablation(tiny(), 1, dir);
    const auto csv = slurp(dir / "ablation.csv");
    std::istringstream lines(csv);
    std::string header, wo, w, diff;
    std::getline(lines, header);
    std::getline(lines, wo);
    std::getline(lines, w);
    std::getline(lines, diff);
    CHECK(header == "method,T1,T2,T3,average,ci_half_width");
    CHECK(wo.starts_with("CML wo D,"));
    CHECK(w.starts_with("CML w. D,"));
    CHECK(diff.starts_with("w. D - wo D,"));
    CHECK(std::filesystem::exists(dir / "cml" / "results.json"));
    CHECK(std::filesystem::exists(dir / "cml-no-d" / "results.json"));
}
