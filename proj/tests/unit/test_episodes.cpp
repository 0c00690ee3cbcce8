#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "cml/episodes/dataset.hpp"
#include "cml/episodes/sampler.hpp"
#include "cml/episodes/synthetic.hpp"
#include "cml/error.hpp"

using namespace cml;
using namespace cml::episodes;

namespace {

std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("cml_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Dataset blobs(Index classes, Index per_class, std::uint64_t seed = 1)
{
    return synth_blobs({classes, per_class, 8, 0.1, seed});
}

} // namespace

TEST_CASE("split of 100 classes into 64/16/20")
{
    const auto data = blobs(100, 2);
    const auto split = split_meta_sets(data, {64, 16, 20}, 42);
    CHECK(split.train.size() == 64);
    CHECK(split.validation.size() == 16);
    CHECK(split.test.size() == 20);
    std::set<int> all(split.train.begin(), split.train.end());
    all.insert(split.validation.begin(), split.validation.end());
    all.insert(split.test.begin(), split.test.end());
    CHECK(all.size() == 100);
}

TEST_CASE("split edge cases")
{
    const auto data = blobs(3, 2);
    const auto split = split_meta_sets(data, {3, 0, 0}, 1);
    CHECK(std::set<int>(split.train.begin(), split.train.end()) == std::set<int>{0, 1, 2});
    CHECK(split.validation.empty());
    CHECK(split.test.empty());
    CHECK_THROWS_WITH(split_meta_sets(data, {2, 1, 1}, 1), doctest::Contains("insufficient classes"));
}

TEST_CASE("split disjointness holds for every seed")
{
    const auto data = blobs(30, 2);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto s = split_meta_sets(data, {12, 8, 10}, seed);
        std::set<int> seen;
        for (const auto* part : {&s.train, &s.validation, &s.test}) {
            for (int c : *part) {
                CHECK(seen.insert(c).second);
            }
        }
    }
}

TEST_CASE("5-way 1-shot episode with 15 queries")
{
    const auto data = blobs(20, 20);
    const TaskSampler sampler(data, data.classes(), {5, 1, 15}, 7);
    const auto task = sampler.sample(0);
    CHECK(task.support.size() == 5);
    CHECK(task.query.size() == 75);
    CHECK(task.labels.size() == 5);
    CHECK(task.query_targets().size() == 75);
}

TEST_CASE("N equal to the pool size uses the whole pool")
{
    const auto data = blobs(5, 20);
    const TaskSampler sampler(data, data.classes(), {5, 2, 3}, 7);
    bool reordered = false;
    for (std::uint64_t p = 0; p < 10; ++p) {
        const auto task = sampler.sample(p);
        CHECK(std::set<int>(task.labels.begin(), task.labels.end()) == std::set<int>{0, 1, 2, 3, 4});
        reordered = reordered || task.labels != std::vector<int>{0, 1, 2, 3, 4};
    }
    CHECK(reordered);
}

TEST_CASE("sampler is deterministic per seed and position")
{
    const auto data = blobs(20, 20);
    const TaskSampler a(data, data.classes(), {5, 1, 15}, 9);
    const TaskSampler b(data, data.classes(), {5, 1, 15}, 9);
    for (std::uint64_t p : {0u, 3u, 1000u}) {
        const auto ta = a.sample(p);
        const auto tb = b.sample(p);
        CHECK(ta.labels == tb.labels);
        CHECK(ta.support == tb.support);
        CHECK(ta.query == tb.query);
    }
    CHECK(a.sample(0).support != a.sample(1).support);
}

TEST_CASE("every episode is balanced with disjoint support and query")
{
    const auto data = blobs(12, 12);
    const TaskSampler sampler(data, data.classes(), {4, 3, 5}, 11);
    for (std::uint64_t p = 0; p < 200; ++p) {
        const auto task = sampler.sample(p);
        REQUIRE(task.support.size() == 12);
        REQUIRE(task.query.size() == 20);
        for (std::size_t l = 0; l < task.labels.size(); ++l) {
            for (Index k = 0; k < 3; ++k) {
                CHECK(data.labels()[static_cast<std::size_t>(task.support[l * 3 + static_cast<std::size_t>(k)])] == task.labels[l]);
            }
            for (Index k = 0; k < 5; ++k) {
                CHECK(data.labels()[static_cast<std::size_t>(task.query[l * 5 + static_cast<std::size_t>(k)])] == task.labels[l]);
            }
        }
        std::set<Index> support(task.support.begin(), task.support.end());
        CHECK(support.size() == task.support.size());
        for (Index q : task.query) {
            CHECK(support.count(q) == 0);
        }
    }
}

TEST_CASE("sampler insufficiency errors name the bound")
{
    const auto data = blobs(4, 5);
    CHECK_THROWS_WITH(TaskSampler(data, data.classes(), {5, 1, 1}, 1), doctest::Contains("need N=5"));
    CHECK_THROWS_WITH(TaskSampler(data, data.classes(), {2, 1, 15}, 1), doctest::Contains("need K+Q=16"));
}

TEST_CASE("sequences: ids and disjoint option")
{
    const auto data = blobs(20, 20);
    const TaskSampler sampler(data, data.classes(), {5, 1, 3}, 5);
    const auto seq = sampler.sample_sequence(2, 4, true);
    REQUIRE(seq.size() == 4);
    std::set<int> used;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        CHECK(seq[t].id == 8 + t);
        for (int l : seq[t].labels) {
            CHECK(used.insert(l).second);
        }
    }
    CHECK_THROWS(sampler.sample_sequence(0, 5, true));
    CHECK(sampler.sample_sequence(0, 5, false).size() == 5);
}

TEST_CASE("near-zero spread blobs are separable by the generating means")
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    ad::Matrix<double> means(10, 16);
    for (Index i = 0; i < means.size(); ++i) {
        means.data()[i] = gauss(rng);
    }
    means.rowwise().normalize();
    const auto held_out = synth_blobs_from_means(means, 50, 0.01, 99);
    Index correct = 0;
    for (Index i = 0; i < held_out.size(); ++i) {
        Index best = 0;
        (means.rowwise() - held_out.features().row(i)).rowwise().squaredNorm().minCoeff(&best);
        correct += static_cast<int>(best) == held_out.labels()[static_cast<std::size_t>(i)];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(held_out.size()) >= 0.99);
}

TEST_CASE("synthetic generator rejects invalid parameters")
{
    ad::Matrix<double> same(2, 3);
    same << 1, 0, 0, 1, 0, 0;
    CHECK_THROWS_WITH(synth_blobs_from_means(same, 5, 0.1, 1), doctest::Contains("identical means"));
    CHECK_THROWS(synth_blobs({5, 0, 4, 0.1, 1}));
    CHECK_THROWS(synth_blobs({1, 5, 4, 0.1, 1}));
    CHECK_THROWS(synth_blobs({5, 5, 4, 0.0, 1}));
}

TEST_CASE("synthetic data is deterministic per seed")
{
    CHECK(synth_blobs({5, 4, 3, 0.2, 8}) == synth_blobs({5, 4, 3, 0.2, 8}));
    CHECK_FALSE(synth_blobs({5, 4, 3, 0.2, 8}) == synth_blobs({5, 4, 3, 0.2, 9}));
    const auto images = synth_images({4, 3, 2, 6, 0.1, 1});
    CHECK(images.input_shape() == std::vector<Index>{2, 6, 6});
    CHECK(images.dim() == 72);
    CHECK(images == synth_images({4, 3, 2, 6, 0.1, 1}));
}

TEST_CASE("load a two-row CSV")
{
    const auto dir = scratch_dir("load2");
    write_file(dir / "d.csv", "label,f0,f1\n3,0.5,-1\n7,2e-3,4\n");
    const auto d = load_dataset(dir / "d.csv");
    CHECK(d.size() == 2);
    CHECK(d.dim() == 2);
    CHECK(d.labels() == std::vector<int>{3, 7});
    CHECK(d.features()(1, 0) == 2e-3);
    CHECK(d.input_shape() == std::vector<Index>{2});
}

TEST_CASE("CSV parse errors carry the line number")
{
    const auto dir = scratch_dir("parse");
    write_file(dir / "arity.csv", "label,f0,f1\n0,1,2\n1,2\n");
    CHECK_THROWS_WITH(load_dataset(dir / "arity.csv"), doctest::Contains("line 3"));
    write_file(dir / "nan.csv", "label,f0\n0,abc\n");
    CHECK_THROWS_WITH(load_dataset(dir / "nan.csv"), doctest::Contains("line 2"));
    write_file(dir / "empty.csv", "");
    CHECK_THROWS_WITH(load_dataset(dir / "empty.csv"), doctest::Contains("empty file"));
    write_file(dir / "header.csv", "label,f0\n");
    CHECK_THROWS_WITH(load_dataset(dir / "header.csv"), doctest::Contains("empty file"));
    write_file(dir / "badlabel.csv", "label,f0\n1.5,2\n");
    CHECK_THROWS_AS(load_dataset(dir / "badlabel.csv"), ParseError);
}

TEST_CASE("sidecar metadata is honored and validated")
{
    const auto dir = scratch_dir("sidecar");
    const auto images = synth_images({3, 2, 1, 4, 0.1, 5});
    save_dataset(images, dir / "img.csv");
    const auto back = load_dataset(dir / "img.csv");
    CHECK(back == images);
    write_file(dir / "img.meta.json", R"({"format_version": 1, "input_shape": [16], "num_classes": 4})");
    CHECK_THROWS_WITH(load_dataset(dir / "img.csv"), doctest::Contains("num_classes"));
    write_file(dir / "img.meta.json", R"({"format_version": 2, "input_shape": [16], "num_classes": 3})");
    CHECK_THROWS_WITH(load_dataset(dir / "img.csv"), doctest::Contains("format_version"));
}

TEST_CASE("bundled sample file round-trips byte for byte")
{
    const std::filesystem::path sample = CML_SOURCE_DIR "/data/sample.csv";
    REQUIRE(std::filesystem::exists(sample));
    const auto dir = scratch_dir("roundtrip");
    save_dataset(load_dataset(sample), dir / "sample.csv");
    CHECK(read_file(dir / "sample.csv") == read_file(sample));
    CHECK(read_file(dir / "sample.meta.json") == read_file(sidecar_path(sample)));
}
