#include "cml/episodes/sampler.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "cml/error.hpp"

namespace cml::episodes {

MetaSplit split_meta_sets(const Dataset& dataset, std::array<Index, 3> counts, std::uint64_t seed)
{
    auto classes = dataset.classes();
    const Index needed = counts[0] + counts[1] + counts[2];
    if (counts[0] < 0 || counts[1] < 0 || counts[2] < 0) {
        throw InvalidArgument("split: negative class count");
    }
    if (needed > static_cast<Index>(classes.size())) {
        throw InvalidArgument("split: insufficient classes: need " + std::to_string(needed) + ", dataset has " +
                              std::to_string(classes.size()));
    }
    std::mt19937_64 rng(seed);
    std::shuffle(classes.begin(), classes.end(), rng);
    MetaSplit split;
    auto it = classes.begin();
    split.train.assign(it, it + counts[0]);
    it += counts[0];
    split.validation.assign(it, it + counts[1]);
    it += counts[1];
    split.test.assign(it, it + counts[2]);
    return split;
}

namespace {

std::vector<int> targets(const Task& task, Index per_class)
{
    std::vector<int> out;
    out.reserve(task.labels.size() * static_cast<std::size_t>(per_class));
    for (std::size_t l = 0; l < task.labels.size(); ++l) {
        out.insert(out.end(), static_cast<std::size_t>(per_class), static_cast<int>(l));
    }
    return out;
}

} // namespace

std::vector<int> Task::support_targets() const
{
    return targets(*this, shape.shots);
}

std::vector<int> Task::query_targets() const
{
    return targets(*this, shape.queries);
}

TaskSampler::TaskSampler(const Dataset& dataset, std::vector<int> classes, EpisodeShape shape, std::uint64_t seed)
  : dataset_(&dataset), classes_(std::move(classes)), shape_(shape), seed_(seed)
{
    if (shape_.ways < 1 || shape_.shots < 1 || shape_.queries < 1) {
        throw InvalidArgument("sampler: ways, shots and queries must be >= 1");
    }
    if (static_cast<Index>(classes_.size()) < shape_.ways) {
        throw InvalidArgument("sampler: class pool has " + std::to_string(classes_.size()) + " classes, need N=" +
                              std::to_string(shape_.ways));
    }
    if (std::set<int>(classes_.begin(), classes_.end()).size() != classes_.size()) {
        throw InvalidArgument("sampler: duplicate class in pool");
    }
    const Index per_class = shape_.shots + shape_.queries;
    for (int c : classes_) {
        const auto n = static_cast<Index>(dataset.examples_of(c).size());
        if (n < per_class) {
            throw InvalidArgument("sampler: class " + std::to_string(c) + " has " + std::to_string(n) +
                                  " examples, need K+Q=" + std::to_string(per_class));
        }
    }
}

std::mt19937_64 TaskSampler::stream(std::uint64_t position, std::uint64_t tag) const
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(position), static_cast<std::uint32_t>(position >> 32),
                      static_cast<std::uint32_t>(tag)};
    return std::mt19937_64(seq);
}

Task TaskSampler::sample_with_labels(std::mt19937_64& rng, std::uint64_t id, std::vector<int> labels) const
{
    Task task;
    task.id = id;
    task.shape = shape_;
    task.labels = std::move(labels);
    task.support.reserve(task.labels.size() * static_cast<std::size_t>(shape_.shots));
    task.query.reserve(task.labels.size() * static_cast<std::size_t>(shape_.queries));
    std::vector<Index> queries;
    for (int label : task.labels) {
        auto pool = dataset_->examples_of(label);
        // Partial Fisher-Yates: the first K+Q entries are a uniform sample
        // without replacement.
        const Index take = shape_.shots + shape_.queries;
        for (Index i = 0; i < take; ++i) {
            std::uniform_int_distribution<Index> pick(i, static_cast<Index>(pool.size()) - 1);
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
        }
        task.support.insert(task.support.end(), pool.begin(), pool.begin() + shape_.shots);
        task.query.insert(task.query.end(), pool.begin() + shape_.shots, pool.begin() + take);
    }
    return task;
}

Task TaskSampler::sample(std::uint64_t position) const
{
    auto rng = stream(position, 0);
    auto pool = classes_;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(static_cast<std::size_t>(shape_.ways));
    return sample_with_labels(rng, position, std::move(pool));
}

std::vector<Task> TaskSampler::sample_sequence(std::uint64_t position, Index length, bool disjoint) const
{
    if (length < 1) {
        throw InvalidArgument("sampler: sequence length must be >= 1");
    }
    if (disjoint && length * shape_.ways > static_cast<Index>(classes_.size())) {
        throw InvalidArgument("sampler: disjoint sequence needs " + std::to_string(length * shape_.ways) +
                              " classes, pool has " + std::to_string(classes_.size()));
    }
    auto rng = stream(position, 1);
    std::vector<Task> tasks;
    auto pool = classes_;
    if (disjoint) {
        std::shuffle(pool.begin(), pool.end(), rng);
    }
    const auto base = position * static_cast<std::uint64_t>(length);
    for (Index t = 0; t < length; ++t) {
        std::vector<int> labels;
        if (disjoint) {
            labels.assign(pool.begin() + t * shape_.ways, pool.begin() + (t + 1) * shape_.ways);
        } else {
            auto shuffled = classes_;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            labels.assign(shuffled.begin(), shuffled.begin() + shape_.ways);
        }
        tasks.push_back(sample_with_labels(rng, base + static_cast<std::uint64_t>(t), std::move(labels)));
    }
    return tasks;
}

} // namespace cml::episodes
