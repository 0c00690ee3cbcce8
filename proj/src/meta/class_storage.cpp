#include "cml/meta/class_storage.hpp"

#include <mutex>
#include <set>
#include <string>

#include "cml/error.hpp"
#include "cml/io.hpp"

namespace cml::meta {

template <typename S>
void AllClassMatrix<S>::validate() const
{
    if (vectors.rows() < 2) {
        throw InvalidArgument("all-class matrix needs N >= 2, got " + std::to_string(vectors.rows()));
    }
    if (static_cast<Index>(labels.size()) != vectors.rows()) {
        throw ShapeError("all-class matrix: " + std::to_string(vectors.rows()) + " rows vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (std::set<int>(labels.begin(), labels.end()).size() != labels.size()) {
        throw InvalidArgument("all-class matrix: duplicate label");
    }
    if (!vectors.allFinite()) {
        throw InvalidArgument("all-class matrix: non-finite entry");
    }
    for (Index r = 0; r < vectors.rows(); ++r) {
        if (vectors.row(r).isZero(0)) {
            throw DegenerateVector("all-class matrix: zero class vector for label " +
                                   std::to_string(labels[static_cast<std::size_t>(r)]));
        }
    }
}

template <typename S>
Var<S> class_vectors(const Var<S>& features, const std::vector<int>& targets, Index ways)
{
    if (static_cast<Index>(targets.size()) != features.rows()) {
        throw ShapeError("class vectors: " + std::to_string(features.rows()) + " feature rows vs " +
                         std::to_string(targets.size()) + " targets");
    }
    if (ways < 1) {
        throw InvalidArgument("class vectors: ways must be >= 1");
    }
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(ways));
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] < 0 || targets[i] >= ways) {
            throw InvalidArgument("class vectors: target " + std::to_string(targets[i]) + " outside [0, " +
                                  std::to_string(ways) + ")");
        }
        members[static_cast<std::size_t>(targets[i])].push_back(static_cast<Index>(i));
    }
    const auto shots = members[0].size();
    for (Index l = 0; l < ways; ++l) {
        const auto& m = members[static_cast<std::size_t>(l)];
        if (m.empty()) {
            throw InvalidArgument("class vectors: class " + std::to_string(l) + " has no support example");
        }
        if (m.size() != shots) {
            throw InvalidArgument("class vectors: unbalanced support set (" + std::to_string(m.size()) + " vs " +
                                  std::to_string(shots) + " examples)");
        }
    }
    if (shots == 1) {
        std::vector<Index> order;
        for (const auto& m : members) {
            order.push_back(m[0]);
        }
        return ad::select_rows(features, order);
    }
    Matrix<S> avg = Matrix<S>::Zero(ways, features.rows());
    const S w = S(1) / static_cast<S>(shots);
    for (Index l = 0; l < ways; ++l) {
        for (Index i : members[static_cast<std::size_t>(l)]) {
            avg(l, i) = w;
        }
    }
    return ad::matmul(features.graph()->constant(avg), features);
}

template <typename S>
ClassStorage<S>::ClassStorage(const ClassStorage& other)
{
    std::shared_lock lock(other.mutex_);
    entries_ = other.entries_;
    registry_ = other.registry_;
}

template <typename S>
ClassStorage<S>& ClassStorage<S>::operator=(const ClassStorage& other)
{
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        entries_ = other.entries_;
        registry_ = other.registry_;
    }
    return *this;
}

template <typename S>
void ClassStorage<S>::store(std::uint64_t task_id, const AllClassMatrix<S>& v)
{
    v.validate();
    std::unique_lock lock(mutex_);
    if (registry_.contains(task_id)) {
        throw InvalidArgument("class storage: duplicate task id " + std::to_string(task_id));
    }
    registry_.emplace(task_id, v.labels);
    for (std::size_t l = 0; l < v.labels.size(); ++l) {
        entries_.emplace(std::pair{task_id, v.labels[l]}, v.vectors.row(static_cast<Index>(l)));
    }
}

template <typename S>
AllClassMatrix<S> ClassStorage<S>::retrieve(std::uint64_t task_id) const
{
    std::shared_lock lock(mutex_);
    auto it = registry_.find(task_id);
    if (it == registry_.end()) {
        throw Error("unknown-task", "class storage has no task " + std::to_string(task_id));
    }
    AllClassMatrix<S> out;
    out.labels = it->second;
    const auto& first = entries_.at({task_id, out.labels[0]});
    out.vectors.resize(static_cast<Index>(out.labels.size()), first.cols());
    for (std::size_t l = 0; l < out.labels.size(); ++l) {
        out.vectors.row(static_cast<Index>(l)) = entries_.at({task_id, out.labels[l]});
    }
    return out;
}

template <typename S>
bool ClassStorage<S>::contains(std::uint64_t task_id) const
{
    std::shared_lock lock(mutex_);
    return registry_.contains(task_id);
}

template <typename S>
std::size_t ClassStorage<S>::task_count() const
{
    std::shared_lock lock(mutex_);
    return registry_.size();
}

namespace {

template <typename S>
void write_task(io::ByteWriter& w, std::uint64_t id, const AllClassMatrix<S>& v)
{
    w.put(id);
    w.put(static_cast<std::uint32_t>(v.vectors.rows()));
    w.put(static_cast<std::uint32_t>(v.vectors.cols()));
    for (int label : v.labels) {
        w.put(static_cast<std::int32_t>(label));
    }
    w.put_bytes(v.vectors.data(), static_cast<std::size_t>(v.vectors.size()) * sizeof(S));
}

constexpr char kStorageMagic[8] = {'C', 'M', 'L', 'C', 'S', 'M', '0', '1'};

} // namespace

template <typename S>
std::vector<std::uint8_t> ClassStorage<S>::serialize_task(std::uint64_t task_id) const
{
    io::ByteWriter w;
    write_task(w, task_id, retrieve(task_id));
    return w.take();
}

template <typename S>
std::vector<std::uint8_t> ClassStorage<S>::serialize() const
{
    std::shared_lock lock(mutex_);
    io::ByteWriter w;
    w.put_bytes(kStorageMagic, sizeof kStorageMagic);
    w.put(static_cast<std::uint8_t>(sizeof(S)));
    w.put(static_cast<std::uint64_t>(registry_.size()));
    for (const auto& [id, labels] : registry_) {
        AllClassMatrix<S> v;
        v.labels = labels;
        v.vectors.resize(static_cast<Index>(labels.size()), entries_.at({id, labels[0]}).cols());
        for (std::size_t l = 0; l < labels.size(); ++l) {
            v.vectors.row(static_cast<Index>(l)) = entries_.at({id, labels[l]});
        }
        write_task(w, id, v);
    }
    return w.take();
}

template <typename S>
ClassStorage<S> ClassStorage<S>::deserialize(std::span<const std::uint8_t> bytes)
{
    io::ByteReader r(bytes);
    char magic[8];
    r.get_bytes(magic, sizeof magic);
    if (std::string(magic, 8) != std::string(kStorageMagic, 8)) {
        throw Error("corrupt-data", "not a class storage image");
    }
    if (r.get<std::uint8_t>() != sizeof(S)) {
        throw Error("corrupt-data", "class storage scalar size mismatch");
    }
    ClassStorage out;
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t t = 0; t < count; ++t) {
        const auto id = r.get<std::uint64_t>();
        const auto n = r.get<std::uint32_t>();
        const auto z = r.get<std::uint32_t>();
        AllClassMatrix<S> v;
        for (std::uint32_t l = 0; l < n; ++l) {
            v.labels.push_back(r.get<std::int32_t>());
        }
        v.vectors.resize(n, z);
        r.get_bytes(v.vectors.data(), static_cast<std::size_t>(n) * z * sizeof(S));
        out.store(id, v);
    }
    if (!r.done()) {
        throw Error("corrupt-data", "trailing bytes after class storage image");
    }
    return out;
}

#define CML_INSTANTIATE_STORAGE(S)                                                                                 \
    template struct AllClassMatrix<S>;                                                                              \
    template Var<S> class_vectors<S>(const Var<S>&, const std::vector<int>&, Index);                                \
    template class ClassStorage<S>;

CML_INSTANTIATE_STORAGE(float)
CML_INSTANTIATE_STORAGE(double)

} // namespace cml::meta
