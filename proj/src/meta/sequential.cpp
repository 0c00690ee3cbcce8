#include "cml/meta/sequential.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cml/error.hpp"
#include "cml/io.hpp"

namespace cml::meta {

AccuracyTable::AccuracyTable(Index tasks)
  : n_(tasks), cells_(static_cast<std::size_t>(tasks * tasks), std::numeric_limits<double>::quiet_NaN())
{
    if (tasks < 1) {
        throw InvalidArgument("accuracy table needs at least one task");
    }
}

double AccuracyTable::at(Index i, Index j) const
{
    if (!present(i, j) || i < 0) {
        throw InvalidArgument("accuracy table: no entry (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    }
    return cells_[static_cast<std::size_t>(i * n_ + j)];
}

void AccuracyTable::set(Index i, Index j, double accuracy)
{
    if (!present(i, j) || i < 0) {
        throw InvalidArgument("accuracy table: task " + std::to_string(i) + " has not arrived at step " +
                              std::to_string(j));
    }
    cells_[static_cast<std::size_t>(i * n_ + j)] = accuracy;
}

double AccuracyTable::final_average() const
{
    double total = 0.0;
    for (Index i = 0; i < n_; ++i) {
        total += at(i, n_ - 1);
    }
    return total / static_cast<double>(n_);
}

bool operator==(const AccuracyTable& a, const AccuracyTable& b)
{
    if (a.n_ != b.n_) {
        return false;
    }
    for (Index i = 0; i < a.n_; ++i) {
        for (Index j = i; j < a.n_; ++j) {
            if (a.at(i, j) != b.at(i, j)) {
                return false;
            }
        }
    }
    return true;
}

template <typename S>
AccuracyTable meta_test_sequential(const MetaState<S>& state, const CmlConfig& config,
                                   const std::vector<Episode<S>>& sequence, ClassStorage<S>& csm)
{
    if (sequence.empty()) {
        throw InvalidArgument("meta-test: empty task sequence");
    }
    const auto n = static_cast<Index>(sequence.size());
    AccuracyTable table(n);
    const auto initial = state.theta_s;
    for (Index j = 0; j < n; ++j) {
        const auto& task = sequence[static_cast<std::size_t>(j)];
        if (!(state.theta_s == initial)) {
            throw Error("internal", "student initialization changed during meta-testing");
        }
        csm.store(task.id, fast_learn_values(state, config, task).v);
        for (Index i = 0; i <= j; ++i) {
            const auto& old = sequence[static_cast<std::size_t>(i)];
            table.set(i, j, query_accuracy(config, old, csm.retrieve(old.id)));
        }
    }
    return table;
}

namespace {

constexpr char kStateMagic[8] = {'C', 'M', 'L', 'S', 'T', 'A', 'T', 'E'};
constexpr std::uint32_t kStateVersion = 1;

template <typename S>
void put_params(io::ByteWriter& w, const ad::ParameterSet<S>& params)
{
    w.put(static_cast<std::uint32_t>(params.size()));
    for (const auto& e : params) {
        w.put_string(e.name);
        w.put(static_cast<std::uint64_t>(e.value.rows()));
        w.put(static_cast<std::uint64_t>(e.value.cols()));
        w.put_bytes(e.value.data(), static_cast<std::size_t>(e.value.size()) * sizeof(S));
    }
}

template <typename S>
ad::ParameterSet<S> get_params(io::ByteReader& r)
{
    ad::ParameterSet<S> params;
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name = r.get_string();
        const auto rows = r.get<std::uint64_t>();
        const auto cols = r.get<std::uint64_t>();
        if (rows > (1u << 28) || cols > (1u << 28) || rows * cols > (1u << 28)) {
            throw Error("corrupt-data", "implausible tensor shape in checkpoint");
        }
        Matrix<S> m(static_cast<Index>(rows), static_cast<Index>(cols));
        r.get_bytes(m.data(), static_cast<std::size_t>(rows * cols) * sizeof(S));
        params.add(std::move(name), std::move(m));
    }
    return params;
}

} // namespace

template <typename S>
std::vector<std::uint8_t> encode_state(const MetaState<S>& state)
{
    io::ByteWriter w;
    w.put_bytes(kStateMagic, sizeof kStateMagic);
    w.put(kStateVersion);
    w.put(static_cast<std::uint8_t>(sizeof(S)));
    w.put(state.alpha_s);
    w.put(state.alpha_d);
    w.put(state.beta_s);
    w.put(state.beta_d);
    w.put(static_cast<std::uint32_t>(state.inner_steps));
    w.put(static_cast<std::uint64_t>(state.iteration));
    put_params(w, state.theta_s);
    put_params(w, state.theta_d);
    return w.take();
}

template <typename S>
MetaState<S> decode_state(std::span<const std::uint8_t> bytes)
{
    io::ByteReader r(bytes);
    char magic[8];
    r.get_bytes(magic, sizeof magic);
    if (std::string(magic, 8) != std::string(kStateMagic, 8)) {
        throw Error("corrupt-data", "not a checkpoint file");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kStateVersion) {
        throw Error("corrupt-data", "unsupported checkpoint version " + std::to_string(version));
    }
    if (r.get<std::uint8_t>() != sizeof(S)) {
        throw Error("corrupt-data", "checkpoint precision does not match");
    }
    MetaState<S> state;
    state.alpha_s = r.get<double>();
    state.alpha_d = r.get<double>();
    state.beta_s = r.get<double>();
    state.beta_d = r.get<double>();
    state.inner_steps = static_cast<int>(r.get<std::uint32_t>());
    state.iteration = r.get<std::uint64_t>();
    state.theta_s = get_params<S>(r);
    state.theta_d = get_params<S>(r);
    if (!r.done()) {
        throw Error("corrupt-data", "trailing bytes in checkpoint");
    }
    return state;
}

template <typename S>
void save_checkpoint(const MetaState<S>& state, const std::filesystem::path& path)
{
    io::atomic_write(path, std::span<const std::uint8_t>(encode_state(state)));
}

template <typename S>
MetaState<S> load_checkpoint(const std::filesystem::path& path)
{
    return decode_state<S>(io::read_bytes(path));
}

#define CML_INSTANTIATE_SEQUENTIAL(S)                                                                              \
    template AccuracyTable meta_test_sequential<S>(const MetaState<S>&, const CmlConfig&,                           \
                                                   const std::vector<Episode<S>>&, ClassStorage<S>&);               \
    template std::vector<std::uint8_t> encode_state<S>(const MetaState<S>&);                                        \
    template MetaState<S> decode_state<S>(std::span<const std::uint8_t>);                                           \
    template void save_checkpoint<S>(const MetaState<S>&, const std::filesystem::path&);                            \
    template MetaState<S> load_checkpoint<S>(const std::filesystem::path&);

CML_INSTANTIATE_SEQUENTIAL(float)
CML_INSTANTIATE_SEQUENTIAL(double)

} // namespace cml::meta
