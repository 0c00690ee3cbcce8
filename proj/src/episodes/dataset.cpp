#include "cml/episodes/dataset.hpp"

#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cml/error.hpp"

namespace cml::episodes {

Dataset::Dataset(Features features, std::vector<int> labels, std::vector<Index> input_shape)
  : features_(std::move(features)), labels_(std::move(labels)), input_shape_(std::move(input_shape))
{
    if (static_cast<Index>(labels_.size()) != features_.rows()) {
        throw InvalidArgument("dataset: " + std::to_string(labels_.size()) + " labels for " +
                              std::to_string(features_.rows()) + " rows");
    }
    if (input_shape_.empty()) {
        input_shape_ = {features_.cols()};
    }
    const Index product = std::accumulate(input_shape_.begin(), input_shape_.end(), Index(1), std::multiplies<>());
    if (product != features_.cols()) {
        throw InvalidArgument("dataset: input shape product " + std::to_string(product) + " != feature dimension " +
                              std::to_string(features_.cols()));
    }
    if (!features_.allFinite()) {
        throw InvalidArgument("dataset: non-finite feature value");
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] < 0) {
            throw InvalidArgument("dataset: negative label " + std::to_string(labels_[i]) + " at row " +
                                  std::to_string(i));
        }
        index_[labels_[i]].push_back(static_cast<Index>(i));
    }
}

std::vector<int> Dataset::classes() const
{
    std::vector<int> out;
    out.reserve(index_.size());
    for (const auto& [label, rows] : index_) {
        out.push_back(label);
    }
    return out;
}

const std::vector<Index>& Dataset::examples_of(int label) const
{
    auto it = index_.find(label);
    if (it == index_.end()) {
        throw InvalidArgument("dataset: unknown class " + std::to_string(label));
    }
    return it->second;
}

Index Dataset::min_class_count() const
{
    Index m = 0;
    bool first = true;
    for (const auto& [label, rows] : index_) {
        const auto n = static_cast<Index>(rows.size());
        m = first ? n : std::min(m, n);
        first = false;
    }
    return m;
}

Dataset::Features Dataset::rows(std::span<const Index> indices) const
{
    Features out(static_cast<Index>(indices.size()), dim());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.row(static_cast<Index>(i)) = features_.row(indices[i]);
    }
    return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv)
{
    auto p = csv;
    p.replace_extension(".meta.json");
    return p;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out)
{
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && first != last;
}

std::string format_number(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

} // namespace

Dataset load_dataset(const std::filesystem::path& csv)
{
    std::ifstream in(csv);
    if (!in) {
        throw Error("io-error", "cannot open dataset file " + csv.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(1, "empty file");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    const auto header = split_commas(line);
    if (header.size() < 2 || header[0] != "label") {
        throw ParseError(1, "header must be label,f0,...,f{d-1}");
    }
    for (std::size_t j = 1; j < header.size(); ++j) {
        if (header[j] != "f" + std::to_string(j - 1)) {
            throw ParseError(1, "expected column f" + std::to_string(j - 1) + ", got '" + std::string(header[j]) + "'");
        }
    }
    const auto dim = static_cast<Index>(header.size() - 1);

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_commas(line);
        if (static_cast<Index>(fields.size()) != dim + 1) {
            throw ParseError(line_no, "expected " + std::to_string(dim + 1) + " columns, got " +
                                          std::to_string(fields.size()));
        }
        int label = 0;
        if (!parse_number(fields[0], label)) {
            throw ParseError(line_no, "label '" + std::string(fields[0]) + "' is not an integer");
        }
        labels.push_back(label);
        for (Index j = 1; j <= dim; ++j) {
            double v = 0.0;
            if (!parse_number(fields[static_cast<std::size_t>(j)], v)) {
                throw ParseError(line_no, "column f" + std::to_string(j - 1) + " value '" +
                                              std::string(fields[static_cast<std::size_t>(j)]) + "' is not numeric");
            }
            values.push_back(v);
        }
    }
    if (labels.empty()) {
        throw ParseError(line_no, "empty file: no examples after the header");
    }
    Dataset::Features features(static_cast<Index>(labels.size()), dim);
    std::copy(values.begin(), values.end(), features.data());

    std::vector<Index> shape;
    const auto meta_path = sidecar_path(csv);
    std::size_t expected_classes = 0;
    if (std::filesystem::exists(meta_path)) {
        std::ifstream meta_in(meta_path);
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(meta_in);
        } catch (const nlohmann::json::exception& e) {
            throw Error("io-error", meta_path.string() + ": " + e.what());
        }
        if (meta.value("format_version", 0) != kDatasetFormatVersion) {
            throw Error("io-error", meta_path.string() + ": unsupported format_version");
        }
        shape = meta.at("input_shape").get<std::vector<Index>>();
        expected_classes = meta.at("num_classes").get<std::size_t>();
    }
    Dataset dataset(std::move(features), std::move(labels), std::move(shape));
    if (expected_classes != 0 && static_cast<std::size_t>(dataset.num_classes()) != expected_classes) {
        throw Error("io-error", meta_path.string() + ": num_classes " + std::to_string(expected_classes) +
                                    " but the data has " + std::to_string(dataset.num_classes()));
    }
    return dataset;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& csv)
{
    if (csv.has_parent_path()) {
        std::filesystem::create_directories(csv.parent_path());
    }
    std::ofstream out(csv, std::ios::binary);
    if (!out) {
        throw Error("io-error", "cannot write " + csv.string());
    }
    out << "label";
    for (Index j = 0; j < dataset.dim(); ++j) {
        out << ",f" << j;
    }
    out << '\n';
    for (Index i = 0; i < dataset.size(); ++i) {
        out << dataset.labels()[static_cast<std::size_t>(i)];
        for (Index j = 0; j < dataset.dim(); ++j) {
            out << ',' << format_number(dataset.features()(i, j));
        }
        out << '\n';
    }

    nlohmann::json meta;
    meta["format_version"] = kDatasetFormatVersion;
    meta["input_shape"] = dataset.input_shape();
    meta["num_classes"] = dataset.num_classes();
    std::ofstream meta_out(sidecar_path(csv), std::ios::binary);
    meta_out << meta.dump(2) << '\n';
}

} // namespace cml::episodes
