#include "cml/harness/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "cml/error.hpp"

namespace cml::harness {

using nlohmann::json;

std::string to_string(DataKind kind)
{
    switch (kind) {
    case DataKind::blobs: return "blobs";
    case DataKind::images: return "images";
    case DataKind::file: return "file";
    }
    return "?";
}

std::string to_string(Precision precision)
{
    return precision == Precision::float32 ? "float32" : "float64";
}

namespace {

std::string join(const std::string& path, const std::string& key)
{
    return path.empty() ? key : path + "." + key;
}

// Reads the keys of one JSON object; whatever is left unread at finish()
// is an unknown key.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) {
            throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string path(const std::string& key) const { return join(path_, key); }

    const json* child(const std::string& key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(const std::string& key, double& out)
    {
        if (const auto* v = child(key)) {
            if (!v->is_number()) {
                throw ConfigError(path(key), "expected a number");
            }
            out = v->get<double>();
        }
    }

    template <typename Int>
    void integer(const std::string& key, Int& out)
    {
        if (const auto* v = child(key)) {
            if (!v->is_number_integer()) {
                throw ConfigError(path(key), "expected an integer");
            }
            if constexpr (std::is_unsigned_v<Int>) {
                if (v->is_number_unsigned() || v->get<std::int64_t>() >= 0) {
                    out = v->get<Int>();
                    return;
                }
                throw ConfigError(path(key), "expected a non-negative integer");
            } else {
                out = v->get<Int>();
            }
        }
    }

    void boolean(const std::string& key, bool& out)
    {
        if (const auto* v = child(key)) {
            if (!v->is_boolean()) {
                throw ConfigError(path(key), "expected true or false");
            }
            out = v->get<bool>();
        }
    }

    void string(const std::string& key, std::string& out)
    {
        if (const auto* v = child(key)) {
            if (!v->is_string()) {
                throw ConfigError(path(key), "expected a string");
            }
            out = v->get<std::string>();
        }
    }

    void widths(const std::string& key, std::vector<Index>& out)
    {
        if (const auto* v = child(key)) {
            if (!v->is_array()) {
                throw ConfigError(path(key), "expected an array of integers");
            }
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                const auto& e = (*v)[i];
                if (!e.is_number_integer() || e.get<std::int64_t>() < 1) {
                    throw ConfigError(path(key) + "[" + std::to_string(i) + "]", "expected a positive integer");
                }
                out.push_back(e.get<Index>());
            }
        }
    }

    void finish() const
    {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError(path(key), "unknown key");
            }
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_blobs(ObjectReader& r, episodes::BlobConfig& b)
{
    r.integer("classes", b.classes);
    r.integer("per_class", b.per_class);
    r.integer("dim", b.dim);
    r.number("spread", b.spread);
    r.integer("seed", b.seed);
}

void read_images(ObjectReader& r, episodes::ImageConfig& c)
{
    r.integer("classes", c.classes);
    r.integer("per_class", c.per_class);
    r.integer("channels", c.channels);
    r.integer("size", c.size);
    r.number("spread", c.spread);
    r.integer("seed", c.seed);
}

void read_synthetic(const json& j, const std::string& path, DataSource& d)
{
    ObjectReader sr(j, path);
    std::string kind = "blobs";
    sr.string("kind", kind);
    if (kind == "blobs") {
        d.kind = DataKind::blobs;
        read_blobs(sr, d.blobs);
    } else if (kind == "images") {
        d.kind = DataKind::images;
        read_images(sr, d.images);
    } else {
        throw ConfigError(sr.path("kind"), "expected 'blobs' or 'images', got '" + kind + "'");
    }
    sr.finish();
}

void read_data(const json& j, const std::string& path, DataSource& d)
{
    ObjectReader r(j, path);
    if (r.has("synthetic") == r.has("file")) {
        throw ConfigError(path, "exactly one of 'synthetic' or 'file' is required");
    }
    if (const auto* f = r.child("file")) {
        if (!f->is_string()) {
            throw ConfigError(r.path("file"), "expected a string");
        }
        d.kind = DataKind::file;
        d.file = f->get<std::string>();
    }
    if (const auto* s = r.child("synthetic")) {
        read_synthetic(*s, r.path("synthetic"), d);
    }
    r.finish();
}

template <typename Fn>
void section(ObjectReader& parent, const std::string& key, Fn&& fn)
{
    if (const auto* v = parent.child(key)) {
        ObjectReader r(*v, parent.path(key));
        fn(r);
        r.finish();
    }
}

void positive(bool ok, const std::string& path, const std::string& what)
{
    if (!ok) {
        throw ConfigError(path, what);
    }
}

} // namespace

ExperimentConfig config_from_json(const json& j)
{
    ExperimentConfig c;
    ObjectReader root(j, "");
    if (const auto* d = root.child("data")) {
        read_data(*d, "data", c.data);
    }
    section(root, "split", [&](ObjectReader& r) {
        r.integer("train", c.split[0]);
        r.integer("validation", c.split[1]);
        r.integer("test", c.split[2]);
    });
    section(root, "episode", [&](ObjectReader& r) {
        r.integer("ways", c.ways);
        r.integer("shots", c.shots);
        r.integer("queries", c.queries);
    });
    root.string("method", c.method);
    section(root, "network", [&](ObjectReader& r) {
        r.integer("z", c.z);
        r.widths("teacher_hidden", c.teacher_hidden);
        r.widths("student_hidden", c.student_hidden);
        r.boolean("student_batch_norm", c.student_batch_norm);
    });
    section(root, "meta", [&](ObjectReader& r) {
        r.number("alpha_s", c.alpha_s);
        r.number("alpha_d", c.alpha_d);
        r.number("beta_s", c.beta_s);
        r.number("beta_d", c.beta_d);
        r.number("decay", c.decay);
        r.integer("epoch_length", c.epoch_length);
        r.integer("inner_steps", c.inner_steps);
        r.integer("iterations", c.iterations);
        r.integer("batch_tasks", c.batch_tasks);
        r.boolean("first_order", c.first_order);
        r.number("scale", c.scale);
        std::string loss = meta::to_string(c.loss);
        r.string("loss", loss);
        if (loss == "binary") {
            c.loss = meta::LossKind::binary;
        } else if (loss == "categorical") {
            c.loss = meta::LossKind::categorical;
        } else {
            throw ConfigError(r.path("loss"), "expected 'binary' or 'categorical', got '" + loss + "'");
        }
    });
    section(root, "pretrain", [&](ObjectReader& r) {
        r.integer("epochs", c.pretrain.epochs);
        r.integer("batch_size", c.pretrain.batch_size);
        r.number("learning_rate", c.pretrain.learning_rate);
        r.number("momentum", c.pretrain.momentum);
        r.integer("seed", c.pretrain.seed);
    });
    section(root, "baselines", [&](ObjectReader& r) {
        r.number("alpha", c.baseline_alpha);
        r.number("beta", c.baseline_beta);
        r.integer("finetune_steps", c.finetune_steps);
        r.number("mas_lambda", c.mas_lambda);
    });
    section(root, "evaluation", [&](ObjectReader& r) {
        r.integer("sequence_length", c.sequence_length);
        r.integer("sequences", c.sequences);
        r.boolean("disjoint_sequence", c.disjoint_sequence);
    });
    root.integer("seed", c.seed);
    std::string precision = to_string(c.precision);
    root.string("precision", precision);
    if (precision == "float32") {
        c.precision = Precision::float32;
    } else if (precision == "float64") {
        c.precision = Precision::float64;
    } else {
        throw ConfigError("precision", "expected 'float32' or 'float64', got '" + precision + "'");
    }
    std::string out = c.out.string();
    root.string("out", out);
    c.out = out;
    root.finish();
    c.validate();
    return c;
}

void ExperimentConfig::validate() const
{
    const auto& names = method_names();
    if (std::find(names.begin(), names.end(), method) == names.end()) {
        throw ConfigError("method", "unknown method '" + method + "'");
    }
    positive(ways >= 2, "episode.ways", "must be >= 2");
    positive(shots >= 1, "episode.shots", "must be >= 1");
    positive(queries >= 1, "episode.queries", "must be >= 1");
    positive(split[0] >= ways, "split.train", "needs at least 'ways' classes");
    positive(split[1] >= 0, "split.validation", "must be >= 0");
    positive(split[2] >= ways, "split.test", "needs at least 'ways' classes");
    if (disjoint_sequence) {
        positive(split[2] >= ways * sequence_length, "evaluation.disjoint_sequence",
                 "disjoint sequences need split.test >= ways * sequence_length");
    }
    positive(z >= 1, "network.z", "must be >= 1");
    for (const auto& [path, v] : {std::pair{"meta.alpha_s", alpha_s}, std::pair{"meta.alpha_d", alpha_d},
                                  std::pair{"meta.beta_s", beta_s}, std::pair{"meta.beta_d", beta_d},
                                  std::pair{"baselines.alpha", baseline_alpha},
                                  std::pair{"baselines.beta", baseline_beta},
                                  std::pair{"baselines.mas_lambda", mas_lambda}}) {
        positive(v >= 0.0 && std::isfinite(v), path, "must be finite and >= 0");
    }
    positive(decay > 0.0 && decay <= 1.0, "meta.decay", "must be in (0, 1]");
    positive(epoch_length >= 1, "meta.epoch_length", "must be >= 1");
    positive(inner_steps >= 1, "meta.inner_steps", "must be >= 1");
    positive(iterations >= 1, "meta.iterations", "must be >= 1");
    positive(batch_tasks >= 1, "meta.batch_tasks", "must be >= 1");
    positive(scale > 0.0 && std::isfinite(scale), "meta.scale", "must be > 0");
    positive(pretrain.epochs >= 1, "pretrain.epochs", "must be >= 1");
    positive(pretrain.batch_size >= 1, "pretrain.batch_size", "must be >= 1");
    positive(pretrain.learning_rate > 0.0, "pretrain.learning_rate", "must be > 0");
    positive(pretrain.momentum >= 0.0 && pretrain.momentum < 1.0, "pretrain.momentum", "must be in [0, 1)");
    positive(finetune_steps >= 0, "baselines.finetune_steps", "must be >= 0");
    positive(sequence_length >= 1, "evaluation.sequence_length", "must be >= 1");
    positive(sequences >= 1, "evaluation.sequences", "must be >= 1");
    switch (data.kind) {
    case DataKind::blobs:
        positive(data.blobs.classes >= split[0] + split[1] + split[2], "data.synthetic.classes",
                 "fewer classes than the split needs");
        positive(data.blobs.per_class >= shots + queries, "data.synthetic.per_class",
                 "fewer examples per class than shots + queries");
        positive(data.blobs.dim >= 1, "data.synthetic.dim", "must be >= 1");
        positive(data.blobs.spread >= 0.0, "data.synthetic.spread", "must be >= 0");
        break;
    case DataKind::images:
        positive(data.images.classes >= split[0] + split[1] + split[2], "data.synthetic.classes",
                 "fewer classes than the split needs");
        positive(data.images.per_class >= shots + queries, "data.synthetic.per_class",
                 "fewer examples per class than shots + queries");
        positive(data.images.size >= 4 && data.images.size % 4 == 0, "data.synthetic.size",
                 "must be a positive multiple of 4");
        positive(data.images.channels >= 1, "data.synthetic.channels", "must be >= 1");
        break;
    case DataKind::file:
        positive(!data.file.empty(), "data.file", "must not be empty");
        break;
    }
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path.string(), "cannot open config file");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
    }
    auto config = config_from_json(j);
    // Relative data paths are taken relative to the config file.
    if (config.data.kind == DataKind::file && config.data.file.is_relative() &&
        !std::filesystem::exists(config.data.file)) {
        config.data.file = path.parent_path() / config.data.file;
    }
    return config;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& c)
{
    nlohmann::ordered_json j;
    auto& d = j["data"];
    switch (c.data.kind) {
    case DataKind::blobs:
        d["synthetic"] = {{"kind", "blobs"},
                          {"classes", c.data.blobs.classes},
                          {"per_class", c.data.blobs.per_class},
                          {"dim", c.data.blobs.dim},
                          {"spread", c.data.blobs.spread},
                          {"seed", c.data.blobs.seed}};
        break;
    case DataKind::images:
        d["synthetic"] = {{"kind", "images"},
                          {"classes", c.data.images.classes},
                          {"per_class", c.data.images.per_class},
                          {"channels", c.data.images.channels},
                          {"size", c.data.images.size},
                          {"spread", c.data.images.spread},
                          {"seed", c.data.images.seed}};
        break;
    case DataKind::file: d["file"] = c.data.file.generic_string(); break;
    }
    j["split"] = {{"train", c.split[0]}, {"validation", c.split[1]}, {"test", c.split[2]}};
    j["episode"] = {{"ways", c.ways}, {"shots", c.shots}, {"queries", c.queries}};
    j["method"] = c.method;
    j["network"] = {{"z", c.z},
                    {"teacher_hidden", c.teacher_hidden},
                    {"student_hidden", c.student_hidden},
                    {"student_batch_norm", c.student_batch_norm}};
    j["meta"] = {{"alpha_s", c.alpha_s},         {"alpha_d", c.alpha_d},
                 {"beta_s", c.beta_s},           {"beta_d", c.beta_d},
                 {"decay", c.decay},             {"epoch_length", c.epoch_length},
                 {"inner_steps", c.inner_steps}, {"iterations", c.iterations},
                 {"batch_tasks", c.batch_tasks}, {"first_order", c.first_order},
                 {"scale", c.scale},             {"loss", meta::to_string(c.loss)}};
    j["pretrain"] = {{"epochs", c.pretrain.epochs},
                     {"batch_size", c.pretrain.batch_size},
                     {"learning_rate", c.pretrain.learning_rate},
                     {"momentum", c.pretrain.momentum},
                     {"seed", c.pretrain.seed}};
    j["baselines"] = {{"alpha", c.baseline_alpha},
                      {"beta", c.baseline_beta},
                      {"finetune_steps", c.finetune_steps},
                      {"mas_lambda", c.mas_lambda}};
    j["evaluation"] = {{"sequence_length", c.sequence_length},
                       {"sequences", c.sequences},
                       {"disjoint_sequence", c.disjoint_sequence}};
    j["seed"] = c.seed;
    j["precision"] = to_string(c.precision);
    j["out"] = c.out.generic_string();
    return j;
}

nn::NetworkSpec teacher_spec(const ExperimentConfig& c, const std::vector<Index>& input_shape)
{
    if (input_shape.size() == 3) {
        return nn::default_teacher_spec(input_shape, c.z);
    }
    auto widths = c.teacher_hidden;
    widths.push_back(c.z);
    return nn::mlp_spec(input_shape.at(0), widths, nn::Activation::relu, nn::Activation::none);
}

nn::NetworkSpec student_spec(const ExperimentConfig& c, const std::vector<Index>& input_shape)
{
    if (input_shape.size() == 3) {
        return nn::conv_spec(input_shape, 16, 2, c.z, c.student_batch_norm);
    }
    auto widths = c.student_hidden;
    widths.push_back(c.z);
    return nn::mlp_spec(input_shape.at(0), widths, nn::Activation::relu, nn::Activation::none, c.student_batch_norm);
}

DataSource parse_synthetic(const std::string& params)
{
    json j = json::object();
    std::stringstream ss(params);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("--synthetic", "expected key=value, got '" + item + "'");
        }
        const auto key = item.substr(0, eq);
        const auto value = item.substr(eq + 1);
        if (key == "kind") {
            j[key] = value;
            continue;
        }
        try {
            std::size_t used = 0;
            if (value.find_first_of(".eE") != std::string::npos) {
                j[key] = std::stod(value, &used);
            } else {
                j[key] = std::stoll(value, &used);
            }
            if (used != value.size()) {
                throw std::invalid_argument(value);
            }
        } catch (const std::exception&) {
            throw ConfigError("--synthetic." + key, "expected a number, got '" + value + "'");
        }
    }
    DataSource d;
    read_synthetic(j, "--synthetic", d);
    return d;
}

} // namespace cml::harness
