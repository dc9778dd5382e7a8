#include "ectnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ectnet/error.hpp"
#include "ectnet/mesh_io.hpp"
#include "ectnet/parallel.hpp"
#include "ectnet/validate.hpp"

namespace ectnet {

namespace {

using nlohmann::json;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (const auto p : parts) h = splitmix(h ^ splitmix(p));
    return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

template <typename T>
T field_value(const json& obj, const char* key) {
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(key, std::string("wrong type: ") + e.what());
    }
}

std::uint64_t seed_value(const json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ValidationError(key, "must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

int int_value(const json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) throw ValidationError(key, "must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw ValidationError(key, "out of range");
    }
    return static_cast<int>(x);
}

double real_value(const json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ValidationError(key, "must be a number");
    return v.get<double>();
}

void require(bool ok, const char* field, const std::string& message) {
    if (!ok) throw ValidationError(field, message);
}

std::vector<EctField> load_fields(const DatasetManifest& manifest, const std::vector<const ManifestEntry*>& entries,
                                  const ExperimentConfig& config) {
    const auto& ico = cached_icosphere(config.level);
    std::vector<EctField> fields(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto path = field_path(manifest, *entries[i], config);
        if (!std::filesystem::exists(path)) {
            throw IoError("no preprocessed field for mesh " + entries[i]->path + " (expected " + path.string() +
                          "); run preprocess first");
        }
        fields[i] = read_ect_field(path);
        if (fields[i].t != config.t || fields[i].num_directions() != ico.directions.size() ||
            fields[i].a != config.a) {
            throw ShapeError("field for mesh " + entries[i]->path + " does not match the configured level, a and t");
        }
    }
    return fields;
}

EmbeddedComplex load_checked_mesh(const std::filesystem::path& path) {
    auto mesh = read_mesh(path);
    const auto report = validate_complex(mesh);
    if (!report.empty()) {
        throw ValidationError("path", path.string() + ": " + report.errors.front().message);
    }
    for (const auto& w : report.warnings) warn(path.string() + ": " + w.message);
    return mesh;
}

}  // namespace

void validate_config(const ExperimentConfig& c) {
    require(c.level >= 1, "level", "must be at least 1");
    require(std::isfinite(c.a) && c.a > 0, "a", "must be positive");
    require(c.t >= kMinCurveLength, "t", "must be at least " + std::to_string(kMinCurveLength));
    require(c.model.channels >= 1, "channels", "must be at least 1");
    require(c.model.k >= 0, "k", "must be non-negative");
    require(std::isfinite(c.model.slope), "slope", "must be finite");
    require(c.train.epochs >= 1, "epochs", "must be at least 1");
    require(c.train.batch_size >= 1, "batch_size", "must be at least 1");
    require(std::isfinite(c.train.lr) && c.train.lr > 0, "lr", "must be positive");
    require(std::isfinite(c.train.lr_after_drop) && c.train.lr_after_drop > 0, "lr_after_drop", "must be positive");
    require(c.train.lr_drop_epoch >= 0, "lr_drop_epoch", "must be non-negative");
    require(std::isfinite(c.train.beta) && c.train.beta > 0, "beta", "must be positive");
    require(!c.classes.empty(), "classes", "must not be empty");
    require(c.num_classes() <= 8, "classes", "at most 8 classes fit the octagon targets");
    require(std::set<ShapeClass>(c.classes.begin(), c.classes.end()).size() == c.classes.size(), "classes",
            "duplicate class");
    require(c.per_class >= 1, "per_class", "must be at least 1");
    require(c.eval_per_class >= 0, "eval_per_class", "must be non-negative");
    require(std::abs(c.deform_amplitude) < 1, "deform_amplitude", "magnitude must be below 1");
    require(std::isfinite(c.raw_scale) && c.raw_scale > 0, "raw_scale", "must be positive");
    require(std::isfinite(c.position_jitter) && c.position_jitter >= 0, "position_jitter", "must be non-negative");
    require(c.num_transforms >= 1, "num_transforms", "must be at least 1");
    require(c.num_repeats >= 1, "num_repeats", "must be at least 1");
}

ExperimentConfig parse_config(const std::string& text) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = text.substr(0, std::min<std::size_t>(e.byte, text.size()));
        throw ParseError(1 + std::count(upto.begin(), upto.end(), '\n'), std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ValidationError("", "config must be a JSON object");

    static const std::set<std::string> known = {
        "level", "a", "t", "channels", "k", "slope", "epochs", "batch_size", "lr", "lr_after_drop",
        "lr_drop_epoch", "beta", "seed", "optimizer", "classes", "per_class", "eval_per_class", "deform_seed",
        "deform_amplitude", "raw_scale", "position_jitter", "num_transforms", "num_repeats", "invariance_seed", "invariance_mode"};
    for (const auto& [key, value] : obj.items()) {
        if (!known.count(key)) throw ValidationError(key, "unknown key");
    }

    ExperimentConfig c;
    auto has = [&](const char* key) { return obj.contains(key); };
    if (has("level")) c.level = int_value(obj, "level");
    if (has("a")) c.a = real_value(obj, "a");
    if (has("t")) c.t = int_value(obj, "t");
    if (has("channels")) c.model.channels = int_value(obj, "channels");
    if (has("k")) c.model.k = int_value(obj, "k");
    if (has("slope")) c.model.slope = real_value(obj, "slope");
    if (has("epochs")) c.train.epochs = int_value(obj, "epochs");
    if (has("batch_size")) c.train.batch_size = int_value(obj, "batch_size");
    if (has("lr")) c.train.lr = real_value(obj, "lr");
    if (has("lr_after_drop")) c.train.lr_after_drop = real_value(obj, "lr_after_drop");
    if (has("lr_drop_epoch")) c.train.lr_drop_epoch = int_value(obj, "lr_drop_epoch");
    if (has("beta")) c.train.beta = real_value(obj, "beta");
    if (has("seed")) c.train.seed = seed_value(obj, "seed");
    if (has("optimizer")) {
        const auto name = field_value<std::string>(obj, "optimizer");
        if (name == "adam") {
            c.train.optimizer = OptimizerKind::Adam;
        } else if (name == "sgd") {
            c.train.optimizer = OptimizerKind::Sgd;
        } else {
            throw ValidationError("optimizer", "expected \"adam\" or \"sgd\", got \"" + name + "\"");
        }
    }
    if (has("classes")) {
        const auto names = field_value<std::vector<std::string>>(obj, "classes");
        c.classes.clear();
        for (const auto& n : names) {
            try {
                c.classes.push_back(parse_shape_class(n));
            } catch (const Error& e) {
                throw ValidationError("classes", e.what());
            }
        }
    }
    if (has("per_class")) c.per_class = int_value(obj, "per_class");
    if (has("eval_per_class")) c.eval_per_class = int_value(obj, "eval_per_class");
    if (has("deform_seed")) c.deform_seed = seed_value(obj, "deform_seed");
    if (has("deform_amplitude")) c.deform_amplitude = real_value(obj, "deform_amplitude");
    if (has("raw_scale")) c.raw_scale = real_value(obj, "raw_scale");
    if (has("position_jitter")) c.position_jitter = real_value(obj, "position_jitter");
    if (has("num_transforms")) c.num_transforms = int_value(obj, "num_transforms");
    if (has("num_repeats")) c.num_repeats = int_value(obj, "num_repeats");
    if (has("invariance_seed")) c.invariance_seed = seed_value(obj, "invariance_seed");
    if (has("invariance_mode")) {
        const auto mode = field_value<std::string>(obj, "invariance_mode");
        if (mode == "reuse") {
            c.invariance_mode = InvarianceMode::Reuse;
        } else if (mode == "retrain") {
            c.invariance_mode = InvarianceMode::Retrain;
        } else {
            throw ValidationError("invariance_mode", "expected \"reuse\" or \"retrain\", got \"" + mode + "\"");
        }
    }
    validate_config(c);
    return c;
}

ExperimentConfig run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& c) {
    json obj;
    obj["level"] = c.level;
    obj["a"] = c.a;
    obj["t"] = c.t;
    obj["channels"] = c.model.channels;
    obj["k"] = c.model.k;
    obj["slope"] = c.model.slope;
    obj["epochs"] = c.train.epochs;
    obj["batch_size"] = c.train.batch_size;
    obj["lr"] = c.train.lr;
    obj["lr_after_drop"] = c.train.lr_after_drop;
    obj["lr_drop_epoch"] = c.train.lr_drop_epoch;
    obj["beta"] = c.train.beta;
    obj["seed"] = c.train.seed;
    obj["optimizer"] = c.train.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
    json names = json::array();
    for (auto s : c.classes) names.push_back(shape_class_name(s));
    obj["classes"] = names;
    obj["per_class"] = c.per_class;
    obj["eval_per_class"] = c.eval_per_class;
    obj["deform_seed"] = c.deform_seed;
    obj["deform_amplitude"] = c.deform_amplitude;
    obj["raw_scale"] = c.raw_scale;
    obj["position_jitter"] = c.position_jitter;
    obj["num_transforms"] = c.num_transforms;
    obj["num_repeats"] = c.num_repeats;
    obj["invariance_seed"] = c.invariance_seed;
    obj["invariance_mode"] = c.invariance_mode == InvarianceMode::Reuse ? "reuse" : "retrain";
    return obj.dump(2);
}

std::string split_name(Split split) { return split == Split::Train ? "train" : "eval"; }

int DatasetManifest::num_classes() const {
    int n = 0;
    for (const auto& e : entries) n = std::max(n, e.label + 1);
    return n;
}

std::vector<int> DatasetManifest::class_counts(Split split) const {
    std::vector<int> counts(num_classes(), 0);
    for (const auto& e : entries)
        if (e.split == split) ++counts[e.label];
    return counts;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read manifest " + path.string());
    DatasetManifest m;
    m.root = path.parent_path();
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(1, "empty manifest");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "path,label,class,split") throw ParseError(1, "expected header path,label,class,split");
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 4) throw ParseError(lineno, "expected 4 columns");
        ManifestEntry e;
        e.path = cells[0];
        try {
            std::size_t used = 0;
            e.label = std::stoi(cells[1], &used);
            if (used != cells[1].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError(lineno, "bad label \"" + cells[1] + "\"");
        }
        e.class_name = cells[2];
        if (cells[3] == "train") {
            e.split = Split::Train;
        } else if (cells[3] == "eval") {
            e.split = Split::Eval;
        } else {
            throw ParseError(lineno, "split must be train or eval");
        }
        if (e.label < 0) throw ValidationError("label", "negative label on line " + std::to_string(lineno));
        m.entries.push_back(std::move(e));
    }
    std::map<int, std::string> names;
    for (const auto& e : m.entries) {
        if (!std::filesystem::exists(m.resolve(e))) throw IoError("mesh not found: " + m.resolve(e).string());
        auto [it, fresh] = names.emplace(e.label, e.class_name);
        if (!fresh && it->second != e.class_name) {
            throw ValidationError("class", "label " + std::to_string(e.label) + " names both " + it->second +
                                               " and " + e.class_name);
        }
    }
    for (int c = 0; c < m.num_classes(); ++c) {
        if (!names.count(c)) throw ValidationError("label", "labels are not contiguous, " + std::to_string(c) + " is missing");
    }
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "path,label,class,split\n";
    for (const auto& e : manifest.entries) {
        out << e.path << ',' << e.label << ',' << e.class_name << ',' << split_name(e.split) << '\n';
    }
    close_out(out, path);
}

DatasetManifest synth_dataset(const std::filesystem::path& out_dir, const ExperimentConfig& config) {
    validate_config(config);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    DatasetManifest m;
    m.root = out_dir;
    for (int label = 0; label < config.num_classes(); ++label) {
        const ShapeClass shape = config.classes[label];
        const auto base = base_shape(shape, config.raw_scale);
        const auto name = shape_class_name(shape);
        for (Split split : {Split::Train, Split::Eval}) {
            const int count = split == Split::Train ? config.per_class : config.eval_per_class;
            for (int i = 0; i < count; ++i) {
                const auto seed = mix_seed({config.deform_seed, static_cast<std::uint64_t>(shape),
                                            static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(i)});
                std::mt19937_64 rng(seed);
                std::normal_distribution<double> normal(0.0, config.position_jitter);
                Isometry offset{Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()};
                for (int k = 0; k < 3; ++k) offset.translation(k) = normal(rng);
                const auto mesh = apply_isometry(radial_deform(base, seed, config.deform_amplitude), offset);
                if (euler_characteristic(mesh) != shape_class_euler(shape)) {
                    throw DegenerateInputError("generated " + name + " has the wrong Euler characteristic");
                }
                ManifestEntry e;
                e.path = name + "_" + split_name(split) + "_" + std::to_string(i) + ".off";
                e.label = label;
                e.class_name = name;
                e.split = split;
                write_off(mesh, out_dir / e.path);
                m.entries.push_back(std::move(e));
            }
        }
    }
    write_manifest(m, out_dir / "manifest.csv");
    return m;
}

const Icosphere& cached_icosphere(int level) {
    static std::mutex mutex;
    static std::map<int, std::shared_ptr<const Icosphere>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[level];
    if (!slot) slot = std::make_shared<const Icosphere>(icosphere(level));
    return *slot;
}

EctField compute_field(const EmbeddedComplex& mesh, const DirectionSet& directions, const ExperimentConfig& config) {
    return ect_field(normalize_scale(mesh), directions, config.a, config.t);
}

std::filesystem::path field_directory(const DatasetManifest& manifest, const ExperimentConfig& config) {
    std::ostringstream name;
    name << "ect_L" << config.level << "_t" << config.t << "_a" << config.a;
    return manifest.root / name.str();
}

std::filesystem::path field_path(const DatasetManifest& manifest, const ManifestEntry& entry,
                                 const ExperimentConfig& config) {
    auto rel = std::filesystem::path(entry.path);
    rel.replace_extension(".ectf");
    return field_directory(manifest, config) / rel;
}

std::vector<std::filesystem::path> preprocess_ect(const DatasetManifest& manifest, const ExperimentConfig& config) {
    validate_config(config);
    const auto& ico = cached_icosphere(config.level);
    std::vector<std::filesystem::path> out(manifest.entries.size());
    std::set<std::filesystem::path> seen;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = field_path(manifest, manifest.entries[i], config);
        if (!seen.insert(out[i]).second) throw ValidationError("path", "duplicate mesh " + manifest.entries[i].path);
        std::error_code ec;
        std::filesystem::create_directories(out[i].parent_path(), ec);
        if (ec) throw IoError("cannot create " + out[i].parent_path().string() + ": " + ec.message());
    }
    parallel_for(out.size(), [&](std::size_t i) {
        const auto mesh = load_checked_mesh(manifest.resolve(manifest.entries[i]));
        write_ect_field(compute_field(mesh, ico.directions, config), out[i]);
    });
    return out;
}

TrainResult train_on_fields(const std::vector<EctField>& fields, const std::vector<int>& labels,
                            const ExperimentConfig& config, const EpochCallback& on_epoch) {
    validate_config(config);
    if (fields.size() != labels.size() || fields.empty()) throw ShapeError("need one label per training field");
    const Matrix targets = octagon_targets(config.num_classes());
    const auto& ico = cached_icosphere(config.level);
    const auto adjacency = normalized_adjacency(ico.graph);

    std::vector<TrainingExample> examples(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= config.num_classes()) throw ValidationError("label", "label out of range");
        examples[i] = {&fields[i], targets.row(labels[i]).transpose()};
    }

    TrainResult result;
    result.params = ModelParams::init(config.model.channels, config.train.seed);
    Optimizer optimizer(config.train.optimizer, config.model.channels);
    std::mt19937_64 rng(mix_seed({config.train.seed, 0x5u}));
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<TrainingExample> batch;
    for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0;
        for (std::size_t start = 0; start < order.size(); start += config.train.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.train.batch_size);
            batch.clear();
            for (std::size_t j = start; j < end; ++j) batch.push_back(examples[order[j]]);
            const auto g = compute_gradients(batch, adjacency, result.params, config.model, config.train.beta);
            total += g.loss * static_cast<double>(batch.size());
            optimizer.step(result.params, g.gradient, epoch, config.train);
        }
        result.log.push_back({epoch, scheduled_lr(config.train, epoch), total / static_cast<double>(order.size())});
        if (on_epoch) on_epoch(result.log.back());
    }
    double final_loss = 0;
    for (const auto& ex : examples) {
        final_loss += smooth_l1_loss(model_forward(*ex.field, adjacency, result.params, config.model), ex.target,
                                     config.train.beta)
                          .loss;
    }
    result.final_loss = final_loss / static_cast<double>(examples.size());
    return result;
}

TrainResult train_model(const DatasetManifest& manifest, const ExperimentConfig& config,
                        const EpochCallback& on_epoch) {
    validate_config(config);
    if (manifest.num_classes() != config.num_classes()) {
        throw ValidationError("classes", "manifest has " + std::to_string(manifest.num_classes()) +
                                             " classes, config has " + std::to_string(config.num_classes()));
    }
    const auto counts = manifest.class_counts(Split::Train);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] != config.per_class) {
            throw ValidationError("per_class", "class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                                                   " train meshes, expected " + std::to_string(config.per_class));
        }
    }
    std::vector<const ManifestEntry*> train;
    std::vector<int> labels;
    for (const auto& e : manifest.entries) {
        if (e.split != Split::Train) continue;
        train.push_back(&e);
        labels.push_back(e.label);
    }
    const auto fields = load_fields(manifest, train, config);
    return train_on_fields(fields, labels, config, on_epoch);
}

void write_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "epoch,lr,train_loss\n";
    for (const auto& e : log) out << e.epoch << ',' << e.lr << ',' << e.train_loss << '\n';
    close_out(out, path);
}

std::vector<EmbeddingRow> embed_meshes(const DatasetManifest& manifest, const ModelParams& params,
                                       const ExperimentConfig& config) {
    validate_config(config);
    if (params.channels() != config.model.channels) throw ShapeError("checkpoint channels differ from the config");
    const auto& ico = cached_icosphere(config.level);
    const auto adjacency = normalized_adjacency(ico.graph);
    std::vector<EmbeddingRow> rows(manifest.entries.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        const auto& e = manifest.entries[i];
        const auto field = compute_field(load_checked_mesh(manifest.resolve(e)), ico.directions, config);
        rows[i] = {e.path, e.label, e.split, model_forward(field, adjacency, params, config.model)};
    });
    return rows;
}

void write_embeddings_csv(const std::vector<EmbeddingRow>& rows, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "mesh,label,x,y\n";
    for (const auto& r : rows) out << r.mesh << ',' << r.label << ',' << r.point.x() << ',' << r.point.y() << '\n';
    close_out(out, path);
}

double nearest_centroid_accuracy(const std::vector<EmbeddingRow>& rows) {
    std::map<int, std::pair<Eigen::Vector2d, int>> sums;
    for (const auto& r : rows) {
        if (r.split != Split::Train) continue;
        auto& [sum, n] = sums.try_emplace(r.label, Eigen::Vector2d::Zero(), 0).first->second;
        sum += r.point;
        ++n;
    }
    int total = 0, hits = 0;
    for (const auto& r : rows) {
        if (r.split != Split::Eval) continue;
        ++total;
        int best = -1;
        double best_d = kInf;
        for (const auto& [label, s] : sums) {
            const double d = (r.point - s.first / s.second).norm();
            if (d < best_d) {
                best_d = d;
                best = label;
            }
        }
        hits += best == r.label;
    }
    if (total == 0) throw ArgumentError("no eval rows to classify");
    return static_cast<double>(hits) / total;
}

InvarianceResult invariance_error_analysis(const DatasetManifest& manifest, const ModelParams& params,
                                           const ExperimentConfig& config, const IsometrySource& isometries) {
    validate_config(config);
    if (params.channels() != config.model.channels) throw ShapeError("checkpoint channels differ from the config");
    const auto& ico = cached_icosphere(config.level);
    const auto adjacency = normalized_adjacency(ico.graph);
    std::vector<EmbeddedComplex> meshes(manifest.entries.size());
    for (std::size_t i = 0; i < meshes.size(); ++i) meshes[i] = load_checked_mesh(manifest.resolve(manifest.entries[i]));

    const std::size_t n = meshes.size();
    const std::size_t reps = config.num_repeats;
    const std::size_t m = config.num_transforms;
    std::vector<Eigen::Vector2d> points(reps * n * m);
    parallel_for(points.size(), [&](std::size_t idx) {
        const std::size_t r = idx / (n * m), i = (idx / m) % n, j = idx % m;
        const auto iso = isometries(mix_seed({config.invariance_seed, r, i, j}));
        const auto field = compute_field(apply_isometry(meshes[i], iso), ico.directions, config);
        points[idx] = model_forward(field, adjacency, params, config.model);
    });

    InvarianceResult result;
    for (std::size_t r = 0; r < reps; ++r) {
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto* p = &points[(r * n + i) * m];
            Eigen::Vector2d mean = Eigen::Vector2d::Zero();
            for (std::size_t j = 0; j < m; ++j) mean += p[j];
            mean /= static_cast<double>(m);
            std::vector<double> d(m);
            for (std::size_t j = 0; j < m; ++j) d[j] = (p[j] - mean).norm();
            const double dm = std::accumulate(d.begin(), d.end(), 0.0) / m;
            double var = 0, sq = 0;
            for (double x : d) {
                var += (x - dm) * (x - dm);
                sq += x * x;
            }
            const auto& e = manifest.entries[i];
            result.rows.push_back({static_cast<int>(r), e.path, e.label, std::sqrt(var / m), std::sqrt(sq / m)});
            sum += result.rows.back().distance_std;
        }
        result.repeat_means.push_back(sum / static_cast<double>(n));
    }
    result.error = std::accumulate(result.repeat_means.begin(), result.repeat_means.end(), 0.0) / reps;
    return result;
}

void write_invariance_csv(const InvarianceResult& result, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "repeat,mesh,label,distance_std,rms_distance\n";
    for (const auto& r : result.rows) {
        out << r.repeat << ',' << r.mesh << ',' << r.label << ',' << r.distance_std << ',' << r.rms_distance << '\n';
    }
    close_out(out, path);
}

}  // namespace ectnet
