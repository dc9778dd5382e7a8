#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ectnet/complex.hpp"
#include "ectnet/model.hpp"
#include "ectnet/shapes.hpp"
#include "ectnet/topology.hpp"

namespace ectnet {

enum class InvarianceMode { Reuse, Retrain };

struct ExperimentConfig {
    int level = 13;  // icosphere level of the direction graph
    double a = 8.0;
    int t = 512;
    ModelConfig model;
    TrainConfig train;

    std::vector<ShapeClass> classes = {ShapeClass::Sphere, ShapeClass::Torus, ShapeClass::DoubleTorus,
                                       ShapeClass::Ellipsoid};
    int per_class = 5;       // train meshes per class
    int eval_per_class = 5;  // held-out meshes per class
    std::uint64_t deform_seed = 0;
    double deform_amplitude = 0.15;
    double raw_scale = 10.0;
    double position_jitter = 1.0;  // std of each instance's random offset, raw units

    int num_transforms = 10;
    int num_repeats = 8;
    std::uint64_t invariance_seed = 1;
    InvarianceMode invariance_mode = InvarianceMode::Reuse;

    int num_classes() const { return static_cast<int>(classes.size()); }
};

/// Throws ValidationError naming the first offending field.
void validate_config(const ExperimentConfig& config);

/// JSON object with optional keys; unknown keys and bad values throw
/// ValidationError, malformed text throws ParseError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig run_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

enum class Split { Train, Eval };
std::string split_name(Split split);

struct ManifestEntry {
    std::string path;  // as written in the manifest, relative to its directory
    int label = 0;
    std::string class_name;
    Split split = Split::Train;
};

struct DatasetManifest {
    std::filesystem::path root;  // directory holding the manifest
    std::vector<ManifestEntry> entries;

    std::filesystem::path resolve(const ManifestEntry& entry) const { return root / entry.path; }
    int num_classes() const;
    std::vector<int> class_counts(Split split) const;
};

/// CSV with header path,label,class,split. Checks that files exist, labels are
/// contiguous from 0 and each label names one class.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Writes deformed class meshes as OFF plus manifest.csv into out_dir.
DatasetManifest synth_dataset(const std::filesystem::path& out_dir, const ExperimentConfig& config);

/// Directions and graph for a config level.
const Icosphere& cached_icosphere(int level);

EctField compute_field(const EmbeddedComplex& mesh, const DirectionSet& directions, const ExperimentConfig& config);

std::filesystem::path field_directory(const DatasetManifest& manifest, const ExperimentConfig& config);
std::filesystem::path field_path(const DatasetManifest& manifest, const ManifestEntry& entry,
                                 const ExperimentConfig& config);

/// Reads, validates, normalizes and transforms every mesh; returns written files.
std::vector<std::filesystem::path> preprocess_ect(const DatasetManifest& manifest, const ExperimentConfig& config);

struct EpochLog {
    int epoch;
    double lr;
    double train_loss;  // mean loss of the epoch's batches
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochLog> log;
    double final_loss = 0;  // train-set loss of the final parameters
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train_on_fields(const std::vector<EctField>& fields, const std::vector<int>& labels,
                            const ExperimentConfig& config, const EpochCallback& on_epoch = {});

/// Trains on the train split using the preprocessed fields.
TrainResult train_model(const DatasetManifest& manifest, const ExperimentConfig& config,
                        const EpochCallback& on_epoch = {});

void write_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

struct EmbeddingRow {
    std::string mesh;
    int label;
    Split split;
    Eigen::Vector2d point;
};

std::vector<EmbeddingRow> embed_meshes(const DatasetManifest& manifest, const ModelParams& params,
                                       const ExperimentConfig& config);
void write_embeddings_csv(const std::vector<EmbeddingRow>& rows, const std::filesystem::path& path);

/// Fraction of eval rows closer to their own class centroid of train rows than to any other.
double nearest_centroid_accuracy(const std::vector<EmbeddingRow>& rows);

struct InvarianceRow {
    int repeat;
    std::string mesh;
    int label;
    double distance_std;  // population std of the distances to the mean embedding
    double rms_distance;
};

struct InvarianceResult {
    std::vector<InvarianceRow> rows;
    std::vector<double> repeat_means;  // mean distance_std per repeat
    double error = 0;                  // mean of repeat_means
};

using IsometrySource = std::function<Isometry(std::uint64_t seed)>;

InvarianceResult invariance_error_analysis(const DatasetManifest& manifest, const ModelParams& params,
                                           const ExperimentConfig& config,
                                           const IsometrySource& isometries = random_isometry);
void write_invariance_csv(const InvarianceResult& result, const std::filesystem::path& path);

}  // namespace ectnet
