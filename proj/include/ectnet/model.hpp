#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "ectnet/sphere.hpp"
#include "ectnet/topology.hpp"

namespace ectnet {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr int kConvWidth = 5;
inline constexpr int kConvStride = 2;
/// Shortest curve the three stride-2 width-5 convolutions accept.
inline constexpr int kMinCurveLength = 29;
inline constexpr int kEmbeddingDim = 2;

struct ModelConfig {
    int channels = 128;
    int k = 39;  // SGConv hop count
    double slope = 0.01;
};

/// Learnable tensors. Conv kernels are (out, in * width) with column
/// index in * width + tap; graph weights act as X W.
struct ModelParams {
    Matrix conv1_w;  // C x 5
    Vector conv1_b;
    Matrix conv2_w;  // C x 5C
    Vector conv2_b;
    Matrix conv3_w;  // C x 5C
    Vector conv3_b;
    Matrix sg1_w;  // C x C
    Matrix sg2_w;  // C x C
    Matrix fc_w;   // 2 x C
    Vector fc_b;

    int channels() const { return static_cast<int>(conv1_b.size()); }

    static ModelParams zeros(int channels);
    /// Uniform in +-1/sqrt(fan_in) per tensor, deterministic in the seed.
    static ModelParams init(int channels, std::uint64_t seed);

    std::size_t num_scalars() const;
    /// Visits tensors in declaration order.
    void for_each(const std::function<void(const std::string& name, double* data, Eigen::Index rows,
                                           Eigen::Index cols)>& fn);
    void for_each(const std::function<void(const std::string& name, const double* data, Eigen::Index rows,
                                           Eigen::Index cols)>& fn) const;

    /// this += scale * other
    void axpy(double scale, const ModelParams& other);
    bool same_shape(const ModelParams& other) const;
};

/// L1, L2, L3 of the valid convolutions for a curve of length t.
std::array<int, 3> head_lengths(int t);

/// Reference single-curve head: three valid convolutions with LeakyReLU after the
/// first two, then the channelwise max over positions.
Vector translation_head_forward(std::span<const double> curve, const ModelParams& params, double slope);

using NormalizedAdjacency = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// D^-1/2 A D^-1/2 without self loops; isolated nodes get empty rows.
NormalizedAdjacency normalized_adjacency(const SphereGraph& graph);

/// A^k X W.
Matrix sgconv_layer(const NormalizedAdjacency& adjacency, const Matrix& features, const Matrix& weight, int k);

/// Node features of the conv head for every row of the field (n x C).
Matrix head_features(const EctField& field, const ModelParams& params, double slope);

struct ForwardResult {
    Eigen::Vector2d embedding;
    Matrix node_features;  // head output, n x C
};

ForwardResult model_forward_detailed(const EctField& field, const NormalizedAdjacency& adjacency,
                                     const ModelParams& params, const ModelConfig& config);
Eigen::Vector2d model_forward(const EctField& field, const NormalizedAdjacency& adjacency, const ModelParams& params,
                              const ModelConfig& config);
Eigen::Vector2d model_forward(const EctField& field, const SphereGraph& graph, const ModelParams& params,
                              const ModelConfig& config);

/// Piecewise-constant matrix-valued kernel of the pairwise distance:
/// at_zero for d = 0, pieces[i] for breakpoints[i] <= d < breakpoints[i+1], d > 0.
struct DistanceTable {
    Matrix at_zero;
    std::vector<double> breakpoints;  // starts at 0, strictly increasing
    std::vector<Matrix> pieces;       // breakpoints.size() - 1 entries

    /// Throws ArgumentError outside [0, breakpoints.back()).
    const Matrix& operator()(double distance) const;
};

/// T(f)(x_i) = (1/n) sum_j g(|x_i - x_j|) f(x_j), features n x c, result n x c'.
Matrix mpnn_layer(const DirectionSet& directions, const Matrix& features, const DistanceTable& table);

struct LossValue {
    double loss;
    Eigen::Vector2d gradient;  // d loss / d pred
};

/// Mean over coordinates of the smooth-l1 penalty with threshold beta.
LossValue smooth_l1_loss(const Eigen::Vector2d& pred, const Eigen::Vector2d& target, double beta);

struct TrainingExample {
    const EctField* field;
    Eigen::Vector2d target;
};

struct GradientResult {
    double loss = 0;  // mean over the batch
    ModelParams gradient;
};

/// Reverse-mode derivatives of the mean batch loss. Batch items are
/// accumulated in index order, so the result does not depend on threading.
GradientResult compute_gradients(std::span<const TrainingExample> batch, const NormalizedAdjacency& adjacency,
                                 const ModelParams& params, const ModelConfig& config, double beta);

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
    int epochs = 400;
    int batch_size = 16;
    double lr = 1e-3;
    double lr_after_drop = 1e-4;
    int lr_drop_epoch = 200;
    double beta = 0.1;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::Adam;
};

/// Learning rate for a 0-based epoch.
double scheduled_lr(const TrainConfig& config, int epoch);

class Optimizer {
public:
    Optimizer(OptimizerKind kind, int channels);

    /// Applies one update with the epoch's scheduled learning rate.
    void step(ModelParams& params, const ModelParams& gradient, int epoch, const TrainConfig& config);

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

private:
    OptimizerKind kind_;
    ModelParams m_, v_;
    long steps_ = 0;
};

/// The first `classes` vertices of the regular octagon on S^1, angle 2 pi c / 8 (classes x 2).
Matrix octagon_targets(int classes);

/// Scalar-kernel operator, applied channel by channel:
/// max_i |T(f)(R x_i) - T(Rf)(x_i)| with (Rf)(x) = f(R x) resampled on the set.
enum class Resampling { Nearest, Linear };

double equivariance_error(const std::function<double(double)>& kernel, const Matrix& features,
                          const Eigen::Matrix3d& rotation, const DirectionSet& directions,
                          Resampling resampling = Resampling::Nearest);

/// Matrix-valued table version of the same discrepancy (nearest resampling).
double equivariance_error(const DistanceTable& table, const Matrix& features, const Eigen::Matrix3d& rotation,
                          const DirectionSet& directions);

/// max over the given rotations and the identity of (1/n) sum_i g(R^T x_i) f(x_i),
/// g read at the nearest sampled direction.
double rotation_max_correlation(std::span<const double> f, std::span<const double> g,
                                const DirectionSet& directions, std::span<const Eigen::Matrix3d> rotations);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelParams& params, const ModelConfig& config, std::ostream& out);
void save_checkpoint(const ModelParams& params, const ModelConfig& config, const std::filesystem::path& path);
/// Throws ShapeError when the stored shapes or settings differ from `expected`.
ModelParams load_checkpoint(std::istream& in, const ModelConfig& expected);
ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace ectnet
