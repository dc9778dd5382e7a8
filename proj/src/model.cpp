#include "ectnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "ectnet/binary_io.hpp"
#include "ectnet/error.hpp"
#include "ectnet/parallel.hpp"

namespace ectnet {

// ---------------------------------------------------------------- parameters

ModelParams ModelParams::zeros(int channels) {
    if (channels < 1) throw ArgumentError("channel count must be positive");
    const int C = channels;
    ModelParams p;
    p.conv1_w = Matrix::Zero(C, kConvWidth);
    p.conv1_b = Vector::Zero(C);
    p.conv2_w = Matrix::Zero(C, kConvWidth * C);
    p.conv2_b = Vector::Zero(C);
    p.conv3_w = Matrix::Zero(C, kConvWidth * C);
    p.conv3_b = Vector::Zero(C);
    p.sg1_w = Matrix::Zero(C, C);
    p.sg2_w = Matrix::Zero(C, C);
    p.fc_w = Matrix::Zero(kEmbeddingDim, C);
    p.fc_b = Vector::Zero(kEmbeddingDim);
    return p;
}

ModelParams ModelParams::init(int channels, std::uint64_t seed) {
    ModelParams p = zeros(channels);
    std::mt19937_64 rng(seed);
    const double C = channels;
    auto fill = [&](double* data, Eigen::Index size, double fan_in) {
        std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
        for (Eigen::Index i = 0; i < size; ++i) data[i] = u(rng);
    };
    fill(p.conv1_w.data(), p.conv1_w.size(), kConvWidth);
    fill(p.conv1_b.data(), p.conv1_b.size(), kConvWidth);
    fill(p.conv2_w.data(), p.conv2_w.size(), kConvWidth * C);
    fill(p.conv2_b.data(), p.conv2_b.size(), kConvWidth * C);
    fill(p.conv3_w.data(), p.conv3_w.size(), kConvWidth * C);
    fill(p.conv3_b.data(), p.conv3_b.size(), kConvWidth * C);
    fill(p.sg1_w.data(), p.sg1_w.size(), C);
    fill(p.sg2_w.data(), p.sg2_w.size(), C);
    fill(p.fc_w.data(), p.fc_w.size(), C);
    fill(p.fc_b.data(), p.fc_b.size(), C);
    return p;
}

void ModelParams::for_each(
    const std::function<void(const std::string&, double*, Eigen::Index, Eigen::Index)>& fn) {
    fn("conv1_w", conv1_w.data(), conv1_w.rows(), conv1_w.cols());
    fn("conv1_b", conv1_b.data(), conv1_b.size(), 1);
    fn("conv2_w", conv2_w.data(), conv2_w.rows(), conv2_w.cols());
    fn("conv2_b", conv2_b.data(), conv2_b.size(), 1);
    fn("conv3_w", conv3_w.data(), conv3_w.rows(), conv3_w.cols());
    fn("conv3_b", conv3_b.data(), conv3_b.size(), 1);
    fn("sg1_w", sg1_w.data(), sg1_w.rows(), sg1_w.cols());
    fn("sg2_w", sg2_w.data(), sg2_w.rows(), sg2_w.cols());
    fn("fc_w", fc_w.data(), fc_w.rows(), fc_w.cols());
    fn("fc_b", fc_b.data(), fc_b.size(), 1);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const double*, Eigen::Index, Eigen::Index)>& fn) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](const std::string& name, double* data, Eigen::Index r, Eigen::Index c) { fn(name, data, r, c); });
}

std::size_t ModelParams::num_scalars() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const double*, Eigen::Index r, Eigen::Index c) { n += r * c; });
    return n;
}

void ModelParams::axpy(double scale, const ModelParams& other) {
    conv1_w += scale * other.conv1_w;
    conv1_b += scale * other.conv1_b;
    conv2_w += scale * other.conv2_w;
    conv2_b += scale * other.conv2_b;
    conv3_w += scale * other.conv3_w;
    conv3_b += scale * other.conv3_b;
    sg1_w += scale * other.sg1_w;
    sg2_w += scale * other.sg2_w;
    fc_w += scale * other.fc_w;
    fc_b += scale * other.fc_b;
}

bool ModelParams::same_shape(const ModelParams& other) const {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> a, b;
    for_each([&](const std::string&, const double*, Eigen::Index r, Eigen::Index c) { a.emplace_back(r, c); });
    other.for_each([&](const std::string&, const double*, Eigen::Index r, Eigen::Index c) { b.emplace_back(r, c); });
    return a == b;
}

// ---------------------------------------------------------------- conv head

std::array<int, 3> head_lengths(int t) {
    if (t < kMinCurveLength) {
        throw ShapeError("curve length " + std::to_string(t) + " is below the minimum of " +
                         std::to_string(kMinCurveLength));
    }
    std::array<int, 3> L{};
    int len = t;
    for (int l = 0; l < 3; ++l) {
        len = (len - kConvWidth) / kConvStride + 1;
        L[l] = len;
    }
    return L;
}

namespace {

inline double lrelu(double x, double slope) { return x > 0 ? x : slope * x; }
inline double lrelu_grad(double x, double slope) { return x > 0 ? 1.0 : slope; }

// Valid stride-2 convolution of a C_in x len signal.
Matrix conv_valid(const Matrix& in, const Matrix& w, const Vector& b) {
    const int cin = static_cast<int>(in.rows());
    const int len = static_cast<int>(in.cols());
    const int out_len = (len - kConvWidth) / kConvStride + 1;
    Matrix out(w.rows(), out_len);
    for (Eigen::Index o = 0; o < w.rows(); ++o) {
        for (int p = 0; p < out_len; ++p) {
            double s = b(o);
            for (int i = 0; i < cin; ++i)
                for (int k = 0; k < kConvWidth; ++k) s += w(o, i * kConvWidth + k) * in(i, kConvStride * p + k);
            out(o, p) = s;
        }
    }
    return out;
}

}  // namespace

Vector translation_head_forward(std::span<const double> curve, const ModelParams& params, double slope) {
    head_lengths(static_cast<int>(curve.size()));
    Matrix x(1, curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) x(0, i) = curve[i];
    Matrix y = conv_valid(x, params.conv1_w, params.conv1_b).unaryExpr([&](double v) { return lrelu(v, slope); });
    y = conv_valid(y, params.conv2_w, params.conv2_b).unaryExpr([&](double v) { return lrelu(v, slope); });
    y = conv_valid(y, params.conv3_w, params.conv3_b);
    return y.rowwise().maxCoeff();
}

namespace {

// Columns of concatenated per-direction signals at each layer.
struct ChunkLayout {
    std::size_t r0 = 0, r1 = 0;
    std::vector<int> start;          // crop start in the curve
    std::vector<std::array<int, 4>> len;  // crop length, L1, L2, L3
    std::vector<std::array<int, 4>> off;  // column offsets at input, layer 1, 2, 3
    std::array<int, 4> total{};
};

// Final positions whose receptive field [8p, 8p + 28] lies inside a constant
// run at either end all see the same input, so one of each kind suffices.
std::pair<int, int> crop_row(std::span<const std::int32_t> row) {
    const int t = static_cast<int>(row.size());
    const int L3 = head_lengths(t)[2];
    int s = 0;
    while (s < t && row[s] == row[0]) ++s;
    int e = t - 1;
    while (e >= 0 && row[e] == row[t - 1]) --e;
    const int pure_left = s >= 29 ? std::min((s - 29) / 8 + 1, L3) : 0;
    const int first_right = e < 0 ? 0 : std::min((e + 1 + 7) / 8, L3 - 1);
    const int first = std::max(pure_left - 1, 0);
    const int last = std::max(first_right, first);
    return {8 * first, 8 * (last - first) + 29};
}

constexpr int kChunkColumns = 4096;  // layer-2 columns per chunk

std::vector<ChunkLayout> plan_chunks(const EctField& field) {
    std::vector<ChunkLayout> chunks;
    ChunkLayout cur;
    auto flush = [&](std::size_t r) {
        cur.r1 = r;
        if (cur.r1 > cur.r0) chunks.push_back(std::move(cur));
        cur = ChunkLayout{};
        cur.r0 = r;
    };
    for (std::size_t r = 0; r < field.num_directions(); ++r) {
        const auto [start, len] = crop_row(field.row(r));
        const auto L = head_lengths(len);
        if (cur.total[2] > 0 && cur.total[2] + L[1] > kChunkColumns) flush(r);
        cur.start.push_back(start);
        cur.len.push_back({len, L[0], L[1], L[2]});
        cur.off.push_back(cur.total);
        for (int l = 0; l < 4; ++l) cur.total[l] += cur.len.back()[l];
    }
    flush(field.num_directions());
    return chunks;
}

// X(i*5+k, off_out + q) = A(i, off_in + 2q + k)
void im2col(const Matrix& A, const ChunkLayout& lay, int layer_in, Matrix& X) {
    const Eigen::Index C = A.rows();
    X.resize(C * kConvWidth, lay.total[layer_in + 1]);
    for (Eigen::Index i = 0; i < C; ++i) {
        const double* a = A.row(i).data();
        for (int k = 0; k < kConvWidth; ++k) {
            double* x = X.row(i * kConvWidth + k).data();
            for (std::size_t d = 0; d < lay.len.size(); ++d) {
                const int in0 = lay.off[d][layer_in], out0 = lay.off[d][layer_in + 1];
                const int n = lay.len[d][layer_in + 1];
                for (int q = 0; q < n; ++q) x[out0 + q] = a[in0 + kConvStride * q + k];
            }
        }
    }
}

void col2im_add(const Matrix& dX, const ChunkLayout& lay, int layer_in, Matrix& dA) {
    const Eigen::Index C = dA.rows();
    for (Eigen::Index i = 0; i < C; ++i) {
        double* a = dA.row(i).data();
        for (int k = 0; k < kConvWidth; ++k) {
            const double* x = dX.row(i * kConvWidth + k).data();
            for (std::size_t d = 0; d < lay.len.size(); ++d) {
                const int in0 = lay.off[d][layer_in], out0 = lay.off[d][layer_in + 1];
                const int n = lay.len[d][layer_in + 1];
                for (int q = 0; q < n; ++q) a[in0 + kConvStride * q + k] += x[out0 + q];
            }
        }
    }
}

void build_input(const EctField& field, const ChunkLayout& lay, Matrix& X1) {
    X1.resize(kConvWidth, lay.total[1]);
    for (std::size_t d = 0; d < lay.len.size(); ++d) {
        const auto row = field.row(lay.r0 + d);
        const int s = lay.start[d], o = lay.off[d][1];
        for (int k = 0; k < kConvWidth; ++k)
            for (int q = 0; q < lay.len[d][1]; ++q) X1(k, o + q) = row[s + kConvStride * q + k];
    }
}

void bias_lrelu(Matrix& Y, const Vector& b, double slope) {
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        double* y = Y.row(i).data();
        const double bi = b(i);
        for (Eigen::Index j = 0; j < Y.cols(); ++j) y[j] = lrelu(y[j] + bi, slope);
    }
}

struct ChunkCache {
    Matrix A1, A2;
    std::vector<int> argmax;  // local direction * C + channel -> column in layer 3
    bool valid = false;
};

void chunk_forward(const EctField& field, const ChunkLayout& lay, const ModelParams& P, double slope, Matrix& H,
                   ChunkCache& cache, bool keep) {
    const int C = P.channels();
    Matrix X1, X, A1, A2, Y3;
    build_input(field, lay, X1);
    A1.noalias() = P.conv1_w * X1;
    bias_lrelu(A1, P.conv1_b, slope);
    im2col(A1, lay, 1, X);
    A2.noalias() = P.conv2_w * X;
    bias_lrelu(A2, P.conv2_b, slope);
    im2col(A2, lay, 2, X);
    Y3.noalias() = P.conv3_w * X;

    const std::size_t nd = lay.len.size();
    cache.argmax.assign(nd * C, 0);
    for (int c = 0; c < C; ++c) {
        const double* y = Y3.row(c).data();
        for (std::size_t d = 0; d < nd; ++d) {
            const int o = lay.off[d][3];
            int best = o;
            for (int q = o + 1; q < o + lay.len[d][3]; ++q)
                if (y[q] > y[best]) best = q;
            cache.argmax[d * C + c] = best;
            H(lay.r0 + d, c) = y[best] + P.conv3_b(c);
        }
    }
    if (keep) {
        cache.A1 = std::move(A1);
        cache.A2 = std::move(A2);
        cache.valid = true;
    }
}

void chunk_backward(const EctField& field, const ChunkLayout& lay, const ModelParams& P, double slope,
                    const Matrix& dH, ChunkCache& cache, ModelParams& grad) {
    const int C = P.channels();
    Matrix X1, X;
    if (!cache.valid) {
        // recompute activations
        build_input(field, lay, X1);
        cache.A1.noalias() = P.conv1_w * X1;
        bias_lrelu(cache.A1, P.conv1_b, slope);
        im2col(cache.A1, lay, 1, X);
        cache.A2.noalias() = P.conv2_w * X;
        bias_lrelu(cache.A2, P.conv2_b, slope);
    }
    const Matrix& A1 = cache.A1;
    const Matrix& A2 = cache.A2;

    Matrix dA2 = Matrix::Zero(C, lay.total[2]);
    const std::size_t nd = lay.len.size();
    for (std::size_t d = 0; d < nd; ++d) {
        const int o2 = lay.off[d][2], o3 = lay.off[d][3];
        for (int c = 0; c < C; ++c) {
            const double g = dH(lay.r0 + d, c);
            grad.conv3_b(c) += g;
            if (g == 0) continue;
            const int p = cache.argmax[d * C + c] - o3;
            double* gw = grad.conv3_w.row(c).data();
            const double* w = P.conv3_w.row(c).data();
            for (int i = 0; i < C; ++i) {
                const double* a = A2.row(i).data() + o2 + kConvStride * p;
                double* da = dA2.row(i).data() + o2 + kConvStride * p;
                for (int k = 0; k < kConvWidth; ++k) {
                    gw[i * kConvWidth + k] += g * a[k];
                    da[k] += g * w[i * kConvWidth + k];
                }
            }
        }
    }

    // through LeakyReLU of layer 2; the activation's sign equals the pre-activation's
    for (Eigen::Index i = 0; i < dA2.rows(); ++i) {
        double* g = dA2.row(i).data();
        const double* a = A2.row(i).data();
        for (Eigen::Index j = 0; j < dA2.cols(); ++j) g[j] *= lrelu_grad(a[j], slope);
    }
    grad.conv2_b += dA2.rowwise().sum();
    im2col(A1, lay, 1, X);
    grad.conv2_w.noalias() += dA2 * X.transpose();
    Matrix dX;
    dX.noalias() = P.conv2_w.transpose() * dA2;

    Matrix dA1 = Matrix::Zero(C, lay.total[1]);
    col2im_add(dX, lay, 1, dA1);
    for (Eigen::Index i = 0; i < dA1.rows(); ++i) {
        double* g = dA1.row(i).data();
        const double* a = A1.row(i).data();
        for (Eigen::Index j = 0; j < dA1.cols(); ++j) g[j] *= lrelu_grad(a[j], slope);
    }
    grad.conv1_b += dA1.rowwise().sum();
    if (X1.size() == 0) build_input(field, lay, X1);
    grad.conv1_w.noalias() += dA1 * X1.transpose();
}

constexpr std::size_t kCacheBudgetBytes = std::size_t{256} << 20;

struct HeadPass {
    std::vector<ChunkLayout> chunks;
    std::vector<ChunkCache> caches;
    Matrix H;
};

HeadPass head_forward(const EctField& field, const ModelParams& P, double slope, bool for_backward) {
    if (field.t < kMinCurveLength) head_lengths(field.t);
    HeadPass pass;
    pass.chunks = plan_chunks(field);
    pass.caches.resize(pass.chunks.size());
    pass.H.resize(static_cast<Eigen::Index>(field.num_directions()), P.channels());
    std::size_t bytes = 0;
    for (const auto& c : pass.chunks) bytes += sizeof(double) * P.channels() * (c.total[1] + c.total[2]);
    const bool keep = for_backward && bytes <= kCacheBudgetBytes;
    parallel_for(pass.chunks.size(), [&](std::size_t i) {
        chunk_forward(field, pass.chunks[i], P, slope, pass.H, pass.caches[i], keep);
    });
    return pass;
}

}  // namespace

Matrix head_features(const EctField& field, const ModelParams& params, double slope) {
    return head_forward(field, params, slope, false).H;
}

// ---------------------------------------------------------------- graph layers

NormalizedAdjacency normalized_adjacency(const SphereGraph& graph) {
    const auto n = static_cast<Eigen::Index>(graph.num_nodes);
    std::vector<double> degree(n, 0.0);
    for (const auto& [i, j] : graph.edges) {
        if (i == j) throw ArgumentError("sphere graph has a self loop");
        degree[i] += 1;
        degree[j] += 1;
    }
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(2 * graph.edges.size());
    for (const auto& [i, j] : graph.edges) {
        const double w = 1.0 / std::sqrt(degree[i] * degree[j]);
        triplets.emplace_back(i, j, w);
        triplets.emplace_back(j, i, w);
    }
    NormalizedAdjacency A(n, n);
    A.setFromTriplets(triplets.begin(), triplets.end());
    return A;
}

namespace {

Matrix propagate(const NormalizedAdjacency& A, Matrix X, int k) {
    Matrix Y;
    for (int s = 0; s < k; ++s) {
        Y.noalias() = A * X;
        X.swap(Y);
    }
    return X;
}

}  // namespace

Matrix sgconv_layer(const NormalizedAdjacency& adjacency, const Matrix& features, const Matrix& weight, int k) {
    if (features.rows() != adjacency.rows()) throw ShapeError("feature rows do not match the graph size");
    if (features.cols() != weight.rows()) throw ShapeError("feature width does not match the weight");
    if (k < 0) throw ArgumentError("hop count must be non-negative");
    Matrix out;
    out.noalias() = propagate(adjacency, features, k) * weight;
    return out;
}

namespace {

struct GraphPass {
    Matrix S1, Z1, S2, Z2;
    Vector pooled;
    Eigen::Vector2d y;
};

GraphPass graph_forward(const Matrix& H, const NormalizedAdjacency& A, const ModelParams& P,
                        const ModelConfig& cfg) {
    GraphPass g;
    g.S1 = propagate(A, H, cfg.k);
    g.Z1.noalias() = g.S1 * P.sg1_w;
    const Matrix act1 = g.Z1.unaryExpr([&](double v) { return lrelu(v, cfg.slope); });
    g.S2 = propagate(A, act1, cfg.k);
    g.Z2.noalias() = g.S2 * P.sg2_w;
    const Matrix act2 = g.Z2.unaryExpr([&](double v) { return lrelu(v, cfg.slope); });
    g.pooled = act2.colwise().mean().transpose();
    g.y = P.fc_w * g.pooled + P.fc_b;
    return g;
}

void check_field(const EctField& field, const NormalizedAdjacency& A, const ModelParams& P) {
    if (static_cast<Eigen::Index>(field.num_directions()) != A.rows()) {
        throw ShapeError("field has " + std::to_string(field.num_directions()) + " directions, graph has " +
                         std::to_string(A.rows()) + " nodes");
    }
    if (P.channels() < 1) throw ShapeError("empty model parameters");
}

}  // namespace

ForwardResult model_forward_detailed(const EctField& field, const NormalizedAdjacency& adjacency,
                                     const ModelParams& params, const ModelConfig& config) {
    check_field(field, adjacency, params);
    ForwardResult r;
    r.node_features = head_features(field, params, config.slope);
    r.embedding = graph_forward(r.node_features, adjacency, params, config).y;
    return r;
}

Eigen::Vector2d model_forward(const EctField& field, const NormalizedAdjacency& adjacency, const ModelParams& params,
                              const ModelConfig& config) {
    return model_forward_detailed(field, adjacency, params, config).embedding;
}

Eigen::Vector2d model_forward(const EctField& field, const SphereGraph& graph, const ModelParams& params,
                              const ModelConfig& config) {
    return model_forward(field, normalized_adjacency(graph), params, config);
}

// ---------------------------------------------------------------- general MPNN layer

const Matrix& DistanceTable::operator()(double distance) const {
    if (distance == 0) return at_zero;
    if (breakpoints.size() < 2 || pieces.size() + 1 != breakpoints.size()) {
        throw ArgumentError("distance table needs breakpoints.size() == pieces.size() + 1 >= 2");
    }
    if (!(distance > 0) || distance >= breakpoints.back()) {
        throw ArgumentError("distance " + std::to_string(distance) + " outside the table domain");
    }
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), distance);
    return pieces[static_cast<std::size_t>(it - breakpoints.begin()) - 1];
}

Matrix mpnn_layer(const DirectionSet& directions, const Matrix& features, const DistanceTable& table) {
    const auto n = static_cast<Eigen::Index>(directions.size());
    if (features.rows() != n) throw ShapeError("feature rows do not match the direction count");
    if (features.cols() != table.at_zero.rows()) throw ShapeError("feature width does not match the kernel");
    Matrix out = Matrix::Zero(n, table.at_zero.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = i == j ? 0.0 : (directions[i] - directions[j]).norm();
            out.row(i).noalias() += features.row(j) * table(d);
        }
    }
    out /= static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------- loss and gradients

LossValue smooth_l1_loss(const Eigen::Vector2d& pred, const Eigen::Vector2d& target, double beta) {
    if (!(beta > 0)) throw ArgumentError("smooth-l1 beta must be positive");
    LossValue out{0.0, Eigen::Vector2d::Zero()};
    for (int i = 0; i < 2; ++i) {
        const double d = pred(i) - target(i);
        if (std::abs(d) < beta) {
            out.loss += 0.5 * d * d / beta;
            out.gradient(i) = d / beta;
        } else {
            out.loss += std::abs(d) - 0.5 * beta;
            out.gradient(i) = d > 0 ? 1.0 : -1.0;
        }
    }
    out.loss /= 2;
    out.gradient /= 2;
    return out;
}

GradientResult compute_gradients(std::span<const TrainingExample> batch, const NormalizedAdjacency& adjacency,
                                 const ModelParams& params, const ModelConfig& config, double beta) {
    if (batch.empty()) throw ArgumentError("empty batch");
    const int C = params.channels();
    GradientResult result;
    result.gradient = ModelParams::zeros(C);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    for (const auto& ex : batch) {
        check_field(*ex.field, adjacency, params);
        HeadPass head = head_forward(*ex.field, params, config.slope, true);
        const GraphPass g = graph_forward(head.H, adjacency, params, config);
        const LossValue lv = smooth_l1_loss(g.y, ex.target, beta);
        result.loss += lv.loss * inv_b;
        const Eigen::Vector2d dy = lv.gradient * inv_b;

        ModelParams& G = result.gradient;
        G.fc_w.noalias() += dy * g.pooled.transpose();
        G.fc_b += dy;
        const Vector dm = params.fc_w.transpose() * dy;
        const double n = static_cast<double>(head.H.rows());

        Matrix dZ2(g.Z2.rows(), g.Z2.cols());
        for (Eigen::Index i = 0; i < dZ2.rows(); ++i)
            for (Eigen::Index c = 0; c < dZ2.cols(); ++c) dZ2(i, c) = dm(c) / n * lrelu_grad(g.Z2(i, c), config.slope);
        G.sg2_w.noalias() += g.S2.transpose() * dZ2;
        Matrix dZ1 = propagate(adjacency, dZ2 * params.sg2_w.transpose(), config.k);
        for (Eigen::Index i = 0; i < dZ1.rows(); ++i)
            for (Eigen::Index c = 0; c < dZ1.cols(); ++c) dZ1(i, c) *= lrelu_grad(g.Z1(i, c), config.slope);
        G.sg1_w.noalias() += g.S1.transpose() * dZ1;
        const Matrix dH = propagate(adjacency, dZ1 * params.sg1_w.transpose(), config.k);

        std::vector<ModelParams> partial(head.chunks.size());
        parallel_for(head.chunks.size(), [&](std::size_t i) {
            partial[i] = ModelParams::zeros(C);
            chunk_backward(*ex.field, head.chunks[i], params, config.slope, dH, head.caches[i], partial[i]);
        });
        for (const auto& p : partial) {
            G.conv1_w += p.conv1_w;
            G.conv1_b += p.conv1_b;
            G.conv2_w += p.conv2_w;
            G.conv2_b += p.conv2_b;
            G.conv3_w += p.conv3_w;
            G.conv3_b += p.conv3_b;
        }
    }
    return result;
}

// ---------------------------------------------------------------- optimizer

double scheduled_lr(const TrainConfig& config, int epoch) {
    return epoch < config.lr_drop_epoch ? config.lr : config.lr_after_drop;
}

Optimizer::Optimizer(OptimizerKind kind, int channels)
    : kind_(kind), m_(ModelParams::zeros(channels)), v_(ModelParams::zeros(channels)) {}

void Optimizer::step(ModelParams& params, const ModelParams& gradient, int epoch, const TrainConfig& config) {
    if (!params.same_shape(gradient)) throw ShapeError("gradient shape does not match the parameters");
    const double lr = scheduled_lr(config, epoch);
    if (kind_ == OptimizerKind::Sgd) {
        params.axpy(-lr, gradient);
        return;
    }
    ++steps_;
    const double c1 = 1 - std::pow(kBeta1, static_cast<double>(steps_));
    const double c2 = 1 - std::pow(kBeta2, static_cast<double>(steps_));
    std::vector<double*> p, m, v;
    std::vector<const double*> g;
    std::vector<Eigen::Index> sizes;
    params.for_each([&](const std::string&, double* d, Eigen::Index r, Eigen::Index c) {
        p.push_back(d);
        sizes.push_back(r * c);
    });
    m_.for_each([&](const std::string&, double* d, Eigen::Index, Eigen::Index) { m.push_back(d); });
    v_.for_each([&](const std::string&, double* d, Eigen::Index, Eigen::Index) { v.push_back(d); });
    gradient.for_each([&](const std::string&, const double* d, Eigen::Index, Eigen::Index) { g.push_back(d); });
    for (std::size_t t = 0; t < p.size(); ++t) {
        for (Eigen::Index i = 0; i < sizes[t]; ++i) {
            m[t][i] = kBeta1 * m[t][i] + (1 - kBeta1) * g[t][i];
            v[t][i] = kBeta2 * v[t][i] + (1 - kBeta2) * g[t][i] * g[t][i];
            p[t][i] -= lr * (m[t][i] / c1) / (std::sqrt(v[t][i] / c2) + kEps);
        }
    }
}

Matrix octagon_targets(int classes) {
    if (classes < 1 || classes > 8) throw ArgumentError("class count must be between 1 and 8");
    Matrix T(classes, 2);
    for (int c = 0; c < classes; ++c) {
        const double angle = 2 * std::numbers::pi * c / 8;
        T(c, 0) = std::cos(angle);
        T(c, 1) = std::sin(angle);
    }
    return T;
}

// ---------------------------------------------------------------- diagnostics

namespace {

// Index of the closest direction for each query (largest inner product).
std::vector<std::uint32_t> nearest_indices(const DirectionSet& directions, const Eigen::Matrix<double, Eigen::Dynamic, 3>& queries) {
    const auto n = static_cast<Eigen::Index>(directions.size());
    Eigen::Matrix<double, Eigen::Dynamic, 3> P(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) P.row(i) = directions[i].transpose();
    const Eigen::MatrixXd scores = P * queries.transpose();  // n x q
    std::vector<std::uint32_t> out(queries.rows());
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        Eigen::Index best;
        scores.col(q).maxCoeff(&best);
        out[q] = static_cast<std::uint32_t>(best);
    }
    return out;
}

Eigen::Matrix<double, Eigen::Dynamic, 3> rotated_points(const DirectionSet& directions, const Eigen::Matrix3d& R) {
    Eigen::Matrix<double, Eigen::Dynamic, 3> Q(directions.size(), 3);
    for (std::size_t i = 0; i < directions.size(); ++i) Q.row(i) = (R * directions[i]).transpose();
    return Q;
}

}  // namespace

double equivariance_error(const std::function<double(double)>& kernel, const Matrix& features,
                          const Eigen::Matrix3d& rotation, const DirectionSet& directions, Resampling resampling) {
    const auto n = static_cast<Eigen::Index>(directions.size());
    if (features.rows() != n) throw ShapeError("feature rows do not match the direction count");
    const auto RX = rotated_points(directions, rotation);

    Matrix resampled(n, features.cols());
    if (resampling == Resampling::Nearest) {
        const auto nn = nearest_indices(directions, RX);
        for (Eigen::Index j = 0; j < n; ++j) resampled.row(j) = features.row(nn[j]);
    } else {
        std::vector<double> channel(n);
        for (Eigen::Index c = 0; c < features.cols(); ++c) {
            for (Eigen::Index j = 0; j < n; ++j) channel[j] = features(j, c);
            for (Eigen::Index j = 0; j < n; ++j)
                resampled(j, c) = interpolate_linear(directions, channel, RX.row(j).transpose());
        }
    }

    double worst = 0;
    Vector lhs(features.cols()), rhs(features.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        lhs.setZero();
        rhs.setZero();
        const Vec3 rx = RX.row(i).transpose();
        for (Eigen::Index j = 0; j < n; ++j) {
            lhs += kernel((rx - directions[j]).norm()) * features.row(j).transpose();
            rhs += kernel((directions[i] - directions[j]).norm()) * resampled.row(j).transpose();
        }
        worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff() / static_cast<double>(n));
    }
    return worst;
}

double equivariance_error(const DistanceTable& table, const Matrix& features, const Eigen::Matrix3d& rotation,
                          const DirectionSet& directions) {
    const auto n = static_cast<Eigen::Index>(directions.size());
    if (features.rows() != n) throw ShapeError("feature rows do not match the direction count");
    const auto RX = rotated_points(directions, rotation);
    const auto nn = nearest_indices(directions, RX);
    double worst = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd lhs = Eigen::RowVectorXd::Zero(table.at_zero.cols());
        Eigen::RowVectorXd rhs = lhs;
        const Vec3 rx = RX.row(i).transpose();
        for (Eigen::Index j = 0; j < n; ++j) {
            const double dl = (rx - directions[j]).norm();
            lhs += features.row(j) * table(dl < 1e-12 ? 0.0 : dl);
            rhs += features.row(nn[j]) * table(i == j ? 0.0 : (directions[i] - directions[j]).norm());
        }
        worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff() / static_cast<double>(n));
    }
    return worst;
}

double rotation_max_correlation(std::span<const double> f, std::span<const double> g,
                                const DirectionSet& directions, std::span<const Eigen::Matrix3d> rotations) {
    const std::size_t n = directions.size();
    if (f.size() != n || g.size() != n) throw ShapeError("signal length does not match the direction count");
    auto score = [&](const Eigen::Matrix3d& R) {
        const auto nn = nearest_indices(directions, rotated_points(directions, R.transpose()));
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += g[nn[i]] * f[i];
        return s / static_cast<double>(n);
    };
    double best = score(Eigen::Matrix3d::Identity());
    for (const auto& R : rotations) best = std::max(best, score(R));
    return best;
}

// ---------------------------------------------------------------- checkpoints

namespace {
constexpr char kCheckpointMagic[5] = "ECTW";
}

void save_checkpoint(const ModelParams& params, const ModelConfig& config, std::ostream& out) {
    binary::put_magic(out, kCheckpointMagic);
    binary::put<std::uint32_t>(out, kCheckpointVersion);
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(config.k));
    binary::put<double>(out, config.slope);
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.channels()));
    std::uint32_t count = 0;
    params.for_each([&](const std::string&, const double*, Eigen::Index, Eigen::Index) { ++count; });
    binary::put<std::uint32_t>(out, count);
    params.for_each([&](const std::string&, const double*, Eigen::Index r, Eigen::Index c) {
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(r));
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(c));
    });
    params.for_each([&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) {
        for (Eigen::Index i = 0; i < r * c; ++i) binary::put<double>(out, d[i]);
    });
    if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const ModelParams& params, const ModelConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    save_checkpoint(params, config, out);
}

ModelParams load_checkpoint(std::istream& in, const ModelConfig& expected) {
    binary::expect_magic(in, kCheckpointMagic);
    const auto version = binary::get<std::uint32_t>(in);
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto k = binary::get<std::uint32_t>(in);
    const double slope = binary::get<double>(in);
    const auto channels = binary::get<std::uint32_t>(in);
    if (static_cast<int>(k) != expected.k || slope != expected.slope ||
        static_cast<int>(channels) != expected.channels) {
        throw ShapeError("checkpoint was written for k=" + std::to_string(k) + ", slope=" + std::to_string(slope) +
                         ", channels=" + std::to_string(channels) + "; configuration differs");
    }
    ModelParams p = ModelParams::zeros(expected.channels);
    const auto count = binary::get<std::uint32_t>(in);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
    p.for_each([&](const std::string&, double*, Eigen::Index r, Eigen::Index c) { shapes.emplace_back(r, c); });
    if (count != shapes.size()) throw ShapeError("checkpoint tensor count differs");
    for (const auto& [r, c] : shapes) {
        const auto rr = binary::get<std::uint32_t>(in), cc = binary::get<std::uint32_t>(in);
        if (rr != r || cc != c) throw ShapeError("checkpoint tensor shape differs");
    }
    p.for_each([&](const std::string&, double* d, Eigen::Index r, Eigen::Index c) {
        for (Eigen::Index i = 0; i < r * c; ++i) d[i] = binary::get<double>(in);
    });
    return p;
}

ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return load_checkpoint(in, expected);
}

}  // namespace ectnet
