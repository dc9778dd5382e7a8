#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "../common/random_fixtures.hpp"
#include "doctest.h"
#include "ectnet/error.hpp"
#include "ectnet/model.hpp"
#include "ectnet/shapes.hpp"

using namespace ectnet;

namespace {

EctField field_for(const EmbeddedComplex& K, const DirectionSet& dirs, int t) {
    return ect_field(normalize_scale(K), dirs, 8.0, t);
}

EctField permuted_rows(const EctField& F, const std::vector<std::uint32_t>& perm) {
    EctField G = F;
    for (std::size_t r = 0; r < F.num_directions(); ++r)
        std::copy(F.row(perm[r]).begin(), F.row(perm[r]).end(), G.values.begin() + r * F.t);
    return G;
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

double loss_of(const std::vector<TrainingExample>& batch, const NormalizedAdjacency& A, const ModelParams& P,
               const ModelConfig& cfg, double beta) {
    double loss = 0;
    for (const auto& ex : batch) loss += smooth_l1_loss(model_forward(*ex.field, A, P, cfg), ex.target, beta).loss;
    return loss / batch.size();
}

}  // namespace

TEST_CASE("head lengths") {
    CHECK(head_lengths(512) == std::array<int, 3>{254, 125, 61});
    CHECK(head_lengths(29) == std::array<int, 3>{13, 5, 1});
    CHECK_THROWS_AS(head_lengths(28), ShapeError);
}

TEST_CASE("reference head") {
    const auto P = ModelParams::init(6, 3);
    SUBCASE("zero curve gives the bias response") {
        const std::vector<double> zero(64, 0.0);
        const Vector h = translation_head_forward(zero, P, 0.01);
        Vector a1 = P.conv1_b.unaryExpr([](double v) { return v > 0 ? v : 0.01 * v; });
        Vector a2(6), a3(6);
        for (int o = 0; o < 6; ++o) {
            double s = P.conv2_b(o);
            for (int i = 0; i < 6; ++i)
                for (int k = 0; k < 5; ++k) s += P.conv2_w(o, i * 5 + k) * a1(i);
            a2(o) = s > 0 ? s : 0.01 * s;
        }
        for (int o = 0; o < 6; ++o) {
            double s = P.conv3_b(o);
            for (int i = 0; i < 6; ++i)
                for (int k = 0; k < 5; ++k) s += P.conv3_w(o, i * 5 + k) * a2(i);
            a3(o) = s;
        }
        CHECK((h - a3).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("shift by 8 bins with constant margins") {
        std::mt19937_64 rng(4);
        std::uniform_int_distribution<int> v(-3, 3);
        std::vector<double> curve(256, 0.0);
        for (int i = 40; i < 200; ++i) curve[i] = v(rng);
        for (int i = 200; i < 256; ++i) curve[i] = 2;
        std::vector<double> shifted(256, 0.0);
        for (int i = 8; i < 256; ++i) shifted[i] = curve[i - 8];
        const Vector a = translation_head_forward(curve, P, 0.01);
        const Vector b = translation_head_forward(shifted, P, 0.01);
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("batched head matches the reference") {
    const auto P = ModelParams::init(8, 11);
    const auto dirs = icosphere(2).directions;
    for (auto shape : {ShapeClass::Torus, ShapeClass::DoubleTorus}) {
        for (int t : {29, 64, 200}) {
            const auto F = field_for(radial_deform(base_shape(shape, 12.0, 2), 2, 0.2), dirs, t);
            const Matrix H = head_features(F, P, 0.01);
            for (std::size_t r = 0; r < F.num_directions(); ++r) {
                std::vector<double> curve(F.row(r).begin(), F.row(r).end());
                const Vector ref = translation_head_forward(curve, P, 0.01);
                CHECK((H.row(r).transpose() - ref).cwiseAbs().maxCoeff() <= 1e-12 * (1 + ref.cwiseAbs().maxCoeff()));
            }
        }
    }
    // shapes too short
    EctField tiny;
    tiny.directions = icosphere(1).directions;
    tiny.t = 20;
    tiny.values.assign(12 * 20, 0);
    CHECK_THROWS_AS(head_features(tiny, P, 0.01), ShapeError);
}

TEST_CASE("normalized adjacency") {
    SphereGraph path;
    path.num_nodes = 2;
    path.edges = {{0, 1}};
    path.edge_lengths = {1};
    Matrix A = Matrix(normalized_adjacency(path));
    CHECK(A(0, 1) == 1);
    CHECK(A(1, 0) == 1);
    CHECK(A(0, 0) == 0);

    SphereGraph tri;
    tri.num_nodes = 3;
    tri.edges = {{0, 1}, {0, 2}, {1, 2}};
    A = Matrix(normalized_adjacency(tri));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(A(i, j) == (i == j ? 0.0 : 0.5));

    SphereGraph lonely;
    lonely.num_nodes = 3;
    lonely.edges = {{0, 1}};
    A = Matrix(normalized_adjacency(lonely));
    CHECK(A.row(2).cwiseAbs().sum() == 0);

    const auto ico = icosphere(1);
    const auto S = normalized_adjacency(ico.graph);
    Matrix D = Matrix(S);
    CHECK(max_abs_diff(D, D.transpose()) == 0);
    for (int i = 0; i < D.rows(); ++i) {
        CHECK(D(i, i) == 0);
        for (int j = 0; j < D.cols(); ++j)
            if (D(i, j) != 0) CHECK(D(i, j) == doctest::Approx(0.2).epsilon(1e-15));
    }
    // power iteration on a generic start vector
    Vector x = Vector::LinSpaced(12, 1, 2);
    double rho = 0;
    for (int it = 0; it < 500; ++it) {
        Vector y = S * x;
        rho = y.norm() / x.norm();
        x = y / y.norm();
    }
    CHECK(rho <= 1 + 1e-12);
}

TEST_CASE("sgconv layer") {
    const auto ico = icosphere(1);
    const auto A = normalized_adjacency(ico.graph);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    Matrix X(12, 3), W(3, 4);
    for (auto& v : X.reshaped()) v = n(rng);
    for (auto& v : W.reshaped()) v = n(rng);
    CHECK(max_abs_diff(sgconv_layer(A, X, W, 0), X * W) < 1e-14);

    const Matrix ones = Matrix::Ones(12, 1);
    const Matrix unit = Matrix::Ones(1, 1);
    CHECK(max_abs_diff(sgconv_layer(A, ones, unit, 39), ones) < 1e-12);

    const auto big = icosphere(3);
    const auto B = normalized_adjacency(big.graph);
    Matrix Y(big.directions.size(), 3);
    for (auto& v : Y.reshaped()) v = n(rng);
    const Matrix out = sgconv_layer(B, Y, W, 5);
    for (const auto& g : icosahedral_group()) {
        const auto perm = *node_permutation(big.directions, g, 1e-12);
        Matrix PY(Y.rows(), Y.cols()), Pout(out.rows(), out.cols());
        for (Eigen::Index i = 0; i < Y.rows(); ++i) {
            PY.row(perm[i]) = Y.row(i);
            Pout.row(perm[i]) = out.row(i);
        }
        CHECK(max_abs_diff(sgconv_layer(B, PY, W, 5), Pout) < 1e-12);
    }
    CHECK_THROWS_AS(sgconv_layer(A, Matrix::Ones(5, 3), W, 1), ShapeError);
    CHECK_THROWS_AS(sgconv_layer(A, X, Matrix::Ones(2, 2), 1), ShapeError);
}

TEST_CASE("model forward") {
    const ModelConfig cfg{16, 39, 0.01};
    const auto P = ModelParams::init(16, 5);
    const auto ico = icosphere(2);
    const auto A = normalized_adjacency(ico.graph);
    const auto F = field_for(radial_deform(torus_mesh(10, 4), 8, 0.2), ico.directions, 96);
    const Eigen::Vector2d y = model_forward(F, A, P, cfg);
    CHECK(y.allFinite());
    CHECK(model_forward(F, ico.graph, P, cfg) == y);
    CHECK(model_forward(F, A, P, cfg) == y);  // repeatable bit for bit

    SUBCASE("icosahedral row permutations leave the embedding unchanged") {
        for (const auto& g : icosahedral_group()) {
            const auto perm = *node_permutation(ico.directions, g, 1e-12);
            CHECK((model_forward(permuted_rows(F, perm), A, P, cfg) - y).cwiseAbs().maxCoeff() <= 1e-9);
        }
    }
    SUBCASE("zero field depends only on parameters") {
        EctField Z = F;
        std::fill(Z.values.begin(), Z.values.end(), 0);
        const auto z1 = model_forward(Z, A, P, cfg);
        EctField Z2 = ect_field(EmbeddedComplex{}, ico.directions, 8, 96);
        CHECK(model_forward(Z2, A, P, cfg) == z1);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(model_forward(F, normalized_adjacency(icosphere(1).graph), P, cfg), ShapeError);
    }
}

TEST_CASE("mpnn layer") {
    const auto dirs = icosphere(1).directions;
    const double n = 12;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    Matrix X(12, 2);
    for (auto& v : X.reshaped()) v = nd(rng);

    DistanceTable id;
    id.at_zero = n * Matrix::Identity(2, 2);
    id.breakpoints = {0, 2.5};
    id.pieces = {Matrix::Zero(2, 2)};
    CHECK(max_abs_diff(mpnn_layer(dirs, X, id), X) < 1e-14);

    // GCN form: W0 X + sum over neighbours W1 X_j, neighbours closer than r
    Matrix W0(2, 3), W1(2, 3);
    for (auto& v : W0.reshaped()) v = nd(rng);
    for (auto& v : W1.reshaped()) v = nd(rng);
    const double r = 1.2;
    DistanceTable gcn;
    gcn.at_zero = n * W0;
    gcn.breakpoints = {0, r, 2.5};
    gcn.pieces = {n * W1, Matrix::Zero(2, 3)};
    Matrix expected = X * W0;
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j)
            if (i != j && (dirs[i] - dirs[j]).norm() < r) expected.row(i) += X.row(j) * W1;
    CHECK(max_abs_diff(mpnn_layer(dirs, X, gcn), expected) < 1e-12);

    // permutation equivariance under the symmetry group
    const Matrix out = mpnn_layer(dirs, X, gcn);
    for (const auto& g : icosahedral_group()) {
        const auto perm = *node_permutation(dirs, g, 1e-12);
        Matrix PX(12, 2), Pout(12, 3);
        for (int i = 0; i < 12; ++i) {
            PX.row(perm[i]) = X.row(i);
            Pout.row(perm[i]) = out.row(i);
        }
        CHECK(max_abs_diff(mpnn_layer(dirs, PX, gcn), Pout) < 1e-12);
    }

    DistanceTable short_table = gcn;
    short_table.breakpoints = {0, r, 1.5};
    CHECK_THROWS_AS(mpnn_layer(dirs, X, short_table), ArgumentError);
}

TEST_CASE("smooth l1") {
    const Eigen::Vector2d t(0.3, -0.2);
    CHECK(smooth_l1_loss(t, t, 0.1).loss == 0);
    CHECK(smooth_l1_loss(t + Eigen::Vector2d(0.05, 0.05), t, 0.1).loss == doctest::Approx(0.0125).epsilon(1e-12));
    CHECK(smooth_l1_loss(Eigen::Vector2d(1, 1), Eigen::Vector2d(0, 0), 0.1).loss == doctest::Approx(0.95).epsilon(1e-14));
    // derivative is continuous at |d| = beta
    const double beta = 0.1, h = 1e-9;
    for (double sign : {1.0, -1.0}) {
        const auto left = smooth_l1_loss(Eigen::Vector2d(sign * (beta - h), 0), Eigen::Vector2d::Zero(), beta);
        const auto right = smooth_l1_loss(Eigen::Vector2d(sign * (beta + h), 0), Eigen::Vector2d::Zero(), beta);
        CHECK(std::abs(2 * left.gradient(0) - sign) < 1e-7);
        CHECK(std::abs(2 * right.gradient(0) - sign) < 1e-12);
    }
    CHECK_THROWS_AS(smooth_l1_loss(t, t, 0), ArgumentError);
}

TEST_CASE("gradients") {
    const ModelConfig cfg{8, 2, 0.01};
    const auto ico = icosphere(1);
    const auto A = normalized_adjacency(ico.graph);
    const auto F1 = field_for(radial_deform(torus_mesh(10, 4, 12, 8), 1, 0.2), ico.directions, 64);
    const auto F2 = field_for(radial_deform(icosphere_mesh(2, 10), 2, 0.2), ico.directions, 64);
    auto P = ModelParams::init(8, 21);

    SUBCASE("zero loss gives zero gradient") {
        const auto y = model_forward(F1, A, P, cfg);
        const std::vector<TrainingExample> batch = {{&F1, y}};
        const auto g = compute_gradients(batch, A, P, cfg, 0.1);
        CHECK(g.loss == 0);
        g.gradient.for_each([](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) {
            for (Eigen::Index i = 0; i < r * c; ++i) CHECK(std::abs(d[i]) <= 1e-12);
        });
    }
    SUBCASE("central differences") {
        const std::vector<TrainingExample> batch = {{&F1, Eigen::Vector2d(1, 0)}, {&F2, Eigen::Vector2d(0, 1)}};
        const auto g = compute_gradients(batch, A, P, cfg, 0.1);
        CHECK(g.loss == doctest::Approx(loss_of(batch, A, P, cfg, 0.1)).epsilon(1e-12));
        std::vector<const double*> grads;
        g.gradient.for_each([&](const std::string&, const double* d, Eigen::Index, Eigen::Index) { grads.push_back(d); });
        const double h = 1e-6;
        double worst = 0;
        std::size_t t = 0;
        P.for_each([&](const std::string& name, double* d, Eigen::Index r, Eigen::Index c) {
            for (Eigen::Index i = 0; i < r * c; ++i) {
                const double keep = d[i];
                d[i] = keep + h;
                const double up = loss_of(batch, A, P, cfg, 0.1);
                d[i] = keep - h;
                const double down = loss_of(batch, A, P, cfg, 0.1);
                d[i] = keep;
                const double numeric = (up - down) / (2 * h);
                const double analytic = grads[t][i];
                const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
                CAPTURE(name);
                CAPTURE(i);
                CHECK(rel <= 1e-4);
                worst = std::max(worst, rel);
            }
            ++t;
        });
        MESSAGE("worst relative gradient error " << worst);
    }
    SUBCASE("batch gradient is the mean of singleton gradients") {
        const std::vector<TrainingExample> both = {{&F1, Eigen::Vector2d(1, 0)}, {&F2, Eigen::Vector2d(0, 1)}};
        const auto g = compute_gradients(both, A, P, cfg, 0.1);
        const auto a = compute_gradients(std::span(both).subspan(0, 1), A, P, cfg, 0.1);
        const auto b = compute_gradients(std::span(both).subspan(1, 1), A, P, cfg, 0.1);
        ModelParams sum = a.gradient;
        sum.axpy(1, b.gradient);
        std::vector<double> x, y;
        g.gradient.for_each([&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) { x.insert(x.end(), d, d + r * c); });
        sum.for_each([&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) { y.insert(y.end(), d, d + r * c); });
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(2 * x[i] - y[i]) <= 1e-12 * (1 + std::abs(y[i])));
        CHECK(2 * g.loss == doctest::Approx(a.loss + b.loss).epsilon(1e-14));
    }
}

TEST_CASE("optimizer") {
    TrainConfig tc;
    CHECK(scheduled_lr(tc, 199) == 0.001);
    CHECK(scheduled_lr(tc, 200) == 0.0001);

    auto P = ModelParams::init(4, 1);
    const auto before = P;
    Optimizer adam(OptimizerKind::Adam, 4);
    adam.step(P, ModelParams::zeros(4), 0, tc);
    CHECK(P.conv2_w == before.conv2_w);
    CHECK(P.fc_b == before.fc_b);

    auto G = ModelParams::init(4, 2);
    auto Q1 = before, Q2 = before;
    Optimizer o1(OptimizerKind::Adam, 4), o2(OptimizerKind::Adam, 4);
    for (int s = 0; s < 3; ++s) {
        o1.step(Q1, G, s, tc);
        o2.step(Q2, G, s, tc);
    }
    CHECK(Q1.conv2_w == Q2.conv2_w);
    // first Adam step moves each coordinate by lr against the gradient sign
    auto R = before;
    Optimizer o3(OptimizerKind::Adam, 4);
    o3.step(R, G, 0, tc);
    CHECK(std::abs(R.fc_b(0) - (before.fc_b(0) - 0.001 * (G.fc_b(0) > 0 ? 1 : -1))) < 1e-9);

    auto S = before;
    Optimizer sgd(OptimizerKind::Sgd, 4);
    sgd.step(S, G, 250, tc);
    CHECK(S.sg1_w(1, 2) == doctest::Approx(before.sg1_w(1, 2) - 1e-4 * G.sg1_w(1, 2)).epsilon(1e-15));
}

TEST_CASE("octagon targets") {
    const Matrix T = octagon_targets(8);
    for (int c = 0; c < 8; ++c) {
        CHECK(T.row(c).norm() == doctest::Approx(1).epsilon(1e-15));
        CHECK(std::atan2(T(c, 1), T(c, 0)) == doctest::Approx(std::remainder(2 * M_PI * c / 8, 2 * M_PI)).epsilon(1e-12));
    }
    CHECK(octagon_targets(4).rows() == 4);
    CHECK_THROWS_AS(octagon_targets(9), ArgumentError);
}

TEST_CASE("equivariance error") {
    auto kernel = [](double d) { return std::exp(-d * d / 0.3); };
    auto signal = [](const DirectionSet& D) {
        Matrix f(D.size(), 2);
        for (std::size_t i = 0; i < D.size(); ++i) {
            const Vec3& x = D[i];
            f(i, 0) = std::sin(2 * x.x()) + x.y() * x.z();
            f(i, 1) = std::cos(3 * x.z()) - x.x();
        }
        return f;
    };
    const auto ico = icosphere(3);
    const Matrix f = signal(ico.directions);
    CHECK(equivariance_error(kernel, f, Eigen::Matrix3d::Identity(), ico.directions) == 0);
    for (const auto& g : icosahedral_group()) CHECK(equivariance_error(kernel, f, g, ico.directions) <= 1e-9);

    DistanceTable table;
    table.at_zero = Matrix::Identity(2, 2);
    table.breakpoints = {0, 0.7, 1.3, 2.5};
    table.pieces = {Matrix::Constant(2, 2, 0.5), Matrix::Constant(2, 2, -0.25), Matrix::Zero(2, 2)};
    for (const auto& g : icosahedral_group()) CHECK(equivariance_error(table, f, g, ico.directions) <= 1e-9);

    std::vector<double> medians;
    for (int level : {1, 4, 7}) {
        const auto D = icosphere(level).directions;
        const Matrix s = signal(D);
        std::vector<double> errs;
        for (std::uint64_t seed = 0; seed < 20; ++seed) errs.push_back(equivariance_error(kernel, s, random_rotation(seed), D));
        std::nth_element(errs.begin(), errs.begin() + 10, errs.end());
        medians.push_back(errs[10]);
    }
    CHECK(medians[0] > medians[1]);
    CHECK(medians[1] > medians[2]);

    const auto D = icosphere(4).directions;
    const Matrix s = signal(D);
    const auto R = random_rotation(3);
    CHECK(equivariance_error(kernel, s, R, D, Resampling::Linear) < equivariance_error(kernel, s, R, D));
}

TEST_CASE("rotation max correlation") {
    const auto D = icosphere(4).directions;
    std::vector<double> f(D.size());
    for (std::size_t i = 0; i < D.size(); ++i) f[i] = std::max(0.0, D[i].z() - 0.5) + 0.3 * D[i].x();
    double self = 0;
    for (double v : f) self += v * v;
    self /= f.size();
    CHECK(rotation_max_correlation(f, f, D, {}) >= self);

    // g = f o R0 with R0 a symmetry of the set
    const Eigen::Matrix3d R0 = icosahedral_group()[7];
    const auto perm = *node_permutation(D, R0, 1e-12);
    std::vector<double> g(D.size());
    for (std::size_t i = 0; i < D.size(); ++i) g[i] = f[perm[i]];
    const std::vector<Eigen::Matrix3d> rots = {R0, R0.transpose()};
    CHECK(std::abs(rotation_max_correlation(f, g, D, rots) - rotation_max_correlation(f, f, D, rots)) <= 1e-6);
}

TEST_CASE("checkpoint round trip") {
    const ModelConfig cfg{6, 39, 0.01};
    const auto P = ModelParams::init(6, 77);
    std::stringstream buf;
    save_checkpoint(P, cfg, buf);
    const auto Q = load_checkpoint(buf, cfg);
    CHECK(Q.conv2_w == P.conv2_w);
    CHECK(Q.fc_b == P.fc_b);
    CHECK(buf.str().substr(0, 4) == "ECTW");

    std::stringstream again(buf.str());
    CHECK_THROWS_AS(load_checkpoint(again, ModelConfig{8, 39, 0.01}), ShapeError);
    std::stringstream other(buf.str());
    CHECK_THROWS_AS(load_checkpoint(other, ModelConfig{6, 10, 0.01}), ShapeError);
    std::stringstream junk("ECTWxx");
    CHECK_THROWS_AS(load_checkpoint(junk, cfg), IoError);
}

TEST_CASE("parameter init") {
    const auto P = ModelParams::init(128, 1);
    CHECK(P.conv1_w.rows() == 128);
    CHECK(P.conv1_w.cols() == 5);
    CHECK(P.conv2_w.cols() == 640);
    CHECK(P.fc_w.rows() == 2);
    CHECK(P.conv2_w.cwiseAbs().maxCoeff() <= 1 / std::sqrt(640.0));
    CHECK(P.num_scalars() == 128 * 5 + 128 + 2 * (128 * 640 + 128) + 2 * 128 * 128 + 2 * 128 + 2);
    const auto Q = ModelParams::init(128, 1);
    CHECK(P.sg1_w == Q.sg1_w);
}
