#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "../common/random_fixtures.hpp"
#include "doctest.h"
#include "ectnet/error.hpp"
#include "ectnet/shapes.hpp"
#include "ectnet/topology.hpp"

using namespace ectnet;

namespace {

EmbeddedComplex path_complex(std::vector<double> coords, std::vector<std::vector<VertexIndex>> simplices) {
    return EmbeddedComplex::from_simplices(3, std::move(coords), simplices);
}

// vertices at heights 0, 0.5, 1 along e1
EmbeddedComplex triangle_boundary() {
    return path_complex({0, 0, 0, 0.5, 1, 0, 1, 0, 0}, {{0, 1}, {1, 2}, {0, 2}});
}

std::vector<double> sorted_values(const FiltrationValues& f) {
    std::vector<double> v;
    for (const auto& c : f.order) v.push_back(c.value);
    return v;
}

// Brute force over every partial matching of two small diagrams.
double bottleneck_brute(const std::vector<PersistenceEntry>& p, const std::vector<PersistenceEntry>& q) {
    double best = kInf;
    std::vector<bool> used(q.size(), false);
    std::function<void(std::size_t, double)> go = [&](std::size_t i, double worst) {
        if (i == p.size()) {
            for (std::size_t j = 0; j < q.size(); ++j)
                if (!used[j]) worst = std::max(worst, 0.5 * (q[j].death - q[j].birth));
            best = std::min(best, worst);
            return;
        }
        go(i + 1, std::max(worst, 0.5 * (p[i].death - p[i].birth)));
        for (std::size_t j = 0; j < q.size(); ++j) {
            if (used[j]) continue;
            used[j] = true;
            const double c = std::max(std::abs(p[i].birth - q[j].birth), std::abs(p[i].death - q[j].death));
            go(i + 1, std::max(worst, c));
            used[j] = false;
        }
    };
    go(0, 0.0);
    return best;
}

void check_landscape_shape(const PersistenceLandscape& L) {
    const std::size_t n = L.grid.size();
    for (int c = 1; c <= L.depth; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(L.at(c, i) >= 0);
            if (c < L.depth) CHECK(L.at(c, i) >= L.at(c + 1, i));
            if (i + 1 < n && std::isfinite(L.at(c, i)) && std::isfinite(L.at(c, i + 1)))
                CHECK(std::abs(L.at(c, i + 1) - L.at(c, i)) <= (L.grid[i + 1] - L.grid[i]) * (1 + 1e-12) + 1e-12);
        }
    }
}

}  // namespace

TEST_CASE("height_values") {
    const auto point = path_complex({0, 0, 0}, {});
    CHECK(height_values(point, Vec3(0, 0, 1)).values[0][0] == 0);

    const auto tri = path_complex({1, 0, 0, 0, 1, 0, 0, 0, 1}, {{0, 1, 2}});
    const auto f = height_values(tri, Vec3(1, 0, 0));
    CHECK(f.values[2][0] == 1);
    // faces before cofaces
    std::vector<std::size_t> pos0(3), pos1(3);
    for (std::size_t p = 0; p < f.order.size(); ++p) {
        if (f.order[p].dim == 0) pos0[f.order[p].index] = p;
        if (f.order[p].dim == 1) pos1[f.order[p].index] = p;
    }
    for (std::size_t e = 0; e < 3; ++e)
        for (VertexIndex u : tri.simplex(1, e)) CHECK(pos0[u] < pos1[e]);

    CHECK_THROWS_AS(height_values(tri, Vec3(1, 1, 0)), ArgumentError);

    // rotating the complex by R^T equals reading direction R v
    const auto K = radial_deform(icosphere_mesh(2, 2.0), 5, 0.2);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Eigen::Matrix3d R = random_isometry(seed).rotation;
        Isometry t = Isometry::identity(3);
        t.rotation = R.transpose();
        const Vec3 v = Vec3(0.2, -0.5, 0.7).normalized();
        const Vec3 rv = R * v;
        auto lhs = sorted_values(height_values(apply_isometry(K, t), v));
        auto rhs = sorted_values(height_values(K, rv.normalized()));
        REQUIRE(lhs.size() == rhs.size());
        for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - rhs[i]) < 1e-12);
    }
}

TEST_CASE("euler_curve_by_counting") {
    const Vec3 e1(1, 0, 0);
    SUBCASE("two isolated vertices") {
        const auto K = path_complex({0, 0, 0, 1, 0, 0}, {});
        const std::vector<double> grid = {-0.5, 0.5, 1.5};
        const auto c = euler_curve_by_counting(height_values(K, e1), grid);
        CHECK(c.values == std::vector<std::int32_t>{0, 1, 2});
    }
    SUBCASE("triangle boundary") {
        const std::vector<double> grid = {-0.1, 0.25, 0.5, 0.75, 1.0, 2.0};
        const auto c = euler_curve_by_counting(height_values(triangle_boundary(), e1), grid);
        CHECK(c.values == std::vector<std::int32_t>{0, 1, 1, 1, 0, 0});
    }
    SUBCASE("last bin is chi when a exceeds every height") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 20; ++trial) {
            const auto K = fixtures::random_complex(rng);
            const auto c = euler_curve_by_counting(height_values(K, fixtures::random_unit(rng)), regular_grid(8, 64));
            CHECK(c.values.back() == euler_characteristic(K));
        }
    }
}

TEST_CASE("regular_grid") {
    const auto g = regular_grid(8, 4);
    CHECK(g == std::vector<double>{-4, 0, 4, 8});
    CHECK_THROWS_AS(regular_grid(-1, 4), ArgumentError);
    CHECK_THROWS_AS(regular_grid(1, 0), ArgumentError);
}

TEST_CASE("compute_persistence") {
    const Vec3 e1(1, 0, 0);
    SUBCASE("segment") {
        const auto K = path_complex({0, 0, 0, 1, 0, 0}, {{0, 1}});
        const auto d = compute_persistence(height_values(K, e1));
        REQUIRE(d.size() == 3);
        CHECK(d[0].entries == std::vector<PersistenceEntry>{{0, kInf, 0}});
        CHECK(d[1].entries.empty());
    }
    SUBCASE("triangle boundary") {
        const auto d = compute_persistence(height_values(triangle_boundary(), e1));
        CHECK(d[0].entries == std::vector<PersistenceEntry>{{0, kInf, 0}});
        CHECK(d[1].entries == std::vector<PersistenceEntry>{{1, kInf, 1}});
    }
    SUBCASE("icosahedron from the north pole") {
        const auto K = icosphere_mesh(1);
        // top vertex of the icosahedron: normalized (0, 1, phi)
        const Vec3 pole = Vec3(K.vertex(0).data()).normalized();
        const auto d = compute_persistence(height_values(K, pole));
        REQUIRE(d[0].size() == 1);
        REQUIRE(d[2].size() == 1);
        CHECK(d[1].entries.empty());
        CHECK(d[0].entries[0].birth == doctest::Approx(-1).epsilon(1e-12));
        CHECK(d[0].entries[0].death == kInf);
        CHECK(d[2].entries[0].birth == doctest::Approx(1).epsilon(1e-12));
    }
    SUBCASE("two holes then filled") {
        // square with diagonal: H1 classes born at the last edges, one killed by a face
        const auto K = path_complex({0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0}, {{0, 1, 2}, {0, 2}, {0, 3}, {2, 3}});
        const auto d = compute_persistence(height_values(K, Vec3(0, 1, 0)));
        CHECK(d[0].size() == 1);
        CHECK(d[1].entries == std::vector<PersistenceEntry>{{1, kInf, 1}});
    }
    SUBCASE("empty complex") {
        const EmbeddedComplex K;
        const auto d = compute_persistence(height_values(K, std::span<const double>(Vec3(1, 0, 0).data(), 3)));
        CHECK(d.size() == 3);
        for (const auto& x : d) CHECK(x.entries.empty());
    }
}

TEST_CASE("euler_curve_from_persistence") {
    const Vec3 e1(1, 0, 0);
    const std::vector<double> grid = {-0.1, 0.25, 0.5, 0.75, 1.0, 2.0};
    const auto f = height_values(triangle_boundary(), e1);
    CHECK(euler_curve_from_persistence(compute_persistence(f), grid).values == euler_curve_by_counting(f, grid).values);

    std::mt19937_64 rng(17);
    const auto g = regular_grid(2, 128);
    for (int trial = 0; trial < 100; ++trial) {
        const auto K = fixtures::random_complex(rng);
        const auto h = height_values(K, fixtures::random_unit(rng));
        CHECK(euler_curve_from_persistence(compute_persistence(h), g).values == euler_curve_by_counting(h, g).values);
    }

    const std::vector<PersistenceDiagram> none(3);
    const auto zero = euler_curve_from_persistence(none, g);
    CHECK(std::all_of(zero.values.begin(), zero.values.end(), [](auto x) { return x == 0; }));
}

TEST_CASE("landscapes") {
    SUBCASE("single tent") {
        const PersistenceDiagram D{{{1, 3, 0}}};
        const std::vector<double> grid = {1, 2, 3};
        const auto L = landscape_from_diagram(D, grid, 2);
        CHECK(L.at(1, 1) == 1);
        CHECK(L.at(1, 0) == 0);
        for (std::size_t i = 0; i < 3; ++i) CHECK(L.at(2, i) == 0);
        const auto R = landscape_by_rank(D, grid, 2);
        for (std::size_t i = 0; i < L.samples.size(); ++i) CHECK(std::abs(L.samples[i] - R.samples[i]) <= 1e-12);
    }
    SUBCASE("nested tents") {
        const PersistenceDiagram D{{{0, 4, 0}, {1, 3, 0}}};
        const std::vector<double> grid = {2};
        const auto L = landscape_from_diagram(D, grid, 2);
        CHECK(L.at(1, 0) == 2);
        CHECK(L.at(2, 0) == 1);
    }
    SUBCASE("essential entry is a half tent") {
        const PersistenceDiagram D{{{0, kInf, 0}}};
        const auto grid = regular_grid(4, 16);
        const auto L = landscape_from_diagram(D, grid, 1);
        const auto R = landscape_by_rank(D, grid, 1);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CHECK(L.at(1, i) == std::max(0.0, grid[i]));
            CHECK(std::abs(R.at(1, i) - L.at(1, i)) <= 1e-12);
        }
        const PersistenceDiagram both{{{-kInf, kInf, 0}}};
        CHECK(std::isinf(landscape_from_diagram(both, grid, 1).at(1, 3)));
        CHECK(std::isinf(landscape_by_rank(both, grid, 1).at(1, 3)));
    }
    SUBCASE("random diagrams agree") {
        std::mt19937_64 rng(99);
        const auto grid = regular_grid(6, 97);
        for (int trial = 0; trial < 100; ++trial) {
            const auto D = fixtures::random_diagram(rng);
            const auto L = landscape_from_diagram(D, grid, 5);
            const auto R = landscape_by_rank(D, grid, 5);
            double worst = 0;
            for (std::size_t i = 0; i < L.samples.size(); ++i) worst = std::max(worst, std::abs(L.samples[i] - R.samples[i]));
            CHECK(worst <= 1e-12);
            check_landscape_shape(L);
        }
    }
    SUBCASE("empty diagram") {
        const auto grid = regular_grid(1, 8);
        const auto R = landscape_by_rank(PersistenceDiagram{}, grid, 3);
        CHECK(std::all_of(R.samples.begin(), R.samples.end(), [](double x) { return x == 0; }));
    }
    SUBCASE("from a filtration") {
        const auto K = radial_deform(torus_mesh(2, 0.8, 12, 8), 4, 0.1);
        const auto f = height_values(K, Vec3(0.6, 0, 0.8));
        const auto grid = regular_grid(4, 64);
        const auto d = compute_persistence(f);
        for (int dim = 0; dim < 3; ++dim) {
            const auto R = landscape_by_rank(f, grid, 5, dim);
            const auto L = landscape_from_diagram(d[dim], grid, 5);
            for (std::size_t i = 0; i < L.samples.size(); ++i) {
                if (std::isinf(L.samples[i]))
                    CHECK(L.samples[i] == R.samples[i]);
                else
                    CHECK(std::abs(L.samples[i] - R.samples[i]) <= 1e-12);
            }
        }
    }
}

TEST_CASE("compactify_diagram") {
    const PersistenceDiagram D{{{0, kInf, 0}, {-kInf, kInf, 1}}};
    const auto C1 = compactify_diagram(D, 1, 1);
    CHECK(C1.entries[0].birth == 0);
    CHECK(C1.entries[0].death == 1);
    const auto C = compactify_diagram(D, 3, 0.5);
    CHECK(C.entries[1].birth == -3);
    CHECK(C.entries[1].death == 3);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-20, 20);
    for (int i = 0; i < 1000; ++i) {
        double a = u(rng), b = u(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        const auto out = compactify_diagram(PersistenceDiagram{{{a, b, 0}}});
        CHECK(out.entries[0].birth < out.entries[0].death);
        CHECK(std::isfinite(out.entries[0].death));
    }
    CHECK_THROWS_AS(compactify_diagram(D, -1, 1), ArgumentError);
}

TEST_CASE("bottleneck_distance") {
    const PersistenceDiagram A{{{0, 2, 0}}};
    CHECK(bottleneck_distance(A, A) == 0);
    CHECK(bottleneck_distance(A, PersistenceDiagram{}) == 1);
    CHECK(bottleneck_distance(PersistenceDiagram{{{0, 4, 0}}}, PersistenceDiagram{{{1, 4, 0}}}) == 1);

    SUBCASE("essential entries") {
        const PersistenceDiagram X{{{0, kInf, 0}, {1, 2, 0}}};
        const PersistenceDiagram Y{{{0.25, kInf, 0}}};
        CHECK(bottleneck_distance(X, Y) == 0.5);
        CHECK(bottleneck_distance(X, PersistenceDiagram{{{1, 2, 0}}}) == kInf);
    }
    SUBCASE("matches brute force on small diagrams") {
        std::mt19937_64 rng(8);
        for (int trial = 0; trial < 200; ++trial) {
            const auto P = fixtures::random_diagram(rng, 4), Q = fixtures::random_diagram(rng, 4);
            CHECK(bottleneck_distance(P, Q) == doctest::Approx(bottleneck_brute(P.entries, Q.entries)).epsilon(1e-14));
            CHECK(bottleneck_distance(P, Q) == bottleneck_distance(Q, P));
        }
    }
}

TEST_CASE("diagram csv") {
    std::ostringstream out;
    const std::vector<PersistenceDiagram> d = {PersistenceDiagram{{{0.5, kInf, 0}}}, PersistenceDiagram{{{-kInf, 2, 1}}}};
    write_diagrams_csv(d, out);
    CHECK(out.str() == "dim,birth,death\n0,0.5,inf\n1,-inf,2\n");
}

TEST_CASE("ect_field") {
    const auto ico = icosphere(2);
    SUBCASE("icosahedron ends at 2") {
        const auto F = ect_field(icosphere_mesh(1), ico.directions, 8, 64);
        CHECK(F.values.size() == ico.directions.size() * 64);
        for (std::size_t r = 0; r < F.num_directions(); ++r) CHECK(F.row(r).back() == 2);
    }
    SUBCASE("rows match the counting route") {
        const auto K = normalize_scale(radial_deform(torus_mesh(10, 4, 12, 8), 2, 0.1));
        const auto F = ect_field(K, ico.directions, 8, 100);
        const auto grid = regular_grid(8, 100);
        for (std::size_t r = 0; r < F.num_directions(); ++r) {
            const auto c = euler_curve_by_counting(height_values(K, ico.directions[r]), grid);
            CHECK(std::equal(c.values.begin(), c.values.end(), F.row(r).begin()));
        }
    }
    SUBCASE("subdivision leaves the field unchanged") {
        const auto K = normalize_scale(radial_deform(double_torus_mesh(10, 4, 4, 12, 8), 9, 0.1));
        const auto F = ect_field(K, ico.directions, 8, 256);
        CHECK(ect_field(subdivide(K, SubdivisionScheme::EdgeSplit), ico.directions, 8, 256).values == F.values);
        CHECK(ect_field(subdivide(K, SubdivisionScheme::Barycentric), ico.directions, 8, 256).values == F.values);
    }
    SUBCASE("signed permutations permute rows") {
        const auto D = close_under_signed_permutations(ico.directions);
        const auto K = normalize_scale(radial_deform(icosphere_mesh(3, 10), 21, 0.2));
        const auto F = ect_field(K, D, 8, 128);
        for (const auto& R : signed_permutation_group()) {
            Isometry t = Isometry::identity(3);
            t.rotation = R.transpose();
            const auto G = ect_field(apply_isometry(K, t), D, 8, 128);
            const auto perm = node_permutation(D, R, 0.0);
            REQUIRE(perm.has_value());
            bool same = true;
            for (std::size_t r = 0; r < D.size(); ++r)
                same = same && std::equal(G.row(r).begin(), G.row(r).end(), F.row((*perm)[r]).begin());
            CHECK(same);
        }
    }
    SUBCASE("out-of-range heights warn and clamp") {
        std::vector<std::string> seen;
        set_warning_sink([&](const std::string& m) { seen.push_back(m); });
        const auto F = ect_field(icosphere_mesh(1, 20.0), ico.directions, 8, 32);
        set_warning_sink(nullptr);
        CHECK(seen.size() == 1);
        for (std::size_t r = 0; r < F.num_directions(); ++r) CHECK(F.row(r).back() == 2);
        set_warning_sink({});
    }
}

TEST_CASE("ect file round trip") {
    const auto F = ect_field(icosphere_mesh(1), icosphere(1).directions, 8, 40);
    std::stringstream buf;
    write_ect_field(F, buf);
    CHECK(buf.str().size() == 4 + 4 * 3 + 8 + 12 * 24 + 12 * 40 * 4);
    CHECK(buf.str().substr(0, 4) == "ECTF");
    const auto G = read_ect_field(buf);
    CHECK(G.values == F.values);
    CHECK(G.t == 40);
    CHECK(G.a == 8);
    CHECK(G.directions.points() == F.directions.points());

    std::stringstream bad("ECTX");
    CHECK_THROWS_AS(read_ect_field(bad), IoError);
    std::string truncated = buf.str().substr(0, 30);
    std::stringstream short_in(truncated);
    CHECK_THROWS_AS(read_ect_field(short_in), IoError);
}

TEST_CASE("translation behaviour") {
    // dyadic coordinates keep the shifted heights exact
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> q(-2048, 2048);
    const auto base = radial_deform(torus_mesh(2, 1, 10, 6), 3, 0.1);
    std::vector<double> coords(base.coordinates().begin(), base.coordinates().end());
    for (auto& c : coords) c = std::round(c * 1024) / 1024;
    const auto K = base.with_coordinates(coords);

    const double a = 8;
    const int t = 256;
    const double width = 2 * a / t;
    const auto grid = regular_grid(a, t);
    for (const Vec3& v : {Vec3(1, 0, 0), Vec3(0, -1, 0), Vec3(0, 0, 1)}) {
        const int shift = 7;
        Isometry move = Isometry::identity(3);
        move.translation = Eigen::Vector3d(v * (shift * width));
        const auto moved = apply_isometry(K, move);
        const auto c0 = euler_curve_by_counting(height_values(K, v), grid);
        const auto c1 = euler_curve_by_counting(height_values(moved, v), grid);
        for (int i = shift; i < t; ++i) CHECK(c1.values[i] == c0.values[i - shift]);
    }

    // diagrams and landscapes move with v.w for generic w
    const Vec3 w(0.37, -1.21, 0.58);
    Isometry move = Isometry::identity(3);
    move.translation = Eigen::Vector3d(w);
    const auto moved = apply_isometry(K, move);
    for (int trial = 0; trial < 10; ++trial) {
        const Vec3 v = fixtures::random_unit(rng);
        const double s = v.dot(w);
        const auto d0 = compute_persistence(height_values(K, v));
        const auto d1 = compute_persistence(height_values(moved, v));
        for (int dim = 0; dim < 3; ++dim) {
            REQUIRE(d0[dim].size() == d1[dim].size());
            auto key = [](const PersistenceEntry& e) { return std::pair(e.birth, e.death); };
            auto x = d0[dim].entries, y = d1[dim].entries;
            std::sort(x.begin(), x.end(), [&](auto& l, auto& r) { return key(l) < key(r); });
            std::sort(y.begin(), y.end(), [&](auto& l, auto& r) { return key(l) < key(r); });
            for (std::size_t i = 0; i < x.size(); ++i) {
                CHECK(std::abs(x[i].birth + s - y[i].birth) <= 1e-9);
                if (std::isfinite(x[i].death)) CHECK(std::abs(x[i].death + s - y[i].death) <= 1e-9);
            }
            std::vector<double> g0 = grid, g1 = grid;
            for (auto& g : g1) g += s;
            const auto L0 = landscape_from_diagram(d0[dim], g0, 3);
            const auto L1 = landscape_from_diagram(d1[dim], g1, 3);
            for (std::size_t i = 0; i < L0.samples.size(); ++i) CHECK(std::abs(L0.samples[i] - L1.samples[i]) <= 1e-9);
        }
    }
}

TEST_CASE("bottleneck stability in the direction") {
    std::mt19937_64 rng(31);
    const auto K = radial_deform(double_torus_mesh(2, 0.8, 0.6, 12, 8), 6, 0.1);
    double L = 0;
    for (std::size_t i = 0; i < K.num_vertices(); ++i) L = std::max(L, Vec3(K.vertex(i).data()).norm());
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 v1 = fixtures::random_unit(rng), v2 = fixtures::random_unit(rng);
        const auto d1 = compute_persistence(height_values(K, v1));
        const auto d2 = compute_persistence(height_values(K, v2));
        for (int dim = 0; dim < 3; ++dim) CHECK(bottleneck_distance(d1[dim], d2[dim]) <= L * (v1 - v2).norm() + 1e-9);
    }
}
