#include "ectnet/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <queue>
#include <set>

#include "ectnet/error.hpp"

namespace ectnet {

double symmetric_dot(std::span<const double> a, std::span<const double> b) {
    constexpr std::size_t kInline = 8;
    if (a.size() != b.size()) throw ShapeError("dot product of vectors with different lengths");
    std::array<double, kInline> small{};
    std::vector<double> large;
    double* terms = small.data();
    if (a.size() > kInline) {
        large.resize(a.size());
        terms = large.data();
    }
    for (std::size_t i = 0; i < a.size(); ++i) terms[i] = a[i] * b[i];
    // Total order (magnitude, then value) so the summation order depends only on the multiset.
    std::sort(terms, terms + a.size(), [](double x, double y) {
        const double ax = std::abs(x), ay = std::abs(y);
        return ax != ay ? ax < ay : x < y;
    });
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += terms[i];
    return acc;
}

namespace {

double dot3(const Vec3& a, const Vec3& b) {
    return symmetric_dot(std::span<const double>(a.data(), 3), std::span<const double>(b.data(), 3));
}

Vec3 unit(const Vec3& p) {
    const double norm = std::sqrt(dot3(p, p));
    return p / norm;
}

// Unnormalized icosahedron: cyclic permutations of (0, +-1, +-phi).
std::vector<Vec3> icosahedron_vertices() {
    const double phi = std::numbers::phi;
    std::vector<Vec3> v;
    for (const double s1 : {-1.0, 1.0}) {
        for (const double s2 : {-1.0, 1.0}) {
            v.emplace_back(0.0, s1, s2 * phi);
            v.emplace_back(s1, s2 * phi, 0.0);
            v.emplace_back(s2 * phi, 0.0, s1);
        }
    }
    return v;
}

std::vector<std::array<std::uint32_t, 3>> icosahedron_faces(const std::vector<Vec3>& v) {
    auto adjacent = [&](std::size_t a, std::size_t b) { return std::abs((v[a] - v[b]).norm() - 2.0) < 1e-9; };
    std::vector<std::array<std::uint32_t, 3>> faces;
    for (std::uint32_t a = 0; a < v.size(); ++a) {
        for (std::uint32_t b = a + 1; b < v.size(); ++b) {
            if (!adjacent(a, b)) continue;
            for (std::uint32_t c = b + 1; c < v.size(); ++c) {
                if (adjacent(a, c) && adjacent(b, c)) faces.push_back({a, b, c});
            }
        }
    }
    return faces;
}

// Weighted lattice point, summed per coordinate in magnitude order.
Vec3 lattice_point(const std::array<Vec3, 3>& corners, const std::array<int, 3>& weights) {
    Vec3 p;
    for (int c = 0; c < 3; ++c) {
        std::array<double, 3> terms{};
        for (int k = 0; k < 3; ++k) terms[k] = static_cast<double>(weights[k]) * corners[k][c];
        std::sort(terms.begin(), terms.end(), [](double x, double y) { return std::abs(x) < std::abs(y); });
        p[c] = (terms[0] + terms[1]) + terms[2];
    }
    return unit(p);
}

}  // namespace

DirectionSet DirectionSet::from_points(std::vector<Vec3> points, SphereSampling provenance, int parameter) {
    for (const auto& p : points) {
        if (std::abs(p.norm() - 1.0) > 1e-12) throw ArgumentError("direction is not a unit vector");
    }
    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return points[a].x() < points[b].x(); });
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            if (points[order[j]].x() - points[order[i]].x() > 1e-9) break;
            if ((points[order[i]] - points[order[j]]).norm() <= 1e-9) {
                throw ArgumentError("duplicate direction");
            }
        }
    }
    DirectionSet d;
    d.points_ = std::move(points);
    d.provenance_ = provenance;
    d.parameter_ = parameter;
    return d;
}

bool SphereGraph::connected() const {
    if (num_nodes == 0) return true;
    std::vector<std::vector<std::uint32_t>> adj(num_nodes);
    for (const auto& [i, j] : edges) {
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    std::vector<bool> seen(num_nodes, false);
    std::queue<std::uint32_t> q;
    q.push(0);
    seen[0] = true;
    std::size_t visited = 1;
    while (!q.empty()) {
        const auto u = q.front();
        q.pop();
        for (const auto w : adj[u]) {
            if (!seen[w]) {
                seen[w] = true;
                ++visited;
                q.push(w);
            }
        }
    }
    return visited == num_nodes;
}

Icosphere icosphere(int level) {
    if (level < 1) throw ArgumentError("icosphere level must be at least 1");
    const auto base = icosahedron_vertices();
    const auto faces = icosahedron_faces(base);
    const int L = level;

    std::vector<Vec3> points;
    for (const auto& v : base) points.push_back(unit(v));

    // Points strictly inside icosahedron edges, keyed by (lo, hi, weight on hi).
    std::map<std::tuple<std::uint32_t, std::uint32_t, int>, std::uint32_t> edge_ids;
    std::set<std::pair<std::uint32_t, std::uint32_t>> base_edges;
    for (const auto& f : faces) {
        base_edges.insert({f[0], f[1]});
        base_edges.insert({f[0], f[2]});
        base_edges.insert({f[1], f[2]});
    }
    for (const auto& [lo, hi] : base_edges) {
        for (int w = 1; w < L; ++w) {
            edge_ids[{lo, hi, w}] = static_cast<std::uint32_t>(points.size());
            points.push_back(lattice_point({base[lo], base[hi], base[hi]}, {L - w, w, 0}));
        }
    }

    std::vector<std::array<std::uint32_t, 3>> triangles;
    for (const auto& f : faces) {
        const std::array<Vec3, 3> corners = {base[f[0]], base[f[1]], base[f[2]]};
        // Lattice (i, j): weights (L - i - j, i, j) on the face corners.
        std::vector<std::uint32_t> ids((L + 1) * (L + 1), 0);
        auto at = [&](int i, int j) -> std::uint32_t& { return ids[i * (L + 1) + j]; };
        for (int i = 0; i <= L; ++i) {
            for (int j = 0; i + j <= L; ++j) {
                const std::array<int, 3> w = {L - i - j, i, j};
                const int zeros = (w[0] == 0) + (w[1] == 0) + (w[2] == 0);
                if (zeros == 2) {
                    at(i, j) = f[w[0] != 0 ? 0 : (w[1] != 0 ? 1 : 2)];
                } else if (zeros == 1) {
                    std::uint32_t a, b;
                    int wb;
                    if (w[0] == 0) {
                        a = f[1], b = f[2], wb = w[2];
                    } else if (w[1] == 0) {
                        a = f[0], b = f[2], wb = w[2];
                    } else {
                        a = f[0], b = f[1], wb = w[1];
                    }
                    // Faces list corners in increasing order, so a < b.
                    at(i, j) = edge_ids.at({a, b, wb});
                }
            }
        }
        for (int i = 1; i <= L; ++i) {
            for (int j = 1; i + j < L; ++j) {
                at(i, j) = static_cast<std::uint32_t>(points.size());
                points.push_back(lattice_point(corners, {L - i - j, i, j}));
            }
        }
        for (int i = 0; i < L; ++i) {
            for (int j = 0; i + j < L; ++j) {
                triangles.push_back({at(i, j), at(i + 1, j), at(i, j + 1)});
                if (i + j + 2 <= L) triangles.push_back({at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)});
            }
        }
    }

    std::set<std::pair<std::uint32_t, std::uint32_t>> edge_set;
    for (const auto& t : triangles) {
        for (int k = 0; k < 3; ++k) {
            const auto a = t[k], b = t[(k + 1) % 3];
            edge_set.insert({std::min(a, b), std::max(a, b)});
        }
    }

    Icosphere out;
    out.graph.num_nodes = points.size();
    for (const auto& e : edge_set) {
        out.graph.edges.push_back(e);
        out.graph.edge_lengths.push_back((points[e.first] - points[e.second]).norm());
    }
    out.directions = DirectionSet::from_points(std::move(points), SphereSampling::Icosphere, level);
    out.directions.set_triangles(std::move(triangles));
    return out;
}

DirectionSet fibonacci_directions(std::size_t n) {
    if (n == 0) throw ArgumentError("fibonacci direction count must be positive");
    const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
    std::vector<Vec3> points;
    points.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double z = 1.0 - (2.0 * static_cast<double>(k) + 1.0) / static_cast<double>(n);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double theta = golden_angle * static_cast<double>(k);
        points.push_back(Vec3(r * std::cos(theta), r * std::sin(theta), z).normalized());
    }
    return DirectionSet::from_points(std::move(points), SphereSampling::Fibonacci, static_cast<int>(n));
}

SphereGraph threshold_graph(const DirectionSet& directions, double radius) {
    if (!(radius > 0.0)) throw ArgumentError("threshold radius must be positive");
    SphereGraph g;
    g.num_nodes = directions.size();
    for (std::uint32_t i = 0; i < directions.size(); ++i) {
        for (std::uint32_t j = i + 1; j < directions.size(); ++j) {
            const double d = (directions[i] - directions[j]).norm();
            if (d > 0.0 && d < radius) {
                g.edges.emplace_back(i, j);
                g.edge_lengths.push_back(d);
            }
        }
    }
    return g;
}

std::size_t nearest_direction(const DirectionSet& directions, const Vec3& x) {
    if (directions.size() == 0) throw ArgumentError("empty direction set");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < directions.size(); ++i) {
        const double d = (directions[i] - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

double interpolate_linear(const DirectionSet& directions, std::span<const double> values, const Vec3& x) {
    if (directions.triangles().empty()) throw ArgumentError("linear interpolation needs a triangulated direction set");
    if (values.size() != directions.size()) throw ShapeError("one value per direction expected");
    double best_score = -std::numeric_limits<double>::infinity();
    double best_value = 0.0;
    for (const auto& t : directions.triangles()) {
        Eigen::Matrix3d m;
        m.col(0) = directions[t[0]];
        m.col(1) = directions[t[1]];
        m.col(2) = directions[t[2]];
        const Vec3 w = m.partialPivLu().solve(x);
        const double score = w.minCoeff();
        if (score > best_score) {
            best_score = score;
            const double s = w.sum();
            best_value = (w[0] * values[t[0]] + w[1] * values[t[1]] + w[2] * values[t[2]]) / s;
        }
        if (score >= 0.0) break;
    }
    return best_value;
}

std::vector<Eigen::Matrix3d> icosahedral_group() {
    std::vector<Vec3> v;
    for (const auto& p : icosahedron_vertices()) v.push_back(p.normalized());
    auto frame = [](const Vec3& a, const Vec3& b) {
        Eigen::Matrix3d f;
        const Vec3 u = (b - a.dot(b) * a).normalized();
        f.col(0) = a;
        f.col(1) = u;
        f.col(2) = a.cross(u);
        return f;
    };
    // Neighbouring vertices sit at the minimal pairwise distance.
    double edge = std::numeric_limits<double>::infinity();
    std::size_t nb = 0;
    for (std::size_t j = 1; j < v.size(); ++j) {
        const double d = (v[0] - v[j]).norm();
        if (d < edge) {
            edge = d;
            nb = j;
        }
    }
    // A rotation is fixed by where it sends one directed edge; there are 12 * 5.
    const Eigen::Matrix3d from = frame(v[0], v[nb]);
    std::vector<Eigen::Matrix3d> group;
    for (std::size_t a = 0; a < v.size(); ++a) {
        for (std::size_t b = 0; b < v.size(); ++b) {
            if (a == b || std::abs((v[a] - v[b]).norm() - edge) > 1e-9) continue;
            group.push_back(frame(v[a], v[b]) * from.transpose());
        }
    }
    const std::size_t rotations = group.size();
    for (std::size_t i = 0; i < rotations; ++i) group.push_back(-group[i]);
    return group;
}

std::vector<Eigen::Matrix3d> signed_permutation_group() {
    std::vector<Eigen::Matrix3d> group;
    std::array<int, 3> perm = {0, 1, 2};
    do {
        for (int signs = 0; signs < 8; ++signs) {
            Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
            for (int r = 0; r < 3; ++r) m(r, perm[r]) = (signs >> r) & 1 ? -1.0 : 1.0;
            group.push_back(m);
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return group;
}

std::optional<std::vector<std::uint32_t>> node_permutation(const DirectionSet& directions,
                                                           const Eigen::Matrix3d& rotation, double tol) {
    std::vector<std::uint32_t> perm(directions.size());
    std::vector<bool> hit(directions.size(), false);
    for (std::size_t i = 0; i < directions.size(); ++i) {
        const Vec3 y = rotation * directions[i];
        const std::size_t j = nearest_direction(directions, y);
        if ((directions[j] - y).norm() > tol || hit[j]) return std::nullopt;
        hit[j] = true;
        perm[i] = static_cast<std::uint32_t>(j);
    }
    return perm;
}

DirectionSet close_under_signed_permutations(const DirectionSet& directions) {
    std::vector<Vec3> points;
    std::set<std::array<double, 3>> seen;
    auto add = [&](const Vec3& p) {
        // +0.0 folds negative zeros so exact duplicates compare equal.
        const std::array<double, 3> key = {p.x() + 0.0, p.y() + 0.0, p.z() + 0.0};
        if (seen.insert(key).second) points.emplace_back(key[0], key[1], key[2]);
    };
    for (const auto& p : directions.points()) add(p);
    const auto group = signed_permutation_group();
    for (const auto& g : group) {
        for (const auto& p : directions.points()) {
            Vec3 q = Vec3::Zero();
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    if (g(r, c) != 0.0) q[r] = g(r, c) * p[c];
                }
            }
            add(q);
        }
    }
    return DirectionSet::from_points(std::move(points), SphereSampling::Custom, 0);
}

void write_directions_csv(const DirectionSet& directions, std::ostream& out) {
    const auto old = out.precision(17);
    out << "x,y,z\n";
    for (const auto& p : directions.points()) out << p.x() << ',' << p.y() << ',' << p.z() << '\n';
    out.precision(old);
}

}  // namespace ectnet
