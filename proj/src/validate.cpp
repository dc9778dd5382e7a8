#include "ectnet/validate.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

namespace ectnet {

bool ValidationReport::has(ViolationKind kind) const {
    auto match = [kind](const Violation& v) { return v.kind == kind; };
    return std::ranges::any_of(errors, match) || std::ranges::any_of(warnings, match);
}

namespace {

using Vec3 = Eigen::Vector3d;

struct Interval {
    double t0, t1;
};

// Geometric primitive of dimension <= 2 padded into R^3.
struct Cell {
    int dim;
    std::size_t index;
    std::vector<VertexIndex> verts;
    std::vector<Vec3> pts;
    Vec3 lo, hi;
};

bool point_in_triangle(const Vec3& q, const Vec3& a, const Vec3& b, const Vec3& c, double tol) {
    const Vec3 n = (b - a).cross(c - a);
    const double area2 = n.norm();
    if (area2 == 0.0) return false;
    if (std::abs(n.dot(q - a)) / area2 > tol) return false;
    // Signed distances to the three edge lines within the plane.
    const Vec3 un = n / area2;
    const Vec3* v[3] = {&a, &b, &c};
    for (int i = 0; i < 3; ++i) {
        const Vec3& p0 = *v[i];
        const Vec3& p1 = *v[(i + 1) % 3];
        const Vec3 e = p1 - p0;
        const Vec3 inward = un.cross(e).normalized();
        if (inward.dot(q - p0) < -tol) return false;
    }
    return true;
}

double point_segment_distance(const Vec3& q, const Vec3& a, const Vec3& b) {
    const Vec3 d = b - a;
    const double len2 = d.squaredNorm();
    double t = len2 > 0.0 ? d.dot(q - a) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (a + t * d - q).norm();
}

// Part of segment a + t (b - a), t in [0,1], lying inside the simplex `pts`.
std::optional<Interval> clip_segment(const Vec3& a, const Vec3& b, const std::vector<Vec3>& pts, double tol) {
    const Vec3 d = b - a;
    const double len = d.norm();
    if (pts.size() == 1) {
        if (len == 0.0) {
            if ((a - pts[0]).norm() <= tol) return Interval{0.0, 0.0};
            return std::nullopt;
        }
        if (point_segment_distance(pts[0], a, b) > tol) return std::nullopt;
        const double t = std::clamp(d.dot(pts[0] - a) / (len * len), 0.0, 1.0);
        return Interval{t, t};
    }
    if (pts.size() == 2) {
        const Vec3& p = pts[0];
        const Vec3 e = pts[1] - p;
        if (len == 0.0) {
            if (point_segment_distance(a, p, pts[1]) <= tol) return Interval{0.0, 0.0};
            return std::nullopt;
        }
        const Vec3 cr = d.cross(e);
        if (cr.norm() <= tol * len * e.norm()) {
            // Parallel: overlap only when collinear.
            if ((p - a).cross(d).norm() / len > tol) return std::nullopt;
            double s0 = d.dot(p - a) / (len * len);
            double s1 = d.dot(pts[1] - a) / (len * len);
            if (s0 > s1) std::swap(s0, s1);
            const double t0 = std::max(0.0, s0), t1 = std::min(1.0, s1);
            const double slack = tol / len;
            if (t0 > t1 + slack) return std::nullopt;
            return Interval{std::min(t0, t1), std::max(t0, t1)};
        }
        // Closest points of the two lines.
        const double dd = d.dot(d), ee = e.dot(e), de = d.dot(e);
        const Vec3 w = a - p;
        const double denom = dd * ee - de * de;
        double t = std::clamp((de * e.dot(w) - ee * d.dot(w)) / denom, 0.0, 1.0);
        double s = std::clamp((e.dot(w) + t * de) / ee, 0.0, 1.0);
        t = std::clamp((s * de - d.dot(w)) / dd, 0.0, 1.0);
        if ((a + t * d - (p + s * e)).norm() > tol) return std::nullopt;
        return Interval{t, t};
    }
    const Vec3& p0 = pts[0];
    const Vec3 n = (pts[1] - p0).cross(pts[2] - p0);
    const double nn = n.norm();
    if (nn == 0.0) return std::nullopt;
    const Vec3 un = n / nn;
    const double ha = un.dot(a - p0), hb = un.dot(b - p0);
    if (std::abs(ha) <= tol && std::abs(hb) <= tol) {
        // Coplanar: clip against the three inward edge half-planes.
        double t0 = 0.0, t1 = 1.0;
        for (int i = 0; i < 3; ++i) {
            const Vec3& q0 = pts[i];
            const Vec3 inward = un.cross(pts[(i + 1) % 3] - q0).normalized();
            const double f0 = inward.dot(a - q0) + tol;
            const double fd = inward.dot(d);
            if (std::abs(fd) < 1e-300) {
                if (f0 < 0.0) return std::nullopt;
                continue;
            }
            const double t = -f0 / fd;
            if (fd > 0.0) {
                t0 = std::max(t0, t);
            } else {
                t1 = std::min(t1, t);
            }
            if (t0 > t1) return std::nullopt;
        }
        return Interval{t0, t1};
    }
    if ((ha > tol && hb > tol) || (ha < -tol && hb < -tol)) return std::nullopt;
    const double t = (ha == hb) ? 0.0 : std::clamp(ha / (ha - hb), 0.0, 1.0);
    if (!point_in_triangle(a + t * d, pts[0], pts[1], pts[2], tol)) return std::nullopt;
    return Interval{t, t};
}

// Pieces whose intersections with the other simplex expose every extreme
// point of the pairwise intersection: a triangle contributes its edges,
// lower simplices contribute themselves.
std::vector<std::pair<Vec3, Vec3>> pieces(const Cell& c) {
    if (c.dim == 0) return {{c.pts[0], c.pts[0]}};
    if (c.dim == 1) return {{c.pts[0], c.pts[1]}};
    return {{c.pts[0], c.pts[1]}, {c.pts[1], c.pts[2]}, {c.pts[0], c.pts[2]}};
}

bool in_shared_face(const Vec3& q, const std::vector<Vec3>& shared, double tol) {
    if (shared.empty()) return false;
    if (shared.size() == 1) return (q - shared[0]).norm() <= tol;
    if (shared.size() == 2) return point_segment_distance(q, shared[0], shared[1]) <= tol;
    return point_in_triangle(q, shared[0], shared[1], shared[2], tol);
}

// Clipping admits points up to tol outside a face; near an obtuse corner of a
// coplanar neighbour those lie farther than tol from the shared face, so
// membership uses a wider slack.
constexpr double kMembershipSlack = 1e3;

bool intersection_is_shared_face(const Cell& x, const Cell& y, double tol) {
    const double member_tol = kMembershipSlack * tol;
    std::vector<Vec3> shared;
    for (std::size_t i = 0; i < x.verts.size(); ++i) {
        if (std::ranges::find(y.verts, x.verts[i]) != y.verts.end()) shared.push_back(x.pts[i]);
    }
    auto check = [&](const Cell& a, const Cell& b) {
        for (const auto& [p, q] : pieces(a)) {
            const auto iv = clip_segment(p, q, b.pts, tol);
            if (!iv) continue;
            const Vec3 d = q - p;
            if (!in_shared_face(p + iv->t0 * d, shared, member_tol) ||
                !in_shared_face(p + iv->t1 * d, shared, member_tol)) {
                return false;
            }
        }
        return true;
    };
    return check(x, y) && check(y, x);
}

bool is_face_of(const std::vector<VertexIndex>& small, const std::vector<VertexIndex>& big) {
    return std::ranges::includes(big, small);
}

}  // namespace

ValidationReport validate_complex(const EmbeddedComplex& complex, const ValidationOptions& options) {
    ValidationReport report;
    const std::size_t n = complex.num_vertices();
    const int ambient = complex.ambient_dim();
    const int top = complex.top_dimension();

    std::vector<std::set<std::vector<VertexIndex>>> present(std::max(top, 0) + 1);
    std::vector<std::vector<bool>> usable(std::max(top, 0) + 1);
    for (int m = 1; m <= top; ++m) {
        usable[m].assign(complex.count(m), false);
        for (std::size_t i = 0; i < complex.count(m); ++i) {
            const auto s = complex.simplex(m, i);
            std::vector<VertexIndex> tuple(s.begin(), s.end());
            if (std::ranges::any_of(tuple, [n](VertexIndex v) { return v >= n; })) {
                report.errors.push_back({ViolationKind::IndexOutOfRange, m, i, "vertex index out of range"});
                continue;
            }
            if (std::adjacent_find(tuple.begin(), tuple.end(), std::greater_equal<>()) != tuple.end()) {
                report.errors.push_back({ViolationKind::NotStrictlyIncreasing, m, i, "simplex tuple not strictly increasing"});
                std::sort(tuple.begin(), tuple.end());
            }
            if (!present[m].insert(tuple).second) {
                report.errors.push_back({ViolationKind::DuplicateSimplex, m, i, "duplicate simplex"});
                continue;
            }
            usable[m][i] = std::adjacent_find(tuple.begin(), tuple.end()) == tuple.end();
        }
    }

    for (int m = 2; m <= top; ++m) {
        for (std::size_t i = 0; i < complex.count(m); ++i) {
            if (!usable[m][i]) continue;
            const auto s = complex.simplex(m, i);
            std::vector<VertexIndex> tuple(s.begin(), s.end());
            std::sort(tuple.begin(), tuple.end());
            for (int drop = 0; drop <= m; ++drop) {
                std::vector<VertexIndex> facet;
                for (int k = 0; k <= m; ++k) {
                    if (k != drop) facet.push_back(tuple[k]);
                }
                if (!present[m - 1].contains(facet)) {
                    report.errors.push_back({ViolationKind::MissingFace, m, i, "missing face"});
                    break;
                }
            }
        }
    }

    for (int m = 1; m <= top; ++m) {
        for (std::size_t i = 0; i < complex.count(m); ++i) {
            if (!usable[m][i]) continue;
            const auto s = complex.simplex(m, i);
            bool dependent = m > ambient;
            if (!dependent) {
                Eigen::MatrixXd edges(ambient, m);
                const auto base = complex.vertex(s[0]);
                for (int k = 1; k <= m; ++k) {
                    const auto p = complex.vertex(s[k]);
                    for (int c = 0; c < ambient; ++c) edges(c, k - 1) = p[c] - base[c];
                }
                const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(edges).singularValues();
                dependent = !(sv(m - 1) > options.tolerance * sv(0));
            }
            if (dependent) {
                report.errors.push_back({ViolationKind::AffinelyDependent, m, i, "vertices are affinely dependent"});
                usable[m][i] = false;
            }
        }
    }

    if (!options.check_intersections || (ambient != 2 && ambient != 3) || !report.empty()) return report;

    std::vector<Cell> cells;
    auto position = [&](VertexIndex v) {
        const auto p = complex.vertex(v);
        return Vec3(p[0], p[1], ambient == 3 ? p[2] : 0.0);
    };
    double scale = 1.0;
    for (std::size_t v = 0; v < n; ++v) {
        cells.push_back({0, v, {static_cast<VertexIndex>(v)}, {position(static_cast<VertexIndex>(v))}, {}, {}});
        scale = std::max(scale, position(static_cast<VertexIndex>(v)).cwiseAbs().maxCoeff());
    }
    for (int m = 1; m <= std::min(top, 2); ++m) {
        for (std::size_t i = 0; i < complex.count(m); ++i) {
            const auto s = complex.simplex(m, i);
            Cell c{m, i, {s.begin(), s.end()}, {}, {}, {}};
            for (const VertexIndex v : s) c.pts.push_back(position(v));
            cells.push_back(std::move(c));
        }
    }
    const double tol = options.tolerance * scale;
    for (auto& c : cells) {
        c.lo = c.pts[0];
        c.hi = c.pts[0];
        for (const auto& p : c.pts) {
            c.lo = c.lo.cwiseMin(p);
            c.hi = c.hi.cwiseMax(p);
        }
    }
    std::vector<std::size_t> order(cells.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return cells[a].lo.x() < cells[b].lo.x(); });

    // Sweep along x; only boxes that overlap are tested.
    std::set<std::pair<int, std::size_t>> flagged;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const Cell& a = cells[order[oi]];
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const Cell& b = cells[order[oj]];
            if (b.lo.x() > a.hi.x() + tol) break;
            if (b.lo.y() > a.hi.y() + tol || a.lo.y() > b.hi.y() + tol || b.lo.z() > a.hi.z() + tol ||
                a.lo.z() > b.hi.z() + tol) {
                continue;
            }
            if (is_face_of(a.verts, b.verts) || is_face_of(b.verts, a.verts)) continue;
            if (intersection_is_shared_face(a, b, tol)) continue;
            const Cell& hi_cell = a.dim >= b.dim ? a : b;
            const Cell& lo_cell = a.dim >= b.dim ? b : a;
            if (flagged.insert({hi_cell.dim, hi_cell.index}).second) {
                report.warnings.push_back({ViolationKind::IntersectionNotSharedFace, hi_cell.dim, hi_cell.index,
                                           "intersection not a shared face (with " + std::to_string(lo_cell.dim) +
                                               "-simplex " + std::to_string(lo_cell.index) + ")"});
            }
        }
    }
    return report;
}

}  // namespace ectnet
