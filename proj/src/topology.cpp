#include "ectnet/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>

#include "ectnet/binary_io.hpp"
#include "ectnet/error.hpp"
#include "ectnet/parallel.hpp"

namespace ectnet {

namespace {

std::vector<double> vertex_heights(const EmbeddedComplex& complex, std::span<const double> direction) {
    const std::size_t n = complex.num_vertices();
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = symmetric_dot(complex.vertex(i), direction);
    return h;
}

void check_unit(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    if (!(std::abs(std::sqrt(s) - 1.0) <= 1e-12)) throw ArgumentError("direction is not a unit vector");
}

}  // namespace

FiltrationValues height_values(const EmbeddedComplex& complex, std::span<const double> direction) {
    if (direction.size() != static_cast<std::size_t>(complex.ambient_dim())) {
        throw ArgumentError("direction has " + std::to_string(direction.size()) + " components, complex lives in R^" +
                            std::to_string(complex.ambient_dim()));
    }
    check_unit(direction);

    FiltrationValues f;
    f.complex = std::make_shared<const EmbeddedComplex>(complex);
    const int top = complex.top_dimension();
    f.values.resize(std::max(top, 0) + 1);
    f.values[0] = vertex_heights(complex, direction);
    for (int m = 1; m <= top; ++m) {
        const std::size_t n = complex.count(m);
        auto& vals = f.values[m];
        vals.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double best = -kInf;
            for (VertexIndex u : complex.simplex(m, i)) best = std::max(best, f.values[0][u]);
            vals[i] = best;
        }
    }

    for (int m = 0; m <= top; ++m) {
        for (std::size_t i = 0; i < f.values[m].size(); ++i) {
            f.order.push_back({m, static_cast<std::uint32_t>(i), f.values[m][i]});
        }
    }
    // Within a dimension the index order is the lexicographic tuple order.
    std::sort(f.order.begin(), f.order.end(), [](const FiltrationValues::Cell& x, const FiltrationValues::Cell& y) {
        if (x.value != y.value) return x.value < y.value;
        if (x.dim != y.dim) return x.dim < y.dim;
        return x.index < y.index;
    });
    return f;
}

FiltrationValues height_values(const EmbeddedComplex& complex, const Vec3& direction) {
    return height_values(complex, std::span<const double>(direction.data(), 3));
}

std::vector<double> regular_grid(double a, int t) {
    if (!(a > 0) || t < 1) throw ArgumentError("grid needs a > 0 and t >= 1");
    std::vector<double> grid(t);
    for (int i = 1; i <= t; ++i) grid[i - 1] = -a + (2.0 * a * i) / t;
    return grid;
}

EulerCurve euler_curve_by_counting(const FiltrationValues& filtration, std::span<const double> grid) {
    EulerCurve curve;
    curve.grid.assign(grid.begin(), grid.end());
    curve.values.assign(grid.size(), 0);
    // filtration.order is already sorted by value
    std::size_t next = 0;
    std::int32_t chi = 0;
    const auto& order = filtration.order;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        while (next < order.size() && order[next].value <= grid[i]) {
            chi += (order[next].dim % 2 == 0) ? 1 : -1;
            ++next;
        }
        curve.values[i] = chi;
    }
    return curve;
}

std::vector<PersistenceDiagram> compute_persistence(const FiltrationValues& filtration) {
    if (!filtration.complex) return std::vector<PersistenceDiagram>(3);
    const EmbeddedComplex& K = *filtration.complex;
    const int top = K.top_dimension();
    std::vector<PersistenceDiagram> diagrams(std::max(top, 2) + 1);
    if (top < 0) return diagrams;

    const auto& order = filtration.order;
    const std::size_t total = order.size();
    std::vector<std::vector<std::uint32_t>> position(top + 1);
    for (int m = 0; m <= top; ++m) position[m].resize(K.count(m));
    for (std::size_t p = 0; p < total; ++p) position[order[p].dim][order[p].index] = static_cast<std::uint32_t>(p);

    constexpr std::uint32_t kNone = UINT32_MAX;
    std::vector<std::uint32_t> pivot_owner(total, kNone);  // row -> column whose low it is
    std::vector<bool> killer(total, false), cleared(total, false);
    std::vector<std::vector<std::uint32_t>> reduced(total);

    std::vector<std::uint32_t> col, scratch;
    std::vector<VertexIndex> face;
    // Highest dimension first so that pivots clear the columns below them.
    for (int d = top; d >= 1; --d) {
        for (std::size_t j = 0; j < total; ++j) {
            if (order[j].dim != d || cleared[j]) continue;
            const auto simplex = K.simplex(d, order[j].index);
            col.clear();
            for (int drop = 0; drop <= d; ++drop) {
                face.clear();
                for (int k = 0; k <= d; ++k)
                    if (k != drop) face.push_back(simplex[k]);
                std::size_t idx;
                if (d == 1) {
                    idx = face[0];
                } else {
                    const std::ptrdiff_t found = K.index_of(face);
                    if (found < 0) throw ArgumentError("complex is not face-closed");
                    idx = static_cast<std::size_t>(found);
                }
                col.push_back(position[d - 1][idx]);
            }
            std::sort(col.begin(), col.end());
            while (!col.empty() && pivot_owner[col.back()] != kNone) {
                const auto& other = reduced[pivot_owner[col.back()]];
                scratch.clear();
                std::set_symmetric_difference(col.begin(), col.end(), other.begin(), other.end(),
                                              std::back_inserter(scratch));
                col.swap(scratch);
            }
            if (col.empty()) continue;
            const std::uint32_t low = col.back();
            pivot_owner[low] = static_cast<std::uint32_t>(j);
            killer[j] = true;
            cleared[low] = true;
            reduced[j] = col;
        }
    }

    for (std::size_t p = 0; p < total; ++p) {
        const double birth = order[p].value;
        if (pivot_owner[p] != kNone) {
            const double death = order[pivot_owner[p]].value;
            if (death > birth) diagrams[order[p].dim].entries.push_back({birth, death, order[p].dim});
        } else if (!killer[p]) {
            diagrams[order[p].dim].entries.push_back({birth, kInf, order[p].dim});
        }
    }
    return diagrams;
}

EulerCurve euler_curve_from_persistence(std::span<const PersistenceDiagram> diagrams, std::span<const double> grid) {
    EulerCurve curve;
    curve.grid.assign(grid.begin(), grid.end());
    curve.values.assign(grid.size(), 0);
    for (const auto& diagram : diagrams) {
        for (const auto& e : diagram.entries) {
            const int sign = (e.dim % 2 == 0) ? 1 : -1;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                if (e.birth <= grid[i] && grid[i] < e.death) curve.values[i] += sign;
            }
        }
    }
    return curve;
}

namespace {

double tent(const PersistenceEntry& e, double x) {
    const bool lower_inf = std::isinf(e.birth), upper_inf = std::isinf(e.death);
    if (lower_inf && upper_inf) return kInf;
    if (upper_inf) return std::max(0.0, x - e.birth);
    if (lower_inf) return std::max(0.0, e.death - x);
    return std::max(0.0, std::min(x - e.birth, e.death - x));
}

PersistenceLandscape empty_landscape(std::span<const double> grid, int depth) {
    if (depth < 1) throw ArgumentError("landscape depth must be positive");
    PersistenceLandscape L;
    L.depth = depth;
    L.grid.assign(grid.begin(), grid.end());
    L.samples.assign(static_cast<std::size_t>(depth) * grid.size(), 0.0);
    return L;
}

}  // namespace

PersistenceLandscape landscape_from_diagram(const PersistenceDiagram& diagram, std::span<const double> grid,
                                            int depth) {
    PersistenceLandscape L = empty_landscape(grid, depth);
    std::vector<double> tents;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        tents.clear();
        for (const auto& e : diagram.entries) tents.push_back(tent(e, grid[i]));
        const std::size_t k = std::min<std::size_t>(depth, tents.size());
        std::partial_sort(tents.begin(), tents.begin() + k, tents.end(), std::greater<>());
        for (std::size_t c = 0; c < k; ++c) L.samples[c * grid.size() + i] = tents[c];
    }
    return L;
}

PersistenceLandscape landscape_by_rank(const PersistenceDiagram& diagram, std::span<const double> grid, int depth) {
    PersistenceLandscape L = empty_landscape(grid, depth);
    const auto& entries = diagram.entries;
    auto rank = [&](double lo, double hi) {
        int n = 0;
        for (const auto& e : entries) n += (e.birth <= lo && e.death > hi) ? 1 : 0;
        return n;
    };
    double span = 1.0;
    for (const auto& e : entries) {
        if (std::isfinite(e.birth)) span = std::max(span, std::abs(e.birth));
        if (std::isfinite(e.death)) span = std::max(span, std::abs(e.death));
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid[i];
        const double reach = 2.0 * (span + std::abs(x)) + 1.0;
        for (int c = 1; c <= depth; ++c) {
            double& out = L.samples[(c - 1) * grid.size() + i];
            if (rank(x, x) < c) {
                out = 0.0;
                continue;
            }
            if (rank(x - reach, x + reach) >= c) {
                out = kInf;
                continue;
            }
            double lo = 0.0, hi = reach;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                (rank(x - mid, x + mid) >= c ? lo : hi) = mid;
            }
            out = lo;
        }
    }
    return L;
}

PersistenceLandscape landscape_by_rank(const FiltrationValues& filtration, std::span<const double> grid, int depth,
                                       int dim) {
    const auto diagrams = compute_persistence(filtration);
    if (dim < 0) throw ArgumentError("homology dimension must be non-negative");
    if (static_cast<std::size_t>(dim) >= diagrams.size()) return empty_landscape(grid, depth);
    return landscape_by_rank(diagrams[dim], grid, depth);
}

PersistenceDiagram compactify_diagram(const PersistenceDiagram& diagram, double a0, double a1) {
    if (!(a0 > 0) || !(a1 > 0) || !std::isfinite(a0) || !std::isfinite(a1)) {
        throw ArgumentError("compactification constants must be finite and positive");
    }
    auto h = [&](double x) {
        if (std::isinf(x)) return x > 0 ? a0 : -a0;
        return a0 * std::tanh(a1 * x);
    };
    PersistenceDiagram out;
    out.entries.reserve(diagram.size());
    for (const auto& e : diagram.entries) out.entries.push_back({h(e.birth), h(e.death), e.dim});
    return out;
}

namespace {

// Hopcroft-Karp on an explicit adjacency list; returns the matching size.
class BipartiteMatcher {
public:
    explicit BipartiteMatcher(std::size_t n) : n_(n), adj_(n), match_left_(n), match_right_(n), dist_(n) {}

    void add_edge(std::uint32_t u, std::uint32_t v) { adj_[u].push_back(v); }

    std::size_t max_matching() {
        std::fill(match_left_.begin(), match_left_.end(), kFree);
        std::fill(match_right_.begin(), match_right_.end(), kFree);
        std::size_t size = 0;
        while (bfs()) {
            for (std::uint32_t u = 0; u < n_; ++u)
                if (match_left_[u] == kFree && dfs(u)) ++size;
        }
        return size;
    }

private:
    static constexpr std::uint32_t kFree = UINT32_MAX;

    bool bfs() {
        std::queue<std::uint32_t> q;
        bool found = false;
        for (std::uint32_t u = 0; u < n_; ++u) {
            if (match_left_[u] == kFree) {
                dist_[u] = 0;
                q.push(u);
            } else {
                dist_[u] = kFree;
            }
        }
        while (!q.empty()) {
            const std::uint32_t u = q.front();
            q.pop();
            for (std::uint32_t v : adj_[u]) {
                const std::uint32_t w = match_right_[v];
                if (w == kFree) {
                    found = true;
                } else if (dist_[w] == kFree) {
                    dist_[w] = dist_[u] + 1;
                    q.push(w);
                }
            }
        }
        return found;
    }

    bool dfs(std::uint32_t u) {
        for (std::uint32_t v : adj_[u]) {
            const std::uint32_t w = match_right_[v];
            if (w == kFree || (dist_[w] == dist_[u] + 1 && dfs(w))) {
                match_left_[u] = v;
                match_right_[v] = u;
                return true;
            }
        }
        dist_[u] = kFree;
        return false;
    }

    std::size_t n_;
    std::vector<std::vector<std::uint32_t>> adj_;
    std::vector<std::uint32_t> match_left_, match_right_, dist_;
};

double finite_bottleneck(const std::vector<PersistenceEntry>& p, const std::vector<PersistenceEntry>& q) {
    const std::size_t n = p.size(), m = q.size();
    if (n + m == 0) return 0.0;
    auto linf = [](const PersistenceEntry& x, const PersistenceEntry& y) {
        return std::max(std::abs(x.birth - y.birth), std::abs(x.death - y.death));
    };
    auto half = [](const PersistenceEntry& x) { return 0.5 * (x.death - x.birth); };

    std::vector<double> candidates{0.0};
    for (const auto& x : p) candidates.push_back(half(x));
    for (const auto& y : q) candidates.push_back(half(y));
    for (const auto& x : p)
        for (const auto& y : q) candidates.push_back(linf(x, y));
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    // Left: p_0..p_{n-1}, then diagonal copies of q. Right: q_0..q_{m-1}, then diagonal copies of p.
    auto feasible = [&](double eps) {
        BipartiteMatcher g(n + m);
        for (std::uint32_t i = 0; i < n; ++i) {
            for (std::uint32_t j = 0; j < m; ++j)
                if (linf(p[i], q[j]) <= eps) g.add_edge(i, j);
            if (half(p[i]) <= eps) g.add_edge(i, static_cast<std::uint32_t>(m + i));
        }
        for (std::uint32_t j = 0; j < m; ++j) {
            if (half(q[j]) <= eps) g.add_edge(static_cast<std::uint32_t>(n + j), j);
            for (std::uint32_t i = 0; i < n; ++i) g.add_edge(static_cast<std::uint32_t>(n + j), static_cast<std::uint32_t>(m + i));
        }
        return g.max_matching() == n + m;
    };

    std::size_t lo = 0, hi = candidates.size() - 1;  // the largest candidate is always feasible
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (feasible(candidates[mid]))
            hi = mid;
        else
            lo = mid + 1;
    }
    return candidates[lo];
}

// Essential entries compared by their one finite coordinate; sorted pairing is optimal in 1-D.
double sorted_pairing(std::vector<double> x, std::vector<double> y) {
    if (x.size() != y.size()) return kInf;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
    return worst;
}

}  // namespace

double bottleneck_distance(const PersistenceDiagram& a, const PersistenceDiagram& b) {
    std::vector<PersistenceEntry> fa, fb;
    std::vector<double> up_a, up_b, down_a, down_b;
    std::size_t both_a = 0, both_b = 0;
    auto split = [](const PersistenceDiagram& d, std::vector<PersistenceEntry>& finite, std::vector<double>& up,
                    std::vector<double>& down, std::size_t& both) {
        for (const auto& e : d.entries) {
            const bool bi = std::isinf(e.birth), di = std::isinf(e.death);
            if (bi && di)
                ++both;
            else if (di)
                up.push_back(e.birth);
            else if (bi)
                down.push_back(e.death);
            else
                finite.push_back(e);
        }
    };
    split(a, fa, up_a, down_a, both_a);
    split(b, fb, up_b, down_b, both_b);
    if (both_a != both_b) return kInf;
    double d = sorted_pairing(up_a, up_b);
    d = std::max(d, sorted_pairing(down_a, down_b));
    if (std::isinf(d)) return d;
    return std::max(d, finite_bottleneck(fa, fb));
}

void write_diagrams_csv(std::span<const PersistenceDiagram> diagrams, std::ostream& out) {
    auto fmt = [](double x) -> std::string {
        if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
        std::ostringstream s;
        s << std::setprecision(17) << x;
        return s.str();
    };
    out << "dim,birth,death\n";
    for (const auto& d : diagrams)
        for (const auto& e : d.entries) out << e.dim << ',' << fmt(e.birth) << ',' << fmt(e.death) << '\n';
}

EctField ect_field(const EmbeddedComplex& complex, const DirectionSet& directions, double a, int t) {
    if (complex.ambient_dim() != 3) throw ArgumentError("ect_field needs a complex in R^3");
    const std::vector<double> grid = regular_grid(a, t);
    EctField field;
    field.directions = directions;
    field.a = a;
    field.t = t;
    field.values.assign(directions.size() * static_cast<std::size_t>(t), 0);

    const int top = complex.top_dimension();
    const std::size_t nv = complex.num_vertices();
    std::vector<int> overflow(directions.size(), 0);

    parallel_for(directions.size(), [&](std::size_t r) {
        const Vec3& v = directions[r];
        std::vector<std::int32_t> bucket(nv);
        std::vector<std::int64_t> delta(t + 1, 0);
        for (std::size_t i = 0; i < nv; ++i) {
            const double h = symmetric_dot(complex.vertex(i), std::span<const double>(v.data(), 3));
            if (!(std::abs(h) < a)) overflow[r] = 1;
            bucket[i] = static_cast<std::int32_t>(std::lower_bound(grid.begin(), grid.end(), h) - grid.begin());
            delta[bucket[i]] += 1;
        }
        for (int m = 1; m <= top; ++m) {
            const auto flat = complex.simplices(m);
            const std::int64_t sign = (m % 2 == 0) ? 1 : -1;
            for (std::size_t s = 0; s < flat.size(); s += m + 1) {
                std::int32_t b = 0;
                for (int k = 0; k <= m; ++k) b = std::max(b, bucket[flat[s + k]]);
                delta[b] += sign;
            }
        }
        delta[t - 1] += delta[t];
        std::int64_t chi = 0;
        std::int32_t* row = field.values.data() + r * t;
        for (int i = 0; i < t; ++i) {
            chi += delta[i];
            row[i] = static_cast<std::int32_t>(chi);
        }
    });

    if (std::any_of(overflow.begin(), overflow.end(), [](int x) { return x != 0; })) {
        warn("heights reach outside (-a, a); a = " + std::to_string(a));
    }
    return field;
}

double max_abs_height(const EmbeddedComplex& complex, const DirectionSet& directions) {
    double worst = 0.0;
    for (const Vec3& v : directions.points()) {
        for (std::size_t i = 0; i < complex.num_vertices(); ++i) {
            worst = std::max(worst, std::abs(symmetric_dot(complex.vertex(i), std::span<const double>(v.data(), 3))));
        }
    }
    return worst;
}

namespace {
constexpr char kEctMagic[5] = "ECTF";
}

void write_ect_field(const EctField& field, std::ostream& out) {
    binary::put_magic(out, kEctMagic);
    binary::put<std::uint32_t>(out, kEctFileVersion);
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(field.num_directions()));
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(field.t));
    binary::put<double>(out, field.a);
    for (const Vec3& v : field.directions.points())
        for (int k = 0; k < 3; ++k) binary::put<double>(out, v[k]);
    for (std::int32_t x : field.values) binary::put<std::int32_t>(out, x);
    if (!out) throw IoError("failed writing ECT field");
}

void write_ect_field(const EctField& field, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_ect_field(field, out);
}

EctField read_ect_field(std::istream& in) {
    binary::expect_magic(in, kEctMagic);
    const auto version = binary::get<std::uint32_t>(in);
    if (version != kEctFileVersion) throw IoError("unsupported ECT field version " + std::to_string(version));
    const auto n = binary::get<std::uint32_t>(in);
    const auto t = binary::get<std::uint32_t>(in);
    if (t == 0 || t > (1u << 24)) throw IoError("implausible resolution in ECT field");
    EctField field;
    field.a = binary::get<double>(in);
    field.t = static_cast<int>(t);
    std::vector<Vec3> points(n);
    for (auto& p : points)
        for (int k = 0; k < 3; ++k) p[k] = binary::get<double>(in);
    try {
        field.directions = DirectionSet::from_points(std::move(points));
    } catch (const ArgumentError& e) {
        throw IoError(std::string("bad directions in ECT field: ") + e.what());
    }
    field.values.resize(static_cast<std::size_t>(n) * t);
    for (auto& x : field.values) x = binary::get<std::int32_t>(in);
    return field;
}

EctField read_ect_field(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_ect_field(in);
}

}  // namespace ectnet
