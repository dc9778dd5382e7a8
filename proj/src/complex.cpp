#include "ectnet/complex.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "ectnet/error.hpp"

namespace ectnet {

namespace {

// Sorts width-sized tuples lexicographically and drops duplicates.
void canonicalize_tuples(std::vector<VertexIndex>& flat, std::size_t width) {
    const std::size_t n = flat.size() / width;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto less = [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(flat.begin() + a * width, flat.begin() + (a + 1) * width,
                                            flat.begin() + b * width, flat.begin() + (b + 1) * width);
    };
    std::sort(order.begin(), order.end(), less);
    std::vector<VertexIndex> out;
    out.reserve(flat.size());
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[k];
        if (k > 0 && std::equal(flat.begin() + i * width, flat.begin() + (i + 1) * width,
                                flat.begin() + order[k - 1] * width)) {
            continue;
        }
        out.insert(out.end(), flat.begin() + i * width, flat.begin() + (i + 1) * width);
    }
    flat = std::move(out);
}

}  // namespace

EmbeddedComplex EmbeddedComplex::from_simplices(int ambient_dim, std::vector<double> coordinates,
                                                const std::vector<std::vector<VertexIndex>>& simplices) {
    if (ambient_dim <= 0) throw ArgumentError("ambient dimension must be positive");
    if (coordinates.size() % static_cast<std::size_t>(ambient_dim) != 0) {
        throw ShapeError("coordinate count is not a multiple of the ambient dimension");
    }
    const std::size_t n = coordinates.size() / ambient_dim;

    EmbeddedComplex result;
    result.ambient_dim_ = ambient_dim;
    result.coordinates_ = std::move(coordinates);
    result.by_dim_.resize(1);

    std::vector<VertexIndex> sorted;
    for (const auto& s : simplices) {
        if (s.empty()) throw ArgumentError("empty simplex");
        sorted = s;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw ArgumentError("simplex has a repeated vertex index");
        }
        if (sorted.back() >= n) throw ArgumentError("vertex index out of range");
        const std::size_t m = sorted.size() - 1;
        if (m == 0) continue;
        if (result.by_dim_.size() <= m) result.by_dim_.resize(m + 1);
        // Every subset with at least two vertices is a face of dimension >= 1.
        const std::uint64_t full = (std::uint64_t{1} << sorted.size()) - 1;
        for (std::uint64_t mask = 1; mask <= full; ++mask) {
            const int size = std::popcount(mask);
            if (size < 2) continue;
            auto& bucket = result.by_dim_[size - 1];
            for (std::size_t b = 0; b < sorted.size(); ++b) {
                if (mask & (std::uint64_t{1} << b)) bucket.push_back(sorted[b]);
            }
        }
    }
    for (std::size_t m = 1; m < result.by_dim_.size(); ++m) canonicalize_tuples(result.by_dim_[m], m + 1);
    return result;
}

EmbeddedComplex EmbeddedComplex::from_raw(int ambient_dim, std::vector<double> coordinates,
                                          std::vector<std::vector<VertexIndex>> simplices_by_dim) {
    if (ambient_dim <= 0) throw ArgumentError("ambient dimension must be positive");
    if (coordinates.size() % static_cast<std::size_t>(ambient_dim) != 0) {
        throw ShapeError("coordinate count is not a multiple of the ambient dimension");
    }
    EmbeddedComplex result;
    result.ambient_dim_ = ambient_dim;
    result.coordinates_ = std::move(coordinates);
    result.by_dim_ = std::move(simplices_by_dim);
    if (result.by_dim_.empty()) result.by_dim_.resize(1);
    result.by_dim_[0].clear();
    for (std::size_t m = 1; m < result.by_dim_.size(); ++m) {
        if (result.by_dim_[m].size() % (m + 1) != 0) throw ShapeError("ragged simplex list");
    }
    return result;
}

int EmbeddedComplex::top_dimension() const noexcept {
    for (std::size_t m = by_dim_.size(); m-- > 1;) {
        if (!by_dim_[m].empty()) return static_cast<int>(m);
    }
    return num_vertices() > 0 ? 0 : -1;
}

std::size_t EmbeddedComplex::count(int dim) const noexcept {
    if (dim == 0) return num_vertices();
    if (dim < 0 || static_cast<std::size_t>(dim) >= by_dim_.size()) return 0;
    return by_dim_[dim].size() / (dim + 1);
}

ComplexCounts EmbeddedComplex::counts() const {
    ComplexCounts c;
    const int top = top_dimension();
    for (int m = 0; m <= top; ++m) c.k.push_back(count(m));
    return c;
}

std::span<const VertexIndex> EmbeddedComplex::simplices(int dim) const noexcept {
    if (dim < 1 || static_cast<std::size_t>(dim) >= by_dim_.size()) return {};
    return by_dim_[dim];
}

std::ptrdiff_t EmbeddedComplex::index_of(std::span<const VertexIndex> tuple) const {
    const int dim = static_cast<int>(tuple.size()) - 1;
    if (dim == 0) return tuple[0] < num_vertices() ? static_cast<std::ptrdiff_t>(tuple[0]) : -1;
    const std::size_t n = count(dim);
    const auto flat = simplices(dim);
    const std::size_t width = tuple.size();
    std::size_t lo = 0, hi = n;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        auto row = flat.subspan(mid * width, width);
        if (std::lexicographical_compare(row.begin(), row.end(), tuple.begin(), tuple.end())) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    if (lo < n && std::ranges::equal(flat.subspan(lo * width, width), tuple)) {
        return static_cast<std::ptrdiff_t>(lo);
    }
    return -1;
}

bool EmbeddedComplex::contains(std::span<const VertexIndex> tuple) const {
    return !tuple.empty() && index_of(tuple) >= 0;
}

EmbeddedComplex EmbeddedComplex::with_coordinates(std::vector<double> coordinates) const {
    if (coordinates.size() != coordinates_.size()) throw ShapeError("coordinate array size changed");
    EmbeddedComplex result = *this;
    result.coordinates_ = std::move(coordinates);
    return result;
}

Isometry Isometry::identity(int dim) {
    return {Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim)};
}

Isometry Isometry::compose(const Isometry& second, const Isometry& first) {
    return {second.rotation * first.rotation, second.rotation * first.translation + second.translation};
}

std::int64_t euler_characteristic(const EmbeddedComplex& complex) {
    std::int64_t chi = 0;
    const int top = complex.top_dimension();
    for (int m = 0; m <= top; ++m) {
        const auto k = static_cast<std::int64_t>(complex.count(m));
        chi += (m % 2 == 0) ? k : -k;
    }
    return chi;
}

EmbeddedComplex apply_isometry(const EmbeddedComplex& complex, const Isometry& transform) {
    const int n = complex.ambient_dim();
    if (transform.rotation.rows() != n || transform.rotation.cols() != n || transform.translation.size() != n) {
        throw ShapeError("isometry dimension does not match the complex");
    }
    std::vector<double> out(complex.coordinates().size());
    for (std::size_t v = 0; v < complex.num_vertices(); ++v) {
        const auto x = complex.vertex(v);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += transform.rotation(i, j) * x[j];
            out[v * n + i] = acc + transform.translation(i);
        }
    }
    return complex.with_coordinates(std::move(out));
}

SubdivisionScheme parse_subdivision_scheme(const std::string& name) {
    if (name == "edge_split") return SubdivisionScheme::EdgeSplit;
    if (name == "barycentric") return SubdivisionScheme::Barycentric;
    throw UnsupportedSchemeError("unknown subdivision scheme \"" + name + "\"");
}

namespace {

EmbeddedComplex edge_split(const EmbeddedComplex& complex) {
    if (complex.top_dimension() > 2) {
        throw UnsupportedSchemeError("edge_split requires a complex of dimension at most 2");
    }
    const int dim = complex.ambient_dim();
    const std::size_t n = complex.num_vertices();
    const std::size_t num_edges = complex.count(1);

    std::vector<double> coords(complex.coordinates().begin(), complex.coordinates().end());
    coords.reserve((n + num_edges) * dim);
    std::vector<std::vector<VertexIndex>> tops;
    tops.reserve(2 * num_edges + 4 * complex.count(2) + n);
    for (std::size_t v = 0; v < n; ++v) tops.push_back({static_cast<VertexIndex>(v)});

    for (std::size_t e = 0; e < num_edges; ++e) {
        const auto s = complex.simplex(1, e);
        const auto a = complex.vertex(s[0]);
        const auto b = complex.vertex(s[1]);
        for (int i = 0; i < dim; ++i) coords.push_back((a[i] + b[i]) * 0.5);
        const auto mid = static_cast<VertexIndex>(n + e);
        tops.push_back({s[0], mid});
        tops.push_back({s[1], mid});
    }
    auto midpoint = [&](VertexIndex u, VertexIndex w) {
        const VertexIndex pair[2] = {std::min(u, w), std::max(u, w)};
        return static_cast<VertexIndex>(n + complex.index_of(pair));
    };
    for (std::size_t f = 0; f < complex.count(2); ++f) {
        const auto s = complex.simplex(2, f);
        const VertexIndex a = s[0], b = s[1], c = s[2];
        const VertexIndex ab = midpoint(a, b), bc = midpoint(b, c), ac = midpoint(a, c);
        tops.push_back({a, ab, ac});
        tops.push_back({b, ab, bc});
        tops.push_back({c, ac, bc});
        tops.push_back({ab, bc, ac});
    }
    return EmbeddedComplex::from_simplices(dim, std::move(coords), tops);
}

EmbeddedComplex barycentric(const EmbeddedComplex& complex) {
    const int dim = complex.ambient_dim();
    const int top = complex.top_dimension();
    // New vertex ids: original vertices first, then one per simplex in dimension order.
    std::vector<std::size_t> offset(std::max(top, 0) + 2, 0);
    offset[0] = 0;
    for (int m = 0; m <= top; ++m) offset[m + 1] = offset[m] + complex.count(m);

    std::vector<double> coords(offset.back() * dim);
    std::copy(complex.coordinates().begin(), complex.coordinates().end(), coords.begin());
    for (int m = 1; m <= top; ++m) {
        for (std::size_t i = 0; i < complex.count(m); ++i) {
            const auto s = complex.simplex(m, i);
            double* out = coords.data() + (offset[m] + i) * dim;
            for (int c = 0; c < dim; ++c) {
                double acc = 0.0;
                for (const VertexIndex v : s) acc += complex.vertex(v)[c];
                out[c] = acc / static_cast<double>(m + 1);
            }
        }
    }

    std::vector<std::vector<VertexIndex>> tops;
    for (std::size_t v = 0; v < complex.num_vertices(); ++v) tops.push_back({static_cast<VertexIndex>(v)});
    std::vector<VertexIndex> perm, prefix;
    for (int m = 1; m <= top; ++m) {
        for (std::size_t i = 0; i < complex.count(m); ++i) {
            const auto s = complex.simplex(m, i);
            perm.assign(s.begin(), s.end());
            // Every ordering of the vertices is one maximal flag ending at s.
            do {
                std::vector<VertexIndex> chain;
                chain.reserve(m + 1);
                for (int len = 1; len <= m + 1; ++len) {
                    prefix.assign(perm.begin(), perm.begin() + len);
                    std::sort(prefix.begin(), prefix.end());
                    const auto idx = complex.index_of(prefix);
                    chain.push_back(static_cast<VertexIndex>(offset[len - 1] + idx));
                }
                tops.push_back(std::move(chain));
            } while (std::next_permutation(perm.begin(), perm.end()));
        }
    }
    return EmbeddedComplex::from_simplices(dim, std::move(coords), tops);
}

}  // namespace

EmbeddedComplex subdivide(const EmbeddedComplex& complex, SubdivisionScheme scheme) {
    switch (scheme) {
        case SubdivisionScheme::EdgeSplit:
            return edge_split(complex);
        case SubdivisionScheme::Barycentric:
            return barycentric(complex);
    }
    throw UnsupportedSchemeError("unknown subdivision scheme");
}

double coordinate_std(const EmbeddedComplex& complex) {
    const auto c = complex.coordinates();
    if (c.empty()) return 0.0;
    const double mean = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
    double ss = 0.0;
    for (const double x : c) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(c.size()));
}

EmbeddedComplex normalize_scale(const EmbeddedComplex& complex) {
    if (complex.num_vertices() < 2) throw DegenerateInputError("normalization needs at least two vertices");
    const double s = coordinate_std(complex);
    if (!(s > 0.0) || !std::isfinite(s)) {
        throw DegenerateInputError("coordinate standard deviation is zero");
    }
    std::vector<double> out(complex.coordinates().begin(), complex.coordinates().end());
    for (double& x : out) x /= s;
    return complex.with_coordinates(std::move(out));
}

Isometry random_isometry(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Matrix3d g;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) g(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<Eigen::Matrix3d> qr(g);
    Eigen::Matrix3d q = qr.householderQ();
    const Eigen::Matrix3d r = qr.matrixQR();
    // Folding the signs of diag(R) into Q makes the distribution Haar.
    for (int j = 0; j < 3; ++j) {
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    Eigen::Vector3d w;
    for (int i = 0; i < 3; ++i) w(i) = normal(rng);
    return {q, w};
}

Eigen::Matrix3d random_rotation(std::uint64_t seed) {
    Eigen::Matrix3d r = random_isometry(seed).rotation;
    if (r.determinant() < 0.0) r = -r;
    return r;
}

}  // namespace ectnet
