#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ectnet {

using VertexIndex = std::uint32_t;

/// Number of simplices per dimension; k[m] counts the m-simplices.
struct ComplexCounts {
    std::vector<std::size_t> k;

    friend bool operator==(const ComplexCounts&, const ComplexCounts&) = default;
};

/// A finite simplicial complex with vertex positions in R^n.
///
/// Simplices of dimension m >= 1 are stored per dimension as a flat array of
/// (m+1)-tuples. Complexes built through from_simplices() are canonical:
/// tuples strictly increasing, lexicographically sorted, unique and
/// face-closed. from_raw() stores exactly what it is given so that
/// validate_complex() has something to report on.
///
/// Instances are immutable after construction.
class EmbeddedComplex {
public:
    EmbeddedComplex() = default;

    static EmbeddedComplex from_simplices(int ambient_dim, std::vector<double> coordinates,
                                          const std::vector<std::vector<VertexIndex>>& simplices);

    /// simplices_by_dim[m] holds (m+1)-tuples for m >= 1; entry 0 is ignored.
    static EmbeddedComplex from_raw(int ambient_dim, std::vector<double> coordinates,
                                    std::vector<std::vector<VertexIndex>> simplices_by_dim);

    int ambient_dim() const noexcept { return ambient_dim_; }
    std::size_t num_vertices() const noexcept {
        return ambient_dim_ == 0 ? 0 : coordinates_.size() / static_cast<std::size_t>(ambient_dim_);
    }
    std::span<const double> coordinates() const noexcept { return coordinates_; }
    std::span<const double> vertex(std::size_t i) const {
        return std::span<const double>(coordinates_).subspan(i * ambient_dim_, ambient_dim_);
    }

    /// Highest dimension with at least one simplex; -1 for the empty complex.
    int top_dimension() const noexcept;
    std::size_t count(int dim) const noexcept;
    ComplexCounts counts() const;

    /// Flat tuple storage for dimension dim >= 1.
    std::span<const VertexIndex> simplices(int dim) const noexcept;
    std::span<const VertexIndex> simplex(int dim, std::size_t i) const noexcept {
        return simplices(dim).subspan(i * (dim + 1), dim + 1);
    }

    /// Membership for a strictly increasing tuple; binary search in the sorted list.
    /// Only meaningful on canonical complexes.
    bool contains(std::span<const VertexIndex> tuple) const;
    /// Position of a tuple in its dimension's list, or -1.
    std::ptrdiff_t index_of(std::span<const VertexIndex> tuple) const;

    /// Same combinatorics, new coordinates (must have the same size).
    EmbeddedComplex with_coordinates(std::vector<double> coordinates) const;

private:
    int ambient_dim_ = 3;
    std::vector<double> coordinates_;
    // by_dim_[m] for m >= 1; by_dim_[0] is always empty.
    std::vector<std::vector<VertexIndex>> by_dim_;
};

/// Rigid motion x -> R x + w. R is orthogonal (proper or improper).
struct Isometry {
    Eigen::MatrixXd rotation;
    Eigen::VectorXd translation;

    static Isometry identity(int dim);
    /// The isometry that applies `first` and then `second`.
    static Isometry compose(const Isometry& second, const Isometry& first);
};

std::int64_t euler_characteristic(const EmbeddedComplex& complex);

/// Maps every vertex x to R x + w; combinatorics are untouched.
EmbeddedComplex apply_isometry(const EmbeddedComplex& complex, const Isometry& transform);

enum class SubdivisionScheme { EdgeSplit, Barycentric };

SubdivisionScheme parse_subdivision_scheme(const std::string& name);

/// EdgeSplit: 1-to-4 split of every triangle (and 1-to-2 of loose edges);
/// only complexes of dimension <= 2. Barycentric: any complex.
EmbeddedComplex subdivide(const EmbeddedComplex& complex, SubdivisionScheme scheme);

/// Population standard deviation of the flattened coordinate list.
double coordinate_std(const EmbeddedComplex& complex);

/// Divides every coordinate by coordinate_std(); coordinates are not recentred.
EmbeddedComplex normalize_scale(const EmbeddedComplex& complex);

/// Haar-distributed element of O(3) plus a standard-normal translation,
/// deterministic in the seed.
Isometry random_isometry(std::uint64_t seed);

/// Haar-distributed element of SO(3).
Eigen::Matrix3d random_rotation(std::uint64_t seed);

}  // namespace ectnet
