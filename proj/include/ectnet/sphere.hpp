#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ectnet {

using Vec3 = Eigen::Vector3d;

/// Dot product whose terms are summed in order of increasing magnitude.
/// The result is bit-identical under any signed permutation applied to both
/// arguments, which keeps symmetric direction sets exactly symmetric.
double symmetric_dot(std::span<const double> a, std::span<const double> b);

enum class SphereSampling { Icosphere, Fibonacci, Custom };

/// Unit vectors on S^2 in a fixed construction order.
class DirectionSet {
public:
    DirectionSet() = default;

    /// Checks unit norm (1e-12) and pairwise separation (1e-9).
    static DirectionSet from_points(std::vector<Vec3> points, SphereSampling provenance = SphereSampling::Custom,
                                    int parameter = 0);

    std::size_t size() const noexcept { return points_.size(); }
    const Vec3& operator[](std::size_t i) const { return points_[i]; }
    const std::vector<Vec3>& points() const noexcept { return points_; }
    SphereSampling provenance() const noexcept { return provenance_; }
    /// Icosphere level or Fibonacci count.
    int parameter() const noexcept { return parameter_; }

    /// Spherical triangulation (icosphere only; empty otherwise).
    const std::vector<std::array<std::uint32_t, 3>>& triangles() const noexcept { return triangles_; }
    void set_triangles(std::vector<std::array<std::uint32_t, 3>> triangles) { triangles_ = std::move(triangles); }

private:
    std::vector<Vec3> points_;
    SphereSampling provenance_ = SphereSampling::Custom;
    int parameter_ = 0;
    std::vector<std::array<std::uint32_t, 3>> triangles_;
};

struct SphereGraph {
    std::size_t num_nodes = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // i < j, sorted
    std::vector<double> edge_lengths;

    bool connected() const;
};

struct Icosphere {
    DirectionSet directions;
    SphereGraph graph;
};

/// Icosahedron with every edge split into `level` pieces, projected to S^2:
/// 10 level^2 + 2 points; the graph holds the triangulation's edges.
Icosphere icosphere(int level);

/// Golden-angle spiral lattice with n points.
DirectionSet fibonacci_directions(std::size_t n);

/// Edge {i, j} iff 0 < |x_i - x_j| < radius.
SphereGraph threshold_graph(const DirectionSet& directions, double radius);

std::size_t nearest_direction(const DirectionSet& directions, const Vec3& x);

/// Vertex-weighted barycentric interpolation of per-node values over the
/// icosphere triangulation containing x. Requires triangles().
double interpolate_linear(const DirectionSet& directions, std::span<const double> values, const Vec3& x);

/// The 120 orthogonal maps of the icosahedral group (rotations and their negatives),
/// for the icosahedron used by icosphere().
std::vector<Eigen::Matrix3d> icosahedral_group();

/// The 48 signed permutation matrices.
std::vector<Eigen::Matrix3d> signed_permutation_group();

/// perm[i] = j with |R x_i - x_j| <= tol, if R maps the set onto itself.
std::optional<std::vector<std::uint32_t>> node_permutation(const DirectionSet& directions,
                                                           const Eigen::Matrix3d& rotation, double tol = 1e-9);

/// Adds the images of every point under all signed permutations (exact in
/// floating point), keeping construction order for the originals.
DirectionSet close_under_signed_permutations(const DirectionSet& directions);

void write_directions_csv(const DirectionSet& directions, std::ostream& out);

}  // namespace ectnet
