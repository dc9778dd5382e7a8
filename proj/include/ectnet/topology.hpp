#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "ectnet/complex.hpp"
#include "ectnet/sphere.hpp"

namespace ectnet {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Lower-star entry values of a height function x -> x.v, together with a
/// shared copy of the complex they were computed from.
struct FiltrationValues {
    struct Cell {
        int dim;
        std::uint32_t index;
        double value;
    };

    std::shared_ptr<const EmbeddedComplex> complex;
    /// values[m][i]: entry value of the i-th m-simplex (values[0] are vertex heights).
    std::vector<std::vector<double>> values;
    /// Cells sorted by (value, dimension, lexicographic tuple).
    std::vector<Cell> order;
};

/// Throws ArgumentError when |v| differs from 1 by more than 1e-12.
FiltrationValues height_values(const EmbeddedComplex& complex, std::span<const double> direction);
FiltrationValues height_values(const EmbeddedComplex& complex, const Vec3& direction);

/// x_1 .. x_t of the regular partition of [-a, a] into t pieces.
std::vector<double> regular_grid(double a, int t);

struct EulerCurve {
    std::vector<double> grid;
    std::vector<std::int32_t> values;  // values[i] = chi(K_{v, grid[i]})
};

/// Alternating count of simplices with entry value <= grid point.
EulerCurve euler_curve_by_counting(const FiltrationValues& filtration, std::span<const double> grid);

struct PersistenceEntry {
    double birth;
    double death;  // kInf for essential classes
    int dim;

    friend bool operator==(const PersistenceEntry&, const PersistenceEntry&) = default;
};

struct PersistenceDiagram {
    std::vector<PersistenceEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
};

/// Z/2 boundary-matrix reduction in filtration order. Returns one diagram per
/// homology dimension 0..max(2, top dimension); zero-length pairs are dropped.
std::vector<PersistenceDiagram> compute_persistence(const FiltrationValues& filtration);

/// Alternating count of intervals alive at each grid point (birth <= x < death).
EulerCurve euler_curve_from_persistence(std::span<const PersistenceDiagram> diagrams, std::span<const double> grid);

struct PersistenceLandscape {
    int depth = 0;
    std::vector<double> grid;
    std::vector<double> samples;  // depth x grid.size(), row-major; row c-1 is lambda_c

    double at(int c, std::size_t i) const { return samples[(c - 1) * grid.size() + i]; }
};

/// lambda_c as the c-th largest tent max(0, min(x - b, d - x)); half-tents
/// for infinite coordinates.
PersistenceLandscape landscape_from_diagram(const PersistenceDiagram& diagram, std::span<const double> grid, int depth);

/// lambda_c(x) = sup{m >= 0 : beta(x - m, x + m) >= c}, found by bisection,
/// with beta(a, b) = #{entries born by a and still alive after b}.
PersistenceLandscape landscape_by_rank(const PersistenceDiagram& diagram, std::span<const double> grid, int depth);
PersistenceLandscape landscape_by_rank(const FiltrationValues& filtration, std::span<const double> grid, int depth,
                                       int dim);

inline constexpr double kDefaultCompactScale = 10.0;
inline constexpr double kDefaultCompactRate = 0.25;

/// Maps every coordinate through h(x) = a0 tanh(a1 x), h(+-inf) = +-a0.
PersistenceDiagram compactify_diagram(const PersistenceDiagram& diagram, double a0 = kDefaultCompactScale,
                                      double a1 = kDefaultCompactRate);

/// Exact L-infinity bottleneck distance. Essential entries are matched only
/// to essential entries of the same kind; differing counts give +inf.
double bottleneck_distance(const PersistenceDiagram& a, const PersistenceDiagram& b);

void write_diagrams_csv(std::span<const PersistenceDiagram> diagrams, std::ostream& out);

/// Discretized Euler curves of one complex over a direction set.
struct EctField {
    DirectionSet directions;
    double a = 8.0;
    int t = 0;
    std::vector<std::int32_t> values;  // directions.size() x t, row-major

    std::span<const std::int32_t> row(std::size_t i) const {
        return std::span<const std::int32_t>(values).subspan(i * t, t);
    }
    std::size_t num_directions() const noexcept { return directions.size(); }
};

/// One counting-route Euler curve per direction on regular_grid(a, t).
/// Entry values above a are counted in the last bin, so every row ends at chi(K).
EctField ect_field(const EmbeddedComplex& complex, const DirectionSet& directions, double a, int t);

/// Largest |x.v| over vertices and directions.
double max_abs_height(const EmbeddedComplex& complex, const DirectionSet& directions);

inline constexpr std::uint32_t kEctFileVersion = 1;

void write_ect_field(const EctField& field, std::ostream& out);
void write_ect_field(const EctField& field, const std::filesystem::path& path);
EctField read_ect_field(std::istream& in);
EctField read_ect_field(const std::filesystem::path& path);

}  // namespace ectnet
