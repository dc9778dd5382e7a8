#pragma once

#include <string>
#include <vector>

#include "ectnet/complex.hpp"

namespace ectnet {

enum class ViolationKind {
    IndexOutOfRange,
    NotStrictlyIncreasing,
    DuplicateSimplex,
    MissingFace,
    AffinelyDependent,
    IntersectionNotSharedFace,
};

struct Violation {
    ViolationKind kind;
    int dim;            // dimension of the offending simplex
    std::size_t index;  // position within that dimension's list
    std::string message;
};

struct ValidationOptions {
    double tolerance = 1e-9;
    /// Pairwise intersection test for simplices of dimension <= 2 in R^2 or R^3.
    bool check_intersections = true;
};

/// Combinatorial and affine-independence failures are errors; pairs of
/// simplices whose intersection is not a common face are warnings.
struct ValidationReport {
    std::vector<Violation> errors;
    std::vector<Violation> warnings;

    bool empty() const noexcept { return errors.empty(); }
    bool has(ViolationKind kind) const;
};

ValidationReport validate_complex(const EmbeddedComplex& complex, const ValidationOptions& options = {});

}  // namespace ectnet
