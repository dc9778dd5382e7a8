#pragma once

#include <cstdint>
#include <string>

#include "ectnet/complex.hpp"
#include "ectnet/sphere.hpp"

namespace ectnet {

enum class ShapeClass { Sphere, Torus, DoubleTorus, Ellipsoid };

ShapeClass parse_shape_class(const std::string& name);
std::string shape_class_name(ShapeClass shape);
/// Euler characteristic every instance of the class has.
int shape_class_euler(ShapeClass shape);

/// Triangulated icosphere surface (chi = 2) of the given radius.
EmbeddedComplex icosphere_mesh(int level, double radius = 1.0);

/// nu x nv quad grid on a torus around the z-axis, each quad cut into two triangles.
/// Grid lines sit half a step off u = 0 and v = 0, so quad (0, 0) straddles the +x
/// point of the outer equator.
EmbeddedComplex torus_mesh(double major, double minor, int nu = 24, int nv = 12);

/// Two tori side by side on the x-axis, quad (0, 0) removed from each facing the
/// other, the two holes joined by a four-sided tube. chi = -2.
EmbeddedComplex double_torus_mesh(double major, double minor, double gap, int nu = 24, int nv = 12);

EmbeddedComplex ellipsoid_mesh(int level, const Vec3& axes);

/// x -> c + (x - c) (1 + amplitude g(u)), u = (x - c)/|x - c|, c the vertex centroid,
/// g a seeded sum of low-frequency sinusoids bounded by 1. A positive factor
/// per ray keeps the map injective away from c, so embeddings stay embeddings.
EmbeddedComplex radial_deform(const EmbeddedComplex& complex, std::uint64_t seed, double amplitude);

/// Class base shape at raw scale (radius about `scale`), centred at the origin.
EmbeddedComplex base_shape(ShapeClass shape, double scale, int sphere_level = 4);

}  // namespace ectnet
