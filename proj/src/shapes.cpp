#include "ectnet/shapes.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "ectnet/error.hpp"

namespace ectnet {

ShapeClass parse_shape_class(const std::string& name) {
    if (name == "sphere") return ShapeClass::Sphere;
    if (name == "torus") return ShapeClass::Torus;
    if (name == "double_torus") return ShapeClass::DoubleTorus;
    if (name == "ellipsoid") return ShapeClass::Ellipsoid;
    throw ArgumentError("unknown shape class \"" + name + "\"");
}

std::string shape_class_name(ShapeClass shape) {
    switch (shape) {
        case ShapeClass::Sphere: return "sphere";
        case ShapeClass::Torus: return "torus";
        case ShapeClass::DoubleTorus: return "double_torus";
        case ShapeClass::Ellipsoid: return "ellipsoid";
    }
    return "unknown";
}

int shape_class_euler(ShapeClass shape) {
    switch (shape) {
        case ShapeClass::Sphere:
        case ShapeClass::Ellipsoid: return 2;
        case ShapeClass::Torus: return 0;
        case ShapeClass::DoubleTorus: return -2;
    }
    return 0;
}

EmbeddedComplex icosphere_mesh(int level, double radius) {
    const Icosphere ico = icosphere(level);
    std::vector<double> coords;
    coords.reserve(ico.directions.size() * 3);
    for (const Vec3& p : ico.directions.points())
        for (int k = 0; k < 3; ++k) coords.push_back(radius * p[k]);
    std::vector<std::vector<VertexIndex>> faces;
    for (const auto& t : ico.directions.triangles()) faces.push_back({t[0], t[1], t[2]});
    return EmbeddedComplex::from_simplices(3, std::move(coords), faces);
}

namespace {

struct TorusParts {
    std::vector<double> coords;
    std::vector<std::vector<VertexIndex>> faces;
};

TorusParts torus_parts(double major, double minor, int nu, int nv, bool skip_first_quad) {
    if (nu < 3 || nv < 3) throw ArgumentError("torus grid needs at least 3 x 3 quads");
    if (!(minor > 0) || !(major > minor)) throw ArgumentError("torus needs 0 < minor < major");
    TorusParts parts;
    const double pi = std::numbers::pi;
    for (int i = 0; i < nu; ++i) {
        const double u = 2 * pi * (i - 0.5) / nu;
        for (int j = 0; j < nv; ++j) {
            const double v = 2 * pi * (j - 0.5) / nv;
            const double rho = major + minor * std::cos(v);
            parts.coords.push_back(rho * std::cos(u));
            parts.coords.push_back(rho * std::sin(u));
            parts.coords.push_back(minor * std::sin(v));
        }
    }
    auto id = [&](int i, int j) { return static_cast<VertexIndex>((i % nu) * nv + (j % nv)); };
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
            if (skip_first_quad && i == 0 && j == 0) continue;
            const VertexIndex a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            parts.faces.push_back({a, b, c});
            parts.faces.push_back({a, c, d});
        }
    }
    return parts;
}

}  // namespace

EmbeddedComplex torus_mesh(double major, double minor, int nu, int nv) {
    auto parts = torus_parts(major, minor, nu, nv, false);
    return EmbeddedComplex::from_simplices(3, std::move(parts.coords), parts.faces);
}

EmbeddedComplex double_torus_mesh(double major, double minor, double gap, int nu, int nv) {
    if (!(gap > 0)) throw ArgumentError("double torus gap must be positive");
    const auto half = torus_parts(major, minor, nu, nv, true);
    const auto n = static_cast<VertexIndex>(half.coords.size() / 3);
    const double shift = major + minor + 0.5 * gap;

    std::vector<double> coords;
    coords.reserve(half.coords.size() * 2);
    // left torus: hole faces +x
    for (std::size_t i = 0; i < half.coords.size(); i += 3) {
        coords.push_back(half.coords[i] - shift);
        coords.push_back(half.coords[i + 1]);
        coords.push_back(half.coords[i + 2]);
    }
    // right torus: mirror image, hole faces -x
    for (std::size_t i = 0; i < half.coords.size(); i += 3) {
        coords.push_back(shift - half.coords[i]);
        coords.push_back(half.coords[i + 1]);
        coords.push_back(half.coords[i + 2]);
    }
    std::vector<std::vector<VertexIndex>> faces = half.faces;
    for (const auto& f : half.faces) faces.push_back({f[0] + n, f[1] + n, f[2] + n});

    const auto nvv = static_cast<VertexIndex>(nv);
    const std::array<VertexIndex, 4> ring = {0, nvv, nvv + 1, 1};  // (0,0) (1,0) (1,1) (0,1)
    for (int k = 0; k < 4; ++k) {
        const VertexIndex a0 = ring[k], a1 = ring[(k + 1) % 4];
        const VertexIndex b0 = a0 + n, b1 = a1 + n;
        faces.push_back({a0, a1, b1});
        faces.push_back({a0, b1, b0});
    }
    return EmbeddedComplex::from_simplices(3, std::move(coords), faces);
}

EmbeddedComplex ellipsoid_mesh(int level, const Vec3& axes) {
    const EmbeddedComplex sphere = icosphere_mesh(level, 1.0);
    std::vector<double> coords(sphere.coordinates().begin(), sphere.coordinates().end());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] *= axes[static_cast<int>(i % 3)];
    return sphere.with_coordinates(std::move(coords));
}

EmbeddedComplex radial_deform(const EmbeddedComplex& complex, std::uint64_t seed, double amplitude) {
    if (complex.ambient_dim() != 3) throw ArgumentError("radial_deform needs a complex in R^3");
    if (!(std::abs(amplitude) < 1)) throw ArgumentError("deformation amplitude must lie in (-1, 1)");
    constexpr int kTerms = 3;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> freq(1.0, 2.5), phase(0.0, 2 * std::numbers::pi);
    std::array<Vec3, kTerms> axis;
    std::array<double, kTerms> omega, phi;
    for (int k = 0; k < kTerms; ++k) {
        Vec3 w;
        for (int c = 0; c < 3; ++c) w[c] = normal(rng);
        axis[k] = w.normalized();
        omega[k] = freq(rng);
        phi[k] = phase(rng);
    }

    const std::size_t n = complex.num_vertices();
    Vec3 centroid = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) centroid += Vec3(complex.vertex(i).data());
    if (n > 0) centroid /= static_cast<double>(n);

    std::vector<double> coords(complex.coordinates().begin(), complex.coordinates().end());
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 x(complex.vertex(i).data());
        const Vec3 d = x - centroid;
        const double r = d.norm();
        if (r == 0) continue;
        const Vec3 u = d / r;
        double g = 0;
        for (int k = 0; k < kTerms; ++k) g += std::sin(omega[k] * axis[k].dot(u) + phi[k]);
        g /= kTerms;
        const Vec3 y = centroid + d * (1 + amplitude * g);
        for (int c = 0; c < 3; ++c) coords[3 * i + c] = y[c];
    }
    return complex.with_coordinates(std::move(coords));
}

EmbeddedComplex base_shape(ShapeClass shape, double scale, int sphere_level) {
    switch (shape) {
        case ShapeClass::Sphere: return icosphere_mesh(sphere_level, scale);
        case ShapeClass::Torus: return torus_mesh(0.7 * scale, 0.3 * scale);
        case ShapeClass::DoubleTorus: return double_torus_mesh(0.5 * scale, 0.2 * scale, 0.2 * scale);
        case ShapeClass::Ellipsoid: return ellipsoid_mesh(sphere_level, Vec3(2.0 * scale, 0.35 * scale, 0.35 * scale));
    }
    throw ArgumentError("unknown shape class");
}

}  // namespace ectnet
