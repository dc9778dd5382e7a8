#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ectnet/complex.hpp"
#include "ectnet/error.hpp"
#include "ectnet/mesh_io.hpp"
#include "ectnet/model.hpp"
#include "ectnet/parallel.hpp"
#include "ectnet/pipeline.hpp"
#include "ectnet/shapes.hpp"
#include "ectnet/sphere.hpp"
#include "ectnet/topology.hpp"

namespace py = pybind11;
using namespace ectnet;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using IntArray = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;

Points to_points(const DirectionSet& d) {
    Points p(d.size(), 3);
    for (std::size_t i = 0; i < d.size(); ++i) p.row(i) = d[i].transpose();
    return p;
}

DirectionSet from_points(const Points& p) {
    std::vector<Vec3> pts(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) pts[i] = p.row(i).transpose();
    return DirectionSet::from_points(std::move(pts));
}

EmbeddedComplex make_complex(const Points& coords, const std::vector<std::vector<VertexIndex>>& simplices) {
    std::vector<double> c(coords.data(), coords.data() + coords.size());
    return EmbeddedComplex::from_simplices(3, std::move(c), simplices);
}

Points complex_points(const EmbeddedComplex& K) {
    Points p(K.num_vertices(), 3);
    for (std::size_t i = 0; i < K.num_vertices(); ++i)
        for (int j = 0; j < 3; ++j) p(i, j) = K.vertex(i)[j];
    return p;
}

IntArray field_array(const EctField& F) {
    IntArray out({static_cast<py::ssize_t>(F.num_directions()), static_cast<py::ssize_t>(F.t)});
    std::copy(F.values.begin(), F.values.end(), out.mutable_data());
    return out;
}

EctField field_from_array(const IntArray& values, const DirectionSet& directions, double a) {
    if (values.ndim() != 2 || static_cast<std::size_t>(values.shape(0)) != directions.size())
        throw ShapeError("field must be (directions, t)");
    EctField F;
    F.directions = directions;
    F.a = a;
    F.t = static_cast<int>(values.shape(1));
    F.values.assign(values.data(), values.data() + values.size());
    return F;
}

// (k, 2) birth/death array for one homology dimension.
py::array_t<double> diagram_array(const PersistenceDiagram& d) {
    py::array_t<double> out({static_cast<py::ssize_t>(d.size()), py::ssize_t{2}});
    auto m = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < d.size(); ++i) {
        m(i, 0) = d.entries[i].birth;
        m(i, 1) = d.entries[i].death;
    }
    return out;
}

PersistenceDiagram diagram_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 || (a.shape(0) > 0 && a.shape(1) != 2)) throw ShapeError("diagram must be (k, 2)");
    PersistenceDiagram d;
    auto m = a.unchecked<2>();
    for (py::ssize_t i = 0; i < a.shape(0); ++i) d.entries.push_back({m(i, 0), m(i, 1), 0});
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Euler curve transforms and the invariant embedding network";
    configure_allocator();

    auto base = py::register_exception<Error>(m, "EctnetError", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::class_<EmbeddedComplex>(m, "Complex")
        .def(py::init(&make_complex), py::arg("coordinates"), py::arg("simplices"))
        .def_property_readonly("num_vertices", &EmbeddedComplex::num_vertices)
        .def_property_readonly("counts", [](const EmbeddedComplex& K) { return K.counts().k; })
        .def_property_readonly("coordinates", &complex_points)
        .def("simplices", [](const EmbeddedComplex& K, int dim) {
            const auto s = K.simplices(dim);
            py::array_t<VertexIndex> out({static_cast<py::ssize_t>(s.size() / (dim + 1)), py::ssize_t{dim + 1}});
            std::copy(s.begin(), s.end(), out.mutable_data());
            return out;
        }, py::arg("dim"));

    m.def("euler_characteristic", &euler_characteristic, py::arg("complex"));
    m.def("read_mesh", [](const std::filesystem::path& p) { return read_mesh(p); }, py::arg("path"));
    m.def("write_off", &write_off, py::arg("complex"), py::arg("path"));
    m.def("subdivide", [](const EmbeddedComplex& K, const std::string& scheme) {
        return subdivide(K, parse_subdivision_scheme(scheme));
    }, py::arg("complex"), py::arg("scheme") = "edge_split");
    m.def("normalize_scale", &normalize_scale, py::arg("complex"));
    m.def("apply_isometry", [](const EmbeddedComplex& K, const Eigen::Matrix3d& R, const Eigen::Vector3d& w) {
        return apply_isometry(K, Isometry{R, w});
    }, py::arg("complex"), py::arg("rotation"), py::arg("translation"));
    m.def("shape", [](const std::string& name, double scale) { return base_shape(parse_shape_class(name), scale); },
          py::arg("name"), py::arg("scale") = 1.0);
    m.def("radial_deform", &radial_deform, py::arg("complex"), py::arg("seed"), py::arg("amplitude"));

    m.def("icosphere_directions", [](int level) { return to_points(cached_icosphere(level).directions); },
          py::arg("level"));
    m.def("icosphere_edges", [](int level) { return cached_icosphere(level).graph.edges; }, py::arg("level"));
    m.def("fibonacci_directions", [](std::size_t n) { return to_points(fibonacci_directions(n)); }, py::arg("n"));

    m.def("euler_curve", [](const EmbeddedComplex& K, const Eigen::Vector3d& v, const std::vector<double>& grid) {
        return euler_curve_by_counting(height_values(K, v), grid).values;
    }, py::arg("complex"), py::arg("direction"), py::arg("grid"));
    m.def("regular_grid", &regular_grid, py::arg("a"), py::arg("t"));
    m.def("ect_field", [](const EmbeddedComplex& K, const Points& directions, double a, int t) {
        return field_array(ect_field(K, from_points(directions), a, t));
    }, py::arg("complex"), py::arg("directions"), py::arg("a") = 8.0, py::arg("t") = 512);
    m.def("persistence", [](const EmbeddedComplex& K, const Eigen::Vector3d& v) {
        std::vector<py::array_t<double>> out;
        for (const auto& d : compute_persistence(height_values(K, v))) out.push_back(diagram_array(d));
        return out;
    }, py::arg("complex"), py::arg("direction"));
    m.def("bottleneck_distance", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                                    const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
        return bottleneck_distance(diagram_from_array(a), diagram_from_array(b));
    }, py::arg("a"), py::arg("b"));
    m.def("landscape", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& d,
                          const std::vector<double>& grid, int depth) {
        const auto L = landscape_from_diagram(diagram_from_array(d), grid, depth);
        py::array_t<double> out({static_cast<py::ssize_t>(depth), static_cast<py::ssize_t>(grid.size())});
        std::copy(L.samples.begin(), L.samples.end(), out.mutable_data());
        return out;
    }, py::arg("diagram"), py::arg("grid"), py::arg("depth") = 5);

    py::class_<ModelParams>(m, "Params")
        .def_static("init", &ModelParams::init, py::arg("channels"), py::arg("seed"))
        .def_static("load", [](const std::filesystem::path& p, int channels, int k, double slope) {
            return load_checkpoint(p, ModelConfig{channels, k, slope});
        }, py::arg("path"), py::arg("channels") = 128, py::arg("k") = 39, py::arg("slope") = 0.01)
        .def("save", [](const ModelParams& P, const std::filesystem::path& p, int k, double slope) {
            save_checkpoint(P, ModelConfig{P.channels(), k, slope}, p);
        }, py::arg("path"), py::arg("k") = 39, py::arg("slope") = 0.01)
        .def_property_readonly("channels", &ModelParams::channels)
        .def_property_readonly("num_scalars", &ModelParams::num_scalars);

    m.def("embed", [](const IntArray& field, int level, const ModelParams& P, int k, double slope, double a) {
        const auto& ico = cached_icosphere(level);
        const auto F = field_from_array(field, ico.directions, a);
        py::gil_scoped_release release;
        return model_forward(F, ico.graph, P, ModelConfig{P.channels(), k, slope});
    }, py::arg("field"), py::arg("level"), py::arg("params"), py::arg("k") = 39, py::arg("slope") = 0.01,
       py::arg("a") = 8.0);
    m.def("octagon_targets", &octagon_targets, py::arg("classes"));

    // Pipeline entry points take the experiment config as JSON text.
    m.def("parse_config", [](const std::string& json) { return config_to_json(parse_config(json)); },
          py::arg("json"), "validated config with every key filled in");
    m.def("synth", [](const std::filesystem::path& out, const std::string& json) {
        return synth_dataset(out, parse_config(json)).entries.size();
    }, py::arg("out_dir"), py::arg("config") = "{}");
    m.def("preprocess", [](const std::filesystem::path& manifest, const std::string& json) {
        py::gil_scoped_release release;
        return preprocess_ect(load_manifest(manifest), parse_config(json));
    }, py::arg("manifest"), py::arg("config") = "{}");
    m.def("train", [](const std::filesystem::path& manifest, const std::string& json,
                      const std::filesystem::path& checkpoint) {
        const auto cfg = parse_config(json);
        TrainResult r;
        {
            py::gil_scoped_release release;
            r = train_model(load_manifest(manifest), cfg);
        }
        save_checkpoint(r.params, cfg.model, checkpoint);
        std::vector<double> losses;
        for (const auto& e : r.log) losses.push_back(e.train_loss);
        return py::make_tuple(r.final_loss, losses);
    }, py::arg("manifest"), py::arg("config"), py::arg("checkpoint"),
       "trains, writes the checkpoint, returns (final_loss, epoch losses)");
    m.def("embed_dataset", [](const std::filesystem::path& manifest, const std::filesystem::path& checkpoint,
                              const std::string& json) {
        const auto cfg = parse_config(json);
        const auto params = load_checkpoint(checkpoint, cfg.model);
        std::vector<EmbeddingRow> rows;
        {
            py::gil_scoped_release release;
            rows = embed_meshes(load_manifest(manifest), params, cfg);
        }
        py::list out;
        for (const auto& r : rows)
            out.append(py::make_tuple(r.mesh, r.label, split_name(r.split), r.point.x(), r.point.y()));
        return py::make_tuple(out, nearest_centroid_accuracy(rows));
    }, py::arg("manifest"), py::arg("checkpoint"), py::arg("config") = "{}",
       "returns ([(mesh, label, split, x, y)], held-out nearest-centroid accuracy)");
    m.def("invariance", [](const std::filesystem::path& manifest, const std::filesystem::path& checkpoint,
                           const std::string& json) {
        const auto cfg = parse_config(json);
        const auto params = load_checkpoint(checkpoint, cfg.model);
        py::gil_scoped_release release;
        return invariance_error_analysis(load_manifest(manifest), params, cfg).error;
    }, py::arg("manifest"), py::arg("checkpoint"), py::arg("config") = "{}");
}
