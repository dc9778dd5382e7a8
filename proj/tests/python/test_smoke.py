import json

import numpy as np
import pytest

import ectnet


def filled_triangle():
    return ectnet.Complex(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), [[0, 1, 2]])


def test_euler_characteristics():
    assert ectnet.euler_characteristic(filled_triangle()) == 1
    assert ectnet.euler_characteristic(ectnet.shape("sphere", 10.0)) == 2
    assert ectnet.euler_characteristic(ectnet.shape("torus", 10.0)) == 0
    assert ectnet.euler_characteristic(ectnet.shape("double_torus", 10.0)) == -2


def test_complex_closes_faces():
    K = filled_triangle()
    assert K.counts == [3, 3, 1]
    assert K.simplices(1).shape == (3, 2)
    assert np.array_equal(K.coordinates[1], [1, 0, 0])


def test_field_rows_end_at_chi_and_survive_subdivision():
    K = ectnet.normalize_scale(ectnet.radial_deform(ectnet.shape("torus", 10.0), 3, 0.1))
    D = ectnet.icosphere_directions(3)
    assert D.shape == (92, 3)
    F = ectnet.ect_field(K, D, 8.0, 128)
    assert F.shape == (92, 128) and F.dtype == np.int32
    assert (F[:, -1] == 0).all()
    assert np.array_equal(F, ectnet.ect_field(ectnet.subdivide(K, "barycentric"), D, 8.0, 128))


def test_curve_matches_persistence():
    K = ectnet.shape("sphere", 1.0)
    v = np.array([0.0, 0.6, 0.8])
    grid = ectnet.regular_grid(2.0, 64)
    curve = np.array(ectnet.euler_curve(K, v, grid))
    diagrams = ectnet.persistence(K, v)
    alive = np.zeros(len(grid))
    for dim, d in enumerate(diagrams):
        for b, e in d:
            alive += (-1) ** dim * ((np.array(grid) >= b) & (np.array(grid) < e))
    assert np.array_equal(curve, alive)
    assert ectnet.bottleneck_distance(diagrams[0], diagrams[0]) == 0
    L = ectnet.landscape(np.array([[0.0, 2.0]]), [0.0, 1.0, 2.0], 2)
    assert np.allclose(L, [[0, 1, 0], [0, 0, 0]])


def test_embedding_unchanged_by_central_inversion():
    level = 2
    D = ectnet.icosphere_directions(level)
    K = ectnet.normalize_scale(ectnet.shape("ellipsoid", 10.0))
    P = ectnet.Params.init(8, 1)
    y = ectnet.embed(ectnet.ect_field(K, D, 8.0, 64), level, P, k=5)
    # central inversion maps the direction set onto itself
    R = -np.eye(3)
    z = ectnet.embed(ectnet.ect_field(ectnet.apply_isometry(K, R, np.zeros(3)), D, 8.0, 64), level, P, k=5)
    assert y.shape == (2,)
    assert np.allclose(y, z, atol=1e-9)


def test_config_and_errors():
    cfg = ectnet.parse_config({"level": 4, "t": 128})
    assert cfg["level"] == 4 and cfg["t"] == 128 and cfg["a"] == 8.0
    with pytest.raises(ectnet.ValidationError):
        ectnet.parse_config({"no_such_key": 1})
    with pytest.raises(ectnet.ParseError):
        ectnet.parse_config("{")
    with pytest.raises(ectnet.IoError):
        ectnet.read_mesh("/nonexistent/mesh.off")


def test_tiny_pipeline(tmp_path):
    cfg = {
        "level": 1, "t": 64, "channels": 4, "k": 3, "epochs": 2, "batch_size": 2,
        "classes": ["sphere", "torus"], "per_class": 2, "eval_per_class": 1,
        "num_transforms": 2, "num_repeats": 1,
    }
    assert ectnet.synth(tmp_path, cfg) == 6
    manifest = tmp_path / "manifest.csv"
    assert len(ectnet.preprocess(manifest, cfg)) == 6
    loss, losses = ectnet.train(manifest, tmp_path / "w.ectw", cfg)
    assert len(losses) == 2 and np.isfinite(loss)
    rows, acc = ectnet.embed_dataset(manifest, tmp_path / "w.ectw", cfg)
    assert len(rows) == 6 and 0 <= acc <= 1
    assert ectnet.invariance(manifest, tmp_path / "w.ectw", cfg) >= 0
