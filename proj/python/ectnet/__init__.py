"""Euler curve transforms of embedded complexes and an isometry-invariant embedding network."""

import json as _json

from . import _core
from ._core import (
    Complex,
    EctnetError,
    IoError,
    Params,
    ParseError,
    ShapeError,
    ValidationError,
    apply_isometry,
    bottleneck_distance,
    ect_field,
    embed,
    euler_characteristic,
    euler_curve,
    fibonacci_directions,
    icosphere_directions,
    icosphere_edges,
    landscape,
    normalize_scale,
    octagon_targets,
    persistence,
    radial_deform,
    read_mesh,
    regular_grid,
    shape,
    subdivide,
    write_off,
)


def _text(config):
    if config is None:
        return "{}"
    return config if isinstance(config, str) else _json.dumps(config)


def parse_config(config=None):
    """Validated config as a dict with every key filled in."""
    return _json.loads(_core.parse_config(_text(config)))


def synth(out_dir, config=None):
    return _core.synth(str(out_dir), _text(config))


def preprocess(manifest, config=None):
    return [str(p) for p in _core.preprocess(str(manifest), _text(config))]


def train(manifest, checkpoint, config=None):
    """Returns (final train loss, per-epoch mean losses)."""
    return _core.train(str(manifest), _text(config), str(checkpoint))


def embed_dataset(manifest, checkpoint, config=None):
    """Returns (rows of (mesh, label, split, x, y), held-out nearest-centroid accuracy)."""
    return _core.embed_dataset(str(manifest), str(checkpoint), _text(config))


def invariance(manifest, checkpoint, config=None):
    return _core.invariance(str(manifest), str(checkpoint), _text(config))
