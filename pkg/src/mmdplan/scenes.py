"""Synthetic multi-modal driving scenes and obstacle-sample file I/O.

An obstacle picks a lateral intent (an offset from its current lane) from a
categorical law and a desired speed from a Gaussian; each pair is turned into
a trajectory by the Frenet planner. Draw sets (used for planning) and
validation sets come from independent child streams of the scene seed.
"""

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

import jsonschema
import numpy as np

from mmdplan.collision import CollisionGeometry
from mmdplan.exceptions import SampleFileError
from mmdplan.frenet import BoundaryConditions, FrenetGains, FrenetPlanner
from mmdplan.projection import ConstraintSpec
from mmdplan.reduced_set import ObstacleSampleSet

__all__ = [
    "SceneConfig",
    "generate_obstacle_samples",
    "draw_set",
    "validation_set",
    "make_scene_suite",
    "save_samples",
    "load_external_samples",
    "save_scene_config",
    "load_scene_config",
    "save_suite",
    "load_suite",
    "SAMPLE_FORMAT_VERSION",
    "SCENE_FORMAT_VERSION",
]

SAMPLE_FORMAT_VERSION = 1
SCENE_FORMAT_VERSION = 1

# probability grid for the rare intent when building suites
PROB_GRID = np.round(np.linspace(0.02, 0.10, 17), 3)

State = Tuple[float, float, float, float, float, float]


@dataclass(frozen=True)
class SceneConfig:
    """Ego start, bounds, geometry and the obstacle's intent/speed law.

    States are ``(x, y, vx, vy, ax, ay)``. ``intent_offsets`` are lateral
    offsets relative to the obstacle's initial ``y``. ``confidence`` is kept
    as metadata only; no computation uses it.
    """

    scene_id: str = "scene-000"
    ego_state: State = (0.0, 0.0, 12.0, 0.0, 0.0, 0.0)
    v_des: float = 12.0
    # ego-centre lateral limits: road edges at -1.75 and 5.25 minus half the ego width
    bounds: ConstraintSpec = ConstraintSpec(y_min=-0.85, y_max=4.35)
    geometry: CollisionGeometry = field(default_factory=CollisionGeometry.multi_circle)
    horizon: int = 100
    dt: float = 0.1
    obstacle_state: State = (25.0, 3.5, 8.0, 0.0, 0.0, 0.0)
    intent_offsets: Tuple[float, ...] = (-3.5, 0.0)
    intent_probs: Tuple[float, ...] = (0.05, 0.95)
    velocity_mean: float = 8.0
    velocity_std: float = 0.5
    ego_kappa_p: float = 1.0
    obstacle_kappa_p: float = 1.0
    n_draw: int = 100
    n_validation: int = 1000
    m: int = 10
    seed: int = 0
    confidence: float = 0.95

    def __post_init__(self):
        for name in ("ego_state", "obstacle_state"):
            val = tuple(float(v) for v in getattr(self, name))
            if len(val) != 6:
                raise ValueError(f"{name} needs (x, y, vx, vy, ax, ay), got {val}")
            object.__setattr__(self, name, val)
        offsets = tuple(float(v) for v in self.intent_offsets)
        probs = tuple(float(v) for v in self.intent_probs)
        if len(offsets) != len(probs) or not offsets:
            raise ValueError("intent_offsets and intent_probs must be non-empty and of equal length")
        if any(p < 0 for p in probs) or not np.isclose(sum(probs), 1.0, atol=1e-9):
            raise ValueError(f"intent probabilities must be >= 0 and sum to 1, got {probs}")
        object.__setattr__(self, "intent_offsets", offsets)
        object.__setattr__(self, "intent_probs", probs)
        if self.velocity_std < 0:
            raise ValueError("velocity_std must be >= 0")
        if self.n_draw < 1 or self.n_validation < 1:
            raise ValueError("n_draw and n_validation must be >= 1")
        if not 1 <= self.m <= self.n_draw:
            raise ValueError(f"need 1 <= m <= n_draw, got m={self.m}")

    @property
    def ego_y0(self):
        return self.ego_state[1]

    def ego_boundary(self):
        return BoundaryConditions.initial(*self.ego_state)

    def obstacle_boundary(self):
        return BoundaryConditions.initial(*self.obstacle_state)

    def ego_gains(self):
        return FrenetGains(self.ego_kappa_p)

    def obstacle_gains(self):
        return FrenetGains(self.obstacle_kappa_p)

    def guess_behavior(self):
        """Initial-guess behavioral input: hold the current lane at the desired speed."""
        return np.array([self.ego_y0, self.v_des])

    def to_dict(self):
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if hasattr(val, "to_dict"):
                val = val.to_dict()
            elif isinstance(val, tuple):
                val = list(val)
            out[f.name] = val
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "bounds" in data:
            data["bounds"] = ConstraintSpec.from_dict(data["bounds"])
        if "geometry" in data:
            data["geometry"] = CollisionGeometry.from_dict(data["geometry"])
        for key in ("ego_state", "obstacle_state", "intent_offsets", "intent_probs"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def generate_obstacle_samples(scene, count, seed):
    """``count`` obstacle trajectories; ``labels`` holds the intent index of each."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    probs = np.asarray(scene.intent_probs)
    intents = rng.choice(probs.size, size=int(count), p=probs)
    v_d = scene.velocity_mean + scene.velocity_std * rng.standard_normal(int(count))
    y_d = scene.obstacle_state[1] + np.asarray(scene.intent_offsets)[intents]
    planner = FrenetPlanner(scene.obstacle_boundary(), scene.obstacle_gains(), scene.horizon, scene.dt)
    X, Y = planner.plan_batch(np.column_stack([y_d, v_d]))
    return ObstacleSampleSet(X, Y, scene.dt, labels=intents)


def _streams(scene):
    draw, valid = np.random.SeedSequence(scene.seed).spawn(2)
    return np.random.default_rng(draw), np.random.default_rng(valid)


def draw_set(scene):
    """The ``n_draw`` samples the planner sees."""
    return generate_obstacle_samples(scene, scene.n_draw, _streams(scene)[0])


def validation_set(scene):
    """``n_validation`` novel samples from a stream disjoint from :func:`draw_set`."""
    return generate_obstacle_samples(scene, scene.n_validation, _streams(scene)[1])


def make_scene_suite(base, count, seed=0):
    """``count`` scenes varying the rare-intent probability and the obstacle's start.

    The first intent of ``base`` is treated as the rare one; the remaining
    probability mass is split in the proportions of ``base``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if count == 1:
        return [base]
    rng = np.random.default_rng(seed)
    grid = rng.permutation(PROB_GRID)
    rest = np.asarray(base.intent_probs[1:])
    rest = rest / rest.sum() if rest.sum() > 0 else np.full(rest.size, 1.0 / max(rest.size, 1))
    suite = []
    for i in range(count):
        p = float(grid[i % grid.size]) if len(base.intent_probs) > 1 else 1.0
        probs = (p,) + tuple((1.0 - p) * rest)
        dx, dv = rng.uniform(-5.0, 5.0), rng.uniform(-1.0, 1.0)
        obs = list(base.obstacle_state)
        obs[0] += dx
        obs[2] += dv
        suite.append(
            replace(
                base,
                scene_id=f"scene-{i:03d}",
                intent_probs=probs,
                obstacle_state=tuple(obs),
                velocity_mean=base.velocity_mean + dv,
                seed=int(rng.integers(2**31 - 1)),
            )
        )
    return suite


# -- files ------------------------------------------------------------------

SAMPLE_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "dt", "horizon", "samples"],
    "properties": {
        "format": {"const": "mmdplan-obstacle-samples"},
        "version": {"const": SAMPLE_FORMAT_VERSION},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "horizon": {"type": "integer", "minimum": 5},
        "samples": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "minItems": 2,
                "maxItems": 2,
                "items": {"type": "array", "items": {"type": "number"}},
            },
        },
        "metadata": {"type": "object"},
    },
}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "scene"],
    "properties": {
        "format": {"const": "mmdplan-scene"},
        "version": {"const": SCENE_FORMAT_VERSION},
        "scene": {"type": "object"},
    },
}

SUITE_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "scenes"],
    "properties": {
        "format": {"const": "mmdplan-scene-suite"},
        "version": {"const": SCENE_FORMAT_VERSION},
        "scenes": {"type": "array", "items": {"type": "object"}},
    },
}


def _read_json(path, schema):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SampleFileError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from exc
    except OSError as exc:
        raise SampleFileError(f"cannot read file: {exc.strerror}", str(path)) from exc
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SampleFileError(exc.message, f"{path}: field {where}") from exc
    return data


def save_samples(O, path, metadata=None):
    doc = {
        "format": "mmdplan-obstacle-samples",
        "version": SAMPLE_FORMAT_VERSION,
        "dt": O.dt,
        "horizon": O.horizon,
        "samples": [[x.tolist(), y.tolist()] for x, y in zip(O.x, O.y)],
    }
    if metadata is not None:
        doc["metadata"] = metadata
    Path(path).write_text(json.dumps(doc))


def load_external_samples(path, horizon=None, dt=None):
    """Read an obstacle-sample file. ``horizon``/``dt``, if given, must match the file."""
    data = _read_json(path, SAMPLE_SCHEMA)
    H = data["horizon"]
    for j, (xs, ys) in enumerate(data["samples"]):
        for axis, seq in (("x", xs), ("y", ys)):
            if len(seq) != H:
                raise SampleFileError(f"expected {H} waypoints, got {len(seq)}", f"{path}: field samples/{j}/{axis}")
    if horizon is not None and H != horizon:
        raise SampleFileError(f"horizon {H} does not match required {horizon}", f"{path}: field horizon")
    if dt is not None and not np.isclose(data["dt"], dt):
        raise SampleFileError(f"dt {data['dt']} does not match required {dt}", f"{path}: field dt")
    arr = np.asarray(data["samples"], dtype=float)
    try:
        return ObstacleSampleSet(arr[:, 0, :], arr[:, 1, :], data["dt"])
    except ValueError as exc:
        raise SampleFileError(str(exc), str(path)) from exc


def save_scene_config(scene, path):
    doc = {"format": "mmdplan-scene", "version": SCENE_FORMAT_VERSION, "scene": scene.to_dict()}
    Path(path).write_text(json.dumps(doc, indent=2))


def _scene_from(data, where):
    try:
        return SceneConfig.from_dict(data)
    except (TypeError, ValueError, KeyError) as exc:
        raise SampleFileError(f"invalid scene: {exc}", where) from exc


def load_scene_config(path):
    return _scene_from(_read_json(path, SCENE_SCHEMA)["scene"], f"{path}: field scene")


def save_suite(scenes, path):
    doc = {"format": "mmdplan-scene-suite", "version": SCENE_FORMAT_VERSION, "scenes": [s.to_dict() for s in scenes]}
    Path(path).write_text(json.dumps(doc, indent=2))


def load_suite(path):
    data = _read_json(path, SUITE_SCHEMA)
    return [_scene_from(s, f"{path}: field scenes/{i}") for i, s in enumerate(data["scenes"])]
