"""Benchmark harness: plan with each method, count collision-free validation samples.

Result CSVs hold only deterministic quantities so reruns are byte-identical;
wall times and per-iteration traces go to a JSON sidecar.
"""

import csv
import gc
import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from mmdplan.baseline import BaselineConfig, ScenarioCost, select_boundary_set
from mmdplan.collision import F_BAR_BANDWIDTH, SurrogateConfig, circle_constraints
from mmdplan.frenet import FrenetPlanner
from mmdplan.kernels import KernelSpec
from mmdplan.optimizer import MMDCost, OptimizerConfig, optimize
from mmdplan.reduced_set import ReducedSet, ReducedSetOptConfig, refine_weights, select_reduced_set
from mmdplan.scenes import draw_set, validation_set

__all__ = [
    "METHODS",
    "BenchConfig",
    "RunResult",
    "collision_free_mask",
    "validate_trajectory",
    "select_for_method",
    "plan_with_reduced_set",
    "run_scene",
    "run_benchmark",
    "summarize",
    "write_results",
    "read_results_csv",
    "reduced_set_study",
    "timing_report",
]

logger = logging.getLogger(__name__)

METHODS = ("mmd", "scenario")


@dataclass(frozen=True)
class BenchConfig:
    """Settings shared by every scene of a benchmark run.

    ``refine_ridge`` regularizes the closed-form weight fit used for planning;
    ``mmd_weight`` is ``w`` in the augmented cost and ``scenario_weight``
    scales the baseline's hinge penalty.
    """

    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    reduced_set: ReducedSetOptConfig = field(default_factory=ReducedSetOptConfig)
    mmd_weight: float = 1e8
    scenario_weight: float = 1e3
    refine_ridge: float = 1e-2
    aggregation: str = "max"
    surrogate_bandwidth: float = F_BAR_BANDWIDTH

    def to_dict(self):
        rs = self.reduced_set
        return {
            "optimizer": self.optimizer.to_dict(),
            "reduced_set": {
                "beta": rs.beta,
                "cem_batch": rs.cem_batch,
                "cem_elites": rs.cem_elites,
                "cem_iters": rs.cem_iters,
                "bandwidth": rs.bandwidth.bandwidth_h,
                "init_std": rs.init_std,
                "cov_floor": rs.cov_floor,
                "beta_scale": rs.beta_scale,
            },
            "mmd_weight": self.mmd_weight,
            "scenario_weight": self.scenario_weight,
            "refine_ridge": self.refine_ridge,
            "aggregation": self.aggregation,
            "surrogate_bandwidth": self.surrogate_bandwidth,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        out = {}
        if "optimizer" in data:
            out["optimizer"] = OptimizerConfig.from_dict(data.pop("optimizer"))
        if "reduced_set" in data:
            rs = dict(data.pop("reduced_set"))
            if "bandwidth" in rs:
                rs["bandwidth"] = KernelSpec(float(rs["bandwidth"]))
            out["reduced_set"] = ReducedSetOptConfig(**rs)
        out.update(data)
        return cls(**out)


@dataclass
class RunResult:
    scene_id: str
    method: str
    seed: int
    n_validation: int
    collision_free: int
    indices: List[int] = field(default_factory=list)
    weights: List[float] = field(default_factory=list)
    behavior: List[float] = field(default_factory=list)
    best_cost: float = float("nan")
    timings: Dict[str, float] = field(default_factory=dict)
    trace: List[dict] = field(default_factory=list)
    status: str = "ok"
    error: str = ""

    def __post_init__(self):
        if not 0 <= self.collision_free <= self.n_validation:
            raise ValueError("collision_free must lie in [0, n_validation]")

    @property
    def fraction(self):
        return self.collision_free / self.n_validation

    def csv_row(self):
        return {
            "scene_id": self.scene_id,
            "method": self.method,
            "seed": self.seed,
            "status": self.status,
            "n_validation": self.n_validation,
            "collision_free": self.collision_free,
            "fraction": repr(self.fraction),
            "y_d": repr(self.behavior[0]) if self.behavior else "",
            "v_d": repr(self.behavior[1]) if self.behavior else "",
            "best_cost": repr(self.best_cost),
            "indices": " ".join(str(i) for i in self.indices),
            "weights": " ".join(repr(w) for w in self.weights),
        }


CSV_FIELDS = list(RunResult("", "", 0, 1, 0).csv_row())


def collision_free_mask(ego, validation, geom):
    """True for each validation sample the ego never touches (any step, any circle)."""
    if validation.horizon != ego.horizon:
        raise ValueError(f"horizon mismatch: ego {ego.horizon} vs validation {validation.horizon}")
    f = circle_constraints(ego.x[None, :], ego.y[None, :], validation.x, validation.y, geom)
    return f.max(axis=(1, 2)) <= 0.0


def validate_trajectory(ego, validation, geom):
    return int(np.count_nonzero(collision_free_mask(ego, validation, geom)))


def _guess(scene):
    return FrenetPlanner(scene.ego_boundary(), scene.ego_gains(), scene.horizon, scene.dt).plan(scene.guess_behavior())


def select_for_method(scene, samples, method, cfg):
    """Method-specific reduced set of ``scene.m`` samples."""
    if method == "mmd":
        rs_cfg = replace(cfg.reduced_set, seed=scene.seed)
        raw = select_reduced_set(samples, scene.m, rs_cfg)
        return refine_weights(samples, raw.indices, rs_cfg.bandwidth, ridge=cfg.refine_ridge)
    if method == "scenario":
        return select_boundary_set(samples, _guess(scene), scene.geometry, BaselineConfig(scene.m, cfg.aggregation))
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def method_cost(scene, rset, method, cfg):
    if method == "mmd":
        return MMDCost(rset, scene.geometry, scene.dt, SurrogateConfig(cfg.mmd_weight, scene.v_des, KernelSpec(cfg.surrogate_bandwidth)))
    return ScenarioCost(rset, scene.geometry, scene.dt, scene.v_des, cfg.scenario_weight)


def plan_with_reduced_set(scene, rset, method, cfg):
    opt_cfg = replace(cfg.optimizer, seed=scene.seed)
    return optimize(scene, rset, opt_cfg, method_cost(scene, rset, method, cfg))


def run_scene(scene, method, cfg=None, samples=None, validation=None):
    cfg = cfg or BenchConfig()
    timings = {}
    t0 = time.perf_counter()
    samples = draw_set(scene) if samples is None else samples
    validation = validation_set(scene) if validation is None else validation
    timings["sample"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rset = select_for_method(scene, samples, method, cfg)
    timings["reduce"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    res = plan_with_reduced_set(scene, rset, method, cfg)
    timings["optimize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    count = validate_trajectory(res.trajectory, validation, scene.geometry)
    timings["validate"] = time.perf_counter() - t0
    return RunResult(
        scene.scene_id,
        method,
        scene.seed,
        validation.n,
        count,
        rset.indices.tolist(),
        rset.weights.tolist(),
        [float(v) for v in res.behavior],
        res.best_cost,
        timings,
        [r.to_dict() for r in res.trace],
    )


def run_benchmark(suite, methods=METHODS, cfg=None):
    """Run every method on every scene; returns ``(results, summary)``.

    A scene that raises is recorded with ``status="error"`` instead of
    aborting the run.
    """
    cfg = cfg or BenchConfig()
    results = []
    for scene in suite:
        samples, validation = draw_set(scene), validation_set(scene)
        for method in methods:
            try:
                res = run_scene(scene, method, cfg, samples, validation)
            except Exception as exc:  # recorded per scene, surfaced through the exit code
                logger.exception("scene %s / %s failed", scene.scene_id, method)
                res = RunResult(scene.scene_id, method, scene.seed, scene.n_validation, 0, status="error", error=repr(exc))
            logger.info("%s %s: %d/%d", scene.scene_id, method, res.collision_free, res.n_validation)
            results.append(res)
    return results, summarize(r.csv_row() for r in results)


def summarize(rows):
    """Per-method mean, quartiles and extremes of the collision-free fraction.

    Accepts :meth:`RunResult.csv_row` dicts or rows read back from the CSV.
    """
    by_method = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        by_method.setdefault(row["method"], []).append(float(row["fraction"]))
    out = {}
    for method, vals in sorted(by_method.items()):
        v = np.asarray(vals)
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        out[method] = {
            "scenes": int(v.size),
            "mean": float(v.mean()),
            "median": float(med),
            "q1": float(q1),
            "q3": float(q3),
            "min": float(v.min()),
            "max": float(v.max()),
        }
    return out


def results_csv_text(results):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def write_results(results, summary, out_dir, manifest=None):
    """Write ``results.csv``, ``summary.json``, ``traces.json`` (+ ``manifest.json``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv_text(results))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    traces = [
        {"scene_id": r.scene_id, "method": r.method, "timings": r.timings, "trace": r.trace, "error": r.error}
        for r in results
    ]
    (out / "traces.json").write_text(json.dumps(traces, indent=1))
    if manifest is not None:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out / "results.csv"


def read_results_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def reduced_set_study(scene, num_random_sets, cfg=None, seed=0, samples=None, validation=None):
    """Collision-free counts for the optimized reduced set and for random ``m``-subsets.

    Each random subset gets closed-form weights and a full planner run, exactly
    like the optimized one. Returns a dict with ``optimal``, ``random`` and
    ``random_indices``.
    """
    cfg = cfg or BenchConfig()
    samples = draw_set(scene) if samples is None else samples
    validation = validation_set(scene) if validation is None else validation

    def count(rset):
        res = plan_with_reduced_set(scene, rset, "mmd", cfg)
        return validate_trajectory(res.trajectory, validation, scene.geometry)

    optimal = select_for_method(scene, samples, "mmd", cfg)
    rng = np.random.default_rng(seed)
    subsets = [np.sort(rng.choice(samples.n, scene.m, replace=False)) for _ in range(int(num_random_sets))]
    spec = cfg.reduced_set.bandwidth
    random_counts = [count(refine_weights(samples, idx, spec, ridge=cfg.refine_ridge)) for idx in subsets]
    return {
        "scene_id": scene.scene_id,
        "n_validation": validation.n,
        "optimal": count(optimal),
        "optimal_indices": optimal.indices.tolist(),
        "random": random_counts,
        "random_indices": [s.tolist() for s in subsets],
    }


def timing_report(scene, sizes=(10, 20, 30, 40, 50), cfg=None, repeats=3, warmup=True):
    """Median wall time of the reduced-set solve and of the optimizer for each ``m``.

    ``warmup`` runs one untimed solve and plan first so one-off costs (caches,
    lazy imports) are not charged to the first size. The garbage collector is
    paused while timing, as ``timeit`` does.
    """
    cfg = cfg or BenchConfig()
    samples = draw_set(scene)
    if warmup and len(sizes):
        sc = replace(scene, m=int(sizes[0]))
        plan_with_reduced_set(sc, select_for_method(sc, samples, "mmd", cfg), "mmd", cfg)
    # sizes are interleaved across repeats so drift in machine speed is shared
    scenes = [replace(scene, m=int(m)) for m in sizes]
    t_sel = [[] for _ in scenes]
    t_opt = [[] for _ in scenes]
    for rep in range(repeats):
        for i, sc in enumerate(scenes):
            gc.collect()
            was_enabled = gc.isenabled()
            gc.disable()
            try:
                t0 = time.perf_counter()
                rset = select_for_method(sc, samples, "mmd", cfg)
                t_sel[i].append(time.perf_counter() - t0)
                t0 = time.perf_counter()
                plan_with_reduced_set(sc, rset, "mmd", cfg)
                t_opt[i].append(time.perf_counter() - t0)
            finally:
                if was_enabled:
                    gc.enable()
    rows = [
        {
            "m": sc.m,
            "reduced_set_s": float(np.median(ts)),
            "optimizer_s": float(np.median(to)),
            "reduced_set_all": ts,
            "optimizer_all": to,
        }
        for sc, ts, to in zip(scenes, t_sel, t_opt)
    ]
    return rows
