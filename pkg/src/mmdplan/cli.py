"""Command line entry point: ``mmdplan <command> [options]``.

Every command that runs scenes exits with status 1 when any scene fails.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from mmdplan import __version__
from mmdplan.bench import (
    METHODS,
    BenchConfig,
    plan_with_reduced_set,
    reduced_set_study,
    run_benchmark,
    select_for_method,
    timing_report,
    validate_trajectory,
    write_results,
)
from mmdplan.exceptions import SampleFileError
from mmdplan.frenet import Trajectory
from mmdplan.scenes import (
    SceneConfig,
    draw_set,
    load_external_samples,
    load_scene_config,
    load_suite,
    make_scene_suite,
    save_samples,
    save_scene_config,
    save_suite,
    validation_set,
)

logger = logging.getLogger("mmdplan")

TRAJECTORY_FORMAT = "mmdplan-trajectory"


def _scene(args):
    scene = load_scene_config(args.config) if args.config else SceneConfig()
    if args.seed is not None:
        scene = replace(scene, seed=args.seed)
    return scene


def _bench_config(args):
    if not getattr(args, "bench_config", None):
        return BenchConfig()
    return BenchConfig.from_dict(json.loads(Path(args.bench_config).read_text()))


def _suite(args):
    if args.suite:
        return load_suite(args.suite)
    base = load_scene_config(args.config) if args.config else SceneConfig()
    return make_scene_suite(base, args.count, seed=args.seed or 0)


def _manifest(command, scenes, cfg, **extra):
    return {
        "command": command,
        "version": __version__,
        "bench_config": cfg.to_dict(),
        "scenes": [{"scene_id": s.scene_id, "seed": s.seed, "config_hash": s.config_hash()} for s in scenes],
        **extra,
    }


def _write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True))
    return path


def _samples(args, scene):
    if args.samples:
        return load_external_samples(args.samples, horizon=scene.horizon, dt=scene.dt)
    return draw_set(scene)


def cmd_gen_scenes(args):
    base = load_scene_config(args.config) if args.config else SceneConfig()
    suite = make_scene_suite(base, args.count, seed=args.seed or 0)
    out = Path(args.out)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    save_suite(suite, out / "suite.json")
    for scene in suite:
        save_scene_config(scene, out / f"{scene.scene_id}.json")
        meta = {"scene_id": scene.scene_id, "config_hash": scene.config_hash()}
        save_samples(draw_set(scene), out / "samples" / f"{scene.scene_id}-draw.json", {**meta, "role": "draw"})
        save_samples(validation_set(scene), out / "samples" / f"{scene.scene_id}-validation.json", {**meta, "role": "validation"})
    print(f"wrote {len(suite)} scenes to {out}")
    return 0


def cmd_reduce_set(args):
    scene = _scene(args)
    if args.m is not None:
        scene = replace(scene, m=args.m)
    rset = select_for_method(scene, _samples(args, scene), args.method, _bench_config(args))
    doc = {"method": args.method, "m": rset.m, "parent_n": rset.parent_n, "indices": rset.indices.tolist(), "weights": rset.weights.tolist()}
    if args.out:
        _write_json(Path(args.out) / f"reduced-set-{args.method}.json", doc)
    print(json.dumps(doc))
    return 0


def cmd_plan(args):
    scene = _scene(args)
    cfg = _bench_config(args)
    rset = select_for_method(scene, _samples(args, scene), args.method, cfg)
    res = plan_with_reduced_set(scene, rset, args.method, cfg)
    traj = res.trajectory
    doc = {
        "format": TRAJECTORY_FORMAT,
        "version": 1,
        "scene_id": scene.scene_id,
        "method": args.method,
        "dt": traj.dt,
        "x": traj.x.tolist(),
        "y": traj.y.tolist(),
        "behavior": [float(v) for v in res.behavior],
        "best_cost": res.best_cost,
        "reduced_set": {"indices": rset.indices.tolist(), "weights": rset.weights.tolist()},
    }
    path = _write_json(Path(args.out) / f"trajectory-{args.method}.json", doc)
    print(f"{scene.scene_id} {args.method}: behavior={doc['behavior']} -> {path}")
    return 0


def _load_trajectory(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SampleFileError(str(exc), str(path)) from exc
    if doc.get("format") != TRAJECTORY_FORMAT:
        raise SampleFileError(f"not a {TRAJECTORY_FORMAT} file", str(path))
    return Trajectory(np.asarray(doc["x"], dtype=float), np.asarray(doc["y"], dtype=float), float(doc["dt"]))


def cmd_validate(args):
    scene = _scene(args)
    traj = _load_trajectory(args.trajectory)
    validation = load_external_samples(args.samples, horizon=traj.horizon, dt=traj.dt) if args.samples else validation_set(scene)
    count = validate_trajectory(traj, validation, scene.geometry)
    print(f"collision-free {count}/{validation.n} ({count / validation.n:.4f})")
    return 0


def cmd_bench(args):
    suite = _suite(args)
    cfg = _bench_config(args)
    methods = tuple(args.method) if args.method else METHODS
    results, summary = run_benchmark(suite, methods, cfg)
    manifest = _manifest("bench", suite, cfg, methods=list(methods), suite_seed=args.seed or 0)
    path = write_results(results, summary, args.out, manifest)
    for method, s in summary.items():
        print(f"{method}: mean {s['mean']:.4f} median {s['median']:.4f} [{s['q1']:.4f}, {s['q3']:.4f}] over {s['scenes']} scenes")
    print(f"results: {path}")
    failed = [r for r in results if r.status != "ok"]
    for r in failed:
        print(f"FAILED {r.scene_id} {r.method}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_study(args):
    suite = _suite(args)
    cfg = _bench_config(args)
    rows, failed = [], 0
    for scene in suite:
        try:
            rows.append(reduced_set_study(scene, args.num_random, cfg, seed=args.seed or 0))
        except Exception as exc:  # reported per scene, surfaced through the exit code
            logger.exception("study on %s failed", scene.scene_id)
            rows.append({"scene_id": scene.scene_id, "error": repr(exc)})
            failed += 1
            continue
        r = rows[-1]
        rnd = np.mean(r["random"]) if r["random"] else float("nan")
        print(f"{scene.scene_id}: optimal {r['optimal']}/{r['n_validation']} random mean {rnd:.1f}")
    _write_json(Path(args.out) / "reduced_set_study.json", {"manifest": _manifest("study-reduced-set", suite, cfg), "scenes": rows})
    return 1 if failed else 0


def cmd_timing(args):
    scene = _scene(args)
    cfg = _bench_config(args)
    rows = timing_report(scene, args.sizes, cfg, repeats=args.repeats)
    for r in rows:
        print(f"m={r['m']:3d}  reduced set {r['reduced_set_s']:.3f} s  optimizer {r['optimizer_s']:.3f} s")
    _write_json(Path(args.out) / "timing.json", {"manifest": _manifest("timing", [scene], cfg), "rows": rows})
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mmdplan", description="Kernel-embedding trajectory planning under multi-modal obstacle predictions.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        p.add_argument("--seed", type=int, default=None, help="overrides the scene or suite seed")
        p.add_argument("--config", help="scene config JSON")
        p.add_argument("--bench-config", help="benchmark/optimizer settings JSON")
        p.add_argument("--out", default="out", help="output directory")
        return p

    p = add("gen-scenes", cmd_gen_scenes, "write a scene suite and its sample files")
    p.add_argument("--count", type=int, default=20)

    p = add("reduce-set", cmd_reduce_set, "select a reduced set for one scene")
    p.add_argument("--method", choices=METHODS, default="mmd")
    p.add_argument("--samples", help="obstacle-sample JSON (default: the scene's draw set)")
    p.add_argument("-m", type=int, default=None)

    p = add("plan", cmd_plan, "plan one scene and write the trajectory")
    p.add_argument("--method", choices=METHODS, default="mmd")
    p.add_argument("--samples", help="obstacle-sample JSON (default: the scene's draw set)")

    p = add("validate", cmd_validate, "count validation samples a planned trajectory avoids")
    p.add_argument("trajectory")
    p.add_argument("--samples", help="validation sample JSON (default: the scene's validation set)")

    for name, fn, help_ in (
        ("bench", cmd_bench, "run methods over a scene suite"),
        ("study-reduced-set", cmd_study, "optimal vs random reduced sets"),
    ):
        p = add(name, fn, help_)
        p.add_argument("--suite", help="suite JSON from gen-scenes")
        p.add_argument("--count", type=int, default=20 if name == "bench" else 10)
        if name == "bench":
            p.add_argument("--method", action="append", choices=METHODS, help="repeatable; default all")
        else:
            p.add_argument("--num-random", type=int, default=20)

    p = add("timing", cmd_timing, "wall time against reduced-set size")
    p.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 30, 40, 50])
    p.add_argument("--repeats", type=int, default=3)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SampleFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
