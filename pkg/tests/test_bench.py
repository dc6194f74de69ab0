import json

import numpy as np
import pytest

import mmdplan.bench as bench_module
from mmdplan.bench import (
    BenchConfig,
    RunResult,
    collision_free_mask,
    read_results_csv,
    reduced_set_study,
    results_csv_text,
    run_benchmark,
    run_scene,
    summarize,
    timing_report,
    validate_trajectory,
    write_results,
)
from mmdplan.collision import CollisionGeometry, f_constraint
from mmdplan.frenet import Trajectory
from mmdplan.optimizer import OptimizerConfig
from mmdplan.reduced_set import ObstacleSampleSet, ReducedSetOptConfig
from mmdplan.scenes import SceneConfig, make_scene_suite

GEOM = CollisionGeometry.multi_circle()

FAST = BenchConfig(
    optimizer=OptimizerConfig(n_bar_cem=120, n_cem=40, n_e=10, iters=3),
    reduced_set=ReducedSetOptConfig(cem_batch=60, cem_elites=10, cem_iters=5),
)


def tiny_scene(**kw):
    args = dict(horizon=30, n_draw=30, n_validation=100, m=5)
    args.update(kw)
    return SceneConfig(**args)


def loop_count(ego, O, geom):
    count = 0
    for j in range(O.n):
        hit = any(
            f_constraint((ego.x[k], ego.y[k]), (O.x[j, k] + off, O.y[j, k]), geom) > 0
            for k in range(O.horizon)
            for off in geom.circle_offsets
        )
        count += not hit
    return count


def lane_set(rng, n_a, n_b, H=30, dt=0.1):
    t = np.arange(H) * dt
    x = 10.0 * t + rng.normal(0, 0.3, (n_a + n_b, 1))
    y = np.concatenate([np.zeros(n_a), np.full(n_b, 10.0)])[:, None] + rng.normal(0, 0.1, (n_a + n_b, H))
    return ObstacleSampleSet(x, y, dt, labels=np.repeat([0, 1], [n_a, n_b]))


def test_validate_far_ego_counts_everything(rng):
    O = lane_set(rng, 20, 20)
    ego = Trajectory(O.x.mean(axis=0), np.full(O.horizon, 100.0), O.dt)
    assert validate_trajectory(ego, O, GEOM) == O.n


def test_validate_pinned_at_mode_centre(rng):
    O = lane_set(rng, 25, 15)
    ego = Trajectory(O.x[:25].mean(axis=0), O.y[:25].mean(axis=0), O.dt)
    count = validate_trajectory(ego, O, GEOM)
    assert count == loop_count(ego, O, GEOM)
    assert count == 15
    assert np.array_equal(collision_free_mask(ego, O, GEOM), O.labels == 1)


def test_validate_single_constructed_collision():
    H, dt = 20, 0.1
    ego = Trajectory(10.0 * dt * np.arange(H), np.zeros(H), dt)
    y = np.full((10, H), 50.0)
    # sample 3 enters the ellipse at exactly one step
    y[3, 12] = 0.0
    O = ObstacleSampleSet(np.tile(ego.x, (10, 1)), y, dt)
    assert validate_trajectory(ego, O, GEOM) == 9
    assert loop_count(ego, O, GEOM) == 9


def test_validate_horizon_mismatch(rng):
    O = lane_set(rng, 2, 2)
    with pytest.raises(ValueError):
        validate_trajectory(Trajectory(np.arange(20.0), np.zeros(20), 0.1), O, GEOM)


def test_run_result_bounds():
    with pytest.raises(ValueError):
        RunResult("s", "mmd", 0, 10, 11)
    assert RunResult("s", "mmd", 0, 10, 4).fraction == 0.4


def test_bench_config_round_trip():
    assert BenchConfig.from_dict(json.loads(json.dumps(FAST.to_dict()))) == FAST


def test_trivially_safe_scene_scores_full():
    # the obstacle stays two lanes away whatever it does
    scene = tiny_scene(obstacle_state=(25.0, 14.0, 8.0, 0.0, 0.0, 0.0), intent_offsets=(0.0, 3.5), intent_probs=(0.5, 0.5))
    for method in ("mmd", "scenario"):
        r = run_scene(scene, method, FAST)
        assert r.status == "ok"
        assert r.collision_free == scene.n_validation


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        run_scene(tiny_scene(), "nope", FAST)


def test_benchmark_deterministic_and_summary_consistent(tmp_path):
    suite = make_scene_suite(tiny_scene(), 3, seed=2)
    res_a, summ_a = run_benchmark(suite, cfg=FAST)
    res_b, summ_b = run_benchmark(suite, cfg=FAST)
    assert results_csv_text(res_a) == results_csv_text(res_b)
    assert summ_a == summ_b
    assert len(res_a) == 6 and {r.method for r in res_a} == {"mmd", "scenario"}

    path = write_results(res_a, summ_a, tmp_path / "out", {"seed": 2})
    rows = read_results_csv(path)
    assert len(rows) == 6
    assert summarize(rows) == summ_a
    assert json.loads((tmp_path / "out" / "summary.json").read_text()) == summ_a
    assert (tmp_path / "out" / "traces.json").exists() and (tmp_path / "out" / "manifest.json").exists()
    for r in res_a:
        assert r.trace and set(r.timings) == {"sample", "reduce", "optimize", "validate"}
        assert len(r.indices) == len(r.weights) == 5


def test_summary_statistics():
    rows = [RunResult(f"s{i}", "mmd", 0, 100, c).csv_row() for i, c in enumerate([90, 95, 100, 80])]
    s = summarize(rows)["mmd"]
    assert s["mean"] == pytest.approx(0.9125)
    assert s["median"] == pytest.approx(0.925)
    assert (s["min"], s["max"], s["scenes"]) == (0.8, 1.0, 4)


def test_failures_recorded_as_errors(monkeypatch):
    def boom(scene, rset, method, cfg):
        if method == "scenario":
            raise RuntimeError("boom")
        return orig(scene, rset, method, cfg)

    orig = bench_module.plan_with_reduced_set
    monkeypatch.setattr(bench_module, "plan_with_reduced_set", boom)
    res, summ = run_benchmark([tiny_scene()], cfg=FAST)
    by = {r.method: r for r in res}
    assert by["mmd"].status == "ok"
    assert by["scenario"].status == "error" and "boom" in by["scenario"].error
    assert "scenario" not in summ and summ["mmd"]["scenes"] == 1


def test_study_without_random_sets():
    r = reduced_set_study(tiny_scene(), 0, FAST)
    assert r["random"] == [] and r["random_indices"] == []
    assert 0 <= r["optimal"] <= r["n_validation"]


def test_study_duplicate_subsets_give_identical_counts():
    # with m = n every random subset is the full set
    r = reduced_set_study(tiny_scene(n_draw=5, m=5), 3, FAST, seed=1)
    assert all(idx == [0, 1, 2, 3, 4] for idx in r["random_indices"])
    assert len(set(r["random"])) == 1


def test_timing_report_lists_all_sizes():
    rows = timing_report(tiny_scene(n_draw=20), sizes=(2, 4, 6), cfg=FAST, repeats=1)
    assert [r["m"] for r in rows] == [2, 4, 6]
    for r in rows:
        assert r["reduced_set_s"] > 0 and r["optimizer_s"] > 0
