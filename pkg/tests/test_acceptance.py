"""End-to-end acceptance checks; each prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``. The full set takes roughly
ten minutes on one CPU core.
"""

import math
import time
from dataclasses import replace

import cvxpy as cp
import numpy as np
import pytest
from scipy.stats import spearmanr

from mmdplan.bench import (
    METHODS,
    BenchConfig,
    collision_free_mask,
    reduced_set_study,
    results_csv_text,
    run_benchmark,
    run_scene,
    select_for_method,
    timing_report,
)
from mmdplan.collision import l_dist
from mmdplan.frenet import BoundaryConditions, FrenetPlanner, Trajectory, diff_matrices
from mmdplan.kernels import KernelSpec, cross_gram, gram, mmd_weighted
from mmdplan.optimizer import CemState, OptimizerConfig, distribution_update, optimize
from mmdplan.projection import ConstraintSpec, Projector, residuals
from mmdplan.reduced_set import ObstacleSampleSet, ReducedSet, reduced_set_mmd, refine_weights
from mmdplan.scenes import SceneConfig, draw_set, make_scene_suite, validation_set

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def suite20():
    return make_scene_suite(SceneConfig(), 20, seed=0)


def test_criterion_01_benchmark_ordering(report, suite20):
    t0 = time.perf_counter()
    results, summary = run_benchmark(suite20, METHODS, BenchConfig())
    elapsed = time.perf_counter() - t0
    mmd, base = summary["mmd"]["mean"], summary["scenario"]["mean"]
    failed = [r for r in results if r.status != "ok"]
    ok = not failed and mmd >= 0.90 and mmd > base and elapsed <= 15 * 60
    report(1, ok, f"MMD mean {mmd:.4f} vs scenario {base:.4f} over {summary['mmd']['scenes']} scenes, {elapsed:.0f} s")
    assert ok


def test_criterion_02_fig5_fixture(report):
    # first seed whose 200 draws realize the 5%/95% split exactly
    base = SceneConfig(n_draw=200, intent_probs=(0.05, 0.95))
    scene = next(s for s in (replace(base, seed=k) for k in range(100)) if np.count_nonzero(draw_set(s).labels == 0) == 10)
    O, V = draw_set(scene), validation_set(scene)
    cfg = BenchConfig()
    low = {m: float(np.mean(O.labels[select_for_method(scene, O, m, cfg).indices] == 0)) for m in METHODS}
    counts = {m: run_scene(scene, m, cfg, O, V).collision_free for m in METHODS}
    ok = low["scenario"] >= 0.8 and 1.0 - low["mmd"] >= 0.6 and counts["mmd"] > counts["scenario"]
    report(
        2,
        ok,
        f"seed {scene.seed}: baseline set {low['scenario']:.0%} low-mode, MMD set {1 - low['mmd']:.0%} high-mode; "
        f"collision-free MMD {counts['mmd']} vs baseline {counts['scenario']}",
    )
    assert ok


def test_criterion_03_reduced_set_vs_random(report):
    suite = make_scene_suite(SceneConfig(), 10, seed=0)
    t0 = time.perf_counter()
    optimal, random_mean = [], []
    for scene in suite:
        r = reduced_set_study(scene, 20, BenchConfig(), seed=0)
        optimal.append(r["optimal"] / r["n_validation"])
        random_mean.append(np.mean(r["random"]) / r["n_validation"])
    elapsed = time.perf_counter() - t0
    opt, rnd = float(np.mean(optimal)), float(np.mean(random_mean))
    ok = opt >= rnd - 0.01 and elapsed <= 10 * 60
    report(3, ok, f"optimal {opt:.4f} vs random-subset mean {rnd:.4f} (10 scenes x 20 subsets), {elapsed:.0f} s")
    assert ok


def _double_sum_mmd(Z, wa, wb, h):
    d = wa - wb
    total = 0.0
    for j in range(len(Z)):
        for l in range(len(Z)):
            total += d[j] * d[l] * math.exp(-float(np.sum((Z[j] - Z[l]) ** 2)) / (2 * h * h))
    return total


def test_criterion_04_kernel_trick(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        n, dim = int(rng.integers(2, 21)), int(rng.integers(1, 30))
        h = float(rng.uniform(0.5, 40.0))
        Z = rng.normal(0, rng.uniform(0.1, 30.0), (n, dim))
        wa = np.full(n, 1.0 / n)
        wb = rng.normal(0, 1.0 / n, n)
        spec = KernelSpec(h)
        K = gram(Z, spec)
        fast = mmd_weighted(K, cross_gram(Z, Z, spec), K, wa, wb)
        slow = _double_sum_mmd(Z, wa, wb, h)
        worst = max(worst, abs(fast - slow) / abs(slow))
    ok = worst <= 1e-9
    report(4, ok, f"max relative error {worst:.2e} over 100 instances")
    assert ok


def test_criterion_05_refined_weights_optimal(report):
    rng = np.random.default_rng(5)
    spec = KernelSpec(30.0)
    margins = []
    for _ in range(20):
        n, m, H = int(rng.integers(20, 60)), int(rng.integers(2, 11)), int(rng.integers(5, 20))
        O = ObstacleSampleSet(rng.normal(0, 20, (n, H)), rng.normal(0, 20, (n, H)), 0.1)
        idx = np.sort(rng.choice(n, m, replace=False))
        best = reduced_set_mmd(O, refine_weights(O, idx, spec), spec)
        for k in range(200):
            w = rng.dirichlet(np.ones(m)) if k % 2 else rng.normal(1.0 / m, 0.5 / m, m)
            margins.append(reduced_set_mmd(O, ReducedSet.from_parent(O, idx, w), spec) - best)
    ok = min(margins) >= 0.0
    report(5, ok, f"smallest (random - refined) MMD gap {min(margins):.3e} over 20 x 200 weight vectors")
    assert ok


def test_criterion_06_l_dist_fidelity(report):
    scene = replace(SceneConfig(), n_validation=10_000)
    O, V = draw_set(scene), validation_set(scene)
    reference = ReducedSet.from_parent(O, np.arange(O.n), np.full(O.n, 1.0 / O.n))
    planner = FrenetPlanner(scene.ego_boundary(), scene.ego_gains(), scene.horizon, scene.dt)
    rng = np.random.default_rng(0)
    D = np.column_stack([rng.uniform(-0.5, 4.0, 50), rng.uniform(6.0, 16.0, 50)])
    egos = [planner.plan(d) for d in D]
    risk = [l_dist(e, reference, scene.geometry) for e in egos]
    freq = [1.0 - collision_free_mask(e, V, scene.geometry).mean() for e in egos]
    rho = spearmanr(risk, freq).statistic
    ok = rho >= 0.8
    report(6, ok, f"Spearman {rho:.3f} over 50 candidates, 10^4 Monte-Carlo draws")
    assert ok


def _qp_oracle(traj, b, g):
    H, dt = traj.horizon, traj.dt
    D1, D2 = diff_matrices(H, dt)
    x, y = cp.Variable(H), cp.Variable(H)
    cons = []
    for axis, z in (("x", x), ("y", y)):
        A, rhs = b.constraint_rows(H, dt, axis)
        cons += [A @ z == rhs, D2 @ z <= g.a_max, D2 @ z >= -g.a_max]
    cons += [D1 @ x >= g.v_min, D1 @ x <= g.v_max, y >= g.y_min, y <= g.y_max]
    obj = cp.Minimize(cp.sum_squares(x - traj.x) + cp.sum_squares(y - traj.y))
    cp.Problem(obj, cons).solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return x.value, y.value


def _random_inputs(rng, b, H, count):
    P = FrenetPlanner(b, None, H, 0.1)
    X, Y = P.plan_batch(np.column_stack([rng.uniform(-3, 7, count), rng.uniform(0, 35, count)]))
    X = X + 0.3 * rng.normal(0, 0.3, (count, H)).cumsum(axis=1)
    Y = Y + rng.uniform(0, 5, (count, 1)) * np.sin(np.linspace(0, rng.uniform(1, 6), H))
    return X, Y


def test_criterion_07_projection(report):
    rng = np.random.default_rng(7)
    g = SceneConfig().bounds
    b = BoundaryConditions.initial(vx=12.0)
    H = 50
    proj = Projector(b, g, H, 0.1)
    X, Y = _random_inputs(rng, b, H, 1000)
    Xp, Yp = proj.project_batch(X, Y, exact=True)
    Xq, Yq = proj.project_batch(Xp, Yp, exact=True)
    eq = ineq = 0.0
    for x, y in zip(Xp, Yp):
        r = residuals(Trajectory(x, y, 0.1), b, g)
        eq, ineq = max(eq, r.max_equality), max(ineq, r.max_inequality)
    idem = max(np.abs(Xq - Xp).max(), np.abs(Yq - Yp).max())

    small = Projector(b, g, 20, 0.1)
    Xs, Ys = _random_inputs(rng, b, 20, 20)
    Xsp, Ysp = small.project_batch(Xs, Ys, exact=True)
    oracle = 0.0
    for i in range(20):
        ox, oy = _qp_oracle(Trajectory(Xs[i], Ys[i], 0.1), b, g)
        oracle = max(oracle, np.abs(Xsp[i] - ox).max(), np.abs(Ysp[i] - oy).max())
    ok = eq <= 1e-6 and ineq <= 1e-4 and idem <= 1e-6 and oracle <= 1e-3
    report(7, ok, f"equality {eq:.1e}, inequality {ineq:.1e}, idempotence {idem:.1e} (1000 inputs); oracle gap {oracle:.1e} (H=20)")
    assert ok


def test_criterion_08_optimizer_sanity(report, suite20):
    # best-so-far is non-increasing on real planning runs and on the toy problem
    monotone = True
    for scene in suite20[:3]:
        for method in METHODS:
            r = run_scene(scene, method, BenchConfig())
            costs = [t["best_cost"] for t in r.trace]
            monotone &= all(b <= a for a, b in zip(costs, costs[1:]))

    wide = ConstraintSpec(y_min=-50.0, y_max=50.0, v_min=0.0, v_max=60.0, a_max=100.0)
    target = np.array([1.0, 11.0])
    toy = optimize(
        SceneConfig(horizon=30, bounds=wide),
        cost_fn=lambda D, X, Y: np.sum((D - target) ** 2, axis=1),
        cfg=OptimizerConfig(iters=20, seed=3),
    )
    costs = [t.best_cost for t in toy.trace]
    monotone &= all(b <= a for a, b in zip(costs, costs[1:]))
    toy_gap = costs[-1]

    s = CemState(np.array([0.0, 10.0]), np.eye(2))
    one = distribution_update(s, np.array([[2.5, 13.0]]), np.array([7.0]), OptimizerConfig(eta_lr=1.0, n_e=1))
    single_err = np.abs(one.mu_d - [2.5, 13.0]).max()
    elites = np.random.default_rng(8).normal(size=(5, 2))
    cfg = OptimizerConfig(eta_lr=0.6)
    eq = distribution_update(s, elites, np.full(5, 3.3), cfg)
    mean = 0.4 * s.mu_d + 0.6 * elites.mean(axis=0)
    dev = elites - mean
    cov = 0.4 * s.sigma_d + 0.6 * dev.T @ dev / 5
    uniform_err = max(np.abs(eq.mu_d - mean).max(), np.abs(eq.sigma_d - cov).max())

    ok = monotone and toy_gap <= 1e-2 and single_err <= 1e-12 and uniform_err <= 1e-12
    report(8, ok, f"monotone {monotone}, toy gap {toy_gap:.1e} after 20 iterations, collapse errors {single_err:.1e} / {uniform_err:.1e}")
    assert ok


def test_criterion_09_timing(report):
    rows = timing_report(SceneConfig(), (10, 20, 30, 40, 50), BenchConfig(), repeats=7)
    sel = np.array([r["reduced_set_s"] for r in rows])
    opt = np.array([r["optimizer_s"] for r in rows])
    flat = np.all(np.abs(sel - np.median(sel)) <= 0.2 * np.median(sel))
    ok = sel.max() < 5.0 and flat and np.all(np.diff(opt) >= 0)
    report(
        9,
        ok,
        "reduced-set solve " + "/".join(f"{v:.2f}" for v in sel) + " s; optimizer " + "/".join(f"{v:.2f}" for v in opt) + " s for m=10..50",
    )
    assert ok


def test_criterion_10_determinism(report):
    suite = make_scene_suite(SceneConfig(), 3, seed=11)
    a = results_csv_text(run_benchmark(suite, METHODS, BenchConfig())[0])
    b = results_csv_text(run_benchmark(suite, METHODS, BenchConfig())[0])
    ok = a.encode() == b.encode()
    report(10, ok, f"two runs of a 3-scene manifest give {'identical' if ok else 'different'} CSV bytes ({len(a)} bytes)")
    assert ok
