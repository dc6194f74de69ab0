import json

import pytest

import mmdplan.bench as bench_module
from mmdplan.bench import BenchConfig
from mmdplan.cli import main
from mmdplan.optimizer import OptimizerConfig
from mmdplan.reduced_set import ReducedSetOptConfig
from mmdplan.scenes import SceneConfig, save_scene_config

FAST = BenchConfig(
    optimizer=OptimizerConfig(n_bar_cem=120, n_cem=40, n_e=10, iters=3),
    reduced_set=ReducedSetOptConfig(cem_batch=60, cem_elites=10, cem_iters=5),
)


@pytest.fixture
def cfg(tmp_path):
    scene = tmp_path / "scene.json"
    save_scene_config(SceneConfig(horizon=30, n_draw=30, n_validation=100, m=5), scene)
    bench = tmp_path / "bench.json"
    bench.write_text(json.dumps(FAST.to_dict()))
    return ["--config", str(scene), "--bench-config", str(bench)]


def test_gen_scenes(tmp_path, cfg):
    out = tmp_path / "suite"
    assert main(["gen-scenes", *cfg, "--count", "3", "--seed", "1", "--out", str(out)]) == 0
    assert (out / "suite.json").exists()
    for i in range(3):
        assert (out / f"scene-00{i}.json").exists()
        assert (out / "samples" / f"scene-00{i}-draw.json").exists()
        assert (out / "samples" / f"scene-00{i}-validation.json").exists()


def test_reduce_set_both_methods(tmp_path, cfg, capsys):
    for method in ("mmd", "scenario"):
        assert main(["reduce-set", *cfg, "--method", method, "-m", "4", "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / f"reduced-set-{method}.json").read_text())
        assert len(doc["indices"]) == len(doc["weights"]) == 4 and doc["parent_n"] == 30


def test_plan_then_validate(tmp_path, cfg, capsys):
    main(["gen-scenes", *cfg, "--count", "1", "--out", str(tmp_path / "suite")])
    samples = tmp_path / "suite" / "samples" / "scene-000-draw.json"
    assert main(["plan", *cfg, "--method", "mmd", "--samples", str(samples), "--out", str(tmp_path)]) == 0
    traj = tmp_path / "trajectory-mmd.json"
    doc = json.loads(traj.read_text())
    assert doc["format"] == "mmdplan-trajectory" and len(doc["x"]) == 30
    capsys.readouterr()
    valid = tmp_path / "suite" / "samples" / "scene-000-validation.json"
    assert main(["validate", str(traj), *cfg, "--samples", str(valid)]) == 0
    assert "/100" in capsys.readouterr().out


def test_bench_writes_results_and_is_deterministic(tmp_path, cfg):
    for d in ("a", "b"):
        assert main(["bench", *cfg, "--count", "2", "--seed", "3", "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    assert a.count(b"\n") == 5
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["suite_seed"] == 3 and len(manifest["scenes"]) == 2


def test_bench_from_suite_file_single_method(tmp_path, cfg):
    main(["gen-scenes", *cfg, "--count", "2", "--out", str(tmp_path / "suite")])
    assert main(["bench", *cfg, "--suite", str(tmp_path / "suite" / "suite.json"), "--method", "scenario", "--out", str(tmp_path / "r")]) == 0
    summary = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert list(summary) == ["scenario"]


def test_bench_exits_nonzero_on_scene_failure(tmp_path, cfg, monkeypatch):
    def boom(*args, **kw):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(bench_module, "plan_with_reduced_set", boom)
    assert main(["bench", *cfg, "--count", "2", "--out", str(tmp_path)]) == 1
    assert b"error" in (tmp_path / "results.csv").read_bytes()


def test_study_and_timing(tmp_path, cfg):
    assert main(["study-reduced-set", *cfg, "--count", "2", "--num-random", "2", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "reduced_set_study.json").read_text())
    assert len(doc["scenes"]) == 2 and len(doc["scenes"][0]["random"]) == 2
    assert main(["timing", *cfg, "--sizes", "2", "3", "--repeats", "1", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "timing.json").read_text())["rows"]
    assert [r["m"] for r in rows] == [2, 3]


def test_study_exits_nonzero_on_scene_failure(tmp_path, cfg, monkeypatch):
    monkeypatch.setattr("mmdplan.cli.reduced_set_study", lambda *a, **k: (_ for _ in ()).throw(RuntimeError("x")))
    assert main(["study-reduced-set", *cfg, "--count", "2", "--num-random", "1", "--out", str(tmp_path)]) == 1


def test_bad_inputs_exit_2(tmp_path, cfg, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["plan", *cfg, "--samples", str(bad), "--out", str(tmp_path)]) == 2
    assert "bad.json:1:2" in capsys.readouterr().err
    assert main(["validate", str(bad), *cfg]) == 2


def test_invalid_method_rejected_by_parser(cfg):
    with pytest.raises(SystemExit) as exc:
        main(["plan", *cfg, "--method", "other"])
    assert exc.value.code != 0
