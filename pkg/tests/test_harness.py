import csv
import json
import math

import pytest

from cylperc import cli
from cylperc.harness import (CSV_COLUMNS, EXPERIMENTS, ConfigError, ResourceLimitError,
                             RunConfig, map_replicas, run_experiment, seed_from_env, splitmix64)


def test_splitmix64_reference_values():
    # first outputs of the reference generator seeded with 0
    assert splitmix64(0, 0) == 0xE220A8397B1DCDAF
    assert splitmix64(0, 1) == 0x6E789E6AA1B965F4
    assert splitmix64(0, 2) == 0x06C45D188009454F
    assert len({splitmix64(7, k) for k in range(10000)}) == 10000


def test_map_replicas_order():
    assert map_replicas(lambda k: k * k, 50, 4) == [k * k for k in range(50)]


def test_config_parsing():
    cfg = RunConfig.parse("""
        # comment
        u = 0.2   # trailing
        reps=500
        seed = 16
        x_points = 0,0; 500,0
        distances = 4, 8
    """)
    assert cfg.u == 0.2 and cfg.reps == 500 and cfg.seed == 16
    assert cfg.x_points == ((0.0, 0.0), (500.0, 0.0))
    assert cfg.distances == (4.0, 8.0)


@pytest.mark.parametrize("text", ["bogus = 1", "u = -1", "reps = 0", "reps = 2.5", "u",
                                  "u = 1\nu = 2", "surface = sphere", "u = abc"])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text)


def test_seed_env(monkeypatch):
    monkeypatch.setenv("CYLPERC_SEED", "99")
    assert seed_from_env(1) == 99
    monkeypatch.setenv("CYLPERC_SEED", "x")
    with pytest.raises(ConfigError):
        seed_from_env(1)
    monkeypatch.delenv("CYLPERC_SEED")
    assert seed_from_env(1) == 1


def _rows(path):
    with open(path) as f:
        return [{k: v for k, v in r.items() if k != "wall_time"} for r in csv.DictReader(f)]


def test_outputs_and_schema(tmp_path):
    cfg = RunConfig(u=0.2, reps=20000, seed=3, out_dir=str(tmp_path))
    recs = run_experiment(cfg, "vacancy")
    assert len(recs) == 1 and 0 <= recs[0].estimate <= 1
    with open(tmp_path / "vacancy.csv") as f:
        reader = csv.DictReader(f)
        assert tuple(reader.fieldnames) == CSV_COLUMNS
    js = json.loads((tmp_path / "vacancy.json").read_text())
    assert js["schema_version"] == 1 and js["config"]["seed"] == 3 and js["build"]
    assert js["records"][0]["experiment"] == "vacancy"


@pytest.mark.parametrize("name,cfg", [
    ("vacancy", dict(u=0.2, reps=30000)),
    ("crossing_H", dict(u=0.05, reps=4, window_radius=30.0)),
    ("lemma_core", dict(reps=40)),
    ("contrast", dict(u=0.05, reps=3, window_radius=15.0)),
])
def test_threads_do_not_change_results(tmp_path, name, cfg):
    a = RunConfig(**cfg, seed=11, threads=1, out_dir=str(tmp_path / "a"))
    b = RunConfig(**cfg, seed=11, threads=4, out_dir=str(tmp_path / "b"))
    run_experiment(a, name)
    run_experiment(b, name)
    assert _rows(tmp_path / "a" / f"{name}.csv") == _rows(tmp_path / "b" / f"{name}.csv")


def test_contrast_zero_intensity():
    recs = run_experiment(RunConfig(u=0.0, reps=2, window_radius=20.0), "contrast", write=False)
    for r in recs:
        if r.params["surface"] == "H-plane":
            assert r.estimate == 0.0
        else:
            assert r.estimate == 1.0
    with pytest.raises(ConfigError):
        run_experiment(RunConfig(window_radius=600.0), "contrast", write=False)


def test_small_dispatch_all():
    small = {
        "cov": dict(u=0.5, reps=10000, mu_samples=10000, distances=(4.0, 8.0)),
        "crossing_plane": dict(u=0.05, reps=2, window_radius=20.0),
        "circuit": dict(u=0.05, reps=2, window_radius=20.0),
        "pn": dict(u=0.0, reps=2),
        "qn": dict(u=0.0, reps=1, pair_family="radial", x_points=((0.0, 0.0),)),
        "recursion": dict(a0=1e5, n_max=3),
        "induction": dict(),
        "tail": dict(a0_hat=1e16),
        "lemma_tube": dict(reps=5, a0=1000.0),
        "lemma_blocking": dict(reps=3),
        "covering": dict(a0=8000.0, reps=50),
    }
    assert set(small) | {"vacancy", "crossing_H", "lemma_core", "contrast",
                         "lemma_horizon"} == set(EXPERIMENTS)
    for name, kw in small.items():
        recs = run_experiment(RunConfig(**kw), name, write=False)
        assert recs and all(r.experiment == name for r in recs)
    tail = run_experiment(RunConfig(a0_hat=1e16), "tail", write=False)[0]
    assert tail.estimate == pytest.approx(20 * 1e-4, rel=0.3)
    ind = run_experiment(RunConfig(c_p=10.0, c_q=10.0), "induction", write=False)[0]
    assert ind.estimate == 1.0


def test_resource_limit(tmp_path):
    cfg = RunConfig(u=0.0, reps=1, window_radius=3000.0, h=0.25, out_dir=str(tmp_path))
    with pytest.raises(ResourceLimitError) as e:
        run_experiment(cfg, "crossing_H")
    assert e.value.records and math.isnan(e.value.records[0].estimate)
    js = json.loads((tmp_path / "crossing_H.json").read_text())
    assert js["partial"] is True


def test_unknown_experiment():
    with pytest.raises(ConfigError):
        run_experiment(RunConfig(), "nope")


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    good = tmp_path / "g.cfg"
    good.write_text("a0_hat = 1e16\nk0 = 1\n")
    out = tmp_path / "out"
    assert cli.main(["tail", "--config", str(good), "--out", str(out)]) == 0
    assert (out / "tail.csv").exists()
    bad = tmp_path / "b.cfg"
    bad.write_text("nonsense = 3\n")
    assert cli.main(["tail", "--config", str(bad)]) == 2
    assert cli.main(["tail", "--config", str(tmp_path / "missing.cfg")]) == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["nope", "--config", str(good)])
    assert e.value.code == 2
    big = tmp_path / "big.cfg"
    big.write_text("u = 0\nreps = 1\nwindow_radius = 3000\nh = 0.25\n")
    assert cli.main(["crossing_H", "--config", str(big), "--out", str(out)]) == 3


def test_cli_seed_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("u = 0.2\nreps = 10000\nseed = 1\n")
    monkeypatch.setenv("CYLPERC_SEED", "5")
    assert cli.main(["vacancy", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path)]) == 0
    js = json.loads((tmp_path / "vacancy.json").read_text())
    assert js["config"]["seed"] == 5
