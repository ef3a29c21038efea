"""Run configuration, seeded replica fan-out, experiment recipes and output files."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
MASK64 = (1 << 64) - 1
CSV_COLUMNS = ("experiment", "param_json", "estimate", "stderr", "replicas", "seed",
               "wall_time", "schema_version")
EXPERIMENTS = ("vacancy", "cov", "crossing_H", "crossing_plane", "circuit", "pn", "qn",
               "recursion", "induction", "tail", "lemma_tube", "lemma_core", "lemma_horizon",
               "lemma_blocking", "covering", "contrast")
VACANCY_CHUNK = 10_000


class ConfigError(ValueError):
    pass


class ResourceLimitError(RuntimeError):
    """Raised when an experiment hits a memory or grid limit; carries partial records."""

    def __init__(self, msg: str, records=()):
        super().__init__(msg)
        self.records = list(records)


def splitmix64(master: int, index: int) -> int:
    """Seed of replica ``index``: the splitmix64 finaliser applied to
    ``master + (index + 1) * 0x9E3779B97F4A7C15`` (mod 2**64)."""
    z = (int(master) + (int(index) + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def map_replicas(fn, reps: int, threads: int = 1) -> list:
    """``[fn(0), ..., fn(reps-1)]``, evaluated on ``threads`` workers; order is preserved."""
    if threads <= 1 or reps <= 1:
        return [fn(k) for k in range(reps)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(reps)))


# ---------------------------------------------------------------------------
# configuration


def _floats(v) -> tuple:
    return tuple(float(x) for x in v)


def _points(v) -> tuple:
    return tuple((float(x), float(y)) for x, y in v)


@dataclass
class RunConfig:
    u: float = 0.05
    a0: float = 1e5
    n: int = 0
    h: float = 0.5
    reps: int = 100
    seed: int = 0
    window_radius: float = 100.0
    pair_family: str = "edge-hugging"
    x_points: tuple = ()
    out_dir: str = "out"
    threads: int = 1
    # experiment-specific knobs
    r_in: float = 0.0
    distances: tuple = (4.0, 8.0, 16.0, 32.0, 64.0)
    mu_samples: int = 2_000_000
    n_max: int = 20
    c_p: float = 1.0
    c_q: float = 1.0
    a0_hat: float = 0.0
    k0: int = 1
    padding: float = 20.0
    directions: int = 720
    offsets: int = 400
    surface: str = "H"
    corpus: str = ""

    _parsers = {"x_points": _points, "distances": _floats}

    def validate(self) -> "RunConfig":
        for name in ("a0", "h", "window_radius", "mu_samples", "padding", "c_p", "c_q"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("reps", "threads", "n_max", "k0", "directions", "offsets"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        for name in ("u", "r_in", "a0_hat", "n"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0 <= self.seed <= MASK64:
            raise ConfigError("seed must fit in 64 bits")
        if self.surface not in ("H", "plane"):
            raise ConfigError("surface must be H or plane")
        if any(d <= 0 for d in self.distances):
            raise ConfigError("distances must be positive")
        return self

    @classmethod
    def from_mapping(cls, kv: dict) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls) if not f.name.startswith("_")}
        vals = {}
        for key, raw in kv.items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r}")
            vals[key] = _coerce(key, raw, known[key], cls._parsers)
        return cls(**vals).validate()

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        kv = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value")
            k, v = (p.strip() for p in line.split("=", 1))
            if k in kv:
                raise ConfigError(f"line {lineno}: duplicate key {k!r}")
            kv[k] = v
        return cls.from_mapping(kv)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        return cls.parse(text)

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
             if not f.name.startswith("_")}
        d["x_points"] = [list(p) for p in self.x_points]
        d["distances"] = list(self.distances)
        return d


def _coerce(key, raw, fld, parsers):
    if not isinstance(raw, str):
        return parsers[key](raw) if key in parsers else raw
    try:
        if key == "x_points":
            pts = []
            for chunk in raw.split(";"):
                if chunk.strip():
                    x, y = chunk.split(",")
                    pts.append((float(x), float(y)))
            return tuple(pts)
        if key == "distances":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if fld.type in ("int", int) or isinstance(fld.default, int) and not isinstance(fld.default, bool):
            v = float(raw)
            if v != int(v):
                raise ValueError(raw)
            return int(v) if abs(v) < 2**53 else int(raw)
        if isinstance(fld.default, float):
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {raw!r}") from e


# ---------------------------------------------------------------------------
# records


@dataclass
class ResultRecord:
    experiment: str
    params: dict
    estimate: float
    stderr: float
    replicas: int
    seed: int
    wall_time: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def row(self) -> dict:
        return {
            "experiment": self.experiment,
            "param_json": json.dumps(self.params, sort_keys=True),
            "estimate": repr(float(self.estimate)),
            "stderr": repr(float(self.stderr)),
            "replicas": self.replicas,
            "seed": self.seed,
            "wall_time": f"{self.wall_time:.3f}",
            "schema_version": self.schema_version,
        }


def _binom(hits: int, reps: int) -> tuple[float, float]:
    m = hits / reps
    return m, math.sqrt(m * (1 - m) / reps)


def build_id() -> str:
    from . import __version__

    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"v{__version__}-{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def write_outputs(records, config: RunConfig, out_dir, name: str, partial: bool = False) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    with csv_path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in records:
            w.writerow(r.row())
    js = {
        "schema_version": SCHEMA_VERSION,
        "experiment": name,
        "config": config.as_dict(),
        "records": [dataclasses.asdict(r) for r in records],
        "partial": partial,
        "build": build_id(),
    }
    json_path = out / f"{name}.json"
    json_path.write_text(json.dumps(js, indent=1, sort_keys=True, default=float))
    return csv_path, json_path


# ---------------------------------------------------------------------------
# experiments


def _x0(cfg: RunConfig):
    return cfg.x_points[0] if cfg.x_points else (0.0, 0.0)


def _r_in(cfg: RunConfig) -> float:
    return cfg.r_in if cfg.r_in > 0 else cfg.window_radius / 10.0


def exp_vacancy(cfg: RunConfig) -> list[ResultRecord]:
    from .lines import _vacancy_batch

    p = np.array([[*_x0(cfg), 0.0]])
    chunks = [min(VACANCY_CHUNK, cfg.reps - k) for k in range(0, cfg.reps, VACANCY_CHUNK)]

    def chunk(k):
        rng = np.random.default_rng(splitmix64(cfg.seed, k))
        return int(_vacancy_batch(rng, cfg.u, p, chunks[k]).sum())

    hits = sum(map_replicas(chunk, len(chunks), cfg.threads))
    m, se = _binom(hits, cfg.reps)
    return [ResultRecord("vacancy", {"u": cfg.u, "oracle": math.exp(-cfg.u * math.pi)},
                         m, se, cfg.reps, cfg.seed)]


def exp_cov(cfg: RunConfig) -> list[ResultRecord]:
    from .lines import covariance_estimate

    ds = list(cfg.distances)

    def one(k):
        return covariance_estimate((0.0, 0.0, 0.0), (ds[k], 0.0, 0.0), cfg.u, cfg.reps,
                                   splitmix64(cfg.seed, k), cfg.mu_samples)

    ests = map_replicas(one, len(ds), cfg.threads)
    recs = []
    for d, e in zip(ds, ests):
        recs.append(ResultRecord("cov", {"u": cfg.u, "distance": d, "kind": "mc"},
                                 e.mc, e.mc_stderr, e.reps, cfg.seed))
        recs.append(ResultRecord("cov", {"u": cfg.u, "distance": d, "kind": "semi"},
                                 e.semi_analytic, e.semi_stderr, e.reps, cfg.seed))
    if len(ds) >= 2:
        y = np.log([e.semi_analytic for e in ests])
        slope = float(np.polyfit(np.log(ds), y, 1)[0])
        recs.append(ResultRecord("cov", {"u": cfg.u, "kind": "slope"}, slope, 0.0, cfg.reps, cfg.seed))
    return recs


def _crossing_sample(cfg: RunConfig, k: int, radius: float, surface: str):
    from .lines import sample_poisson
    from .surface import required_window

    w = required_window(_x0(cfg), radius, surface)
    return sample_poisson(cfg.u, w, splitmix64(cfg.seed, k))


def _dual_pair(cfg: RunConfig, k: int, surface: str):
    from .surface import crossing_and_circuit

    s = _crossing_sample(cfg, k, cfg.window_radius, surface)
    return crossing_and_circuit(s, _x0(cfg), _r_in(cfg), cfg.window_radius, cfg.h, surface)


def _crossing(cfg: RunConfig, surface: str, name: str) -> list[ResultRecord]:
    res = map_replicas(lambda k: _dual_pair(cfg, k, surface), cfg.reps, cfg.threads)
    hits = sum(c for c, _ in res)
    viol = sum(c == o for c, o in res)
    m, se = _binom(hits, cfg.reps)
    params = {"u": cfg.u, "surface": surface, "r_in": _r_in(cfg), "r_out": cfg.window_radius,
              "h": cfg.h, "duality_violations": int(viol)}
    return [ResultRecord(name, params, m, se, cfg.reps, cfg.seed)]


def exp_crossing_H(cfg):
    return _crossing(cfg, "H", "crossing_H")


def exp_crossing_plane(cfg):
    return _crossing(cfg, "plane", "crossing_plane")


def exp_circuit(cfg: RunConfig) -> list[ResultRecord]:
    res = map_replicas(lambda k: _dual_pair(cfg, k, cfg.surface), cfg.reps, cfg.threads)
    hits = sum(o for _, o in res)
    viol = sum(c == o for c, o in res)
    m, se = _binom(hits, cfg.reps)
    params = {"u": cfg.u, "surface": cfg.surface, "r_in": _r_in(cfg), "r_out": cfg.window_radius,
              "h": cfg.h, "duality_violations": int(viol)}
    return [ResultRecord("circuit", params, m, se, cfg.reps, cfg.seed)]


def _seq(cfg: RunConfig):
    from .renorm import ScaleSequence

    return ScaleSequence(cfg.a0)


def _pn_params(cfg, e, extra=None):
    p = {"u": cfg.u, "a0": cfg.a0, "n": cfg.n, "h": cfg.h, "hits": e.hits,
         "upper95": e.upper(0.95), "x_points": "custom" if cfg.x_points else "default"}
    p.update(extra or {})
    return p


def exp_pn(cfg: RunConfig) -> list[ResultRecord]:
    from .renorm import estimate_pn

    e = estimate_pn(_seq(cfg), cfg.n, cfg.u, cfg.x_points or None, cfg.reps, cfg.seed, cfg.h,
                    threads=cfg.threads)
    return [ResultRecord("pn", _pn_params(cfg, e), e.mean, e.stderr, e.replicas, cfg.seed)]


def exp_qn(cfg: RunConfig) -> list[ResultRecord]:
    from .renorm import estimate_qn

    e = estimate_qn(_seq(cfg), cfg.n, cfg.u, cfg.pair_family, cfg.reps, cfg.seed,
                    cfg.x_points or None, cfg.h, threads=cfg.threads)
    return [ResultRecord("qn", _pn_params(cfg, e, {"pair_family": cfg.pair_family}),
                         e.mean, e.stderr, e.replicas, cfg.seed)]


def exp_recursion(cfg: RunConfig) -> list[ResultRecord]:
    from .renorm import iterate_recursion

    recs = []
    for n, p, q, pt, qt in iterate_recursion(_seq(cfg), cfg.n_max, cfg.c_p, cfg.c_q):
        ok = bool(p <= pt and q <= qt)
        for kind, v, t in (("p", p, pt), ("q", q, qt)):
            params = {"n": n, "kind": kind, "threshold": str(t), "value": str(v),
                      "below": ok, "c_p": cfg.c_p, "c_q": cfg.c_q}
            recs.append(ResultRecord("recursion", params, float(v), 0.0, 1, cfg.seed))
    return recs


def _a0_hat(cfg: RunConfig):
    from .renorm import A0_FULL, a0_hat

    if cfg.a0_hat > 0:
        v = cfg.a0_hat
        return int(v) if float(v).is_integer() else v
    return max(A0_FULL, a0_hat(cfg.c_p, cfg.c_q))


def exp_induction(cfg: RunConfig) -> list[ResultRecord]:
    from .renorm import check_induction_step, induction_exponents

    (e1, b1), (e2, b2) = induction_exponents()
    ok = check_induction_step(_a0_hat(cfg), cfg.c_p, cfg.c_q)
    params = {"c_p": cfg.c_p, "c_q": cfg.c_q, "p_exponents": [str(e1), str(b1)],
              "q_exponents": [str(e2), str(b2)], "exponents_ok": bool(e1 < b1 and e2 < b2)}
    return [ResultRecord("induction", params, float(ok), 0.0, 1, cfg.seed)]


def exp_tail(cfg: RunConfig) -> list[ResultRecord]:
    from .renorm import smallest_k0, tail_bound

    a = cfg.a0_hat if cfg.a0_hat > 0 else 1e16
    v = tail_bound(a, cfg.k0)
    params = {"a0_hat": a, "k0": cfg.k0, "smallest_k0_third": smallest_k0(a)}
    return [ResultRecord("tail", params, float(v), 0.0, 1, cfg.seed)]


def exp_lemma_tube(cfg: RunConfig) -> list[ResultRecord]:
    from .lemmas import random_tube_instance, tube_from_two_cylinders, verify_tube

    def one(k):
        rng = np.random.default_rng(splitmix64(cfg.seed, k))
        C1, C2, eta = random_tube_instance(rng, cfg.a0)
        res = tube_from_two_cylinders(C1, C2, eta, cfg.a0)
        return verify_tube(res, cfg.a0), res.separation, res.max_distance

    out = map_replicas(one, cfg.reps, cfg.threads)
    fails = sum(not ok for ok, _, _ in out)
    params = {"a0": cfg.a0, "failures": fails,
              "min_separation": min(s for _, s, _ in out),
              "max_distance": max(d for _, _, d in out)}
    m, se = _binom(fails, cfg.reps)
    return [ResultRecord("lemma_tube", params, m, se, cfg.reps, cfg.seed)]


def exp_lemma_core(cfg: RunConfig) -> list[ResultRecord]:
    from .lemmas import core_segment, random_intersecting_pair

    def one(k):
        rng = np.random.default_rng(splitmix64(cfg.seed, k))
        cs = core_segment(*random_intersecting_pair(rng))
        return cs.hausdorff_segments(), cs.hausdorff_endpoints()

    out = np.array(map_replicas(one, cfg.reps, cfg.threads))
    hs, he = out[:, 0].max(), out[:, 1].max()
    fails = int(np.sum((out[:, 0] > 2.0) | (out[:, 1] > 2 * math.sqrt(2) + 1e-6)))
    recs = [ResultRecord("lemma_core", {"kind": "segments", "bound": 2.0, "failures": fails},
                         float(hs), 0.0, cfg.reps, cfg.seed),
            ResultRecord("lemma_core", {"kind": "endpoints", "bound": 2 * math.sqrt(2),
                                        "failures": fails}, float(he), 0.0, cfg.reps, cfg.seed)]
    return recs


def exp_lemma_horizon(cfg: RunConfig) -> list[ResultRecord]:
    from .lemmas import horizon_scan

    r = horizon_scan(cfg.padding, cfg.directions, cfg.offsets)
    params = {"padding": cfg.padding, "directions": cfg.directions, "offsets": cfg.offsets,
              "theta": r.theta, "start": list(r.start), "unbounded": r.unbounded}
    return [ResultRecord("lemma_horizon", params, r.max_length, 0.0, 1, cfg.seed)]


def exp_lemma_blocking(cfg: RunConfig) -> list[ResultRecord]:
    from .geometry import Cylinder
    from .lemmas import blocking_check, slab_check
    from .renorm import adversarial_pairs

    pairs = adversarial_pairs(_seq(cfg), cfg.n, cfg.reps, cfg.seed)

    def one(k):
        fam, x, l1, l2 = pairs[k]
        C1, C2 = Cylinder(l1), Cylinder(l2)
        return blocking_check(C1, C2, x, cfg.a0, cfg.h), max(slab_check(C1, x, cfg.a0, cfg.h),
                                                               slab_check(C2, x, cfg.a0, cfg.h))

    out = map_replicas(one, cfg.reps, cfg.threads)
    blocked = sum(b for b, _ in out)
    params = {"a0": cfg.a0, "h": cfg.h, "not_blocked": cfg.reps - blocked,
              "max_slab_displacement": max(s for _, s in out)}
    return [ResultRecord("lemma_blocking", params, blocked / cfg.reps, 0.0, cfg.reps, cfg.seed)]


def exp_covering(cfg: RunConfig) -> list[ResultRecord]:
    from .renorm import build_covering, random_sphere_points, scale_float, uncovered

    seq = _seq(cfg)
    n = max(cfg.n, 1)
    ratio = scale_float(seq, n - 1) / scale_float(seq, n)
    recs = []
    for i in (1, 2, 3, 4):
        cov = build_covering(seq, n, i)
        rng = np.random.default_rng(splitmix64(cfg.seed, i))
        bad = int(uncovered(cov, random_sphere_points(cov, cfg.reps, rng)).sum())
        params = {"a0": cfg.a0, "n": n, "i": i, "size": len(cov), "uncovered": bad}
        recs.append(ResultRecord("covering", params, len(cov) * ratio, 0.0, cfg.reps, cfg.seed))
    return recs


def contrast_experiment(cfg: RunConfig) -> list[ResultRecord]:
    """Paired vacant crossings on the plane and on H at radii r, 2r, 4r."""
    from .lines import DiskSlab, sample_poisson
    from .surface import nested_crossings, required_window

    if cfg.window_radius > 500:
        raise ConfigError("contrast needs window_radius <= 500")
    r = cfg.window_radius
    radii = [r, 2 * r, 4 * r]
    x0 = _x0(cfg)
    r_in = _r_in(cfg)
    # one sample serves both surfaces, so the window spans z=0 and the H slab
    hw = required_window(x0, radii[-1], "H")
    w = DiskSlab(hw.center2, hw.s, (0.0, hw.height[1]))

    def one(k):
        s = sample_poisson(cfg.u, w, splitmix64(cfg.seed, k))
        ch, oh = nested_crossings(s, x0, r_in, radii, cfg.h, "H", check_duality=True)
        cp, op = nested_crossings(s, x0, r_in, radii, cfg.h, "plane", check_duality=True)
        viol = sum(a == b for a, b in zip(ch + cp, oh + op))
        return np.array(ch, dtype=float), np.array(cp, dtype=float), viol

    out = map_replicas(one, cfg.reps, cfg.threads)
    H = np.array([o[0] for o in out])
    P = np.array([o[1] for o in out])
    viol = int(sum(o[2] for o in out))
    recs = []
    n = cfg.reps
    for j, rad in enumerate(radii):
        base = {"u": cfg.u, "radius": rad, "r_in": r_in, "h": cfg.h, "duality_violations": viol}
        for name, col in (("H", H[:, j]), ("plane", P[:, j])):
            m, se = _binom(int(col.sum()), n)
            recs.append(ResultRecord("contrast", {**base, "surface": name}, m, se, n, cfg.seed))
        diff = H[:, j] - P[:, j]
        se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        recs.append(ResultRecord("contrast", {**base, "surface": "H-plane"}, float(diff.mean()),
                                 se, n, cfg.seed))
    return recs


_DISPATCH = {
    "vacancy": exp_vacancy, "cov": exp_cov, "crossing_H": exp_crossing_H,
    "crossing_plane": exp_crossing_plane, "circuit": exp_circuit, "pn": exp_pn, "qn": exp_qn,
    "recursion": exp_recursion, "induction": exp_induction, "tail": exp_tail,
    "lemma_tube": exp_lemma_tube, "lemma_core": exp_lemma_core,
    "lemma_horizon": exp_lemma_horizon, "lemma_blocking": exp_lemma_blocking,
    "covering": exp_covering, "contrast": contrast_experiment,
}


def run_experiment(config: RunConfig, name: str, write: bool = True) -> list[ResultRecord]:
    """Run one named experiment; records carry the total wall time. Outputs go to
    ``config.out_dir`` as ``<name>.csv`` and ``<name>.json`` unless ``write`` is false."""
    from .surface import GridTooLargeError

    if name not in _DISPATCH:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    t0 = time.perf_counter()
    try:
        recs = _DISPATCH[name](config)
    except (GridTooLargeError, MemoryError) as e:
        rec = ResultRecord(name, {"partial": True, "error": str(e)}, math.nan, math.nan, 0,
                           config.seed, time.perf_counter() - t0)
        if write:
            write_outputs([rec], config, config.out_dir, name, partial=True)
        raise ResourceLimitError(str(e), [rec]) from e
    except (ValueError, OverflowError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e
    dt = time.perf_counter() - t0
    for r in recs:
        r.wall_time = dt
    if write:
        write_outputs(recs, config, config.out_dir, name)
    return recs


def seed_from_env(default: int) -> int:
    v = os.environ.get("CYLPERC_SEED")
    if v is None or v == "":
        return default
    try:
        s = int(v, 0)
    except ValueError as e:
        raise ConfigError(f"CYLPERC_SEED is not an integer: {v!r}") from e
    if not 0 <= s <= MASK64:
        raise ConfigError("CYLPERC_SEED must fit in 64 bits")
    return s
