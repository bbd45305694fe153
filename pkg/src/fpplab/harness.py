"""Experiment configuration, dispatch, canonical output and the verify suite.

Configurations are TOML documents with flat top-level keys and one
``[distribution]`` table, for example::

    experiment = "mu"
    seed = 7
    reps = 50
    n_list = [25, 50, 100]

    [distribution]
    kind = "bernoulli"
    q = 0.2

Every output file written by :func:`run` except ``run_record.json`` is
canonical: it depends only on the configuration (including the master
seed), never on ``jobs`` or on timing.
"""

import dataclasses
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import fpp, geometry, percolation, renormalization
from .errors import ConfigError, InvalidParameterError
from .fpp import PassageDistribution
from .geometry import Window
from .rng import Lane, derive_seed

__all__ = ["ExperimentConfig", "RunRecord", "load_config", "run", "derive_seed", "KINDS",
           "ENV_PREFIX", "canonical_json"]

KINDS = ("gen", "mu", "eta", "pcstar", "pc", "renorm", "shape", "verify")
ENV_PREFIX = "FPPLAB_"


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    Fields not used by the selected experiment are ignored by it but still
    validated.  ``margin`` pads the ``gen`` window beyond half-width ``n``;
    the estimators size their own windows from the safe-margin rule of
    each measurement.
    """

    experiment: str = "verify"
    seed: int = 0
    reps: int = 20
    jobs: int = 1
    out: str = "fpplab-out"
    intensity: float = 1.0
    margin: float = geometry.SAFE_MARGIN
    distribution: dict = field(default_factory=lambda: {"kind": "exponential", "rate": 1.0})
    n: float = 100.0
    n_list: list = field(default_factory=lambda: [25.0, 50.0, 100.0])
    directions: int = 8
    L: float = 8.0
    L_list: list = field(default_factory=lambda: [8.0, 16.0])
    p_grid: list = field(default_factory=lambda: [0.5, 0.6, 0.7, 0.8])
    side: str = "voronoi"
    tol: float = 0.01
    iterations: int = 12
    eps: float = 0.5

    def __post_init__(self):
        bad = []

        def check(name, ok):
            if not ok:
                bad.append(name)

        check("experiment", self.experiment in KINDS)
        check("seed", isinstance(self.seed, int) and self.seed >= 0 and self.seed < 1 << 64)
        for name in ("reps", "jobs", "directions", "iterations"):
            v = getattr(self, name)
            check(name, isinstance(v, int) and not isinstance(v, bool) and v >= 1)
        for name in ("intensity", "n", "L", "tol", "eps"):
            v = getattr(self, name)
            check(name, isinstance(v, (int, float)) and not isinstance(v, bool)
                  and math.isfinite(v) and v > 0)
        check("margin", isinstance(self.margin, (int, float)) and self.margin >= 0)
        check("side", self.side in percolation.SIDES)
        for name in ("n_list", "L_list"):
            v = getattr(self, name)
            check(name, isinstance(v, list) and len(v) > 0
                  and all(isinstance(x, (int, float)) and x > 0 for x in v)
                  and all(b > a for a, b in zip(v, v[1:])))
        check("p_grid", isinstance(self.p_grid, list) and len(self.p_grid) > 0
              and all(isinstance(x, (int, float)) and 0 <= x <= 1 for x in self.p_grid))
        try:
            PassageDistribution.from_dict(self.distribution)
        except (InvalidParameterError, TypeError, ValueError):
            bad.append("distribution")
        check("directions", self.directions >= 4)
        if bad:
            raise ConfigError("invalid configuration values", sorted(set(bad)))
        self.intensity = float(self.intensity)
        self.n = float(self.n)
        self.L = float(self.L)
        self.n_list = [float(x) for x in self.n_list]
        self.L_list = [float(x) for x in self.L_list]
        self.p_grid = [float(x) for x in self.p_grid]

    @property
    def dist(self):
        return PassageDistribution.from_dict(self.distribution)

    def to_dict(self, include_runtime=False):
        d = dataclasses.asdict(self)
        if not include_runtime:
            d.pop("jobs")
            d.pop("out")
        return d

    @property
    def hash(self):
        """SHA-256 of the canonical JSON of every output-determining field."""
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()

    @classmethod
    def from_mapping(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(k for k in data if k not in names)
        if unknown:
            raise ConfigError("unknown configuration keys", unknown)
        return cls(**data)


def load_config(path=None, overrides=None, environ=None):
    """Build a config from a TOML file, environment variables and overrides.

    Precedence, lowest first: defaults, file, ``FPPLAB_*`` environment
    variables (``FPPLAB_SEED``, ``FPPLAB_REPS``, ``FPPLAB_OUT``,
    ``FPPLAB_JOBS``, ``FPPLAB_CONFIG`` for the path), explicit overrides.
    """
    environ = os.environ if environ is None else environ
    path = path or environ.get(ENV_PREFIX + "CONFIG")
    data = {}
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
    conv = {"SEED": ("seed", int), "REPS": ("reps", int), "OUT": ("out", str),
            "JOBS": ("jobs", int)}
    for suffix, (key, typ) in conv.items():
        raw = environ.get(ENV_PREFIX + suffix)
        if raw is not None:
            try:
                data[key] = typ(raw)
            except ValueError:
                raise ConfigError("invalid environment override", [ENV_PREFIX + suffix]) from None
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    return ExperimentConfig.from_mapping(data)


# -- canonical serialization ---------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return f"{x:.17g}" if math.isfinite(x) else "null"
    if isinstance(x, Fraction):
        return _fmt(float(x))
    if isinstance(x, str):
        return json.dumps(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def canonical_json(obj, indent=0):
    """JSON with sorted keys and 17-significant-digit floats (NaN as null)."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = dataclasses.asdict(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {canonical_json(v, indent + 1)}"
                 for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(canonical_json(v, indent + 1) for v in obj) + "]"
    return _fmt(obj)


def _write_csv(path, columns, rows):
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_csv_cell(r.get(c)) for c in columns) + "\n")
    _write_text(path, buf.getvalue())


def _csv_cell(x):
    s = _fmt(x)
    return "" if s == "null" else s.strip('"')


def _write_text(path, text):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


# -- run records ---------------------------------------------------------------

@dataclass
class RunRecord:
    """What one :func:`run` call produced.

    ``checks_passed`` is false iff a per-sample deterministic check failed;
    the CLI maps it to the exit status.
    """

    config_hash: str
    experiment: str
    master_seed: int
    outputs: dict
    summary: dict
    wall_time: float
    contaminated: int = 0
    checks_passed: bool = True
    replicate_seeds: list = field(default_factory=list)


def run(config):
    """Execute ``config`` and write its canonical outputs under ``config.out``."""
    t0 = time.perf_counter()
    fn = _EXPERIMENTS[config.experiment]
    summary, rows, columns, extra = fn(config)
    out = Path(config.out)
    kind = config.experiment
    paths = {}
    if columns:
        paths["rows"] = str(out / f"{kind}_rows.csv")
        _write_csv(paths["rows"], columns, rows)
    doc = {"config": config.to_dict(), "config_hash": config.hash, "summary": summary}
    paths["summary"] = str(out / f"{kind}_summary.json")
    _write_text(paths["summary"], canonical_json(doc) + "\n")
    rec = RunRecord(config.hash, kind, config.seed, paths, summary,
                    time.perf_counter() - t0, int(extra.get("contaminated", 0)),
                    bool(extra.get("checks_passed", True)), extra.get("seeds", []))
    paths["record"] = str(out / "run_record.json")
    _write_text(paths["record"], canonical_json(dataclasses.asdict(rec)) + "\n")
    return rec


def _replicate_seeds(config, reps, streams=(0,)):
    return [{"replicate": r, "stream": s,
             "point_seed": derive_seed(config.seed, Lane.POINTS, r, s),
             "weight_seed": derive_seed(config.seed, Lane.WEIGHTS, r, s),
             "percolation_seed": derive_seed(config.seed, Lane.PERCOLATION, r, s)}
            for s in streams for r in range(reps)]


def _exp_gen(c):
    win = Window.square((0.0, 0.0), c.n + c.margin)
    pts = geometry.sample_poisson(c.intensity, win, derive_seed(c.seed, Lane.POINTS, 0))
    tri = geometry.delaunay(pts)
    out = Path(c.out)
    out.mkdir(parents=True, exist_ok=True)
    geometry.write_points_csv(pts, out / "gen_points.csv")
    geometry.write_edges_csv(tri, out / "gen_edges.csv")
    summary = {"points": len(pts), "edges": tri.n_edges, "triangles": tri.n_triangles,
               "euler": tri.euler_characteristic(), "window": list(win.as_tuple())}
    return summary, [], None, {"checks_passed": tri.euler_characteristic() == 2}


def _exp_mu(c):
    est = fpp.estimate_mu(c.dist, c.n_list, c.reps, c.intensity, c.seed, c.jobs)
    rows = sorted(est.rows, key=lambda r: (r["n"], r["replicate"]))
    summary = {"estimate": est.estimate, "half_width": est.half_width,
               "largest_n_mean": est.largest_n_mean, "n_list": est.n_list,
               "mean": est.mean, "var": est.var, "count": est.count, "q05": est.q05,
               "reps": est.reps, "contaminated": est.contaminated,
               "moment_conditions": est.moment_conditions}
    cols = ["n", "replicate", "point_seed", "weight_seed", "T", "contaminated"]
    return summary, rows, cols, {"contaminated": est.contaminated}


def _exp_eta(c):
    crit = percolation.scene_critical_values(c.side, c.L, c.reps, c.seed, 0, c.intensity, c.jobs)
    rows, res = [], []
    for p in c.p_grid:
        e = percolation.estimate_eta(p, c.L, c.reps, c.seed, c.side, critical_values=crit)
        rows.append({"L": c.L, "p": p, "reps": e.reps, "crossings": e.crossings})
        res.append(dataclasses.asdict(e))
    freqs = [r["frequency"] for r in res]
    mono = all(b >= a for a, b in zip(freqs, freqs[1:])) if c.p_grid == sorted(c.p_grid) else True
    summary = {"side": c.side, "proxy": percolation.PROXY, "estimates": res}
    return summary, rows, ["L", "p", "reps", "crossings"], {"checks_passed": mono}


def _exp_threshold(c, side):
    est = percolation.estimate_threshold(c.L_list, c.reps, c.tol, c.seed, side, c.intensity,
                                         c.jobs, c.iterations)
    summary = dataclasses.asdict(est)
    summary.pop("probes")
    shrink = all(b["hi"] - b["lo"] <= a["hi"] - a["lo"]
                 for t in est.traces for a, b in zip(t["target_0.5"], t["target_0.5"][1:]))
    return summary, est.probes, ["L", "p", "reps", "crossings"], {"checks_passed": shrink}


def _renorm_replicate(task):
    from .verify import passage_bound_sample
    return passage_bound_sample(*task)


def _exp_renorm(c):
    from ._parallel import pmap
    dist = c.dist
    seeds = _replicate_seeds(c, c.reps)
    tasks = [(dist, c.L, c.n, c.intensity, s["point_seed"], s["weight_seed"]) for s in seeds]
    res = pmap(_renorm_replicate, tasks, c.jobs)
    rows = [{"replicate": s["replicate"], "L": c.L, "extent": int(c.n // c.L), **r}
            for s, r in zip(seeds, res)]
    curve = renormalization.good_box_probability_curve(dist, c.L_list, c.reps, c.seed,
                                                       c.intensity, c.jobs)
    ok = all(r["passed"] for r in rows)
    summary = {"passage_bound_all_passed": ok, "failures": sum(not r["passed"] for r in rows),
               "curve": [dataclasses.asdict(p) for p in curve],
               "adjacency": dict(renormalization.ADJACENCY)}
    cols = ["replicate", "L", "extent", "M", "T", "passed", "contaminated", "good_fraction"]
    return summary, rows, cols, {"checks_passed": ok,
                                 "contaminated": sum(r["contaminated"] for r in rows)}


def _exp_shape(c):
    rep = fpp.shape_anisotropy(c.dist, c.n, c.directions, c.reps, c.seed, c.intensity, c.jobs)
    summary = {"n": rep.n, "directions": rep.directions.tolist(), "mean": rep.mean.tolist(),
               "sd": rep.sd.tolist(), "count": rep.count.tolist(), "cv": rep.cv,
               "antipodal": rep.antipodal, "contaminated": rep.contaminated}
    return summary, rep.rows, ["replicate", "direction", "T", "contaminated"], \
        {"contaminated": rep.contaminated}


def _exp_verify(c):
    from .verify import run_suite
    results = run_suite(c.seed, c.reps, c.jobs)
    ok = all(r["passed"] for r in results)
    rows = [{"check": r["check"], "samples": r["samples"], "failures": r["failures"],
             "passed": r["passed"]} for r in results]
    return {"all_passed": ok, "checks": results}, rows, \
        ["check", "samples", "failures", "passed"], {"checks_passed": ok}


_EXPERIMENTS = {
    "gen": _exp_gen,
    "mu": _exp_mu,
    "eta": _exp_eta,
    "pcstar": lambda c: _exp_threshold(c, "voronoi"),
    "pc": lambda c: _exp_threshold(c, "delaunay"),
    "renorm": _exp_renorm,
    "shape": _exp_shape,
    "verify": _exp_verify,
}
