"""Experiment runner: parameter sweeps emitted as plot-ready CSV tables."""
from __future__ import annotations

import io
import math
import os
import time
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Optional

import numpy as np

from . import __version__
from .coeffs import ProblemParams
from .errors import InvalidParam
from .lambda_opt import lambda_star_bounds, lambda_star_search
from .simkit import SimConfig, default_mean, monte_carlo
from .theory import (IIDTeachers, SingleTeacher, TeacherModel, expected_loss, noreg_loss,
                     trivial_loss)

KINDS = ("lambda_T_sweep", "optimal_lambda_vs_T", "noreg_vs_optimal", "theory_vs_sim")
NOREG_LAMBDA = 1e-9
VOLATILE_META = ("wall_time",)


@dataclass
class ExperimentConfig:
    kind: str
    base: ProblemParams
    teacher: TeacherModel
    lambda_grid: list = field(default_factory=list)
    T_grid: list = field(default_factory=list)
    alpha_grid: list = field(default_factory=list)
    vz_grid: list = field(default_factory=list)
    sim: dict = field(default_factory=dict)
    output_path: Optional[str] = None
    epsilon: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParam(f"unknown experiment kind {self.kind!r}")
        for name in ("lambda_grid", "T_grid", "alpha_grid", "vz_grid"):
            g = getattr(self, name)
            if name == "vz_grid":
                ok = all(v >= 0 for v in g)
            elif name == "lambda_grid":
                ok = all(v >= 0 for v in g)
            else:
                ok = all(v > 0 for v in g)
            if not ok:
                raise InvalidParam(f"{name} has out-of-range values: {g}")
        if not self.T_grid:
            raise InvalidParam("T grid must be nonempty")
        if self.kind in ("lambda_T_sweep", "theory_vs_sim") and not self.lambda_grid:
            raise InvalidParam(f"{self.kind} requires a lambda grid")


@dataclass
class ResultTable:
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)


def _meta(seed, t0):
    return {"seed": seed, "version": f"v{__version__}", "wall_time": time.perf_counter() - t0}


def _sim_config(params: ProblemParams, teacher: TeacherModel, sim: dict) -> SimConfig:
    d = int(sim.get("d", params.d or 400))
    n = int(round(params.alpha * d))
    p = replace(params, n=n, d=d, alpha=n / d)
    if isinstance(teacher, SingleTeacher) and teacher.dim != d:
        w = np.asarray(teacher.w_star, dtype=float)
        teacher = SingleTeacher(default_mean(float(w @ w), d))
    return SimConfig(p, teacher, feature_dist=sim.get("feature_dist", "gaussian"),
                     replicates=int(sim.get("replicates", 100)),
                     master_seed=int(sim.get("seed", 0)))


def _with_sim(cfg: ExperimentConfig) -> bool:
    return bool(cfg.sim) and int(cfg.sim.get("replicates", 0)) > 0


def run_lambda_T_sweep(cfg: ExperimentConfig) -> ResultTable:
    """Loss over a (T, lambda) grid, raw and normalized by the zero predictor."""
    t0 = time.perf_counter()
    sim = _with_sim(cfg)
    cols = ["T", "lambda", "theory_loss", "normalized_loss"]
    if sim:
        cols += ["sim_mean", "sim_se"]
    trivial = trivial_loss(cfg.teacher)
    rows = []
    for lam, T in product(cfg.lambda_grid, cfg.T_grid):
        p = replace(cfg.base, lam=float(lam), T=int(T))
        th = expected_loss(p, cfg.teacher)
        row = [int(T), float(lam), th, th / trivial]
        if sim:
            rep = monte_carlo(_sim_config(p, cfg.teacher, cfg.sim),
                              workers=int(cfg.sim.get("workers", 1)))
            row += [rep.mean_gen_loss, math.nan if rep.std_error is None else rep.std_error]
        rows.append(row)
    return ResultTable(cols, rows, _meta(cfg.sim.get("seed"), t0))


def _iid_stats(teacher: TeacherModel) -> IIDTeachers:
    if isinstance(teacher, IIDTeachers):
        return teacher
    if isinstance(teacher, SingleTeacher):
        w = np.asarray(teacher.w_star, dtype=float)
        return IIDTeachers(float(w @ w), 0.0)
    raise InvalidParam("optimal-lambda experiments need a single or i.i.d. teacher model")


STATUS_CODE = {"interior": 0, "zero-limit": -1, "unbounded": 1}


def run_optimal_lambda_vs_T(cfg: ExperimentConfig) -> ResultTable:
    """Searched optimum per horizon next to the two-sided scaling bound.

    ``status`` is 0 for an interior optimum, -1 for the zero limit (lambda_star
    reported as 0) and 1 for an unbounded optimum (lambda_star reported as inf).
    """
    t0 = time.perf_counter()
    stats = _iid_stats(cfg.teacher)
    b = cfg.base
    cols = ["T", "lambda_star", "loss_at_lambda_star", "bounds_lower", "bounds_center",
            "bounds_upper", "in_bounds", "status"]
    rows = []
    for T in cfg.T_grid:
        T = int(T)
        res = lambda_star_search(b, stats, T)
        try:
            bd = lambda_star_bounds(b.v_x, b.alpha, b.v_z, stats.trace_sigma,
                                    stats.w_star_norm2, T, cfg.epsilon)
            lo, ce, hi = (bd.lower, bd.center, bd.upper) if bd.valid else (math.nan,) * 3
        except InvalidParam:
            lo = ce = hi = math.nan
        inside = res.finite and not math.isnan(ce) and lo < res.value < hi
        rows.append([T, res.value, res.loss_at_value, lo, ce, hi, int(inside),
                     STATUS_CODE[res.status]])
    return ResultTable(cols, rows, _meta(None, t0))


def run_noreg_vs_optimal(cfg: ExperimentConfig) -> ResultTable:
    """Unregularized loss against the loss at the searched optimum."""
    t0 = time.perf_counter()
    stats = _iid_stats(cfg.teacher)
    cols = ["T", "v_z", "loss_noreg", "lambda_star", "loss_at_lambda_star", "ratio"]
    rows = []
    vzs = cfg.vz_grid or [cfg.base.v_z]
    for vz, T in product(vzs, cfg.T_grid):
        T = int(T)
        p = replace(cfg.base, v_z=float(vz), T=T)
        if isinstance(cfg.teacher, SingleTeacher) and p.alpha < 1:
            w = np.asarray(cfg.teacher.w_star, dtype=float)
            noreg = noreg_loss(np.tile(w, (T, 1)), None, p.alpha, p.v_z, T, p.v_x)
        else:
            noreg = expected_loss(replace(p, lam=NOREG_LAMBDA), cfg.teacher)
        if T > 1:
            res = lambda_star_search(p, stats, T)
            lam_star, best = res.value, res.loss_at_value
        else:
            lam_star, best = math.nan, math.nan
        rows.append([T, float(vz), noreg, lam_star, best, best / noreg])
    return ResultTable(cols, rows, _meta(None, t0))


def run_theory_vs_sim(cfg: ExperimentConfig) -> ResultTable:
    """Closed form against Monte Carlo over (alpha, v_z, lambda, T) cells.

    ``z_score = (sim_mean - theory) / sim_se``.
    """
    t0 = time.perf_counter()
    cols = ["T", "lambda", "alpha", "v_z", "d", "theory", "sim_mean", "sim_se", "z_score"]
    alphas = cfg.alpha_grid or [cfg.base.alpha]
    vzs = cfg.vz_grid or [cfg.base.v_z]
    workers = int(cfg.sim.get("workers", 1))
    rows = []
    for al, vz, lam, T in product(alphas, vzs, cfg.lambda_grid, cfg.T_grid):
        p = replace(cfg.base, alpha=float(al), v_z=float(vz), lam=float(lam), T=int(T),
                    n=None, d=None)
        sc = _sim_config(p, cfg.teacher, cfg.sim)
        th = expected_loss(replace(sc.params, n=None, d=None), cfg.teacher)
        rep = monte_carlo(sc, workers=workers)
        se = math.nan if rep.std_error is None else rep.std_error
        z = (rep.mean_gen_loss - th) / se if se > 0 else math.nan
        rows.append([int(T), float(lam), sc.params.alpha, float(vz), sc.params.d, th,
                     rep.mean_gen_loss, se, z])
    return ResultTable(cols, rows, _meta(int(cfg.sim.get("seed", 0)), t0))


RUNNERS = {
    "lambda_T_sweep": run_lambda_T_sweep,
    "optimal_lambda_vs_T": run_optimal_lambda_vs_T,
    "noreg_vs_optimal": run_noreg_vs_optimal,
    "theory_vs_sim": run_theory_vs_sim,
}


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    return RUNNERS[cfg.kind](cfg)


# ---------------------------------------------------------------- CSV I/O

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def format_table(table: ResultTable, include_volatile: bool = False) -> str:
    buf = io.StringIO()
    for k, v in table.metadata.items():
        if k in VOLATILE_META and not include_volatile:
            continue
        buf.write(f"# {k} = {'' if v is None else v}\n")
    buf.write(",".join(table.columns) + "\n")
    for row in table.rows:
        if len(row) != len(table.columns):
            raise InvalidParam("row length differs from column count")
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    return buf.getvalue()


def write_table(table: ResultTable, path, include_volatile: bool = False) -> None:
    """Write comma-separated text with ``#`` metadata lines and ``\\n`` newlines.

    Wall time is left out unless ``include_volatile`` so equal runs give equal bytes.
    """
    text = format_table(table, include_volatile)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_table(path) -> ResultTable:
    meta, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                meta[k.strip()] = v.strip()
            elif line:
                lines.append(line)
    cols = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        rows.append([int(t) if t.lstrip("-").isdigit() else float(t) for t in line.split(",")])
    return ResultTable(cols, rows, meta)


# ---------------------------------------------------------------- config files

def parse_kv(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParam(f"line {lineno}: expected 'key = value', got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_kv(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read())


def _floats(s: str) -> list:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list:
    return [int(float(x)) for x in s.split(",") if x.strip()]


KNOWN_KEYS = {
    "kind", "output", "base.alpha", "base.vx", "base.vz", "base.lambda", "base.T",
    "base.n", "base.d", "teacher.kind", "teacher.w_star_norm2", "teacher.trace_sigma",
    "grids.lambda", "grids.T", "grids.alpha", "grids.vz", "sim.d", "sim.replicates",
    "sim.seed", "sim.feature_dist", "sim.workers", "opt.epsilon",
}


def teacher_from_kv(kv: dict, d: Optional[int] = None) -> TeacherModel:
    kind = kv.get("teacher.kind", "iid")
    norm2 = float(kv.get("teacher.w_star_norm2", 1.0))
    if kind == "single":
        return SingleTeacher(default_mean(norm2, d or int(kv.get("sim.d", kv.get("base.d", 400)))))
    if kind == "iid":
        return IIDTeachers(norm2, float(kv.get("teacher.trace_sigma", 0.0)))
    raise InvalidParam(f"unknown teacher.kind {kind!r}")


def params_from_kv(kv: dict) -> ProblemParams:
    n = kv.get("base.n")
    d = kv.get("base.d")
    kw = dict(v_x=float(kv.get("base.vx", 1.0)), v_z=float(kv.get("base.vz", 0.0)),
              lam=float(kv.get("base.lambda", 0.0)), T=int(float(kv.get("base.T", 1))))
    if n is not None and d is not None:
        n, d = int(n), int(d)
        return ProblemParams(alpha=float(kv.get("base.alpha", n / d)), n=n, d=d, **kw)
    return ProblemParams(alpha=float(kv.get("base.alpha", 0.5)), **kw)


def config_from_kv(kv: dict) -> ExperimentConfig:
    unknown = set(kv) - KNOWN_KEYS
    if unknown:
        raise InvalidParam(f"unknown config keys: {sorted(unknown)}")
    base = params_from_kv(kv)
    sim = {}
    for k in ("d", "replicates", "seed", "workers"):
        if f"sim.{k}" in kv:
            sim[k] = int(float(kv[f"sim.{k}"]))
    if "sim.feature_dist" in kv:
        sim["feature_dist"] = kv["sim.feature_dist"]
    return ExperimentConfig(
        kind=kv.get("kind", "lambda_T_sweep"),
        base=base,
        teacher=teacher_from_kv(kv, sim.get("d", base.d)),
        lambda_grid=_floats(kv.get("grids.lambda", "")),
        T_grid=_ints(kv.get("grids.T", str(base.T))),
        alpha_grid=_floats(kv.get("grids.alpha", "")),
        vz_grid=_floats(kv.get("grids.vz", "")),
        sim=sim,
        output_path=kv.get("output"),
        epsilon=float(kv.get("opt.epsilon", 0.5)),
    )


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read a config file; ``CONTREG_SEED`` replaces ``sim.seed``, then
    ``overrides`` (command-line flags) win over both."""
    kv = read_kv(path)
    seed = os.environ.get("CONTREG_SEED", "").strip()
    if seed:
        kv["sim.seed"] = seed
    kv.update(overrides or {})
    return config_from_kv(kv)
