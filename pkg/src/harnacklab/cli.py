"""Command-line front end: strict TOML configs, experiment dispatch, manifests.

Usage: ``harnacklab <command> [sub] --config run.toml [--out DIR] [--threads N] [--seed N]``.
Exit status 0 on success, 2 for invalid input, 3 for numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .contact import basic_measure_estimate, contact_map_check, contact_set_measure, contact_parameter_box
from .core import (DomainError, EllipticityParams, Grid, NumericError, ScalarField, intrinsic_rescale,
                   rescaled_grid, write_field_binary, write_field_csv)
from .covering import random_family, read_family_csv, verify_cover, vitali_subcover
from .harnack import (HarnackConfig, MeasurementReport, barrier_sample, density_check, find_barrier_params,
                      find_propagation_constants, grid_metadata, harnack_ratios, level_set_decay,
                      propagation_check, waiting_time_scan, weak_harnack_ratio, weak_harnack_sweep)
from .operators import OperatorSpec
from .solutions import (BarenblattSpec, BarrierSpec, ExampleSpec, barenblatt_eval, barrier_eval,
                        barrier_residual_terms, example_coefficient, example_eval, example_residual)
from .solver import SolverConfig, convergence_study, evolve, evolve_report

EXPERIMENTS = (
    "catalog-eval", "solve", "verify-barrier", "verify-example", "verify-scaling", "contact", "cover",
    "harnack-measure", "harnack-propagation", "harnack-decay", "harnack-barrier-scan",
    "harnack-waiting-time", "convergence",
)

# seed of the generated covering fixture used when no family file is given
COVER_FIXTURE_SEED = 20240


class ConfigError(DomainError):
    pass


# --- config schema ------------------------------------------------------------------


@dataclass
class GridCfg:
    origin: list = field(default_factory=lambda: [0.0])
    extent: list = field(default_factory=lambda: [1.0])
    dx: float = 1 / 64
    t_start: float = 0.0
    t_end: float = 1.0
    dt: float = 1 / 64

    def build(self) -> Grid:
        return Grid(tuple(self.origin), tuple(self.extent), self.dx, self.t_start, self.t_end, self.dt)


@dataclass
class OperatorCfg:
    kind: str = "pucci_minus"
    lam: float = 1.0
    Lam: float = 1.0
    p: float = 3.0
    n: int = 1
    q: float | None = None
    delta: float = 1e-8
    cfl_safety: float = 0.4
    boundary: str = "dirichlet_from_field"

    def params(self) -> EllipticityParams:
        return EllipticityParams(self.lam, self.Lam, self.p, self.n)

    def spec(self) -> OperatorSpec:
        return OperatorSpec(self.kind, self.params(), self.q, 0.0)


@dataclass
class SolutionCfg:
    """kind: barenblatt | barrier | example | constant | affine."""

    kind: str = "barenblatt"
    shift: float = 0.0
    scale: float = 1.0
    center: list | None = None
    q: float = 2.0
    alpha: float = 0.01
    C0: float = 100.0
    k: int = 200
    value: float = 1.0
    slope: list | None = None


@dataclass
class OutputCfg:
    dir: str = "out"
    csv: bool = True


@dataclass
class CatalogParams:
    pass


@dataclass
class SolveParams:
    pass


@dataclass
class VerifyBarrierParams:
    samples: int = 100000
    t_lo: float = 0.25
    t_hi: float = 4.0


@dataclass
class VerifyExampleParams:
    samples: int = 10000
    tol: float = 1e-10


@dataclass
class VerifyScalingParams:
    r: float = 2.0
    M: float = 2.0
    tol: float = 1e-10


@dataclass
class ContactParams:
    a: float | None = None
    dy: float = 1 / 64
    ds: float | None = None
    dilation: int = 1


@dataclass
class CoverParams:
    families: int = 1000
    size: int = 1000
    fixture: str | None = None
    theta: float = 0.5
    rho_min: float = 1e-3


@dataclass
class HarnackMeasureParams:
    x0: list = field(default_factory=lambda: [0.0])
    t0: float = 1.0
    rho: float = 0.25
    c_weak: float = 1.0
    c1_h: float = 1.0
    c2_h: float = 1.0
    eps: float = 0.5
    sweep: bool = False
    strict: bool = False


@dataclass
class PropagationParams:
    shifts: list = field(default_factory=lambda: [4.0, 8.0, 16.0])
    m0: float = 0.5
    L0_min: float = 1.0
    L0_max: float = 1000.0
    nL0: int = 121
    k: list = field(default_factory=lambda: [1])


@dataclass
class DecayParams:
    m0: float = 1 / 64
    L: float = 4.0
    k_max: int = 5
    L1: float | None = None


@dataclass
class BarrierScanParams:
    q_min: float = 2.0
    q_max: float = 64.0
    nq: int = 31
    alpha_min: float = 1e-14
    alpha_max: float | None = None
    nalpha: int = 79
    margin: float = 0.1
    samples: int = 20000


@dataclass
class WaitingTimeParams:
    C0: list = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    C0_in_units_of_8p: bool = True
    C: float = 2.0
    rho: float = 0.125


@dataclass
class ConvergenceParams:
    levels: int = 3
    mask_fraction: float = 0.8


PARAMS = {
    "catalog-eval": CatalogParams, "solve": SolveParams, "verify-barrier": VerifyBarrierParams,
    "verify-example": VerifyExampleParams, "verify-scaling": VerifyScalingParams, "contact": ContactParams,
    "cover": CoverParams, "harnack-measure": HarnackMeasureParams, "harnack-propagation": PropagationParams,
    "harnack-decay": DecayParams, "harnack-barrier-scan": BarrierScanParams,
    "harnack-waiting-time": WaitingTimeParams, "convergence": ConvergenceParams,
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    threads: int = 1
    grid: GridCfg = field(default_factory=GridCfg)
    operator: OperatorCfg = field(default_factory=OperatorCfg)
    solution: SolutionCfg = field(default_factory=SolutionCfg)
    params: object = None
    output: OutputCfg = field(default_factory=OutputCfg)


def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(unknown)}; allowed: {', '.join(sorted(names))}")
    return cls(**data)


def parse_config(raw: dict, experiment: str | None = None) -> ExperimentConfig:
    """Strictly parse a TOML document into an ExperimentConfig."""
    top = {"experiment", "seed", "threads", "grid", "operator", "solution", "params", "output"}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    name = raw.get("experiment", experiment)
    if name is None:
        raise ConfigError("config needs an 'experiment' key")
    if experiment is not None and name != experiment:
        raise ConfigError(f"config experiment {name!r} does not match command {experiment!r}")
    if name not in PARAMS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    cfg = ExperimentConfig(
        experiment=name,
        seed=int(raw.get("seed", 0)),
        threads=int(raw.get("threads", 1)),
        grid=_strict(GridCfg, raw.get("grid", {}), "grid"),
        operator=_strict(OperatorCfg, raw.get("operator", {}), "operator"),
        solution=_strict(SolutionCfg, raw.get("solution", {}), "solution"),
        params=_strict(PARAMS[name], raw.get("params", {}), "params"),
        output=_strict(OutputCfg, raw.get("output", {}), "output"),
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Construct every physical object once so invariant violations surface before any work."""
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    params = cfg.operator.params()
    if cfg.experiment not in ("cover", "harnack-waiting-time", "verify-example", "verify-barrier", "harnack-barrier-scan"):
        cfg.operator.spec()
        g = cfg.grid.build()
        if g.n != params.n:
            raise ConfigError(f"grid dimension {g.n} != operator n = {params.n}")
    if cfg.solution.kind not in ("barenblatt", "barrier", "example", "constant", "affine"):
        raise ConfigError(f"unknown solution kind {cfg.solution.kind!r}")
    if cfg.experiment in ("solve", "verify-scaling", "convergence"):
        SolverConfig(cfg.operator.spec(), cfg.operator.cfl_safety, cfg.operator.boundary, cfg.operator.delta)
    if cfg.experiment == "verify-example" or cfg.solution.kind == "example":
        ExampleSpec(cfg.solution.C0, cfg.solution.k, params)


# --- solution catalog -------------------------------------------------------------------


def solution_function(sol: SolutionCfg, params: EllipticityParams):
    """Return ``fn(X, T)`` for the configured closed-form solution."""
    n, p = params.n, params.p
    center = np.zeros(n) if sol.center is None else np.asarray(sol.center, float)
    if sol.kind == "barenblatt":
        spec = BarenblattSpec(params)
        M = sol.scale

        def fn(X, T):
            return M * barenblatt_eval(spec, X - center, M ** (p - 2) * T + sol.shift).value
    elif sol.kind == "barrier":
        spec = BarrierSpec(sol.q, sol.alpha, params)

        def fn(X, T):
            return barrier_eval(spec, X - center, T + sol.shift).value
    elif sol.kind == "example":
        spec = ExampleSpec(sol.C0, sol.k, params)

        def fn(X, T):
            return example_eval(spec, X[..., 0], T).value
    elif sol.kind == "constant":
        def fn(X, T):
            return np.full(np.broadcast_shapes(X.shape[:-1], np.shape(T)), float(sol.value))
    elif sol.kind == "affine":
        slope = np.zeros(n) if sol.slope is None else np.asarray(sol.slope, float)

        def fn(X, T):
            v = sol.value + (X - center) @ slope
            return np.broadcast_to(v, np.broadcast_shapes(v.shape, np.shape(T))).copy()
    else:
        raise ConfigError(f"unknown solution kind {sol.kind!r}")
    return fn


def _coefficient(sol: SolutionCfg, params):
    if sol.kind != "example":
        return None
    spec = ExampleSpec(sol.C0, sol.k, params)
    return lambda X, t: example_coefficient(spec, X[..., 0], t)


def _solver_cfg(cfg: ExperimentConfig, delta=None) -> SolverConfig:
    op = cfg.operator
    return SolverConfig(op.spec(), op.cfl_safety, op.boundary, op.delta if delta is None else delta,
                        _coefficient(cfg.solution, op.params()))


# --- output plumbing -------------------------------------------------------------------


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if dataclasses.is_dataclass(v) and not isinstance(v, type):
        return _plain({f.name: getattr(v, f.name) for f in dataclasses.fields(v) if f.repr})
    return v


class Outputs:
    """Single writer: every artifact goes through here and lands in the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def _path(self, name):
        self.files.append(name)
        return self.root / name

    def json(self, name, obj):
        self._path(name).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")

    def csv(self, name, header, rows):
        with open(self._path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])

    def field(self, name, u: ScalarField, with_csv: bool):
        write_field_binary(self._path(name + ".bin"), u)
        if with_csv:
            write_field_csv(self._path(name + ".csv"), u)


class Stages:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def __call__(self, name):
        stages = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                stages.timings[name] = time.perf_counter() - self.t
        return _T()


def _sample(cfg: ExperimentConfig) -> ScalarField:
    params = cfg.operator.params()
    return ScalarField.sample(solution_function(cfg.solution, params), cfg.grid.build())


def _report(kind, values, u=None, refinement=None):
    return MeasurementReport(kind, values, grid_metadata(u) if u is not None else {}, refinement or {}).to_dict()


def _pool_map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


# --- experiments ------------------------------------------------------------------------


def run_catalog_eval(cfg, out: Outputs, stage):
    with stage("sample"):
        u = _sample(cfg)
    with stage("write"):
        out.field("field", u, cfg.output.csv)
    return {"min": float(u.values.min()), "max": float(u.values.max())}


def run_solve(cfg, out, stage):
    g = cfg.grid.build()
    fn = solution_function(cfg.solution, cfg.operator.params())
    with stage("evolve"):
        u, reps = evolve_report(fn(g.spatial_mesh(), g.t_start), g, _solver_cfg(cfg))
    with stage("write"):
        out.field("field", u, cfg.output.csv)
        out.csv("steps.csv", ["step", "t", "dt", "max_grad", "residual", "min_value", "max_value"],
                [(r.step, r.t, r.dt, r.max_abs_gradient, r.residual_norm, r.min_value, r.max_value) for r in reps])
    return {"steps": len(reps), "min": float(u.values.min()), "max": float(u.values.max())}


def run_verify_barrier(cfg, out, stage):
    params = cfg.operator.params()
    pr = cfg.params
    spec = BarrierSpec(cfg.solution.q, cfg.solution.alpha, params)
    with stage("residual"):
        x, t = barrier_sample(spec, np.random.default_rng(cfg.seed), pr.samples, (pr.t_lo, pr.t_hi))
        dt, dif = barrier_residual_terms(spec, x, t)
        res = dt - dif
    k = int(np.argmax(res))
    vals = {"q": spec.q, "alpha": spec.alpha, "beta": spec.beta, "samples": pr.samples,
            "max_residual": float(res.max()), "all_negative": bool(np.all(res < 0)),
            "worst_point": {"x": x[k].tolist(), "t": float(t[k])}}
    out.json("barrier.json", _report("verify-barrier", vals))
    if not vals["all_negative"]:
        raise NumericError(f"barrier residual not negative: max {vals['max_residual']:.3e} at {vals['worst_point']}")
    return vals


def run_verify_example(cfg, out, stage):
    params = cfg.operator.params()
    spec = ExampleSpec(cfg.solution.C0, cfg.solution.k, params)
    rng = np.random.default_rng(cfg.seed)
    m = cfg.params.samples
    with stage("residual"):
        x = rng.uniform(-1, 1, m)
        x = np.where(x == 0, 0.5, x)
        lo = -1 / spec.C0 + 1e-3 / spec.C0
        t = rng.uniform(lo, 1.0, m)
        t = np.where(t == spec.t_k, t + 1e-9, t)
        res = example_residual(spec, x, t)
        ev = example_eval(spec, x, t)
        scale = np.abs(ev.dt) + 1e-300
        rel = np.abs(res) / scale
    vals = {"C0": spec.C0, "k": spec.k, "p": params.p, "t_k": spec.t_k, "samples": m,
            "max_abs_residual": float(np.abs(res).max()), "max_relative_residual": float(rel.max()),
            "blowup_value": float(spec.amplitude(spec.t_k)), "passed": bool(rel.max() <= cfg.params.tol)}
    out.csv("example_residuals.csv", ["x", "t", "residual", "relative"],
            [(a, b, c, d) for a, b, c, d in zip(x[:1000], t[:1000], res[:1000], rel[:1000])])
    out.json("example.json", _report("verify-example", vals))
    if not vals["passed"]:
        raise NumericError(f"example residual {rel.max():.3e} exceeds tolerance {cfg.params.tol}")
    return vals


def run_verify_scaling(cfg, out, stage):
    params = cfg.operator.params()
    p = params.p
    r, M = cfg.params.r, cfg.params.M
    g = cfg.grid.build()
    fn = solution_function(cfg.solution, params)
    u0 = fn(g.spatial_mesh(), g.t_start)
    with stage("evolve-original"):
        U = evolve(u0, g, _solver_cfg(cfg))
    with stage("evolve-rescaled"):
        g2 = rescaled_grid(g, r, M, p)
        V = evolve(u0 / M, g2, _solver_cfg(cfg, delta=cfg.operator.delta * r / M))
    W = intrinsic_rescale(U, r, M, params)
    diff = float(np.max(np.abs(W.values - V.values)))
    vals = {"r": r, "M": M, "max_nodewise_difference": diff, "passed": diff <= cfg.params.tol}
    out.json("scaling.json", _report("verify-scaling", vals, U))
    if not vals["passed"]:
        raise NumericError(f"scaling commutation failed: max difference {diff:.3e}")
    return vals


def run_contact(cfg, out, stage):
    params = cfg.operator.params()
    pr = cfg.params
    a = 16.0 ** params.p if pr.a is None else pr.a
    with stage("sample"):
        u = _sample(cfg)
    ds = pr.ds if pr.ds is not None else u.grid.dt
    E = contact_parameter_box(params, pr.dy, ds)
    with stage("contact"):
        cm = contact_set_measure(u, E, a, pr.dilation, params)
    rows = []
    worst_dist, worst_val, map_res = 0.0, -math.inf, 0.0
    n = params.n
    for rec in cm.records:
        if rec.touched:
            dist = float(np.linalg.norm(np.array(rec.contact[:n]) - np.array(rec.parameter[:n])))
            worst_dist = max(worst_dist, dist)
            worst_val = max(worst_val, rec.value - rec.tol)
            mr = contact_map_check(rec, u, a, params)
            if mr.reliable:
                map_res = max(map_res, mr.y_residual)
            rows.append(rec.parameter + rec.contact + (1, rec.value, rec.gap, rec.tol, int(rec.on_boundary)))
        else:
            rows.append(rec.parameter + (math.nan,) * (n + 1) + (0, math.nan, rec.gap, rec.tol, 0))
    try:
        basic = basic_measure_estimate(u, params)
    except DomainError as exc:
        basic = f"unavailable: {exc}"
    vals = {"a": a, "parameters": len(E), "untouched": cm.untouched, "gamma_measure": cm.gamma_measure,
            "e_measure": cm.e_measure, "ratio": cm.ratio, "dilation": pr.dilation,
            "max_contact_distance": worst_dist, "max_value_minus_tol": worst_val,
            "max_map_residual_y": map_res, "basic_measure": basic}
    header = [f"y{i + 1}" for i in range(n)] + ["s"] + [f"x{i + 1}" for i in range(n)] + \
        ["t", "touched", "value_at_contact", "gap", "tol", "on_boundary"]
    out.csv("contacts.csv", header, rows)
    out.json("contact.json", _report("contact", vals, u))
    return vals


def run_cover(cfg, out, stage):
    pr = cfg.params
    p = cfg.operator.p
    if pr.fixture:
        families = [read_family_csv(pr.fixture, pr.theta, p)]
    else:
        rng = np.random.default_rng(COVER_FIXTURE_SEED + cfg.seed)
        families = [random_family(rng, pr.size, cfg.operator.n, p, rho_min=pr.rho_min) for _ in range(pr.families)]

    def one(fam):
        sel = vitali_subcover(fam)
        rep = verify_cover(fam, sel)
        return len(fam), len(sel), rep.disjoint, rep.covered, sel

    with stage("cover"):
        full = _pool_map(one, families, cfg.threads)
    res = [r[:4] for r in full]
    if pr.fixture:
        out.csv("selected.csv", ["index"], [(i,) for i in full[0][4]])
    out.csv("cover.csv", ["family", "size", "selected", "disjoint", "covered"],
            [(i, *r) for i, r in enumerate(res)])
    ok = all(d and c for _, _, d, c in res)
    vals = {"families": len(res), "all_passed": ok, "failures": [i for i, r in enumerate(res) if not (r[2] and r[3])]}
    out.json("cover.json", _report("cover", vals))
    if not ok:
        raise NumericError(f"covering verification failed for families {vals['failures'][:10]}")
    return vals


def run_harnack_measure(cfg, out, stage):
    params = cfg.operator.params()
    pr = cfg.params
    hc = HarnackConfig(c_weak=pr.c_weak, c1_h=pr.c1_h, c2_h=pr.c2_h, eps_weak=pr.eps)
    with stage("sample"):
        u = _sample(cfg)
    with stage("measure"):
        wh = weak_harnack_ratio(u, pr.x0, pr.t0, pr.rho, hc, params)
        hr = harnack_ratios(u, pr.x0, pr.t0, pr.rho, hc, params, strict=pr.strict)
        sweep = weak_harnack_sweep(u, pr.x0, pr.t0, pr.rho, hc, params) if pr.sweep else []
    vals = {"weak": {"lhs": wh.lhs, "rhs": wh.rhs, "ratio": wh.ratio, "eps": wh.eps, "theta": wh.theta,
                     "nodes": wh.nodes},
            "harnack": {"sup_ratio": hr.sup_ratio, "inf_ratio": hr.inf_ratio, "theta1": hr.theta1,
                        "theta2": hr.theta2, "hypotheses_in_domain": hr.hypotheses_in_domain},
            "eps_sweep": [{"eps": e, "ratio": r} for e, r in sweep]}
    if sweep:
        out.csv("weak_sweep.csv", ["eps", "ratio"], sweep)
    out.json("harnack.json", _report("harnack-measure", vals, u))
    return vals


def barenblatt_member(params, grid: Grid, T: float, m0: float) -> ScalarField:
    """Intrinsically scaled Barenblatt ``M phi(x, M^{p-2} t + T)`` with value m0 at the origin."""
    spec = BarenblattSpec(params)
    M = m0 / float(barenblatt_eval(spec, np.zeros(params.n), T).value)
    p = params.p
    return ScalarField.sample(lambda X, t: M * barenblatt_eval(spec, X, M ** (p - 2) * t + T).value, grid)


def run_harnack_propagation(cfg, out, stage):
    params = cfg.operator.params()
    pr = cfg.params
    g = cfg.grid.build()
    with stage("sample"):
        fam = [barenblatt_member(params, g, T, pr.m0) for T in pr.shifts]
    hc = HarnackConfig(m0=pr.m0)
    with stage("scan"):
        res = find_propagation_constants(fam, hc, params, np.geomspace(pr.L0_min, pr.L0_max, pr.nL0))
    checks = []
    if res.found:
        hc2 = HarnackConfig(m0=pr.m0, L0=res.L0)
        for k in pr.k:
            t0 = -1.0 if k > 1 else -0.5
            for m, u in enumerate(fam):
                for x0 in (0.0, 0.5, -1.0):
                    try:
                        r = propagation_check(u, [x0] * params.n, t0, int(k), hc2, params)
                        checks.append((m, k, x0, t0, int(r.found), r.value, r.threshold))
                    except DomainError as exc:
                        checks.append((m, k, x0, t0, -1, math.nan, math.nan))
                        print(f"note: k={k}: {exc}", file=sys.stderr)
    out.csv("propagation.csv", ["member", "k", "x0", "t0", "found", "value", "threshold"], checks)
    vals = {"found": res.found, "L0": res.L0, "m0": res.m0, "worst_member": res.worst_member,
            "worst_point": res.worst_point, "worst_value": res.worst_value}
    out.json("propagation.json", _report("harnack-propagation", vals, fam[0]))
    return vals


def run_harnack_decay(cfg, out, stage):
    params = cfg.operator.params()
    pr = cfg.params
    with stage("sample"):
        u = _sample(cfg)
    with stage("decay"):
        tab = level_set_decay(u, pr.m0, pr.L, pr.k_max)
    vals = {"C": tab.C, "eta": tab.eta, "monotone": tab.monotone, "degenerate": tab.degenerate,
            "measures": tab.measures, "thresholds": tab.thresholds}
    if pr.L1 is not None:
        dc = density_check(u, pr.m0, pr.L1, params)
        vals["density"] = {"measure": dc.measure, "bound": dc.bound, "passed": dc.passed}
    out.csv("decay.csv", ["k", "threshold", "measure"], zip(tab.k.tolist(), tab.thresholds, tab.measures))
    out.json("decay.json", _report("harnack-decay", vals, u))
    return vals


def run_harnack_barrier_scan(cfg, out, stage):
    params = cfg.operator.params()
    pr = cfg.params
    with stage("scan"):
        res = find_barrier_params(params, (pr.q_min, pr.q_max), pr.nq, (pr.alpha_min, pr.alpha_max), pr.nalpha,
                                  pr.margin, pr.samples, seed=cfg.seed)
    rows = [(q, a, int(res.table[i, j])) for i, q in enumerate(res.q_grid) for j, a in enumerate(res.alpha_grid)]
    out.csv("barrier_scan.csv", ["q", "alpha", "feasible"], rows)
    vals = {"q": res.q, "alpha": res.alpha, "worst_residual": res.worst_residual,
            "worst_relative": res.worst_relative, "feasible": res.feasible, "feasible_count": res.feasible_count,
            "witness": res.witness, "sufficient_condition": res.sufficient_condition,
            "edge_sign_condition": res.edge_sign_condition}
    out.json("barrier_scan.json", _report("harnack-barrier-scan", vals))
    return vals


def run_harnack_waiting_time(cfg, out, stage):
    p = cfg.operator.p
    pr = cfg.params
    C0s = sorted(float(c) * (8.0 ** p if pr.C0_in_units_of_8p else 1.0) for c in pr.C0)
    with stage("scan"):
        rows = _pool_map(lambda c: waiting_time_scan(p, [c], pr.C, rho=pr.rho)[0], C0s, cfg.threads)
    th = [r.theta1 for r in rows]
    ok = all(r.bracket_ok and r.theta1 <= r.bound for r in rows) and all(b <= a for a, b in zip(th, th[1:]))
    out.csv("waiting_time.csv", ["C0", "theta1", "bound", "bracket_ok"],
            [(r.C0, r.theta1, r.bound, int(r.bracket_ok)) for r in rows])
    vals = {"rows": [dataclasses.asdict(r) for r in rows], "below_bound_and_nonincreasing": ok}
    out.json("waiting_time.json", _report("harnack-waiting-time", vals))
    return vals


def run_convergence(cfg, out, stage):
    params = cfg.operator.params()
    p = params.p
    pr = cfg.params
    base = cfg.grid.build()
    fn = solution_function(cfg.solution, params)
    sol = cfg.solution

    def make_grid(level):
        return Grid(base.spatial_origin, base.spatial_extent, base.dx / 2 ** level, base.t_start, base.t_end,
                    base.dt)

    mask = None
    if sol.kind == "barenblatt":
        spec = BarenblattSpec(params)
        center = np.zeros(params.n) if sol.center is None else np.asarray(sol.center, float)

        def mask(X, t):
            R = spec.support_radius(sol.scale ** (p - 2) * t + sol.shift)
            return np.sqrt(np.sum((X - center) ** 2, axis=-1)) < pr.mask_fraction * R
    with stage("study"):
        rows, decreasing = convergence_study(fn, make_grid, _solver_cfg(cfg), pr.levels, mask)
    out.csv("convergence.csv", ["dx", "linf", "l1", "order_linf", "order_l1", "steps"],
            [(r.dx, r.linf, r.l1, r.order_linf, r.order_l1, r.steps) for r in rows])
    vals = {"rows": [dataclasses.asdict(r) for r in rows], "strictly_decreasing": decreasing}
    if not decreasing:
        print("warning: errors are not strictly decreasing across refinements", file=sys.stderr)
    out.json("convergence.json", _report("convergence", vals))
    return vals


RUNNERS = {
    "catalog-eval": run_catalog_eval, "solve": run_solve, "verify-barrier": run_verify_barrier,
    "verify-example": run_verify_example, "verify-scaling": run_verify_scaling, "contact": run_contact,
    "cover": run_cover, "harnack-measure": run_harnack_measure, "harnack-propagation": run_harnack_propagation,
    "harnack-decay": run_harnack_decay, "harnack-barrier-scan": run_harnack_barrier_scan,
    "harnack-waiting-time": run_harnack_waiting_time, "convergence": run_convergence,
}


# --- entry point -----------------------------------------------------------------------


def execute(config_path, experiment: str | None = None, out_dir=None, threads=None, seed=None) -> dict:
    """Run one experiment; returns the manifest dict. Raises DomainError/NumericError."""
    t_wall = time.perf_counter()
    path = Path(config_path)
    try:
        raw_bytes = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = tomli.loads(raw_bytes.decode())
    except (tomli.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: malformed TOML: {exc}") from None
    try:
        cfg = parse_config(raw, experiment)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if threads is not None:
        cfg.threads = threads
    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.output.dir = str(out_dir)
    out = Outputs(Path(cfg.output.dir))
    stages = Stages()
    with np.errstate(over="ignore"):
        summary = RUNNERS[cfg.experiment](cfg, out, stages)
    manifest = {
        "artifact_version": __version__,
        "config_path": str(path),
        "config_sha256": hashlib.sha256(raw_bytes).hexdigest(),
        "config": _plain(dataclasses.asdict(cfg)),
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "summary": _plain(summary),
        "outputs": sorted(out.files),
        "stage_seconds": stages.timings,
        "wall_clock_seconds": time.perf_counter() - t_wall,
    }
    (out.root / "manifest.json").write_text(json.dumps(_plain(manifest), indent=2, sort_keys=True) + "\n")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML experiment config")
    common.add_argument("--out", help="output directory (overrides [output].dir)")
    common.add_argument("--threads", type=int, help="worker threads for sweeps")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")

    ap = argparse.ArgumentParser(prog="harnacklab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    cat = sub.add_parser("catalog", help="closed-form catalog").add_subparsers(dest="sub", required=True)
    cat.add_parser("eval", parents=[common], help="sample a catalog solution on the grid")
    for name in ("solve", "contact", "cover", "verify-barrier", "verify-example", "verify-scaling", "convergence"):
        sub.add_parser(name, parents=[common])
    har = sub.add_parser("harnack", help="Harnack measurements").add_subparsers(dest="sub", required=True)
    for name in ("measure", "propagation", "decay", "barrier-scan", "waiting-time"):
        har.add_parser(name, parents=[common])
    sub.add_parser("run", parents=[common], help="dispatch on the config's 'experiment' key")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        experiment = None
    elif args.command in ("catalog", "harnack"):
        experiment = f"{args.command}-{args.sub}"
    else:
        experiment = args.command
    try:
        manifest = execute(args.config, experiment, args.out, args.threads, args.seed)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except DomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(manifest["summary"], sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
