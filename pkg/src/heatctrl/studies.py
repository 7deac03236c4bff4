"""Experiment drivers: truncation / QMC-rms / optimization / CBC builds.

Each run writes into an output directory: a ``manifest.txt`` echoing every
input plus the code version, and CSV files whose first line embeds the
manifest hash so downstream tooling can refuse mismatched pairs.  Desk
defaults keep runtimes in minutes; ``paper_scale`` restores the full-size
configuration (hours to days, cluster territory).
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .descent import DescentConfig, DescentTrace, descend
from .fem import FemSpace, FieldTrajectory, TimeGrid, build_mesh, zero_trajectory
from .field import FieldSpec, build_affine
from .lattice import (GeneratingVector, ShiftSet, cbc_construct, choose_lambda,
                      load_vector, pod_weights, rms_over_shifts, save_vector)
from .parabolic import ControlFunction, ProblemData, save_trajectory_csv, save_trajectory_npz
from .risk import RiskConfig, RiskEstimator

# -- experiment data ---------------------------------------------------------


def initial_heat(points):
    """Initial state sin(2 pi x1) sin(2 pi x2)."""
    return np.sin(2 * np.pi * points[:, 0]) * np.sin(2 * np.pi * points[:, 1])


def reference_source(points, t=0.0):
    """Fixed source 10 x1 (1-x1) x2 (1-x2) used by the error studies."""
    x1, x2 = points[:, 0], points[:, 1]
    return 10.0 * x1 * (1.0 - x1) * x2 * (1.0 - x2)


def _bump_center(t):
    swing = 0.25 * (1.0 - t ** 10)
    return 0.5 + swing * np.cos(4 * np.pi * t ** 2), 0.5 + swing * np.sin(4 * np.pi * t ** 2)


def target_state(points, t):
    """Two biquadratic bumps orbiting the center of the square."""
    c1, c2 = _bump_center(t)
    x1, x2 = points[:, 0], points[:, 1]

    def bump(d1, d2):
        inside = (np.abs(d1) <= 0.1) & (np.abs(d2) <= 0.1)
        return np.where(inside, 10240.0 * (d1 ** 2 - 0.01) * (d2 ** 2 - 0.01), 0.0)

    return bump(x1 - c1, x2 - c2) + bump(x1 + c1 - 1.0, x2 + c2 - 1.0)


def experiment_problem(space: FemSpace, grid: TimeGrid,
                       alpha1: float, alpha2: float, alpha3: float) -> ProblemData:
    """Tracking problem of the experiments on the given discretization."""
    return ProblemData(
        u0=space.interpolate(initial_heat),
        target=space.interpolate_trajectory(target_state, grid),
        alpha1=alpha1, alpha2=alpha2, alpha3=alpha3,
    )


# -- configuration -----------------------------------------------------------


@dataclass
class StudyConfig:
    study: str = ""
    level: int = 4
    n_steps: int = 50
    horizon: float = 1.0
    decay: float = 1.3            # fluctuation decay exponent
    beta1: float = 1.0
    amplitude: float = 0.5
    theta: float | None = None    # None -> per-study default
    alpha1: float = 1e-3
    alpha2: float = 1e-2
    alpha3: float = 1e-7
    s_list: tuple = (2, 4, 8, 16, 32, 64)
    s_ref: int = 256
    s: int = 20
    n: int = 2 ** 11
    m_min: int = 4
    m_max: int = 10
    R: int = 8
    seed: int = 20240
    p: float | None = None        # summability exponent; None -> from decay
    delta: float = 0.05
    order_cap: int = 40
    eta0: float = 100.0
    gamma: float = 1e-4
    beta: float = 0.1
    max_iters: int = 25
    radius: float = 2.0
    tol: float | None = None
    opt_s: int = 32
    opt_n: int = 2 ** 7
    slope_skip_tail: int = 0
    cache_dir: str | None = None
    vector_file: str | None = None
    out: str = "out"

    def with_paper_scale(self) -> "StudyConfig":
        return dataclasses.replace(
            self, level=5, n_steps=500, s_ref=2048,
            s_list=tuple(2 ** k for k in range(1, 10)),
            n=2 ** 15, m_min=4, m_max=15, R=16, s=100,
        )

    def field_spec(self) -> FieldSpec:
        return FieldSpec(decay=self.decay, amplitude=self.amplitude, beta1=self.beta1)

    def resolved_theta(self, default: float) -> float:
        return default if self.theta is None else self.theta


def default_summability(decay: float) -> float:
    """Summability exponent for the weight rule when none is configured.

    Any p with sum b_j^p < infty works; the decay j^-decay admits every
    p > 1/decay, so pick slightly above that (the branch below 2/3 does
    not depend on p at all).
    """
    inv = 1.0 / decay
    return min(inv + 0.01, 0.99) if inv >= 2.0 / 3.0 else 0.5


def build_weights(cfg: StudyConfig, s: int):
    spec = cfg.field_spec()
    p = cfg.p if cfg.p is not None else default_summability(cfg.decay)
    lam = choose_lambda(p, cfg.delta)
    return pod_weights(spec.b(s), lam, cfg.order_cap)


def study_vector(cfg: StudyConfig, s: int, n: int) -> GeneratingVector:
    """CBC-construct the rule, or load one from the configured vector file."""
    if cfg.vector_file is not None:
        gv = load_vector(cfg.vector_file)
        if gv.n != n or gv.s < s:
            raise ValueError(
                f"vector file has (n={gv.n}, s={gv.s}); study needs (n={n}, s>={s})"
            )
        return gv
    return cbc_construct(n, s, build_weights(cfg, s)).gv


# -- manifests and tables ------------------------------------------------------


def manifest_items(cfg: StudyConfig) -> dict:
    items = {"code_version": __version__}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        items[f.name] = str(value)
    return items


def manifest_hash(items: dict) -> str:
    body = "\n".join(
        f"{k} = {items[k]}" for k in sorted(items)
        if k not in ("created", "manifest_hash")
    )
    return hashlib.sha256(body.encode()).hexdigest()


def write_manifest(outdir: str, cfg: StudyConfig) -> str:
    items = manifest_items(cfg)
    digest = manifest_hash(items)
    items["created"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    items["manifest_hash"] = digest
    with open(os.path.join(outdir, "manifest.txt"), "w") as fh:
        for k in sorted(items):
            fh.write(f"{k} = {items[k]}\n")
    return digest


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, columns, rows, digest, slopes=None, label=None):
    """CSV with the manifest hash up front and fitted slopes appended."""
    with open(path, "w") as fh:
        fh.write(f"# manifest_hash={digest}\n")
        if label:
            fh.write(f"# label={label}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
        for name, value in (slopes or {}).items():
            fh.write(f"# slope {name} {float(value)!r}\n")


def fit_loglog(x, y, skip_tail: int = 0) -> float:
    """Least-squares slope of log2(y) against log2(x), dropping tail points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if skip_tail:
        x, y = x[:-skip_tail], y[:-skip_tail]
    keep = y > 0
    if keep.sum() < 2:
        raise ValueError("need at least two positive points for a slope fit")
    return float(np.polyfit(np.log2(x[keep]), np.log2(y[keep]), 1)[0])


def _setup(cfg: StudyConfig, s_max: int):
    mesh = build_mesh(cfg.level)
    space = FemSpace(mesh)
    grid = TimeGrid(cfg.n_steps, cfg.horizon)
    aff = build_affine(mesh, cfg.field_spec(), s_max, cfg.cache_dir)
    data = experiment_problem(space, grid, cfg.alpha1, cfg.alpha2, cfg.alpha3)
    return mesh, space, grid, aff, data


# -- study runners -------------------------------------------------------------


def run_truncation(cfg: StudyConfig) -> dict:
    """Truncation errors of state/adjoint means and the S, T sums vs a reference.

    One lattice rule and one shift in the reference dimension are shared by
    every truncation level; errors are measured against the s_ref run.
    """
    s_list = sorted(cfg.s_list)
    if any(s >= cfg.s_ref for s in s_list):
        raise ValueError("every truncation dimension must be < the reference s_ref")
    theta = cfg.resolved_theta(10.0)
    _, space, grid, aff, data = _setup(cfg, cfg.s_ref)
    gv = study_vector(cfg, cfg.s_ref, cfg.n)
    shift = ShiftSet(1, cfg.s_ref, cfg.seed).shifts[0]
    ctrl = ControlFunction(source=reference_source, source_time_dependent=False)

    def averages(s):
        rc = RiskConfig(kind="entropic", gv=gv, shift=shift, s=s, theta=theta)
        est = RiskEstimator(space, grid, aff, data, rc, cache_operators=False)
        return est.averages(ctrl)

    ref = averages(cfg.s_ref)
    rows = []
    for s in s_list:
        av = averages(s)
        rows.append((
            s,
            space.norm_L2V_I(ref.mean_state - av.mean_state),
            space.norm_L2V_I(ref.mean_adjoint - av.mean_adjoint),
            space.norm_L2V_I(ref.S - av.S),
            abs(ref.T - av.T),
        ))
    cols = ("s", "err_state", "err_adjoint", "err_S", "err_T")
    slopes = {c: fit_loglog([r[0] for r in rows], [r[k] for r in rows], cfg.slope_skip_tail)
              for k, c in enumerate(cols) if k > 0}
    os.makedirs(cfg.out, exist_ok=True)
    digest = write_manifest(cfg.out, cfg)
    path = os.path.join(cfg.out, "truncation.csv")
    write_table(path, cols, rows, digest, slopes)
    return {"rows": rows, "slopes": slopes, "csv": path, "manifest_hash": digest}


def run_qmc_rms(cfg: StudyConfig, shifts_override: np.ndarray | None = None) -> dict:
    """Root-mean-square QMC errors over R shifts for n = 2^m_min .. 2^m_max."""
    if cfg.R < 2:
        raise ValueError("need R >= 2 shifts for an rms estimate")
    theta = cfg.resolved_theta(1.0)
    _, space, grid, aff, data = _setup(cfg, cfg.s)
    shifts = (ShiftSet(cfg.R, cfg.s, cfg.seed).shifts
              if shifts_override is None else np.asarray(shifts_override))
    ctrl = ControlFunction(source=reference_source, source_time_dependent=False)
    weights = build_weights(cfg, cfg.s)

    def traj_norm(dev):
        return space.norm_L2V_I(FieldTrajectory(dev, grid))

    rows = []
    for m in range(cfg.m_min, cfg.m_max + 1):
        n = 2 ** m
        gv = cbc_construct(n, cfg.s, weights).gv
        per_shift = {"state": [], "adjoint": [], "S": [], "T": []}
        for r in range(cfg.R):
            rc = RiskConfig(kind="entropic", gv=gv, shift=shifts[r], s=cfg.s, theta=theta)
            av = RiskEstimator(space, grid, aff, data, rc, cache_operators=False).averages(ctrl)
            per_shift["state"].append(av.mean_state.values)
            per_shift["adjoint"].append(av.mean_adjoint.values)
            per_shift["S"].append(av.S.values)
            per_shift["T"].append(av.T)
        rows.append((
            m, n,
            rms_over_shifts(per_shift["state"], traj_norm)[1],
            rms_over_shifts(per_shift["adjoint"], traj_norm)[1],
            rms_over_shifts(per_shift["S"], traj_norm)[1],
            rms_over_shifts(per_shift["T"])[1],
        ))
    cols = ("m", "n", "rms_state", "rms_adjoint", "rms_S", "rms_T")
    ns = [r[1] for r in rows]
    slopes = {c: fit_loglog(ns, [r[k] for r in rows], cfg.slope_skip_tail)
              for k, c in enumerate(cols) if k > 1}
    os.makedirs(cfg.out, exist_ok=True)
    digest = write_manifest(cfg.out, cfg)
    path = os.path.join(cfg.out, "qmc_rms.csv")
    write_table(path, cols, rows, digest, slopes)
    return {"rows": rows, "slopes": slopes, "csv": path, "manifest_hash": digest}


def _trace_rows(trace: DescentTrace):
    return list(zip(trace.iters, trace.J, trace.eta, trace.stationarity,
                    trace.control_norm))


def run_optimize(cfg: StudyConfig) -> dict:
    """Projected descent with and without the control-norm ball constraint."""
    theta = cfg.resolved_theta(10.0)
    _, space, grid, aff, data = _setup(cfg, cfg.opt_s)
    gv = study_vector(cfg, cfg.opt_s, cfg.opt_n)
    shift = ShiftSet(1, cfg.opt_s, cfg.seed).shifts[0]
    rc = RiskConfig(kind="entropic", gv=gv, shift=shift, s=cfg.opt_s, theta=theta)
    est = RiskEstimator(space, grid, aff, data, rc, cache_operators=True)

    def objective(w):
        return est.objective(ControlFunction(w=w))

    def gradient(w):
        return est.gradient(ControlFunction(w=w))

    os.makedirs(cfg.out, exist_ok=True)
    digest = write_manifest(cfg.out, cfg)
    results = {}
    for mode, radius in (("constrained", cfg.radius), ("unconstrained", None)):
        dcfg = DescentConfig(eta0=cfg.eta0, gamma=cfg.gamma, beta=cfg.beta,
                             tol=cfg.tol, max_iters=cfg.max_iters, radius=radius)
        w0 = zero_trajectory(grid, space.n_dof)
        w, trace = descend(space, w0, objective, gradient, dcfg)
        tpath = os.path.join(cfg.out, f"trace_{mode}.csv")
        write_table(tpath, ("iter", "J", "eta", "stationarity", "control_norm"),
                    _trace_rows(trace), digest, label=mode)
        cpath = os.path.join(cfg.out, f"control_{mode}.csv")
        save_trajectory_csv(cpath, w, cfg.level, digest, label=mode)
        save_trajectory_npz(os.path.join(cfg.out, f"control_{mode}.npz"),
                            w, cfg.level, digest)
        results[mode] = {"w": w, "trace": trace, "trace_csv": tpath, "control_csv": cpath}
    results["manifest_hash"] = digest
    return results


def run_cbc_build(cfg: StudyConfig) -> dict:
    """Construct a generating vector and record the error per dimension."""
    weights = build_weights(cfg, cfg.s)
    result = cbc_construct(cfg.n, cfg.s, weights)
    os.makedirs(cfg.out, exist_ok=True)
    digest = write_manifest(cfg.out, cfg)
    vpath = os.path.join(cfg.out, "vector.txt")
    save_vector(vpath, result.gv)
    epath = os.path.join(cfg.out, "cbc_e2.csv")
    write_table(epath, ("d", "e2"),
                [(d + 1, float(e)) for d, e in enumerate(result.e2_by_dim)],
                digest)
    return {"gv": result.gv, "e2_by_dim": result.e2_by_dim,
            "vector_file": vpath, "csv": epath, "manifest_hash": digest}
