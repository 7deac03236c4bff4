"""Implicit-Euler time stepping for the heat equation and its adjoint.

Forward step:  (M + dt A(y)) u^{k+1} = M u^k + dt F^{k+1},
where F is the stiffness image of the control's Riesz preimage, or the
mass-weighted interpolant of a closed-form source.

The backward (adjoint) recursion is the exact discrete adjoint of the
tracking functional under the right-endpoint time quadrature: the terminal
data alpha2 (u - target)(T) enters through one extra implicit step, after
which gradients of the tracking functional match the adjoint trajectory to
solver precision (not merely O(dt)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .fem import FemSpace, FieldTrajectory, GridMismatchError, SolverError, TimeGrid
from .field import AffineDiffusion, coefficient_range


@dataclass
class ControlFunction:
    """Control in the w-representation (z = R_V w) or a closed-form source.

    When ``source`` is set, ``w`` is ignored and the load vector is the
    mass-weighted nodal interpolant of source(points, t).  Sources flagged
    time-independent are interpolated once.
    """

    w: FieldTrajectory | None = None
    source: object | None = None          # callable (points, t) -> values
    source_time_dependent: bool = True

    def __post_init__(self):
        if self.w is None and self.source is None:
            raise ValueError("control needs either a Riesz preimage w or a source")


@dataclass
class ProblemData:
    """Initial state, tracking target and objective weights."""

    u0: np.ndarray                 # interior nodal values at t = 0
    target: FieldTrajectory
    alpha1: float
    alpha2: float
    alpha3: float

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("alpha1, alpha2 must be nonnegative")
        if self.alpha1 + self.alpha2 <= 0:
            raise ValueError("alpha1 + alpha2 must be positive")
        if self.alpha3 <= 0:
            raise ValueError("alpha3 must be positive")


class StepOperator:
    """Factorized implicit-Euler operator M + dt A(y) for one parameter point."""

    def __init__(self, space: FemSpace, grid: TimeGrid, aff: AffineDiffusion,
                 y: np.ndarray):
        self.space = space
        self.grid = grid
        self.y = np.asarray(y, dtype=float)
        mat = (space.mass + grid.dt * aff.materialize(y)).tocsc()
        try:
            self.lu = spla.splu(mat)
        except RuntimeError as exc:
            lo, hi = coefficient_range(aff.spec, len(self.y), self.y, space.mesh)
            raise SolverError(
                f"factorization of the time-step operator failed "
                f"(coefficient range [{lo:.3e}, {hi:.3e}]): {exc}"
            ) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(rhs)


def _loads(space: FemSpace, grid: TimeGrid, ctrl: ControlFunction) -> np.ndarray:
    """Load vectors F^k for k = 0..n_steps (row 0 unused by the forward loop)."""
    if ctrl.source is not None:
        if ctrl.source_time_dependent:
            traj = space.interpolate_trajectory(ctrl.source, grid)
            return traj.values @ space.mass.T
        vals = space.interpolate(lambda p: ctrl.source(p, 0.0))
        return np.tile(space.mass @ vals, (grid.n_steps + 1, 1))
    if ctrl.w.grid != grid:
        raise GridMismatchError("control trajectory grid differs from solver grid")
    return ctrl.w.values @ space.stiffness.T


def solve_state(space: FemSpace, grid: TimeGrid, aff: AffineDiffusion,
                y: np.ndarray, ctrl: ControlFunction, u0: np.ndarray,
                op: StepOperator | None = None) -> FieldTrajectory:
    """March the heat equation forward from u0 under the given control."""
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (space.n_dof,):
        raise GridMismatchError("initial state has wrong number of unknowns")
    if op is None:
        op = StepOperator(space, grid, aff, y)
    loads = _loads(space, grid, ctrl)
    dt = grid.dt
    u = np.empty((grid.n_steps + 1, space.n_dof))
    u[0] = u0
    for k in range(grid.n_steps):
        rhs = space.mass @ u[k] + dt * loads[k + 1]
        u[k + 1] = op.solve(rhs)
    return FieldTrajectory(u, grid)


def solve_adjoint(space: FemSpace, grid: TimeGrid, aff: AffineDiffusion,
                  y: np.ndarray, state: FieldTrajectory, data: ProblemData,
                  op: StepOperator | None = None) -> FieldTrajectory:
    """Backward sweep returning the adjoint trajectory q.

    Rows 1..n_steps form the exact gradient of the tracking functional with
    respect to the control's Riesz preimage in the discrete L2(V;I)
    geometry; row 0 is the propagated value at t = 0.
    """
    if state.grid != grid or data.target.grid != grid:
        raise GridMismatchError("state/target grid differs from solver grid")
    if op is None:
        op = StepOperator(space, grid, aff, y)
    dt = grid.dt
    err = state.values - data.target.values
    n = grid.n_steps
    q = np.empty_like(err)
    track = dt * data.alpha1 * (err @ space.stiffness.T)
    q[n] = op.solve(data.alpha2 * (space.mass @ err[n]) + track[n])
    for k in range(n - 1, -1, -1):
        q[k] = op.solve(space.mass @ q[k + 1] + track[k])
    return FieldTrajectory(q, grid)


def phi(space: FemSpace, state: FieldTrajectory, data: ProblemData) -> float:
    """Tracking functional: alpha1/2 |u - target|^2_{L2(V;I)} + alpha2/2 |.|^2_{L2(D)} at T."""
    diff = state - data.target
    terminal = diff.values[-1]
    return (
        0.5 * data.alpha1 * space.inner_L2V_I(diff, diff)
        + 0.5 * data.alpha2 * float(terminal @ (space.mass @ terminal))
    )


# -- trajectory dumps -------------------------------------------------------

def save_trajectory_csv(path, traj: FieldTrajectory, level: int,
                        manifest_hash: str = "", label: str = "") -> None:
    """Write (k, t_k, node_id, value) rows with grid metadata up front."""
    grid = traj.grid
    with open(path, "w") as fh:
        if manifest_hash:
            fh.write(f"# manifest_hash={manifest_hash}\n")
        if label:
            fh.write(f"# label={label}\n")
        fh.write(f"# level={level} n_steps={grid.n_steps} horizon={grid.horizon!r}\n")
        fh.write("k,t,node,value\n")
        for k, t in enumerate(grid.times):
            t = repr(float(t))
            for node, value in enumerate(traj.values[k]):
                fh.write(f"{k},{t},{node},{float(value)!r}\n")


def save_trajectory_npz(path, traj: FieldTrajectory, level: int,
                        manifest_hash: str = "") -> None:
    np.savez_compressed(path, values=traj.values, level=level,
                        n_steps=traj.grid.n_steps, horizon=traj.grid.horizon,
                        manifest_hash=manifest_hash)


def load_trajectory_npz(path) -> tuple[FieldTrajectory, int, str]:
    with np.load(path) as data:
        grid = TimeGrid(int(data["n_steps"]), float(data["horizon"]))
        traj = FieldTrajectory(data["values"], grid)
        return traj, int(data["level"]), str(data["manifest_hash"])
