"""Lattice-sampled risk measures of the tracking functional and gradients.

For a control with Riesz preimage w, the sampled objective is

    expected:  (1/n) sum_i Phi_i(w)                + alpha3/2 |w|^2
    entropic:  (1/theta) log((1/n) sum_i e^{theta Phi_i(w)}) + alpha3/2 |w|^2

and the gradient in the w-representation averages the per-sample adjoint
trajectories, uniformly or softmax-weighted:

    expected:  (1/n) sum_i q_i + alpha3 w
    entropic:  S/T + alpha3 w,   S = (1/n) sum_i e^{theta Phi_i} q_i,
                                 T = (1/n) sum_i e^{theta Phi_i}.

All entropic accumulations run in shifted (log-sum-exp) form; the common
factor cancels in the quotient S/T so no accuracy is lost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FemSpace, FieldTrajectory, SolverError, TimeGrid
from .field import AffineDiffusion, EllipticityError, coefficient_range, uniform_coefficient_bound
from .lattice import GeneratingVector, lattice_points
from .parabolic import ControlFunction, ProblemData, StepOperator, phi, solve_adjoint, solve_state

# keep n * n_dof below this when caching per-sample factorizations
_CACHE_BUDGET = 300_000


@dataclass
class RiskConfig:
    """Risk-measure kind and the lattice rule used to sample it."""

    kind: str                     # "expected" | "entropic"
    gv: GeneratingVector
    shift: np.ndarray
    s: int
    theta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("expected", "entropic"):
            raise ValueError("risk kind must be 'expected' or 'entropic'")
        if self.kind == "entropic" and self.theta <= 0:
            raise ValueError("entropic risk needs theta > 0")
        if self.s > self.gv.s:
            raise ValueError("truncation dimension exceeds the lattice dimension")


@dataclass
class RiskAccumulators:
    """Raw lattice sums for the convergence studies."""

    T_sn: float
    S_sn: FieldTrajectory
    phis: np.ndarray

    def __post_init__(self):
        if not self.T_sn >= 1.0 - 1e-9:
            raise ValueError(f"T accumulator {self.T_sn} < 1; Phi should be nonnegative")


@dataclass
class SampleAverages:
    """Single-sweep lattice averages used by the truncation / rms studies."""

    mean_state: FieldTrajectory
    mean_adjoint: FieldTrajectory
    S: FieldTrajectory
    T: float
    phis: np.ndarray


class RiskEstimator:
    """Sample-average objective/gradient over a frozen shifted lattice.

    The point set is fixed at construction, so the estimator is a smooth
    deterministic function of the control; per-sample factorizations are
    cached when the memory budget allows (useful when the same points are
    revisited, e.g. inside a descent run).
    """

    def __init__(self, space: FemSpace, grid: TimeGrid, aff: AffineDiffusion,
                 data: ProblemData, cfg: RiskConfig, cache_operators: bool | None = None):
        self.space = space
        self.grid = grid
        self.aff = aff
        self.data = data
        self.cfg = cfg
        self.points = lattice_points(cfg.gv, cfg.shift)[:, : cfg.s]
        if cache_operators is None:
            cache_operators = len(self.points) * space.n_dof <= _CACHE_BUDGET
        self._ops = [None] * len(self.points) if cache_operators else None
        # one worst-case bound certifies every sample at once; only when it
        # is inconclusive do the samples get individual ellipticity checks
        self._uniformly_elliptic = (
            uniform_coefficient_bound(aff.spec, cfg.s, space.mesh) > 0.0)

    @property
    def n(self) -> int:
        return len(self.points)

    def _op(self, i: int) -> StepOperator:
        if self._ops is not None and self._ops[i] is not None:
            return self._ops[i]
        try:
            if not self._uniformly_elliptic:
                coefficient_range(self.aff.spec, self.cfg.s, self.points[i],
                                  self.space.mesh)
            op = StepOperator(self.space, self.grid, self.aff, self.points[i])
        except (SolverError, EllipticityError) as exc:
            raise type(exc)(f"sample {i} (y = {self.points[i]}): {exc}") from exc
        if self._ops is not None:
            self._ops[i] = op
        return op

    def _state(self, i: int, ctrl: ControlFunction, op=None) -> FieldTrajectory:
        op = op or self._op(i)
        return solve_state(self.space, self.grid, self.aff, self.points[i],
                           ctrl, self.data.u0, op)

    # -- building blocks -------------------------------------------------

    def phi_samples(self, ctrl: ControlFunction) -> np.ndarray:
        """Tracking-functional values at every lattice point (state solves only)."""
        return np.array([phi(self.space, self._state(i, ctrl), self.data)
                         for i in range(self.n)])

    def penalty(self, ctrl: ControlFunction) -> float:
        w = self._require_w(ctrl)
        return 0.5 * self.data.alpha3 * self.space.inner_L2V_I(w, w)

    def _require_w(self, ctrl: ControlFunction) -> FieldTrajectory:
        if ctrl.w is None:
            raise ValueError("objective/gradient need the control's Riesz preimage")
        return ctrl.w

    def risk_value(self, phis: np.ndarray) -> float:
        """Risk measure of sampled tracking values (no penalty term)."""
        if self.cfg.kind == "expected":
            return float(np.mean(phis))
        t = self.cfg.theta
        m = float(np.max(t * phis))
        return (m + np.log(np.mean(np.exp(t * phis - m)))) / t

    def sample_weights(self, phis: np.ndarray) -> np.ndarray:
        """Convex-combination weights of the per-sample adjoints."""
        if self.cfg.kind == "expected":
            return np.full(len(phis), 1.0 / len(phis))
        e = np.exp(self.cfg.theta * (phis - np.max(phis)))
        w = e / e.sum()
        assert np.all(w >= 0.0) and abs(w.sum() - 1.0) < 1e-12
        return w

    # -- public surface ---------------------------------------------------

    def objective(self, ctrl: ControlFunction) -> float:
        return self.risk_value(self.phi_samples(ctrl)) + self.penalty(ctrl)

    def gradient(self, ctrl: ControlFunction, diagnostics_path=None) -> FieldTrajectory:
        """Risk gradient in the w-representation (rows 1..n_steps carry it)."""
        w = self._require_w(ctrl)
        phis = np.empty(self.n)
        acc = np.zeros((self.grid.n_steps + 1, self.space.n_dof))
        shift = -np.inf    # running max of theta * Phi for the entropic weights
        norm = 0.0
        theta = self.cfg.theta if self.cfg.kind == "entropic" else 0.0
        for i in range(self.n):
            op = self._op(i)
            u = self._state(i, ctrl, op)
            q = solve_adjoint(self.space, self.grid, self.aff, self.points[i],
                              u, self.data, op)
            phis[i] = phi(self.space, u, self.data)
            e = theta * phis[i]
            if e > shift:
                scale = np.exp(shift - e) if np.isfinite(shift) else 0.0
                acc *= scale
                norm *= scale
                shift = e
            wgt = np.exp(e - shift)
            acc += wgt * q.values
            norm += wgt
        acc /= norm
        acc[0] = 0.0
        grad = FieldTrajectory(acc + self.data.alpha3 * w.values, self.grid)
        grad.values[0] = 0.0
        if diagnostics_path is not None:
            self._dump_diagnostics(diagnostics_path, phis)
        return grad

    def accumulate(self, ctrl: ControlFunction) -> RiskAccumulators:
        """Raw T and S sums (entropic weights at cfg.theta; guards overflow)."""
        av = self.averages(ctrl)
        return RiskAccumulators(T_sn=av.T, S_sn=av.S, phis=av.phis)

    def averages(self, ctrl: ControlFunction, theta: float | None = None) -> SampleAverages:
        """One sweep computing mean state/adjoint and the raw S, T sums."""
        theta = self.cfg.theta if theta is None else theta
        n = self.n
        phis = np.empty(n)
        shape = (self.grid.n_steps + 1, self.space.n_dof)
        sum_u = np.zeros(shape)
        sum_q = np.zeros(shape)
        sum_eq = np.zeros(shape)
        sum_e = 0.0
        shift = -np.inf
        for i in range(n):
            op = self._op(i)
            u = self._state(i, ctrl, op)
            q = solve_adjoint(self.space, self.grid, self.aff, self.points[i],
                              u, self.data, op)
            phis[i] = phi(self.space, u, self.data)
            sum_u += u.values
            sum_q += q.values
            e = theta * phis[i]
            if e > shift:
                scale = np.exp(shift - e) if np.isfinite(shift) else 0.0
                sum_eq *= scale
                sum_e *= scale
                shift = e
            wgt = np.exp(e - shift)
            sum_eq += wgt * q.values
            sum_e += wgt
        if shift > 700.0:
            raise OverflowError(
                f"theta * max(Phi) = {shift:.1f} overflows the raw accumulators; "
                "use the gradient quotient instead"
            )
        raw = np.exp(shift)
        return SampleAverages(
            mean_state=FieldTrajectory(sum_u / n, self.grid),
            mean_adjoint=FieldTrajectory(sum_q / n, self.grid),
            S=FieldTrajectory(raw * sum_eq / n, self.grid),
            T=float(raw * sum_e / n),
            phis=phis,
        )

    def _dump_diagnostics(self, path, phis: np.ndarray) -> None:
        weights = self.sample_weights(phis)
        with open(path, "w") as fh:
            fh.write("i,phi,weight\n")
            for i, (p, w) in enumerate(zip(phis, weights)):
                fh.write(f"{i},{float(p)!r},{float(w)!r}\n")


def objective(space, grid, aff, ctrl, data, cfg) -> float:
    return RiskEstimator(space, grid, aff, data, cfg, cache_operators=False).objective(ctrl)


def gradient(space, grid, aff, ctrl, data, cfg) -> FieldTrajectory:
    return RiskEstimator(space, grid, aff, data, cfg, cache_operators=False).gradient(ctrl)


def accumulate_S_T(space, grid, aff, ctrl, data, cfg) -> RiskAccumulators:
    return RiskEstimator(space, grid, aff, data, cfg, cache_operators=False).accumulate(ctrl)
