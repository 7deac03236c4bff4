"""Projected gradient descent with a projected Armijo backtracking rule.

Everything operates in the w-representation: the feasible set is the
closed ball of radius r in the L2(V;I) norm of the Riesz preimage (equal
to the dual norm of the control itself), and the projection scales back
onto the ball.  The lattice rule behind the objective stays frozen for
the whole run, so the sampled objective is a fixed deterministic function
and accepted iterations decrease it monotonically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import FemSpace, FieldTrajectory


class LineSearchError(RuntimeError):
    def __init__(self, message, trial_log):
        super().__init__(message)
        self.trial_log = trial_log


@dataclass
class DescentConfig:
    eta0: float = 100.0
    gamma: float = 1e-4          # sufficient-decrease constant
    beta: float = 0.1            # backtracking factor
    tol: float | None = None     # None -> 1e-6 * (1 + initial stationarity)
    max_iters: int = 25
    radius: float | None = None  # feasible-ball radius; None = unconstrained
    eta_min: float = 1e-14

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0 or not 0.0 < self.gamma < 1.0:
            raise ValueError("beta and gamma must lie in (0, 1)")
        if self.eta0 <= 0.0:
            raise ValueError("eta0 must be positive")
        if self.radius is not None and self.radius <= 0.0:
            raise ValueError("ball radius must be positive")


@dataclass
class DescentTrace:
    """Per-iteration log; row 0 records the starting point (eta = nan)."""

    iters: list = field(default_factory=list)
    J: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    stationarity: list = field(default_factory=list)
    control_norm: list = field(default_factory=list)

    def append(self, it, J, eta, stat, norm):
        self.iters.append(it)
        self.J.append(J)
        self.eta.append(eta)
        self.stationarity.append(stat)
        self.control_norm.append(norm)


def project(space: FemSpace, w: FieldTrajectory, radius: float | None) -> FieldTrajectory:
    """Scale w back onto the radius-ball of the L2(V;I) norm (identity if None)."""
    if radius is None:
        return w
    norm = space.norm_L2V_I(w)
    if norm <= radius or norm == 0.0:
        return w
    return (radius / norm) * w


def armijo_step(space: FemSpace, w: FieldTrajectory, grad: FieldTrajectory,
                J_w: float, objective, cfg: DescentConfig):
    """Backtrack from eta0 until the projected step decreases sufficiently.

    Accepts the first eta with
        J(P(w - eta g)) - J(w) <= -(gamma/eta) |w - P(w - eta g)|^2,
    returning (eta, trial point, its objective value).
    """
    eta = cfg.eta0
    trial_log = []
    while True:
        w_trial = project(space, w - eta * grad, cfg.radius)
        J_trial = objective(w_trial)
        move = space.norm_L2V_I(w - w_trial)
        trial_log.append((eta, J_trial, move))
        if J_trial - J_w <= -(cfg.gamma / eta) * move ** 2:
            return eta, w_trial, J_trial
        eta *= cfg.beta
        if eta < cfg.eta_min:
            raise LineSearchError(
                f"step size underflow below {cfg.eta_min}; no sufficient decrease",
                trial_log,
            )


def descend(space: FemSpace, w0: FieldTrajectory, objective, gradient,
            cfg: DescentConfig):
    """Run projected gradient descent from w0; returns (w, DescentTrace).

    ``objective`` and ``gradient`` map a trajectory to the sampled risk
    objective and its w-representation gradient.  Iterations stop at the
    stationarity tolerance or after max_iters accepted steps.
    """
    w = project(space, w0, cfg.radius)
    trace = DescentTrace()
    J_w = objective(w)
    grad = gradient(w)
    stat = space.norm_L2V_I(w - project(space, w - grad, cfg.radius))
    tol = cfg.tol if cfg.tol is not None else 1e-6 * (1.0 + stat)
    trace.append(0, J_w, np.nan, stat, space.norm_L2V_I(w))
    for it in range(1, cfg.max_iters + 1):
        if stat <= tol:
            break
        eta, w, J_w = armijo_step(space, w, grad, J_w, objective, cfg)
        grad = gradient(w)
        stat = space.norm_L2V_I(w - project(space, w - grad, cfg.radius))
        trace.append(it, J_w, eta, stat, space.norm_L2V_I(w))
    return w, trace
