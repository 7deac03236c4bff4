"""Randomly shifted rank-1 lattice rules with CBC-constructed vectors.

The generating vector is chosen component by component to minimize the
shift-averaged worst-case error in the unanchored weighted Sobolev space
with product-and-order-dependent (POD) weights

    gamma_u = Gamma_{|u|} * prod_{j in u} beta_j,
    Gamma_l = ((l + r1)!)^{2/(1+lambda)},
    beta_j  = (r2 * rho_j / sqrt(c_lambda))^{2/(1+lambda)},
    c_lambda = 2 zeta(2 lambda) / (2 pi^2)^lambda,

with r1 = 2, r2 = e, and rho_j the decay sequence of the diffusion field.
The squared error of a vector g with n points is

    e^2 = sum_{0 != u, |u| <= order_cap} gamma_u (1/n) sum_i prod_{j in u}
          B2({i g_j / n}),          B2(x) = x^2 - x + 1/6,

evaluated with an order recursion in O(n s L); subset enumeration is kept
as an oracle for small dimensions.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, zeta

R1_ORDER = 2
LOG_R2 = 1.0          # r2 = e
_TIE_RTOL = 1e-12


def bernoulli2(x):
    """Second Bernoulli polynomial on [0, 1)."""
    x = np.asarray(x, dtype=float)
    return x * x - x + 1.0 / 6.0


def is_prime_power(n: int) -> bool:
    if n < 2:
        return False
    for p in range(2, int(math.isqrt(n)) + 1):
        if n % p == 0:
            while n % p == 0:
                n //= p
            return n == 1
    return True  # n itself prime


def choose_lambda(p: float, delta: float = 0.05) -> float:
    """Worst-case-error exponent lambda from the summability exponent p."""
    if not 0.0 < p < 1.0:
        raise ValueError("summability exponent p must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    lam = 1.0 / (2.0 - 2.0 * delta) if p <= 2.0 / 3.0 else p / (2.0 - p)
    if not 0.5 < lam <= 1.0:
        raise ValueError(f"lambda = {lam:.4f} outside (1/2, 1]; decrease delta")
    return lam


@dataclass
class WeightSpec:
    """POD weight family in log-domain storage."""

    lam: float
    rho: np.ndarray
    order_cap: int = 40
    log_order: np.ndarray = field(init=False)    # log Gamma_l, l = 0..order_cap
    log_product: np.ndarray = field(init=False)  # log beta_j

    def __post_init__(self):
        if self.order_cap < 1:
            raise ValueError("order_cap must be >= 1")
        if not 0.5 < self.lam <= 1.0:
            raise ValueError("lambda must lie in (1/2, 1]")
        self.rho = np.asarray(self.rho, dtype=float)
        if np.any(self.rho <= 0) or np.any(np.diff(self.rho) > 1e-14):
            raise ValueError("rho must be positive and nonincreasing")
        expo = 2.0 / (1.0 + self.lam)
        ell = np.arange(self.order_cap + 1)
        self.log_order = expo * gammaln(ell + R1_ORDER + 1)
        self.log_product = expo * (LOG_R2 + np.log(self.rho) - 0.5 * np.log(self.zeta_factor))

    @property
    def zeta_factor(self) -> float:
        """c_lambda = 2 zeta(2 lambda) / (2 pi^2)^lambda."""
        return 2.0 * zeta(2.0 * self.lam, 1) / (2.0 * np.pi ** 2) ** self.lam

    @property
    def order_factors(self) -> np.ndarray:
        return np.exp(self.log_order)

    @property
    def product_factors(self) -> np.ndarray:
        return np.exp(self.log_product)

    def log_gamma(self, u) -> float:
        """log gamma_u for a subset of 1-based coordinate indices."""
        u = list(u)
        if not u:
            return 0.0
        idx = np.asarray(u, dtype=int) - 1
        return float(self.log_order[len(u)] + self.log_product[idx].sum())


def pod_weights(b, lam: float, order_cap: int = 40) -> WeightSpec:
    """Weight family with rho_j = b_j (the field's decay sequence)."""
    return WeightSpec(lam=lam, rho=np.asarray(b, dtype=float), order_cap=order_cap)


@dataclass(frozen=True)
class GeneratingVector:
    n: int
    g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "g", np.asarray(self.g, dtype=np.int64))
        if self.n < 2:
            raise ValueError("need n >= 2 lattice points")
        if np.any((self.g < 1) | (self.g >= self.n)):
            raise ValueError("generating vector components must lie in [1, n-1]")
        if any(math.gcd(int(gj), self.n) != 1 for gj in self.g):
            raise ValueError("generating vector components must be coprime with n")
        if self.n % 2 == 0 and np.any(self.g % 2 == 0):
            raise ValueError("components must be odd when n is a power of 2")

    @property
    def s(self) -> int:
        return len(self.g)


def lattice_points(gv: GeneratingVector, shift: np.ndarray) -> np.ndarray:
    """Shifted lattice points frac(i g / n + shift) - 1/2, i = 1..n, in [-1/2, 1/2)^s."""
    shift = np.asarray(shift, dtype=float)
    if shift.shape != (gv.s,):
        raise ValueError("shift dimension must match the generating vector")
    if np.any((shift < 0.0) | (shift >= 1.0)):
        raise ValueError("shift components must lie in [0, 1)")
    i = np.arange(1, gv.n + 1, dtype=np.int64)
    frac = (np.outer(i, gv.g) % gv.n) / gv.n
    return (frac + shift) % 1.0 - 0.5


@dataclass(frozen=True)
class ShiftSet:
    """R uniform shifts in [0,1)^s from an explicitly seeded counter-based RNG."""

    R: int
    s: int
    seed: int
    shifts: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("need at least one shift")
        rng = np.random.Generator(np.random.Philox(key=self.seed))
        object.__setattr__(self, "shifts", rng.random((self.R, self.s)))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<3q", self.R, self.s, self.seed))
            fh.write(self.shifts.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ShiftSet":
        with open(path, "rb") as fh:
            R, s, seed = struct.unpack("<3q", fh.read(24))
            data = np.frombuffer(fh.read(), dtype="<f8").reshape(R, s)
        out = cls(R=R, s=s, seed=seed)
        if not np.array_equal(out.shifts, data):
            raise ValueError("shift file does not match its recorded seed")
        return out


# -- worst-case error ---------------------------------------------------------


def _b2_columns(gv: GeneratingVector) -> np.ndarray:
    """B2({i g_j / n}) for i = 1..n, all components; shape (s, n)."""
    i = np.arange(1, gv.n + 1, dtype=np.int64)
    x = (gv.g[:, None] * i[None, :]) % gv.n
    return bernoulli2(x / gv.n)


def shift_avg_wce_sq(gv: GeneratingVector, weights: WeightSpec) -> float:
    """Squared shift-averaged worst-case error via the POD order recursion."""
    if len(weights.rho) < gv.s:
        raise ValueError("weight family covers fewer dimensions than the vector")
    cols = _b2_columns(gv)
    beta = weights.product_factors
    cap = min(weights.order_cap, gv.s)
    P = np.zeros((cap + 1, gv.n))
    P[0] = 1.0
    for d in range(gv.s):
        v = beta[d] * cols[d]
        for ell in range(min(cap, d + 1), 0, -1):
            P[ell] += v * P[ell - 1]
    gammas = weights.order_factors[1: cap + 1]
    return float(gammas @ P[1:].sum(axis=1) / gv.n)


def wce_sq_enumerated(gv: GeneratingVector, weights: WeightSpec) -> float:
    """Subset-enumeration oracle for the squared worst-case error (small s only)."""
    if gv.s > 12:
        raise ValueError("enumeration oracle is exponential; use s <= 12")
    cols = _b2_columns(gv)
    total = 0.0
    for order in range(1, min(weights.order_cap, gv.s) + 1):
        for u in itertools.combinations(range(gv.s), order):
            gamma = math.exp(weights.log_gamma([j + 1 for j in u]))
            prod = np.ones(gv.n)
            for j in u:
                prod = prod * cols[j]
            total += gamma * prod.mean()
    return total


def _tolerant_argmin(candidates: np.ndarray, scores: np.ndarray) -> int:
    """Smallest candidate whose score ties the minimum within relative noise."""
    best = scores.min()
    tol = _TIE_RTOL * max(abs(best), 1.0)
    return int(candidates[np.flatnonzero(scores <= best + tol)[0]])


def _candidates(n: int) -> np.ndarray:
    if n % 2 == 0:
        return np.arange(1, n, 2, dtype=np.int64)
    # general prime power: units mod the prime base
    p = next(q for q in range(2, n + 1) if n % q == 0)
    cand = np.arange(1, n, dtype=np.int64)
    return cand[cand % p != 0]


@dataclass
class CbcResult:
    gv: GeneratingVector
    e2_by_dim: np.ndarray


def cbc_construct(n: int, s: int, weights: WeightSpec,
                  chunk: int = 256) -> CbcResult:
    """Greedy component-by-component minimization of the worst-case error.

    Candidates are the residues coprime with n (odd residues for n = 2^m);
    ties are broken towards the smallest candidate.  Cost is O(n^2 L / 2)
    per component in this plain mode.
    """
    if not is_prime_power(n):
        raise ValueError("number of lattice points must be a prime power")
    if s < 1:
        raise ValueError("dimension must be >= 1")
    if len(weights.rho) < s:
        raise ValueError("weight family covers fewer dimensions than requested")
    cand = _candidates(n)
    b2_table = bernoulli2(np.arange(n) / n)
    i = np.arange(1, n + 1, dtype=np.int64)
    beta = weights.product_factors
    gammas = weights.order_factors
    cap = min(weights.order_cap, s)
    P = np.zeros((cap + 1, n))
    P[0] = 1.0
    g = np.empty(s, dtype=np.int64)
    e2_by_dim = np.empty(s)
    for d in range(s):
        # weight of each lattice index against a new-dimension B2 column
        W = np.zeros(n)
        for ell in range(1, min(cap, d + 1) + 1):
            W += gammas[ell] * P[ell - 1]
        scores = np.empty(len(cand))
        for c0 in range(0, len(cand), chunk):
            block = cand[c0: c0 + chunk]
            idx = (block[:, None] * i[None, :]) % n
            scores[c0: c0 + len(block)] = b2_table[idx] @ W
        g[d] = _tolerant_argmin(cand, scores)
        # fold the accepted component into the state arrays
        v = beta[d] * b2_table[(g[d] * i) % n]
        for ell in range(min(cap, d + 1), 0, -1):
            P[ell] += v * P[ell - 1]
        e2_by_dim[d] = gammas[1: cap + 1] @ P[1: cap + 1].sum(axis=1) / n
    return CbcResult(GeneratingVector(n, g), e2_by_dim)


def cbc_construct_enumerated(n: int, s: int, weights: WeightSpec) -> CbcResult:
    """Oracle CBC scoring every candidate by subset enumeration (small n, s)."""
    if not is_prime_power(n):
        raise ValueError("number of lattice points must be a prime power")
    cand = _candidates(n)
    g: list[int] = []
    e2_by_dim = np.empty(s)
    for d in range(s):
        scores = np.array([
            wce_sq_enumerated(GeneratingVector(n, np.array(g + [z])), weights)
            for z in cand
        ])
        g.append(_tolerant_argmin(cand, scores))
        e2_by_dim[d] = wce_sq_enumerated(GeneratingVector(n, np.array(g)), weights)
    return CbcResult(GeneratingVector(n, np.array(g)), e2_by_dim)


# -- shift averaging ----------------------------------------------------------


def rms_over_shifts(results, norm=None):
    """Mean estimate and root-mean-square error over R >= 2 random shifts.

    ``results`` is a sequence of per-shift estimates (scalars or arrays);
    ``norm`` maps a deviation to a scalar (default: flat Euclidean norm).
    """
    if len(results) < 2:
        raise ValueError("need at least two shifts for an error estimate")
    R = len(results)
    arrays = [np.asarray(r, dtype=float) for r in results]
    mean = sum(arrays) / R
    if norm is None:
        norm = lambda d: float(np.sqrt(np.sum(np.square(d))))
    sq = sum(norm(mean - a) ** 2 for a in arrays)
    return mean, float(np.sqrt(sq / (R * (R - 1))))


# -- file formats -------------------------------------------------------------


def save_vector(path, gv: GeneratingVector) -> None:
    """Plain-text vector file: first line "n s", then one component per line."""
    with open(path, "w") as fh:
        fh.write(f"{gv.n} {gv.s}\n")
        for gj in gv.g:
            fh.write(f"{int(gj)}\n")


def load_vector(path) -> GeneratingVector:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise ValueError("vector file must start with a line 'n s'")
        n, s = int(head[0]), int(head[1])
        g = [int(fh.readline()) for _ in range(s)]
    return GeneratingVector(n, np.asarray(g))
