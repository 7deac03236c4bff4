"""Affine parametric diffusion coefficient a^y = a0 + sum_j y_j psi_j.

The fluctuations are psi_j(x) = amplitude * j^-decay * sin(pi j x1) sin(pi j x2)
around the constant mean field; parameters y live in [-1/2, 1/2]^s.  The
weighted stiffness family A(y) = A0 + sum_j y_j A_j is realized through
per-triangle coefficient integrals so that combining terms is exact and
cheap, with an optional on-disk cache for large truncation dimensions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import Mesh, StiffnessAssembler, edge_midpoints, triangle_integrals

CACHE_FORMAT_VERSION = 1


class EllipticityError(ValueError):
    """The diffusion coefficient is not positive at some quadrature point."""


@dataclass(frozen=True)
class FieldSpec:
    """Parameters of the random diffusion field."""

    decay: float = 1.3        # exponent of the j^-decay fluctuation amplitudes
    mean: float = 1.0
    amplitude: float = 0.5
    beta1: float = 1.0        # scaling entering b_j = amplitude * j^-decay / beta1

    def __post_init__(self):
        if self.decay <= 1.0:
            raise ValueError("decay exponent must be > 1 for a summable field")
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be nonnegative")

    def b(self, s: int) -> np.ndarray:
        """First s terms of the nonincreasing sequence b_j."""
        j = np.arange(1, s + 1, dtype=float)
        return self.amplitude / self.beta1 * j ** (-self.decay)


def fluctuation(spec: FieldSpec, j: int, x: np.ndarray) -> np.ndarray:
    """Evaluate psi_j at points x (shape (..., 2))."""
    if j < 1:
        raise ValueError("fluctuation index j must be >= 1")
    x = np.asarray(x, dtype=float)
    return (
        spec.amplitude * j ** (-spec.decay)
        * np.sin(np.pi * j * x[..., 0]) * np.sin(np.pi * j * x[..., 1])
    )


def validate_param_point(y: np.ndarray) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.ndim != 1:
        raise ValueError("parameter point must be a vector")
    if np.any(np.abs(y) > 0.5 + 1e-14):
        raise ValueError("parameter components must lie in [-1/2, 1/2]")
    return y


def _fluctuation_integrals(mesh: Mesh, spec: FieldSpec, s_max: int,
                           chunk: int = 128) -> np.ndarray:
    """Per-triangle quadrature integrals of psi_j, shape (s_max, n_tri)."""
    mids = edge_midpoints(mesh)                       # (n_tri, 3, 2)
    x1 = mids[..., 0].ravel()
    x2 = mids[..., 1].ravel()
    from .fem import _geometry
    areas, _ = _geometry(mesh)
    out = np.empty((s_max, len(areas)))
    for j0 in range(1, s_max + 1, chunk):
        j = np.arange(j0, min(j0 + chunk, s_max + 1), dtype=float)
        vals = (
            spec.amplitude * j[:, None] ** (-spec.decay)
            * np.sin(np.pi * np.outer(j, x1)) * np.sin(np.pi * np.outer(j, x2))
        )
        vals = vals.reshape(len(j), -1, 3).sum(axis=2)
        out[j0 - 1: j0 - 1 + len(j)] = areas / 3.0 * vals
    return out


class AffineDiffusion:
    """Precomputed stiffness family A(y) = A0 + sum_{j<=s} y_j A_j.

    Combining the family for a given parameter point reproduces direct
    assembly of the coefficient a^y entrywise up to roundoff; zero-padding
    y beyond its length leaves A(y) unchanged.
    """

    def __init__(self, mesh: Mesh, spec: FieldSpec, s_max: int,
                 assembler: StiffnessAssembler | None = None,
                 mean_integrals: np.ndarray | None = None,
                 fluct_integrals: np.ndarray | None = None):
        if s_max < 1:
            raise ValueError("s_max must be >= 1")
        self.mesh = mesh
        self.spec = spec
        self.s_max = s_max
        self.assembler = assembler or StiffnessAssembler(mesh)
        self._c0 = (mean_integrals if mean_integrals is not None
                    else triangle_integrals(mesh, spec.mean))
        self._cj = (fluct_integrals if fluct_integrals is not None
                    else _fluctuation_integrals(mesh, spec, s_max))
        self.b = spec.b(s_max)
        self.A0 = self.assembler.from_triangle_integrals(self._c0)

    def fluctuation_matrix(self, j: int) -> sp.csr_matrix:
        """Stiffness matrix of psi_j (1-based index)."""
        if not 1 <= j <= self.s_max:
            raise ValueError(f"fluctuation index {j} outside 1..{self.s_max}")
        return self.assembler.from_triangle_integrals(self._cj[j - 1])

    def materialize(self, y: np.ndarray) -> sp.csr_matrix:
        """Assemble A(y) for a parameter point of length <= s_max."""
        y = validate_param_point(y)
        if len(y) > self.s_max:
            raise ValueError(f"parameter dimension {len(y)} exceeds s_max {self.s_max}")
        c = self._c0 + y @ self._cj[: len(y)]
        return self.assembler.from_triangle_integrals(c)

    # -- cache -------------------------------------------------------------

    def save_cache(self, path: str) -> None:
        np.savez_compressed(
            path,
            format_version=CACHE_FORMAT_VERSION,
            level=self.mesh.level,
            decay=self.spec.decay,
            mean=self.spec.mean,
            amplitude=self.spec.amplitude,
            beta1=self.spec.beta1,
            s_max=self.s_max,
            mean_integrals=self._c0,
            fluct_integrals=self._cj,
        )

    @classmethod
    def load_cache(cls, path: str, mesh: Mesh, spec: FieldSpec, s_max: int) -> "AffineDiffusion":
        with np.load(path) as data:
            header = {k: data[k].item() for k in
                      ("format_version", "level", "decay", "mean", "amplitude", "beta1", "s_max")}
            expected = dict(format_version=CACHE_FORMAT_VERSION, level=mesh.level,
                            decay=spec.decay, mean=spec.mean,
                            amplitude=spec.amplitude, beta1=spec.beta1, s_max=s_max)
            for key, want in expected.items():
                if header[key] != want:
                    raise ValueError(
                        f"cache header mismatch for '{key}': file has {header[key]}, "
                        f"requested {want}"
                    )
            return cls(mesh, spec, s_max,
                       mean_integrals=data["mean_integrals"],
                       fluct_integrals=data["fluct_integrals"])


def build_affine(mesh: Mesh, spec: FieldSpec, s_max: int,
                 cache_dir: str | None = None) -> AffineDiffusion:
    """Build (or load from cache) the affine stiffness family."""
    if cache_dir is None:
        return AffineDiffusion(mesh, spec, s_max)
    os.makedirs(cache_dir, exist_ok=True)
    tag = f"affine_l{mesh.level}_d{spec.decay}_a{spec.amplitude}_b{spec.beta1}_s{s_max}.npz"
    path = os.path.join(cache_dir, tag)
    if os.path.exists(path):
        return AffineDiffusion.load_cache(path, mesh, spec, s_max)
    aff = AffineDiffusion(mesh, spec, s_max)
    aff.save_cache(path)
    return aff


def uniform_coefficient_bound(spec: FieldSpec, s: int, mesh: Mesh,
                              chunk: int = 256) -> float:
    """Worst-case coefficient minimum over every admissible parameter.

    min over quadrature points of  mean - (1/2) sum_{j<=s} |psi_j(x)|;
    a positive value certifies ellipticity for all |y_j| <= 1/2 at once.
    """
    mids = edge_midpoints(mesh).reshape(-1, 2)
    drop = np.zeros(len(mids))
    for j0 in range(1, s + 1, chunk):
        j = np.arange(j0, min(j0 + chunk, s + 1), dtype=float)
        block = (
            spec.amplitude * j[:, None] ** (-spec.decay)
            * np.sin(np.pi * np.outer(j, mids[:, 0]))
            * np.sin(np.pi * np.outer(j, mids[:, 1]))
        )
        drop += np.abs(block).sum(axis=0)
    return float(spec.mean - 0.5 * drop.max())


def coefficient_range(spec: FieldSpec, s: int, y: np.ndarray, mesh: Mesh,
                      chunk: int = 256) -> tuple[float, float]:
    """Extremal values of a^y over the quadrature points; guards ellipticity.

    Raises EllipticityError naming the offending point when min <= 0.
    """
    y = validate_param_point(y)
    if len(y) != s:
        raise ValueError(f"parameter point has length {len(y)}, expected s={s}")
    mids = edge_midpoints(mesh).reshape(-1, 2)
    vals = np.full(len(mids), spec.mean)
    for j0 in range(1, s + 1, chunk):
        j = np.arange(j0, min(j0 + chunk, s + 1), dtype=float)
        block = (
            spec.amplitude * j[:, None] ** (-spec.decay)
            * np.sin(np.pi * np.outer(j, mids[:, 0]))
            * np.sin(np.pi * np.outer(j, mids[:, 1]))
        )
        vals += y[j0 - 1: j0 - 1 + len(j)] @ block
    lo, hi = float(vals.min()), float(vals.max())
    if lo <= 0.0:
        worst = mids[int(np.argmin(vals))]
        raise EllipticityError(
            f"coefficient minimum {lo:.4e} <= 0 at quadrature point "
            f"({worst[0]:.4f}, {worst[1]:.4f})"
        )
    return lo, hi
