"""P1 finite elements on the unit square.

Uniform right-triangle meshes with homogeneous Dirichlet boundary
conditions handled by elimination: all assembled matrices act on the
interior unknowns only (``full=True`` variants exist for testing).
Space-time trajectories are stored as ``(n_steps + 1, n_dof)`` arrays of
nodal coefficients, and every dual-space object (a source/control in
H^-1) is represented by its Riesz preimage, so dual norms reduce to
stiffness-weighted sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class GridMismatchError(ValueError):
    """Trajectory / mesh / time grid dimensions do not agree."""


class SolverError(RuntimeError):
    """A sparse solve failed or left a large residual."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, horizon] into n_steps implicit-Euler steps."""

    n_steps: int
    horizon: float = 1.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


@dataclass
class Mesh:
    """Uniform triangulation of the unit square at spacing h = 2^-level.

    Nodes are ordered row-major by y then x; each grid cell is split along
    the (+1,+1) diagonal, giving 2*4^level triangles of positive area.
    """

    level: int
    nodes: np.ndarray          # (n_nodes, 2)
    triangles: np.ndarray      # (n_tri, 3) node indices, CCW
    interior: np.ndarray       # interior node ids, ascending
    interior_index: np.ndarray  # global node -> interior dof, -1 on boundary
    n_dof: int = field(init=False)

    def __post_init__(self):
        self.n_dof = len(self.interior)


def build_mesh(level: int) -> Mesh:
    """Build the level-``level`` mesh (h = 2^-level, n_dof = (2^level - 1)^2)."""
    if level < 1:
        raise ValueError("level must be >= 1 (level 0 has no interior node)")
    m = 2 ** level
    xs = np.linspace(0.0, 1.0, m + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    def nid(ix, iy):
        return iy * (m + 1) + ix

    tris = []
    for iy in range(m):
        for ix in range(m):
            v00 = nid(ix, iy)
            v10 = nid(ix + 1, iy)
            v01 = nid(ix, iy + 1)
            v11 = nid(ix + 1, iy + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    triangles = np.asarray(tris, dtype=np.int64)

    on_boundary = (
        (nodes[:, 0] == 0.0) | (nodes[:, 0] == 1.0)
        | (nodes[:, 1] == 0.0) | (nodes[:, 1] == 1.0)
    )
    interior = np.flatnonzero(~on_boundary)
    interior_index = np.full(len(nodes), -1, dtype=np.int64)
    interior_index[interior] = np.arange(len(interior))
    return Mesh(level, nodes, triangles, interior, interior_index)


def _geometry(mesh: Mesh):
    """Per-triangle areas and constant basis gradients.

    Returns (areas, grads) with grads of shape (n_tri, 3, 2) such that
    grads[t, a] is the gradient of the hat function of local vertex a.
    """
    p = mesh.nodes[mesh.triangles]          # (n_tri, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    areas = 0.5 * det
    if np.any(areas <= 0.0):
        raise ValueError("mesh contains a non-positively-oriented triangle")
    # grad phi_a = rot90(opposite edge) / (2 * area)
    b = np.stack([p[:, 1, 1] - p[:, 2, 1],
                  p[:, 2, 1] - p[:, 0, 1],
                  p[:, 0, 1] - p[:, 1, 1]], axis=1)
    c = np.stack([p[:, 2, 0] - p[:, 1, 0],
                  p[:, 0, 0] - p[:, 2, 0],
                  p[:, 1, 0] - p[:, 0, 0]], axis=1)
    grads = np.stack([b, c], axis=2) / det[:, None, None]
    return areas, grads


def edge_midpoints(mesh: Mesh) -> np.ndarray:
    """Quadrature nodes of the 3-point edge-midpoint rule, (n_tri, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    return 0.5 * (p + np.roll(p, -1, axis=1))


def triangle_integrals(mesh: Mesh, coeff) -> np.ndarray:
    """Integral of ``coeff`` over each triangle via the edge-midpoint rule.

    The rule is exact for per-triangle quadratic integrands, hence exact
    for P1 products with affine coefficients.  ``coeff`` is a scalar or a
    callable mapping an (npts, 2) array of points to values.
    """
    areas, _ = _geometry(mesh)
    if np.isscalar(coeff):
        return areas * float(coeff)
    mids = edge_midpoints(mesh)
    vals = np.asarray(coeff(mids.reshape(-1, 2)), dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(vals)):
        raise ValueError("coefficient is not finite at a quadrature point")
    return areas / 3.0 * vals.sum(axis=1)


def _local_entries(mesh: Mesh):
    """COO scaffolding shared by every stiffness assembly on this mesh.

    Returns (rows, cols, gdots, tri_of_entry): for each of the 9 local
    pairs per triangle, the global node pair, the constant grad-dot value
    and the owning triangle.  Entry value = (integral of coeff over the
    triangle) * gdot.
    """
    _, grads = _geometry(mesh)
    gdots = np.einsum("tad,tbd->tab", grads, grads)     # (n_tri, 3, 3)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n_tri = len(tri)
    tri_of_entry = np.repeat(np.arange(n_tri), 9)
    return rows, cols, gdots.ravel(), tri_of_entry


def _restrict(mat: sp.csr_matrix, mesh: Mesh) -> sp.csr_matrix:
    keep = mesh.interior
    return mat[np.ix_(keep, keep)].tocsr()


def assemble_mass(mesh: Mesh, full: bool = False) -> sp.csr_matrix:
    """Consistent P1 mass matrix (exact element integrals)."""
    areas, _ = _geometry(mesh)
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    vals = areas[:, None, None] * local[None, :, :]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = len(mesh.nodes)
    mat = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return mat if full else _restrict(mat, mesh)


def assemble_stiffness(mesh: Mesh, coeff=1.0, full: bool = False) -> sp.csr_matrix:
    """Weighted stiffness matrix K(coeff)_ab = sum_T (int_T coeff) grad a . grad b."""
    rows, cols, gdots, tri_of_entry = _local_entries(mesh)
    c = triangle_integrals(mesh, coeff)
    vals = c[tri_of_entry] * gdots
    n = len(mesh.nodes)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return mat if full else _restrict(mat, mesh)


class StiffnessAssembler:
    """Maps per-triangle coefficient integrals straight to interior CSR data.

    All stiffness matrices on one mesh share a sparsity pattern; this
    precomputes the scatter so that assembling K(coeff) from the vector of
    triangle integrals is a single sparse matvec.  Used to realize affine
    coefficient families without storing one matrix per term.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        rows, cols, gdots, tri_of_entry = _local_entries(mesh)
        ir = mesh.interior_index[rows]
        ic = mesh.interior_index[cols]
        keep = (ir >= 0) & (ic >= 0)
        ir, ic, gdots, tri_of_entry = ir[keep], ic[keep], gdots[keep], tri_of_entry[keep]
        nd = mesh.n_dof
        pattern = sp.coo_matrix((np.ones(len(ir)), (ir, ic)), shape=(nd, nd)).tocsr()
        pattern.sort_indices()
        self.indices = pattern.indices.copy()
        self.indptr = pattern.indptr.copy()
        self.nnz = pattern.nnz
        # CSR slot of each COO entry: binary search inside its row
        slots = np.empty(len(ir), dtype=np.int64)
        for e in range(len(ir)):
            lo, hi = self.indptr[ir[e]], self.indptr[ir[e] + 1]
            slots[e] = lo + np.searchsorted(self.indices[lo:hi], ic[e])
        n_tri = len(mesh.triangles)
        self.scatter = sp.coo_matrix(
            (gdots, (slots, tri_of_entry)), shape=(self.nnz, n_tri)
        ).tocsr()

    def from_triangle_integrals(self, c: np.ndarray) -> sp.csr_matrix:
        data = self.scatter @ np.asarray(c, dtype=float)
        return sp.csr_matrix(
            (data, self.indices, self.indptr),
            shape=(self.mesh.n_dof, self.mesh.n_dof),
        )


@dataclass
class FieldTrajectory:
    """Time-indexed nodal coefficients; row k holds the values at t_k."""

    values: np.ndarray          # (n_steps + 1, n_dof)
    grid: TimeGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.n_steps + 1:
            raise GridMismatchError(
                f"trajectory shape {self.values.shape} does not match "
                f"{self.grid.n_steps + 1} time levels"
            )

    def copy(self) -> "FieldTrajectory":
        return FieldTrajectory(self.values.copy(), self.grid)

    def _check(self, other: "FieldTrajectory"):
        if self.grid != other.grid or self.values.shape != other.values.shape:
            raise GridMismatchError("trajectories live on different grids")

    def __add__(self, other):
        self._check(other)
        return FieldTrajectory(self.values + other.values, self.grid)

    def __sub__(self, other):
        self._check(other)
        return FieldTrajectory(self.values - other.values, self.grid)

    def __mul__(self, scalar):
        return FieldTrajectory(self.values * float(scalar), self.grid)

    __rmul__ = __mul__


def zero_trajectory(grid: TimeGrid, n_dof: int) -> FieldTrajectory:
    return FieldTrajectory(np.zeros((grid.n_steps + 1, n_dof)), grid)


class FemSpace:
    """Interior P1 space with cached mass/stiffness matrices and norms.

    The unweighted stiffness matrix realizes the Riesz map from the
    interior H^1_0 space to its dual, so elements of the dual are handled
    through their Riesz preimages throughout.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.mass = assemble_mass(mesh)
        self.stiffness = assemble_stiffness(mesh, 1.0)
        self._k1_lu = None

    @property
    def n_dof(self) -> int:
        return self.mesh.n_dof

    def _lu(self):
        if self._k1_lu is None:
            self._k1_lu = spla.splu(self.stiffness.tocsc())
        return self._k1_lu

    def riesz_apply(self, w: np.ndarray) -> np.ndarray:
        """K1 w: dual coefficients of the H^1_0 element w."""
        return self.stiffness @ w

    def riesz_solve(self, f: np.ndarray, check: bool = True) -> np.ndarray:
        """K1^{-1} f, with a residual check (riesz_solve o riesz_apply = id)."""
        w = self._lu().solve(np.asarray(f, dtype=float))
        if check:
            res = np.linalg.norm(self.stiffness @ w - f)
            scale = np.linalg.norm(f)
            if scale > 0 and res > 1e-8 * scale:
                raise SolverError(f"Riesz solve residual {res:.3e} (rhs norm {scale:.3e})")
        return w

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolant on the interior nodes; fn maps (npts, 2) -> values."""
        return np.asarray(fn(self.mesh.nodes[self.mesh.interior]), dtype=float)

    def interpolate_trajectory(self, fn, grid: TimeGrid) -> FieldTrajectory:
        """Interpolate fn(points, t) at every time level of the grid."""
        pts = self.mesh.nodes[self.mesh.interior]
        vals = np.stack([np.asarray(fn(pts, t), dtype=float) for t in grid.times])
        return FieldTrajectory(vals, grid)

    # -- norms -----------------------------------------------------------

    def norm_L2D(self, v: np.ndarray) -> float:
        """L2(D) norm of a nodal field, sqrt(v' M v)."""
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(max(v @ (self.mass @ v), 0.0)))

    def inner_L2V_I(self, a: FieldTrajectory, b: FieldTrajectory) -> float:
        """Discrete L2(V;I) inner product, right-endpoint rule in time.

        The k = 0 slice is excluded, matching the evaluation points of
        implicit Euler.
        """
        a._check(b)
        va, vb = a.values[1:], b.values[1:]
        return float(a.grid.dt * np.sum(va * (vb @ self.stiffness.T)))

    def norm_L2V_I(self, traj: FieldTrajectory) -> float:
        return float(np.sqrt(max(self.inner_L2V_I(traj, traj), 0.0)))

    def norm_dual_L2Vdual_I(self, w_traj: FieldTrajectory) -> float:
        """L2(V';I) norm of the dual element whose Riesz preimage is w_traj.

        The Riesz map is an isometry, so this equals norm_L2V_I(w_traj).
        """
        return self.norm_L2V_I(w_traj)
