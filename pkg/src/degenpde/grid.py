"""Cell-centered grids on boxes, boundary tagging, and discrete operators.

Two-point flux on uniform 1D/2D boxes.  Dirichlet data is imposed through a
ghost cell holding the boundary value, so the flux through a Dirichlet face is
(u_cell - u_b)/h^2 and affine data is reproduced exactly.  Advection is
first-order upwind in conservation form div(v s); monotonicity over accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded
from scipy.sparse.linalg import LinearOperator, cg, splu

from .errors import DomainError, NonConvergence

SIDES_1D = ("left", "right")
SIDES_2D = ("left", "right", "bottom", "top")


class StructuredGrid:
    """Uniform cell-centered grid on a box with per-side boundary tags.

    gamma1 lists the sides carrying Dirichlet data for the biomass equation;
    all remaining sides are no-flux.  gamma1 may be empty (homogeneous
    Neumann) or cover the whole boundary.  Mobile substrates always carry
    Dirichlet data on the full boundary.
    """

    def __init__(self, n, extents=None, gamma1=()):
        if np.isscalar(n):
            n = (int(n),)
        self.n = tuple(int(v) for v in n)
        self.dim = len(self.n)
        if self.dim not in (1, 2):
            raise DomainError("only 1D and 2D boxes are supported")
        if any(v < 2 for v in self.n):
            raise DomainError("need at least 2 cells per axis")
        if extents is None:
            extents = ((0.0, 1.0),) * self.dim
        if np.isscalar(extents[0]):
            extents = (tuple(extents),)
        self.extents = tuple((float(a), float(b)) for a, b in extents)
        if len(self.extents) != self.dim:
            raise DomainError("extents/resolution dimension mismatch")
        self.h = tuple((b - a) / nn for (a, b), nn in zip(self.extents, self.n))
        if any(hh <= 0 for hh in self.h):
            raise DomainError("extents must be increasing")
        sides = SIDES_1D if self.dim == 1 else SIDES_2D
        gamma1 = frozenset(gamma1)
        unknown = gamma1 - set(sides)
        if unknown:
            raise DomainError(f"unknown boundary sides {sorted(unknown)}")
        self.sides = sides
        self.gamma1 = gamma1

    @property
    def shape(self):
        return self.n

    @property
    def size(self):
        return int(np.prod(self.n))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def m_tag(self, side):
        return "dirichlet" if side in self.gamma1 else "neumann"

    def centers(self, axis=0):
        a, _ = self.extents[axis]
        h = self.h[axis]
        return a + (np.arange(self.n[axis]) + 0.5) * h

    def meshgrid(self):
        axes = [self.centers(d) for d in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    def __repr__(self):
        return f"StructuredGrid(n={self.n}, extents={self.extents}, gamma1={sorted(self.gamma1)})"


@dataclass
class Field:
    """Scalar grid function; construction rejects non-finite values."""

    grid: StructuredGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DomainError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        check_finite(vals)
        self.values = vals


def check_finite(values):
    if not np.all(np.isfinite(values)):
        raise DomainError("field contains NaN/Inf values")
    return values


# ---------------------------------------------------------------------------
# Stencil operators
# ---------------------------------------------------------------------------


class StencilOp:
    """Assembled linear operator L with an affine Dirichlet load vector.

    ``apply(u, bval)`` returns L u - load * bval.  1D operators keep their
    three diagonals for direct banded solves; 2D operators hold a CSR matrix.
    """

    def __init__(self, grid, symmetric, tri=None, mat=None, load=None):
        self.grid = grid
        self.symmetric = symmetric
        self.tri = tri  # (lower, diag, upper) for dim 1
        self.mat = mat  # csr for dim 2
        self.load = load if load is not None else np.zeros(grid.size)

    def apply(self, u, bval=0.0):
        u = np.asarray(u, dtype=float)
        if self.grid.dim == 1:
            lower, diag, upper = self.tri
            out = diag * u
            out[:-1] += upper * u[1:]
            out[1:] += lower * u[:-1]
        else:
            out = (self.mat @ u.ravel()).reshape(self.grid.shape)
        return out - bval * self.load.reshape(self.grid.shape)

    def scaled(self, c):
        if self.grid.dim == 1:
            lo, dg, up = self.tri
            return StencilOp(self.grid, self.symmetric, tri=(c * lo, c * dg, c * up),
                             load=c * self.load)
        return StencilOp(self.grid, self.symmetric, mat=c * self.mat, load=c * self.load)

    def __add__(self, other):
        if self.grid is not other.grid:
            raise DomainError("cannot combine operators on different grids")
        sym = self.symmetric and other.symmetric
        if self.grid.dim == 1:
            tri = tuple(a + b for a, b in zip(self.tri, other.tri))
            return StencilOp(self.grid, sym, tri=tri, load=self.load + other.load)
        return StencilOp(self.grid, sym, mat=(self.mat + other.mat).tocsr(),
                         load=self.load + other.load)

    def solve_shifted(self, dvec, rhs, inner_tol=1e-12):
        """Solve (diag(dvec) + L) x = rhs.

        Direct tridiagonal in 1D; Jacobi-preconditioned CG in 2D for
        symmetric L, sparse LU otherwise (advection breaks symmetry).
        """
        dvec = np.asarray(dvec, dtype=float).ravel()
        b = np.asarray(rhs, dtype=float).ravel()
        if self.grid.dim == 1:
            lower, diag, upper = self.tri
            n = diag.size
            ab = np.zeros((3, n))
            ab[0, 1:] = upper
            ab[1, :] = diag + dvec
            ab[2, :-1] = lower
            return solve_banded((1, 1), ab, b)
        A = (self.mat + sparse.diags(dvec)).tocsr()
        if not self.symmetric:
            return splu(A.tocsc()).solve(b)
        inv_diag = 1.0 / A.diagonal()
        M = LinearOperator(A.shape, matvec=lambda x: inv_diag * x)
        x, info = cg(A, b, rtol=1e-10, atol=inner_tol, M=M, maxiter=40 * b.size)
        if info != 0:
            raise NonConvergence(f"CG failed to converge (info={info})")
        return x


def _face_coefficients(grid, cell_coeff):
    """Per-axis face arrays from a cell array by harmonic averaging.

    Robust for coefficients jumping across the biofilm interface.  Boundary
    faces copy the adjacent cell.  ``cell_coeff`` may be a scalar.
    """
    out = []
    if np.isscalar(cell_coeff):
        for d in range(grid.dim):
            shp = list(grid.n)
            shp[d] += 1
            out.append(np.full(shp, float(cell_coeff)))
        return out
    c = np.asarray(cell_coeff, dtype=float)
    for d in range(grid.dim):
        lead = np.take(c, [0], axis=d)
        trail = np.take(c, [-1], axis=d)
        a = np.concatenate([lead, c], axis=d)
        b = np.concatenate([c, trail], axis=d)
        out.append(2.0 * a * b / np.maximum(a + b, 1e-300))
    return out


def diffusion_op(grid, dirichlet_sides=None, coeff=None):
    """Discrete negative weak Laplacian -div(c grad .) with ghost Dirichlet cells."""
    if dirichlet_sides is None:
        dirichlet_sides = grid.gamma1
    faces = _face_coefficients(grid, 1.0 if coeff is None else coeff)
    if grid.dim == 1:
        n = grid.n[0]
        h2 = grid.h[0] ** 2
        cf = faces[0]
        lower = -cf[1:-1] / h2
        upper = -cf[1:-1] / h2
        diag = np.zeros(n)
        diag[:-1] += cf[1:-1] / h2
        diag[1:] += cf[1:-1] / h2
        load = np.zeros(n)
        if "left" in dirichlet_sides:
            diag[0] += cf[0] / h2
            load[0] += cf[0] / h2
        if "right" in dirichlet_sides:
            diag[-1] += cf[-1] / h2
            load[-1] += cf[-1] / h2
        return StencilOp(grid, True, tri=(lower, diag, upper), load=load)

    n1, n2 = grid.n
    N = grid.size
    idx = np.arange(N).reshape(n1, n2)
    rows, cols, vals = [], [], []
    diag = np.zeros(N)
    load = np.zeros(N)
    for d, (nf, h) in enumerate(zip(faces, grid.h)):
        c_int = np.take(nf, np.arange(1, grid.n[d]), axis=d) / h**2
        a = np.take(idx, np.arange(0, grid.n[d] - 1), axis=d).ravel()
        b = np.take(idx, np.arange(1, grid.n[d]), axis=d).ravel()
        c = c_int.ravel()
        rows.append(np.concatenate([a, b]))
        cols.append(np.concatenate([b, a]))
        vals.append(np.concatenate([-c, -c]))
        np.add.at(diag, a, c)
        np.add.at(diag, b, c)
        lo_side, hi_side = (("left", "right") if d == 0 else ("bottom", "top"))
        cells_lo = np.take(idx, [0], axis=d).ravel()
        cells_hi = np.take(idx, [-1], axis=d).ravel()
        cb_lo = np.take(nf, [0], axis=d).ravel() / h**2
        cb_hi = np.take(nf, [-1], axis=d).ravel() / h**2
        if lo_side in dirichlet_sides:
            diag[cells_lo] += cb_lo
            load[cells_lo] += cb_lo
        if hi_side in dirichlet_sides:
            diag[cells_hi] += cb_hi
            load[cells_hi] += cb_hi
    rows.append(np.arange(N))
    cols.append(np.arange(N))
    vals.append(diag)
    mat = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    return StencilOp(grid, True, mat=mat, load=load)


def apply_diffusion(grid, u, h0_dirichlet=0.0, coeff=None, dirichlet_sides=None):
    """Two-point-flux divergence of the (Kirchhoff-variable) diffusive flux.

    Returns sum over faces of (u_i - u_nbr)/h^2 per cell; Dirichlet faces use
    a ghost cell holding ``h0_dirichlet``, Neumann faces contribute nothing.
    """
    op = diffusion_op(grid, dirichlet_sides=dirichlet_sides, coeff=coeff)
    return op.apply(np.asarray(u, dtype=float), h0_dirichlet)


def face_velocities(grid, v):
    """Per-axis face-normal velocities from a constant vector or cell arrays."""
    if v is None:
        v = (0.0,) * grid.dim
    if np.isscalar(v):
        v = (float(v),) * grid.dim
    out = []
    for d in range(grid.dim):
        comp = v[d] if not isinstance(v, np.ndarray) else v[..., d]
        shp = list(grid.n)
        shp[d] += 1
        if np.isscalar(comp):
            out.append(np.full(shp, float(comp)))
            continue
        comp = np.asarray(comp, dtype=float)
        lead = np.take(comp, [0], axis=d)
        trail = np.take(comp, [-1], axis=d)
        a = np.concatenate([lead, comp], axis=d)
        b = np.concatenate([comp, trail], axis=d)
        out.append(0.5 * (a + b))
    return out


def advection_op(grid, v_faces):
    """First-order upwind divergence of v s in conservation form.

    Inflow boundary faces (velocity pointing into the domain) draw the
    upstream value from the Dirichlet load; outflow faces use the interior
    cell.  The implicit matrix I + tau*(this) is an M-matrix.
    """
    if grid.dim == 1:
        n = grid.n[0]
        h = grid.h[0]
        w = np.asarray(v_faces[0], dtype=float)
        lower = np.zeros(n - 1)
        diag = np.zeros(n)
        upper = np.zeros(n - 1)
        load = np.zeros(n)
        wi = w[1:-1]
        up_pos = wi >= 0
        # interior face f sits between cells f-1 and f
        diag[:-1] += np.where(up_pos, wi, 0.0) / h
        lower += -np.where(up_pos, wi, 0.0) / h
        upper += np.where(~up_pos, wi, 0.0) / h
        diag[1:] += -np.where(~up_pos, wi, 0.0) / h
        if w[0] > 0:
            load[0] += w[0] / h  # inflow from the left
        else:
            diag[0] += -w[0] / h
        if w[-1] < 0:
            load[-1] += -w[-1] / h  # inflow from the right
        else:
            diag[-1] += w[-1] / h
        return StencilOp(grid, False, tri=(lower, diag, upper), load=load)

    n1, n2 = grid.n
    N = grid.size
    idx = np.arange(N).reshape(n1, n2)
    rows, cols, vals = [], [], []
    diag = np.zeros(N)
    load = np.zeros(N)
    for d, h in enumerate(grid.h):
        w = np.asarray(v_faces[d], dtype=float)
        wi = np.take(w, np.arange(1, grid.n[d]), axis=d)
        a = np.take(idx, np.arange(0, grid.n[d] - 1), axis=d).ravel()
        b = np.take(idx, np.arange(1, grid.n[d]), axis=d).ravel()
        wf = wi.ravel()
        pos = wf >= 0
        # upstream cell a feeds face when w >= 0, else cell b
        np.add.at(diag, a[pos], wf[pos] / h)
        rows.append(b[pos]); cols.append(a[pos]); vals.append(-wf[pos] / h)
        np.add.at(diag, b[~pos], -wf[~pos] / h)
        rows.append(a[~pos]); cols.append(b[~pos]); vals.append(wf[~pos] / h)
        cells_lo = np.take(idx, [0], axis=d).ravel()
        cells_hi = np.take(idx, [-1], axis=d).ravel()
        w_lo = np.take(w, [0], axis=d).ravel()
        w_hi = np.take(w, [-1], axis=d).ravel()
        inflow = w_lo > 0
        load[cells_lo[inflow]] += w_lo[inflow] / h
        diag[cells_lo[~inflow]] += -w_lo[~inflow] / h
        inflow = w_hi < 0
        load[cells_hi[inflow]] += -w_hi[inflow] / h
        diag[cells_hi[~inflow]] += w_hi[~inflow] / h
    rows.append(np.arange(N))
    cols.append(np.arange(N))
    vals.append(diag)
    mat = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    return StencilOp(grid, False, mat=mat, load=load)


def apply_advection_upwind(grid, s, v_faces, inflow_value=0.0):
    """Upwind divergence of v s; inflow Dirichlet faces use ``inflow_value``."""
    op = advection_op(grid, v_faces)
    return op.apply(np.asarray(s, dtype=float), inflow_value)


# ---------------------------------------------------------------------------
# Norms, integrals, diagnostics
# ---------------------------------------------------------------------------


def integrate(grid, f, kind="mass"):
    """Cell-volume-weighted discrete norm or integral of a field."""
    f = np.asarray(f, dtype=float)
    vol = grid.cell_volume
    if kind == "mass":
        return float(np.sum(f) * vol)
    if kind == "L1":
        return float(np.sum(np.abs(f)) * vol)
    if kind == "L2":
        return float(np.sqrt(np.sum(f * f) * vol))
    if kind == "max":
        return float(np.max(f))
    if kind == "min":
        return float(np.min(f))
    raise DomainError(f"unknown norm kind {kind!r}")


def gradient_energy(grid, u, dirichlet_value=0.0, dirichlet_sides=None):
    """Discrete ||grad u||^2 including ghost-cell Dirichlet contributions."""
    if dirichlet_sides is None:
        dirichlet_sides = grid.gamma1
    u = np.asarray(u, dtype=float)
    vol = grid.cell_volume
    total = 0.0
    for d, h in enumerate(grid.h):
        du = np.diff(u, axis=d) / h
        total += float(np.sum(du * du)) * vol
        lo_side, hi_side = (("left", "right") if d == 0 else ("bottom", "top"))
        if lo_side in dirichlet_sides:
            edge = np.take(u, [0], axis=d)
            total += float(np.sum(((edge - dirichlet_value) / h) ** 2)) * vol
        if hi_side in dirichlet_sides:
            edge = np.take(u, [-1], axis=d)
            total += float(np.sum(((edge - dirichlet_value) / h) ** 2)) * vol
    return total


# ---------------------------------------------------------------------------
# Field snapshots (plain text)
# ---------------------------------------------------------------------------


def write_snapshot(path, grid, values, time):
    """Plain-text snapshot: header `dim n1 [n2] h1 [h2] time`, then row-major values."""
    values = np.asarray(values, dtype=float)
    with open(path, "w") as fh:
        header = [str(grid.dim)] + [str(nn) for nn in grid.n] + [
            f"{hh:.17g}" for hh in grid.h
        ] + [f"{time:.17g}"]
        fh.write(" ".join(header) + "\n")
        for v in values.ravel(order="C"):
            fh.write(f"{v:.17g}\n")


def read_snapshot(path):
    """Read a snapshot; returns (dim, n, h, time, values)."""
    with open(path) as fh:
        header = fh.readline().split()
        dim = int(header[0])
        n = tuple(int(v) for v in header[1 : 1 + dim])
        h = tuple(float(v) for v in header[1 + dim : 1 + 2 * dim])
        time = float(header[1 + 2 * dim])
        values = np.array([float(line) for line in fh if line.strip()])
    if values.size != int(np.prod(n)):
        raise DomainError(f"snapshot {path}: expected {np.prod(n)} values, got {values.size}")
    return dim, n, h, time, values.reshape(n)
