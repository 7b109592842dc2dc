"""Lattice hamiltonian -Delta_h + xi_eps + C, its resolvents and the
fixed-point form of the resolvent equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft, sparse
from scipy.sparse import linalg as splinalg

from andham._accel import njit, select
from andham.errors import Diverged, GridMismatch, MaxIterations, NotPositiveDefinite
from andham.noise import DIRICHLET, PERIODIC, LatticeGrid, NoiseField, zero_field

DEFAULT_TOL = 1e-10
DIVERGENCE_STEPS = 5


# ---- stencil -----------------------------------------------------------------


@njit
def _stencil_loop(u, diag, inv_h2, periodic, out):
    n0, n1, n2 = u.shape
    for i in range(n0):
        for j in range(n1):
            for k in range(n2):
                acc = diag[i, j, k] * u[i, j, k]
                if n0 > 1:
                    if i > 0:
                        acc -= inv_h2 * u[i - 1, j, k]
                    elif periodic:
                        acc -= inv_h2 * u[n0 - 1, j, k]
                    if i < n0 - 1:
                        acc -= inv_h2 * u[i + 1, j, k]
                    elif periodic:
                        acc -= inv_h2 * u[0, j, k]
                if n1 > 1:
                    if j > 0:
                        acc -= inv_h2 * u[i, j - 1, k]
                    elif periodic:
                        acc -= inv_h2 * u[i, n1 - 1, k]
                    if j < n1 - 1:
                        acc -= inv_h2 * u[i, j + 1, k]
                    elif periodic:
                        acc -= inv_h2 * u[i, 0, k]
                if n2 > 1:
                    if k > 0:
                        acc -= inv_h2 * u[i, j, k - 1]
                    elif periodic:
                        acc -= inv_h2 * u[i, j, n2 - 1]
                    if k < n2 - 1:
                        acc -= inv_h2 * u[i, j, k + 1]
                    elif periodic:
                        acc -= inv_h2 * u[i, j, 0]
                out[i, j, k] = acc
    return out


def _stencil_numpy(u, diag, inv_h2, periodic, out):
    out[...] = diag * u
    for ax in range(3):
        if u.shape[ax] == 1:
            continue
        if periodic:
            out -= inv_h2 * (np.roll(u, 1, axis=ax) + np.roll(u, -1, axis=ax))
        else:
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[ax] = slice(1, None)
            hi[ax] = slice(None, -1)
            out[tuple(lo)] -= inv_h2 * u[tuple(hi)]
            out[tuple(hi)] -= inv_h2 * u[tuple(lo)]
    return out


_stencil = select(_stencil_loop, _stencil_numpy)


def _as3(a: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape + (1,) * (3 - a.ndim))


# ---- assembly ------------------------------------------------------------------


def _lower_1d(n: int, periodic: bool) -> sparse.csr_matrix:
    """Strict lower triangle of the 1D second-difference neighbour graph."""
    rows, cols = [], []
    for i in range(n - 1):
        rows.append(i + 1)
        cols.append(i)
    if periodic and n > 1:
        # the wrap pair (0, n-1) lands below the diagonal at (n-1, 0)
        rows.append(n - 1)
        cols.append(0)
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    grid: LatticeGrid
    potential: NoiseField
    C: float
    matrix: sparse.csr_matrix
    diagonal: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.grid.size

    def matvec(self, u) -> np.ndarray:
        u = np.ascontiguousarray(np.asarray(u, dtype=float).reshape(self.grid.shape))
        out = np.empty_like(u)
        _stencil(_as3(u), _as3(self.diagonal), 1.0 / self.grid.h**2, self.grid.bc == PERIODIC, _as3(out))
        return out

    def row_bound(self) -> float:
        """max_i sum_j |H_ij| (Gershgorin radius bound on the spectrum)."""
        off = 2 * self.grid.d / self.grid.h**2
        return float(np.max(np.abs(self.diagonal)) + off)

    def gershgorin_lower(self) -> float:
        return float(np.min(self.diagonal) - 2 * self.grid.d / self.grid.h**2)

    def shifted(self, c: float) -> "HamiltonianMatrix":
        return assemble(self.grid, self.potential, self.C + c)

    def to_triplets(self, path) -> None:
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write("# andham-triplets v1\n")
            fh.write(f"{self.size} {self.size} {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {v:.17g}\n")


def assemble(grid: LatticeGrid, noise: NoiseField | None = None, C: float = 0.0) -> HamiltonianMatrix:
    """-Delta_h + diag(noise + C) as a CSR matrix built from its lower triangle."""
    if noise is None:
        noise = zero_field(grid)
    if noise.grid != grid:
        raise GridMismatch(f"noise lives on {noise.grid}, operator on {grid}")
    n = grid.n_axis
    periodic = grid.bc == PERIODIC
    inv_h2 = 1.0 / grid.h**2
    eye = sparse.identity(n, format="csr")
    low = _lower_1d(n, periodic)
    strict = sparse.csr_matrix((grid.size, grid.size))
    for ax in range(grid.d):
        factors = [low if k == ax else eye for k in range(grid.d)]
        term = factors[0]
        for f in factors[1:]:
            term = sparse.kron(term, f, format="csr")
        strict = strict + term
    strict = (-inv_h2 * strict).tocsr()
    diagonal = np.asarray(noise.values, dtype=float) + C + 2 * grid.d * inv_h2
    lower = (strict + sparse.diags(diagonal.ravel())).tocsr()
    mat = (lower + strict.T).tocsr()
    mat.sort_indices()
    return HamiltonianMatrix(grid, noise, float(C), mat, diagonal)


# ---- resolvents ----------------------------------------------------------------


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0


class ResolventHandle:
    """(H + a)^-1 by Jacobi-preconditioned conjugate gradients."""

    def __init__(self, H: HamiltonianMatrix, a: float, tol: float = DEFAULT_TOL, max_iter: int | None = None, probe: bool = True):
        self.H = H
        self.a = float(a)
        self.tol = tol
        self.max_iter = max_iter if max_iter is not None else 20 * H.size + 100
        self.lowest = smallest_eigenvalue(H) if probe else None
        if probe and self.lowest + self.a <= 0:
            raise NotPositiveDefinite(f"H + a has smallest eigenvalue {self.lowest + self.a:.6g}")
        self.last = SolveStats()

    def apply_operator(self, u):
        return self.H.matvec(u) + self.a * np.asarray(u).reshape(self.H.grid.shape)


def smallest_eigenvalue(H: HamiltonianMatrix) -> float:
    if H.size <= 2048:
        return float(np.linalg.eigvalsh(H.matrix.toarray())[0])
    sigma = H.gershgorin_lower() - 1.0
    vals = splinalg.eigsh(H.matrix, k=1, sigma=sigma, which="LM", v0=np.ones(H.size), return_eigenvectors=False)
    return float(vals[0])


def resolvent_apply(handle: ResolventHandle, g) -> np.ndarray:
    """f with ||(H + a) f - g|| <= tol ||g||."""
    shape = handle.H.grid.shape
    g = np.asarray(g, dtype=float).reshape(shape)
    gnorm = np.linalg.norm(g)
    if gnorm == 0.0:
        handle.last = SolveStats(0, 0.0)
        return np.zeros(shape)
    dinv = 1.0 / (handle.H.diagonal + handle.a)
    if np.any(dinv <= 0):
        raise NotPositiveDefinite("H + a has a non-positive diagonal entry")
    f = g * dinv
    r = g - handle.apply_operator(f)
    z = r * dinv
    p = z.copy()
    rz = float(np.vdot(r, z))
    target = handle.tol * gnorm
    for it in range(1, handle.max_iter + 1):
        Ap = handle.apply_operator(p)
        pAp = float(np.vdot(p, Ap))
        if pAp <= 0:
            raise NotPositiveDefinite("conjugate gradients met a non-positive curvature direction")
        alpha = rz / pAp
        f += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= target:
            # confirm with the true residual; recurrences drift
            r = g - handle.apply_operator(f)
            res = float(np.linalg.norm(r))
            if res <= target:
                handle.last = SolveStats(it, res / gnorm)
                return f
        z = r * dinv
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise MaxIterations(f"CG did not reach tol {handle.tol} in {handle.max_iter} iterations")


# ---- fixed point ----------------------------------------------------------------


class FreeResolvent:
    """Exact (-Delta_h + a)^-1 by sine (Dirichlet) or Fourier (periodic) diagonalisation."""

    def __init__(self, grid: LatticeGrid, a: float):
        self.grid = grid
        self.a = a
        N, h = grid.N, grid.h
        if grid.bc == DIRICHLET:
            k = np.arange(1, N)
            lam1 = 4.0 / h**2 * np.sin(np.pi * k / (2 * N)) ** 2
        else:
            k = np.arange(N)
            lam1 = 4.0 / h**2 * np.sin(np.pi * k / N) ** 2
        lam = sum(np.meshgrid(*([lam1] * grid.d), indexing="ij"))
        self.inv = 1.0 / (lam + a)

    def __call__(self, u):
        if self.grid.bc == DIRICHLET:
            return fft.idstn(fft.dstn(u, type=1) * self.inv, type=1)
        return fft.ifftn(fft.fftn(u) * self.inv).real


@dataclass
class FixedPointTrace:
    increments: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    steps: int = 0
    converged: bool = False

    @property
    def contraction(self) -> float:
        """Median of the observed step ratios (0 for a constant map)."""
        return float(np.median(self.ratios)) if self.ratios else 0.0


def fixed_point_resolvent(grid: LatticeGrid, noise: NoiseField | None, C: float, a: float, b: float, g, tol: float = DEFAULT_TOL, max_iter: int = 1000):
    """Iterate f -> (-Delta_h + a)^-1 (g - (xi + C + b) f), the lattice
    stand-in for the continuum fixed-point map of (H + a + b) f = g.

    Stops once the a-posteriori bound q/(1-q) ||f_{k+1} - f_k|| falls below
    tol ||f_{k+1}||, with q the running contraction ratio.
    """
    if not -2 < b < 2:
        raise ValueError("b must lie in (-2, 2)")
    if a < 1:
        raise ValueError("a must be >= 1")
    if noise is None:
        noise = zero_field(grid)
    if noise.grid != grid:
        raise GridMismatch("noise grid does not match")
    solve = FreeResolvent(grid, a)
    g = np.asarray(g, dtype=float).reshape(grid.shape)
    V = np.asarray(noise.values) + C + b
    trace = FixedPointTrace()
    f = solve(g)
    prev_inc = None
    bad = 0
    for k in range(1, max_iter + 1):
        f_new = solve(g - V * f)
        inc = float(np.linalg.norm(f_new - f))
        fnorm = float(np.linalg.norm(f_new))
        trace.increments.append(inc)
        f = f_new
        trace.steps = k
        if inc == 0.0:
            trace.converged = True
            return f, trace
        if prev_inc is not None and prev_inc > 0:
            q = inc / prev_inc
            trace.ratios.append(q)
            bad = bad + 1 if q >= 1.0 else 0
            if bad >= DIVERGENCE_STEPS:
                raise Diverged(f"fixed point not contracting for {DIVERGENCE_STEPS} steps at a={a}")
            if q < 1.0 and q / (1.0 - q) * inc <= tol * fnorm:
                trace.converged = True
                return f, trace
        prev_inc = inc
    raise MaxIterations(f"fixed point did not converge in {max_iter} steps")
