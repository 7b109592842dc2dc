"""Lowest eigenpairs of assembled hamiltonians, with residual certificates."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from andham.errors import NoConvergence
from andham.noise import DIRICHLET, rng_for
from andham.operator import HamiltonianMatrix

DENSE_LIMIT = 4096
CLUSTER_GAP = 1e-8
MAX_PAIRS = 64
CSV_SCHEMA = "# andham-spectrum v1"


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (size, k), orthonormal columns
    residuals: np.ndarray
    n_requested: int
    stats: dict = field(default_factory=dict)
    certified: np.ndarray | None = None

    @property
    def clusters(self) -> list[list[int]]:
        return cluster_indices(self.eigenvalues)

    @property
    def multiplicities(self) -> list[int]:
        return [len(c) for c in self.clusters]

    def field(self, i: int, shape) -> np.ndarray:
        return self.eigenvectors[:, i].reshape(shape)


def cluster_indices(vals, gap: float = CLUSTER_GAP) -> list[list[int]]:
    """Group sorted eigenvalues whose relative gap is below ``gap``."""
    out: list[list[int]] = []
    for i, v in enumerate(vals):
        if out:
            prev = vals[out[-1][-1]]
            if abs(v - prev) <= gap * max(abs(v), abs(prev), 1.0):
                out[-1].append(i)
                continue
        out.append([i])
    return out


def _matrix(H):
    return H.matrix if isinstance(H, HamiltonianMatrix) else sparse.csr_matrix(H)


def _row_bound(A) -> float:
    return float(np.max(np.asarray(abs(A).sum(axis=1)).ravel()))


def _is_tridiagonal_1d(H) -> bool:
    return isinstance(H, HamiltonianMatrix) and H.grid.d == 1 and H.grid.bc == DIRICHLET


def lowest_eigenpairs(H, k: int, residual_tol: float = 1e-8, seed: int = 0, method: str = "auto") -> SpectrumResult:
    """k lowest eigenpairs of a symmetric matrix or HamiltonianMatrix.

    Small problems go to a dense solver, d = 1 Dirichlet hamiltonians to the
    tridiagonal solver, everything else to shift-invert Lanczos (ARPACK,
    implicitly restarted with full reorthogonalisation) with the shift one
    unit below the Gershgorin lower bound.
    """
    A = _matrix(H)
    n = A.shape[0]
    if k < 1 or k > MAX_PAIRS or k >= n:
        raise ValueError(f"need 1 <= k <= {MAX_PAIRS} and k < {n}")
    if method == "auto":
        if _is_tridiagonal_1d(H):
            method = "tridiagonal"
        elif n <= DENSE_LIMIT:
            method = "dense"
        else:
            method = "lanczos"
    stats = {"method": method, "size": n}
    if method == "dense":
        vals, vecs = linalg.eigh(A.toarray(), subset_by_index=(0, k - 1))
    elif method == "tridiagonal":
        vals, vecs = linalg.eigh_tridiagonal(A.diagonal(), A.diagonal(-1), select="i", select_range=(0, k - 1))
    elif method == "lanczos":
        # Gershgorin lower bound minus one: every eigenvalue sits above sigma,
        # so the closest ones to sigma are the lowest ones and the inner
        # factorisation of H - sigma is definite
        diag = A.diagonal()
        radius = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
        sigma = float(np.min(diag - radius)) - 1.0
        v0 = rng_for(seed, 0).standard_normal(n)
        try:
            vals, vecs = splinalg.eigsh(A, k=k, sigma=sigma, which="LM", v0=v0, tol=0)
        except splinalg.ArpackNoConvergence as exc:
            partial = None
            if exc.eigenvalues is not None and len(exc.eigenvalues):
                partial = _finish(A, exc.eigenvalues, exc.eigenvectors, k, residual_tol, stats)
            raise NoConvergence("Lanczos did not converge", partial=partial) from exc
        stats["shift"] = sigma
    else:
        raise ValueError(f"unknown method {method!r}")
    res = _finish(A, vals, vecs, k, residual_tol, stats)
    if not np.all(res.certified):
        raise NoConvergence("residual certificate failed", partial=res)
    return res


def _finish(A, vals, vecs, k, residual_tol, stats) -> SpectrumResult:
    order = np.argsort(vals, kind="stable")
    vals = np.asarray(vals)[order]
    vecs = np.asarray(vecs)[:, order]
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    resid = np.linalg.norm(A @ vecs - vecs * vals, axis=0)
    bound = residual_tol * (np.abs(vals) + _row_bound(A))
    return SpectrumResult(vals, vecs, resid, k, stats, certified=resid <= bound)


@dataclass
class ContinuityReport:
    differences: np.ndarray
    bound: float
    ok: bool


def eigenvalue_continuity_check(H1: HamiltonianMatrix, H2: HamiltonianMatrix, k: int, residual_tol: float = 1e-8) -> ContinuityReport:
    """|lambda_n(H1) - lambda_n(H2)| <= max |V1 - V2| for the lowest k."""
    if H1.grid != H2.grid:
        raise ValueError("hamiltonians live on different grids")
    s1 = lowest_eigenpairs(H1, k, residual_tol)
    s2 = lowest_eigenpairs(H2, k, residual_tol)
    diff = np.abs(s1.eigenvalues - s2.eigenvalues)
    bound = float(np.max(np.abs(H1.diagonal - H2.diagonal)))
    # eigenvalue errors of both solves are far below this slack
    slack = 1e-9 * max(1.0, float(np.max(np.abs(s1.eigenvalues))))
    return ContinuityReport(diff, bound, bool(np.all(diff <= bound + slack)))


def subspace_angles(U, V) -> np.ndarray:
    """Principal angles between the column spans of U and V."""
    return linalg.subspace_angles(np.asarray(U), np.asarray(V))


def write_csv(results: list[tuple[int, SpectrumResult]], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_SCHEMA + "\n")
        wr = csv.writer(fh)
        wr.writerow(["replica", "n", "eigenvalue", "residual"])
        for rep, res in results:
            for i, (v, r) in enumerate(zip(res.eigenvalues, res.residuals), start=1):
                wr.writerow([rep, i, f"{v:.17g}", f"{r:.3e}"])


def dump_eigenvectors(res: SpectrumResult, path) -> None:
    """Raw little-endian float64 dump, shape (size, k) in column-major order."""
    np.asfortranarray(res.eigenvectors, dtype="<f8").T.tofile(path)
