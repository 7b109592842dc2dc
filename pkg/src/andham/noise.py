"""Lattices, mollifiers and white-noise fields.

Grids are vertex grids on [-L, L]^d with mesh h = 2L/N. Periodic grids carry
the N nodes of one fundamental domain per axis; Dirichlet grids carry the
N - 1 interior nodes per axis (the field vanishes on and outside the boundary).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, signal, special

from andham import bump
from andham.errors import UnresolvedMollifier

DIRICHLET = "dirichlet"
PERIODIC = "periodic"
BOUNDARY_CONDITIONS = (DIRICHLET, PERIODIC)

WHITE = "white"
MOLLIFIED = "mollified"
DETERMINISTIC = "deterministic"

CSV_SCHEMA = "# andham-field v1"


@dataclass(frozen=True)
class LatticeGrid:
    d: int
    L: float
    N: int
    bc: str = DIRICHLET

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.L <= 0:
            raise ValueError("half-width L must be positive")
        if self.N <= 0 or self.N % 2:
            raise ValueError("points per axis N must be a positive even integer")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ValueError(f"unknown boundary condition {self.bc!r}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def n_axis(self) -> int:
        return self.N - 1 if self.bc == DIRICHLET else self.N

    @property
    def shape(self) -> tuple:
        return (self.n_axis,) * self.d

    @property
    def size(self) -> int:
        return self.n_axis**self.d

    @property
    def cell_count(self) -> int:
        return self.N**self.d

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        if self.bc == DIRICHLET:
            return -self.L + self.h * np.arange(1, self.N)
        return -self.L + self.h * np.arange(self.N)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (d,)``."""
        ax = self.axis()
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def boundary_distance(self) -> np.ndarray:
        """Distance of every node to the boundary of the box."""
        x = self.coords()
        return np.min(self.L - np.abs(x), axis=-1)

    def with_L(self, L: float) -> "LatticeGrid":
        return LatticeGrid(self.d, L, self.N, self.bc)


def _profile_bump(r):
    return bump.bump(r)


def _profile_cosine(r):
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) < 1.0, (1.0 + np.cos(np.pi * np.minimum(np.abs(r), 1.0))) ** 2, 0.0)


PROFILES: dict[str, Callable] = {
    "bump": _profile_bump,
    "cosine": _profile_cosine,
}


@lru_cache(maxsize=None)
def _profile_mass(name: str, d: int) -> float:
    prof = PROFILES[name]
    radial, _ = integrate.quad(lambda r: float(prof(r)) * r ** (d - 1), 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)
    return sphere_area(d) * radial


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2) / special.gamma(d / 2)


@dataclass(frozen=True)
class Mollifier:
    """Radial mollifier rho_eps(x) = eps^-d rho(|x| / eps) with unit integral."""

    epsilon: float
    profile: str = "bump"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown mollifier profile {self.profile!r}")

    def unit_profile(self, r, d: int):
        """rho(r) for the eps = 1 mollifier in dimension d (unit mass)."""
        return PROFILES[self.profile](r) / _profile_mass(self.profile, d)

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = x.shape[-1]
        r = np.linalg.norm(x, axis=-1)
        return self.unit_profile(r / self.epsilon, d) / self.epsilon**d

    def half_width(self, grid: LatticeGrid) -> int:
        return int(math.floor(self.epsilon / grid.h + 1e-12))

    def discrete_kernel(self, grid: LatticeGrid) -> np.ndarray:
        """Grid-sampled kernel of shape (2m+1)^d with sum * h^d == 1."""
        if self.epsilon < 2.0 * grid.h * (1.0 - 1e-12):
            raise UnresolvedMollifier(f"epsilon={self.epsilon} below two mesh widths (h={grid.h})")
        m = self.half_width(grid)
        offs = grid.h * np.arange(-m, m + 1)
        mesh = np.meshgrid(*([offs] * grid.d), indexing="ij")
        r = np.sqrt(sum(c**2 for c in mesh))
        ker = self.unit_profile(r / self.epsilon, grid.d)
        return ker / (ker.sum() * grid.h**grid.d)


@dataclass(frozen=True, eq=False)
class NoiseField:
    grid: LatticeGrid
    values: np.ndarray
    kind: str = WHITE
    epsilon: float | None = None
    seed: int | None = None
    replica: int = 0
    profile: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        self.values.setflags(write=False)


def deterministic(grid: LatticeGrid, values) -> NoiseField:
    vals = np.array(np.broadcast_to(np.asarray(values, dtype=float), grid.shape))
    return NoiseField(grid, vals, kind=DETERMINISTIC)


def zero_field(grid: LatticeGrid) -> NoiseField:
    return deterministic(grid, 0.0)


def rng_for(seed: int, replica: int = 0) -> np.random.Generator:
    """Counter-based stream for one replica, reproducible in isolation."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica),))
    return np.random.Generator(np.random.Philox(ss))


def sample_white(grid: LatticeGrid, seed: int, replica: int = 0) -> NoiseField:
    """White noise with i.i.d. N(0, h^-d) node values."""
    rng = rng_for(seed, replica)
    vals = rng.standard_normal(grid.shape) * grid.h ** (-grid.d / 2)
    return NoiseField(grid, vals, kind=WHITE, seed=int(seed), replica=int(replica))


def _circular_kernel(ker: np.ndarray, shape: tuple) -> np.ndarray:
    """Wrap a centred kernel onto a periodic array of the given shape."""
    d = ker.ndim
    m = (ker.shape[0] - 1) // 2
    out = np.zeros(shape)
    idx = np.meshgrid(*([np.arange(-m, m + 1)] * d), indexing="ij")
    wrapped = tuple(np.mod(i, n) for i, n in zip(idx, shape))
    np.add.at(out, wrapped, ker)
    return out


def mollify(noise: NoiseField, mol: Mollifier) -> NoiseField:
    """Discrete convolution h^d * sum_z kernel(x - z) noise(z).

    Periodic grids wrap around; Dirichlet grids extend the field by zero.
    """
    if noise.kind == MOLLIFIED:
        raise ValueError("field is already mollified")
    grid = noise.grid
    ker = mol.discrete_kernel(grid) * grid.h**grid.d
    if grid.bc == PERIODIC:
        circ = _circular_kernel(ker, grid.shape)
        vals = np.fft.irfftn(np.fft.rfftn(noise.values) * np.fft.rfftn(circ), s=grid.shape, axes=tuple(range(grid.d)))
    else:
        vals = signal.fftconvolve(noise.values, ker, mode="same")
    return NoiseField(
        grid,
        np.ascontiguousarray(vals),
        kind=MOLLIFIED,
        epsilon=mol.epsilon,
        seed=noise.seed,
        replica=noise.replica,
        profile=mol.profile,
    )


def rescale_noise(noise: NoiseField, L: float) -> NoiseField:
    """Dilate a field from (-1, 1)^d to (-L, L)^d: x -> L^-2 noise(x / L).

    The node count per axis is kept, so node i of the result sits at L times
    the position of node i of the input (exact per-realisation coupling).
    """
    if not math.isclose(noise.grid.L, 1.0):
        raise ValueError("rescale_noise expects a field on (-1, 1)^d")
    grid = noise.grid.with_L(L)
    eps = None if noise.epsilon is None else noise.epsilon * L
    return NoiseField(
        grid,
        np.array(noise.values) * L**-2.0,
        kind=noise.kind,
        epsilon=eps,
        seed=noise.seed,
        replica=noise.replica,
        profile=noise.profile,
        meta={**noise.meta, "dilation": L},
    )


# ---- persistence ----------------------------------------------------------

_KINDS = (WHITE, MOLLIFIED, DETERMINISTIC)
_HEADER = struct.Struct("<4sii d i i d q")
_MAGIC = b"AHF1"


def to_csv(noise: NoiseField, path) -> None:
    d = noise.grid.d
    idx = np.indices(noise.grid.shape).reshape(d, -1).T
    with open(path, "w") as fh:
        fh.write(CSV_SCHEMA + "\n")
        fh.write(",".join([f"i{k}" for k in range(d)] + ["value"]) + "\n")
        for row, v in zip(idx, noise.values.ravel()):
            fh.write(",".join(str(int(i)) for i in row) + f",{v:.17g}\n")


def to_binary(noise: NoiseField, path) -> None:
    g = noise.grid
    eps = float("nan") if noise.epsilon is None else noise.epsilon
    seed = -1 if noise.seed is None else noise.seed
    header = _HEADER.pack(
        _MAGIC, g.d, g.N, g.L, BOUNDARY_CONDITIONS.index(g.bc), _KINDS.index(noise.kind), eps, seed
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(noise.values, dtype="<f8").tobytes())


def from_binary(path) -> NoiseField:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, d, N, L, bc, kind, eps, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError("not an andham field file")
    grid = LatticeGrid(d, L, N, BOUNDARY_CONDITIONS[bc])
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(grid.shape).copy()
    return NoiseField(
        grid,
        vals,
        kind=_KINDS[kind],
        epsilon=None if math.isnan(eps) else eps,
        seed=None if seed < 0 else seed,
    )
