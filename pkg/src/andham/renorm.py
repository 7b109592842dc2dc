"""Renormalisation constants C_eps^(a) of the mollified Anderson hamiltonian.

  c1  = int P_+(x) R(x) dx,                R = rho_eps * rho_eps
  c11 = int P_+(x) T(x)^2 dx,              T = P_+ * R          (d = 3)
  c12 = int P_+(x) R(x) (W(x) - W(0)) dx,  W = P_+ * T          (d = 3)

The triple integrals collapse to the forms above because P_+ and R are even;
with the default annihilation order r = 4 every surviving correction term of
P_+ is a cubic-symmetric polynomial of degree <= 3, hence radial, so each
convolution is a one-dimensional radial integral.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import interpolate, signal

from andham.errors import QuadratureFailure
from andham.greens import DEFAULT_ORDER, GreensKernel, angular_moment
from andham import bump
from andham.noise import LatticeGrid, Mollifier, PERIODIC, _circular_kernel, sphere_area

CONTINUUM = "ContinuumQuadrature"
LATTICE = "LatticeSelfEnergy"
MONTE_CARLO = "MonteCarloOracle"
METHODS = (CONTINUUM, LATTICE, MONTE_CARLO)

TARGET_REL_ERR = 1e-6
CSV_SCHEMA = "# andham-renorm v1"

_GL16 = np.polynomial.legendre.leggauss(16)
_GL24 = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class RenormConstants:
    d: int
    a: float
    epsilon: float
    mollifier: str
    c1: float
    c11: float = 0.0
    c12: float = 0.0
    method: str = CONTINUUM
    error_estimate: float = 0.0
    n_a: int = 0
    cutoff_sensitive: bool = False

    @property
    def C(self) -> float:
        if self.d == 1:
            return 0.0
        if self.d == 2:
            return self.c1
        return self.c1 + self.c11 + self.c12

    def row(self) -> list:
        return [self.d, self.a, self.epsilon, self.method, self.c1, self.c11, self.c12, self.C, self.error_estimate]


@dataclass(frozen=True)
class ScaledConstants:
    L: float
    epsilon: float
    base: RenormConstants
    c1: float
    c11: float
    c12: float
    delta_L: float
    delta_L_half_eps: float

    @property
    def C(self) -> float:
        if self.base.d == 1:
            return 0.0
        if self.base.d == 2:
            return self.c1
        return self.c1 + self.c11 + self.c12

    @property
    def eps_sensitivity(self) -> float:
        return self.delta_L - self.delta_L_half_eps


# ---- quadrature helpers -------------------------------------------------------


def _panel_rule(edges, rule=_GL16):
    u, w = rule
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * np.diff(edges)
    x = (edges[:-1, None] + half[:, None] * (u[None, :] + 1.0)).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return x, wt


def _graded_edges(lo_scale: float, hi: float, fine: int = 32, depth: int = 40) -> np.ndarray:
    """Dyadically refined toward 0, uniform on [lo_scale/4, 2 lo_scale], geometric up to hi."""
    inner = [lo_scale * 2.0**-k for k in range(depth, 1, -1)]
    mid = list(np.linspace(lo_scale / 4, 2 * lo_scale, fine + 1))
    outer = []
    if hi > 2 * lo_scale:
        count = max(8, int(math.ceil(8 * math.log2(hi / (2 * lo_scale)))))
        outer = list(np.geomspace(2 * lo_scale, hi, count + 1)[1:])
    edges = np.array([0.0] + inner + mid + outer)
    edges = edges[edges <= hi]
    if edges[-1] < hi:
        edges = np.append(edges, hi)
    return np.unique(edges)


# ---- self-convolution of the mollifier ----------------------------------------------


@dataclass(frozen=True)
class _Rho2Table:
    d: int
    profile: str
    spline: interpolate.CubicSpline
    error: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.where(s < 2.0, self.spline(np.clip(s, 0, 2)), 0.0)
        return np.maximum(out, 0.0)


def _rho_unit(profile: str, d: int):
    mol = Mollifier(1.0, profile)
    return lambda r: mol.unit_profile(np.asarray(r, dtype=float), d)


def _rho2_values(profile: str, d: int, s: np.ndarray, nodes: int) -> np.ndarray:
    rho = _rho_unit(profile, d)
    u, w = np.polynomial.legendre.leggauss(nodes)
    if d == 1:
        # int rho(t) rho(s - t) dt over t in [-1, 1]
        t = u
        return (rho(np.abs(t))[None, :] * rho(np.abs(s[:, None] - t[None, :]))) @ w
    tt, tw = 0.5 * (u + 1.0), 0.5 * w  # t in [0, 1]
    if d == 2:
        th, thw = 0.5 * math.pi * (u + 1.0), 0.5 * math.pi * w  # theta in [0, pi]
        out = np.empty(s.size)
        base = tw * tt * rho(tt)
        ct = np.cos(th)
        for i, si in enumerate(s):
            arg = np.sqrt(np.maximum(si**2 + tt[:, None] ** 2 - 2 * si * tt[:, None] * ct[None, :], 0.0))
            out[i] = 2.0 * np.dot(base, rho(arg) @ thw)
        return out
    # d = 3: (2 pi / s) int_0^1 t rho(t) [G(s + t) - G(|s - t|)] dt, G(v) = int_0^v x rho(x) dx
    gx, gw = _panel_rule(np.linspace(0, 1, 257), (u, w))
    cum_edges = np.concatenate([[0.0], np.cumsum((gw * gx * rho(gx)).reshape(256, -1).sum(axis=1))])
    G = interpolate.CubicSpline(np.linspace(0, 1, 257), cum_edges)
    Gf = lambda v: np.where(v >= 1.0, cum_edges[-1], G(np.clip(v, 0, 1)))
    out = np.empty(s.size)
    at_zero = s < 1e-12
    ss = s[~at_zero]
    vals = (tw * tt * rho(tt))[None, :] * (Gf(ss[:, None] + tt[None, :]) - Gf(np.abs(ss[:, None] - tt[None, :])))
    out[~at_zero] = 2 * math.pi / ss * vals.sum(axis=1)
    if np.any(at_zero):
        out[at_zero] = 4 * math.pi * np.dot(tw * tt**2, rho(tt) ** 2)
    return out


@lru_cache(maxsize=None)
def rho2_table(profile: str, d: int) -> _Rho2Table:
    """rho * rho for the eps = 1 mollifier, tabulated on [0, 2]."""
    grid = np.linspace(0.0, 2.0, 1601)
    fine = _rho2_values(profile, d, grid, 400)
    coarse = _rho2_values(profile, d, grid[::2], 300)
    spline = interpolate.CubicSpline(grid, fine, bc_type=((1, 0.0), (1, 0.0)))
    half = interpolate.CubicSpline(grid[::2], coarse, bc_type=((1, 0.0), (1, 0.0)))
    probe = np.linspace(0, 2, 3001)
    err = float(np.max(np.abs(spline(probe) - half(probe))))
    return _Rho2Table(d, profile, spline, err)


def rho2(mol: Mollifier, d: int, r):
    """rho_eps * rho_eps at radius r."""
    tab = rho2_table(mol.profile, d)
    return tab(np.asarray(r, dtype=float) / mol.epsilon) / mol.epsilon**d


# ---- radial P_+ ------------------------------------------------------------------


class RadialPlus:
    """P_+ as a radial function (valid for annihilation order r <= 4)."""

    def __init__(self, d: int, a: float, r: int = DEFAULT_ORDER):
        if r > 4:
            raise ValueError("radial reduction of P_+ needs annihilation order r <= 4")
        self.kernel = GreensKernel(d, a)
        self.dec = self.kernel.decompose(r)
        self.d = d
        self.support = 2.0**-self.dec.n_a

    def spherical(self, r):
        """int_{S^{d-1}} P_+(r w) dw."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        dec = self.dec
        d = self.d
        out = sphere_area(d) * dec.bar_tail(dec.n_a, r)
        # angular average of the correction polynomials times the bump
        coef = np.zeros(len(dec.indices))
        n = dec.n_a
        for k in dec.indices:
            c = dec.I(k, n)
            if c != 0.0:
                j = dec.indices.index(k)
                coef -= c * 2.0 ** (n * sum(k)) * dec.eta_coefficients[j]
        y = r * 2.0**n
        avg = np.zeros_like(r)
        for j, kj in enumerate(dec.indices):
            if coef[j] != 0.0:
                avg += coef[j] * angular_moment(kj) * y ** sum(kj)
        out = out + 2.0 ** (n * d) * avg * bump.bump(2 * y)
        return out

    def __call__(self, r):
        return self.spherical(r) / sphere_area(self.d)


# ---- continuum quadrature -----------------------------------------------------------


def _c1_quadrature(plus: RadialPlus, mol: Mollifier, rule) -> float:
    d = plus.d
    eps = mol.epsilon
    top = min(2.0 * eps, plus.support)
    edges = _graded_edges(eps / 8, top, fine=48)
    r, w = _panel_rule(edges, rule)
    return float(np.dot(w, rho2(mol, d, r) * r ** (d - 1) * plus.spherical(r)))


def compute_c1(d: int, a: float, eps: float, mollifier: Mollifier | str = "bump") -> RenormConstants:
    mol = mollifier if isinstance(mollifier, Mollifier) else Mollifier(eps, mollifier)
    mol = replace(mol, epsilon=eps)
    kern = GreensKernel(d, a)
    n_a = kern.n_a
    sensitive = eps > 2.0**-n_a
    if d == 1:
        return RenormConstants(1, a, eps, mol.profile, 0.0, n_a=n_a, cutoff_sensitive=sensitive)
    return _cached_c1(d, float(a), float(eps), mol.profile)


def self_energy_integral(d: int, a: float, eps: float, mollifier: str = "bump") -> float:
    """int P_+ (rho_eps * rho_eps) without the d = 1 convention C = 0."""
    return _cached_c1(d, float(a), float(eps), mollifier).c1


@lru_cache(maxsize=None)
def _cached_c1(d: int, a: float, eps: float, profile: str) -> RenormConstants:
    mol = Mollifier(eps, profile)
    plus = RadialPlus(d, a)
    hi = _c1_quadrature(plus, mol, _GL24)
    lo = _c1_quadrature(plus, mol, _GL16)
    tab = rho2_table(profile, d)
    # table error propagates through int |P_+| R-shaped weight
    err = abs(hi - lo) + tab.error * abs(hi) / max(float(tab.spline(0.0)), 1e-300)
    if err > TARGET_REL_ERR * max(abs(hi), 1e-300):
        raise QuadratureFailure(f"c1 quadrature error {err:.3g} exceeds target for d={d}, a={a}, eps={eps}")
    return RenormConstants(
        d, a, eps, profile, hi, method=CONTINUUM, error_estimate=err, n_a=plus.dec.n_a,
        cutoff_sensitive=eps > plus.support,
    )


class _Convolver3:
    """Radial convolutions in R^3 against P_+ (tables built once per (a, eps))."""

    def __init__(self, plus: RadialPlus, mol: Mollifier, rule):
        self.plus = plus
        self.mol = mol
        self.rule = rule
        eps = mol.epsilon
        S = plus.support
        # G_P(u) = int_0^u t P_+(t) dt on [0, S]
        edges = _graded_edges(eps / 8, S, fine=64)
        x, w = _panel_rule(edges, rule)
        panel = (w * x * plus(x)).reshape(edges.size - 1, -1).sum(axis=1)
        self._GP = interpolate.CubicSpline(edges, np.concatenate([[0.0], np.cumsum(panel)]))
        self._GP_top = float(np.sum(panel))
        self.S = S

    def GP(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u >= self.S, self._GP_top, self._GP(np.clip(u, 0, self.S)))

    def T(self, r):
        """(P_+ * R)(r) with R = rho_eps * rho_eps."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        eps = self.mol.epsilon
        s, w = _panel_rule(np.linspace(0, 2 * eps, 65), self.rule)
        ws = w * s * rho2(self.mol, 3, s)
        out = np.empty(r.size)
        small = r < 1e-9 * eps
        rr = r[~small]
        diff = self.GP(rr[:, None] + s[None, :]) - self.GP(np.abs(rr[:, None] - s[None, :]))
        out[~small] = 2 * math.pi / rr * (diff @ ws)
        if np.any(small):
            # limit r -> 0: 4 pi int s^2 R(s) P_+(s) ds
            out[small] = 4 * math.pi * np.dot(ws * s, self.plus(s))
        return out


def compute_c11_c12(a: float, eps: float, mollifier: Mollifier | str = "bump") -> tuple[float, float, float]:
    """(c11, c12, error_estimate) in d = 3."""
    profile = mollifier.profile if isinstance(mollifier, Mollifier) else mollifier
    return _cached_c11_c12(float(a), float(eps), profile)


def _c11_c12_quadrature(a: float, eps: float, profile: str, rule) -> tuple[float, float]:
    mol = Mollifier(eps, profile)
    plus = RadialPlus(3, a)
    conv = _Convolver3(plus, mol, rule)
    S = plus.support
    # c11 = 4 pi int r^2 P_+ T^2
    edges = _graded_edges(eps / 8, S, fine=64)
    r, w = _panel_rule(edges, rule)
    T = conv.T(r)
    c11 = 4 * math.pi * float(np.dot(w, r**2 * plus(r) * T**2))
    # G_T(u) = int_0^u t T(t) dt on [0, S + 2 eps]
    top = S + 2 * eps
    tedges = _graded_edges(eps / 8, top, fine=64)
    tx, tw = _panel_rule(tedges, rule)
    panel = (tw * tx * conv.T(tx)).reshape(tedges.size - 1, -1).sum(axis=1)
    GT_spline = interpolate.CubicSpline(tedges, np.concatenate([[0.0], np.cumsum(panel)]))
    GT_top = float(np.sum(panel))
    GT = lambda u: np.where(u >= top, GT_top, GT_spline(np.clip(u, 0, top)))
    # W(r) - W(0) for r in (0, 2 eps]
    s, sw = _panel_rule(_graded_edges(eps / 8, S, fine=64), rule)
    wsp = sw * s * plus(s)
    W0 = 4 * math.pi * float(np.dot(sw * s**2 * plus(s), conv.T(s)))
    rr, rw = _panel_rule(_graded_edges(eps / 8, min(2 * eps, S), fine=48), rule)
    Wr = 2 * math.pi / rr * ((GT(rr[:, None] + s[None, :]) - GT(np.abs(rr[:, None] - s[None, :]))) @ wsp)
    c12 = 4 * math.pi * float(np.dot(rw, rr**2 * plus(rr) * rho2(mol, 3, rr) * (Wr - W0)))
    return c11, c12


@lru_cache(maxsize=None)
def _cached_c11_c12(a: float, eps: float, profile: str) -> tuple[float, float, float]:
    hi = _c11_c12_quadrature(a, eps, profile, _GL24)
    lo = _c11_c12_quadrature(a, eps, profile, _GL16)
    err = abs(hi[0] - lo[0]) + abs(hi[1] - lo[1])
    scale = abs(hi[0]) + abs(hi[1])
    if err > 1e3 * TARGET_REL_ERR * max(scale, 1e-300):
        raise QuadratureFailure(f"c11/c12 quadrature error {err:.3g} too large for a={a}, eps={eps}")
    return hi[0], hi[1], err


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def constants(d: int, a: float, eps: float, mollifier: str = "bump", method: str = CONTINUUM, grid: LatticeGrid | None = None) -> RenormConstants:
    """C_eps^(a) for operator assembly, cached per (d, a, eps, mollifier, method)."""
    key = (d, float(a), float(eps), mollifier, method, None if grid is None else (grid.L, grid.N))
    with _CACHE_LOCK:
        if key in _CACHE:
            return _CACHE[key]
    if method == CONTINUUM:
        base = compute_c1(d, a, eps, mollifier)
        if d == 3:
            c11, c12, err = compute_c11_c12(a, eps, mollifier)
            base = replace(base, c11=c11, c12=c12, error_estimate=base.error_estimate + err)
    elif method == LATTICE:
        if grid is None:
            raise ValueError("lattice self-energy needs a grid")
        val = lattice_self_energy(grid, a, eps, Mollifier(eps, mollifier)) if d > 1 else 0.0
        base = RenormConstants(d, a, eps, mollifier, val, method=LATTICE, n_a=GreensKernel(d, a).n_a)
    elif method == MONTE_CARLO:
        base = c1_monte_carlo(d, a, eps, mollifier)
    else:
        raise ValueError(f"unknown constants method {method!r}")
    with _CACHE_LOCK:
        _CACHE.setdefault(key, base)
    return base


# ---- lattice self-energy ---------------------------------------------------------


def _image_sum(kern: GreensKernel, y: np.ndarray, L: float, tol: float = 1e-14) -> np.ndarray:
    """sum over m != 0 of P(y + 2 L m), truncated where the decay bound drops below tol."""
    d = y.shape[-1]
    M = max(1, int(math.ceil(-math.log(tol) / (2 * L * kern.sqrt_a))) + 1)
    out = np.zeros(y.shape[0])
    for m in np.ndindex(*([2 * M + 1] * d)):
        mm = np.array(m) - M
        if not mm.any():
            continue
        out += kern(y + 2 * L * mm)
    return out


def lattice_self_energy(grid: LatticeGrid, a: float, eps: float, mollifier: Mollifier | None = None, raw: bool = False) -> float:
    """Discrete counterpart of c1 on the periodic version of ``grid``.

    The raw value sum_y h^d G_h(y) Cov_h(y) pairs the periodic lattice Green's
    function of -Delta_h + a with the exact covariance of the discretely
    mollified noise. Its continuum limit is int G_per R, which differs from c1
    by the smooth part G_per - P_+ = P_- + (periodic images); that part is
    subtracted pointwise on the lattice unless ``raw`` is set, so the result
    converges to compute_c1 as h -> 0 at fixed eps.
    """
    mol = mollifier if mollifier is not None else Mollifier(eps)
    mol = replace(mol, epsilon=eps)
    pgrid = LatticeGrid(grid.d, grid.L, grid.N, PERIODIC)
    N, h, d = pgrid.N, pgrid.h, pgrid.d
    ker = mol.discrete_kernel(pgrid) * h**d
    khat2 = np.abs(np.fft.fftn(_circular_kernel(ker, pgrid.shape))) ** 2
    lam1 = 4.0 / h**2 * np.sin(np.pi * np.arange(N) / N) ** 2
    lam = sum(np.meshgrid(*([lam1] * d), indexing="ij"))
    total = float(np.sum(khat2 / (lam + a)) / (2 * grid.L) ** d)
    if raw:
        return total
    # sum_y S(y) (ker * ker~)(y): autocorrelation of the discrete weights
    auto = signal.fftconvolve(ker, ker[(slice(None, None, -1),) * d], mode="full")
    m = (auto.shape[0] - 1) // 2
    offs = h * np.arange(-m, m + 1)
    Y = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), axis=-1).reshape(-1, d)
    kern = GreensKernel(d, a)
    smooth = kern.decompose().minus(Y) + _image_sum(kern, Y, grid.L)
    return total - float(np.dot(smooth, auto.ravel()))


# ---- Monte-Carlo oracle ------------------------------------------------------------


def sample_mollifier(mol: Mollifier, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draws from the density rho_eps by rejection from the uniform ball."""
    peak = float(mol.unit_profile(0.0, d))
    out = []
    have = 0
    while have < n:
        m = int(1.6 * (n - have)) + 1024
        g = rng.standard_normal((m, d))
        g /= np.linalg.norm(g, axis=1)[:, None]
        rad = rng.random(m) ** (1.0 / d)
        pts = g * rad[:, None]
        keep = rng.random(m) * peak < mol.unit_profile(rad, d)
        out.append(pts[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:n] * mol.epsilon


def c1_monte_carlo(d: int, a: float, eps: float, mollifier: str = "bump", n: int = 10**6, seed: int = 12345, batch: int = 10**6) -> RenormConstants:
    """c1 = E[P_+(U - V)] with U, V i.i.d. from rho_eps."""
    mol = Mollifier(eps, mollifier)
    dec = GreensKernel(d, a).decompose()
    rng = np.random.default_rng(seed)
    s1 = s2 = 0.0
    done = 0
    while done < n:
        m = min(batch, n - done)
        z = sample_mollifier(mol, d, m, rng) - sample_mollifier(mol, d, m, rng)
        vals = dec.plus(z)
        s1 += float(vals.sum())
        s2 += float((vals**2).sum())
        done += m
    mean = s1 / n
    var = max(s2 / n - mean**2, 0.0)
    return RenormConstants(d, a, eps, mollifier, mean, method=MONTE_CARLO, error_estimate=math.sqrt(var / n), n_a=dec.n_a)


def c11_c12_monte_carlo(a: float, eps: float, mollifier: str = "bump", n: int = 10**6, seed: int = 777, batch: int = 2 * 10**5):
    """Independent estimates of (c11, c12) with their standard errors.

    R(z) is realised as the law of U + U' with U, U' ~ rho_eps, and the free
    spatial variable is drawn uniformly from the support ball of P_+.
    """
    mol = Mollifier(eps, mollifier)
    dec = GreensKernel(3, a).decompose()
    S = 2.0**-dec.n_a
    vol = 4.0 / 3.0 * math.pi * S**3
    rng = np.random.default_rng(seed)

    def ball(m):
        g = rng.standard_normal((m, 3))
        g /= np.linalg.norm(g, axis=1)[:, None]
        return g * (S * rng.random(m) ** (1 / 3))[:, None]

    def safe_plus(z):
        out = np.zeros(z.shape[0])
        r = np.linalg.norm(z, axis=1)
        ok = (r > 0) & (r < S)
        out[ok] = dec.plus(z[ok])
        return out

    acc = {"c11": [0.0, 0.0], "c12": [0.0, 0.0]}
    done = 0
    while done < n:
        m = min(batch, n - done)
        S1 = sample_mollifier(mol, 3, m, rng) + sample_mollifier(mol, 3, m, rng)
        S2 = sample_mollifier(mol, 3, m, rng) + sample_mollifier(mol, 3, m, rng)
        x = ball(m)
        px = safe_plus(x)
        v11 = vol * px * safe_plus(S1 - x) * safe_plus(S2 - x)
        # c12 = E[P(S3) (Q(S - S3) - Q(S))] with Q = P * P, S3 = S2 here
        v12 = vol * px * safe_plus(S2) * (safe_plus(S1 - S2 - x) - safe_plus(S1 - x))
        for key, v in (("c11", v11), ("c12", v12)):
            acc[key][0] += float(v.sum())
            acc[key][1] += float((v**2).sum())
        done += m
    out = {}
    for key, (s1, s2) in acc.items():
        mean = s1 / n
        out[key] = (mean, math.sqrt(max(s2 / n - mean**2, 0.0) / n))
    return out


# ---- rescaling ---------------------------------------------------------------------


def scaled_constants(base: RenormConstants, L: float) -> ScaledConstants:
    """Constants of the model driven by x -> L^-2 xi_eps(x / L) on (-L, L)^d."""
    d = base.d

    def tilde(eps):
        if d == 1:
            return 0.0, 0.0, 0.0
        b = constants(d, base.a, eps * L, base.mollifier)
        if d == 2:
            return L**-2 * b.c1, 0.0, 0.0
        return L**-1 * b.c1, L**-2 * b.c11, L**-2 * b.c12

    def total(c):
        return c[0] if d == 2 else sum(c)

    if math.isclose(L, 1.0):
        t = (base.c1, base.c11, base.c12)
        return ScaledConstants(L, base.epsilon, base, *t, 0.0, 0.0)
    t = tilde(base.epsilon)
    delta = L**-2 * base.C - total(t) if d > 1 else 0.0
    delta_half = 0.0
    if d > 1:
        half = constants(d, base.a, base.epsilon / 2, base.mollifier)
        delta_half = L**-2 * half.C - total(tilde(base.epsilon / 2))
    return ScaledConstants(L, base.epsilon, base, *t, delta, delta_half)


def write_csv(rows: list[RenormConstants], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_SCHEMA + "\n")
        wr = csv.writer(fh)
        wr.writerow(["d", "a", "eps", "method", "c1", "c11", "c12", "C", "error_estimate"])
        for rc in rows:
            wr.writerow([rc.d, f"{rc.a:.17g}", f"{rc.epsilon:.17g}", rc.method] + [f"{v:.17g}" for v in rc.row()[4:]])


def eps_sweep(d: int, a: float = 1.0, levels: int = 6, first: int = 4, mollifier: str = "bump") -> tuple[list[RenormConstants], float]:
    """Constants at eps = 2^-first, ..., 2^-(first + levels - 1) and the
    least-squares slope of C against ln eps."""
    rows = [constants(d, a, 2.0 ** -(first + j), mollifier) for j in range(levels)]
    eps = np.array([r.epsilon for r in rows])
    slope = float(np.polyfit(np.log(eps), [r.C for r in rows], 1)[0]) if levels >= 2 else math.nan
    return rows, slope
