"""Modified Bessel functions K0 and K1 of real positive argument.

Three regimes:
  x <= 2        ascending series (Abramowitz & Stegun 9.6.13 / 9.6.11)
  2 < x < 25    trapezoidal rule on K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt
  x >= 25       Hankel asymptotic expansion (A&S 9.7.2)

The middle band exists because the asymptotic series is divergent and its
smallest term near x = 2 is ~1e-4 relative; the trapezoidal rule converges
geometrically for this integrand.
"""

import math

import numpy as np

from andham._accel import njit, select

EULER_GAMMA = 0.57721566490153286061
_SERIES_MAX = 2.0
_ASYMP_MIN = 25.0
_TRAP_STEP = 0.05


@njit
def _k0_scalar(x):
    if x <= _SERIES_MAX:
        q = 0.25 * x * x
        term = 1.0
        i0 = 1.0
        tail = 0.0
        harmonic = 0.0
        k = 0
        while True:
            k += 1
            term *= q / (k * k)
            harmonic += 1.0 / k
            i0 += term
            tail += term * harmonic
            if term * (harmonic + 1.0) < 1e-18 * (i0 + tail):
                break
        return -(math.log(0.5 * x) + EULER_GAMMA) * i0 + tail
    if x >= _ASYMP_MIN:
        total = 1.0
        term = 1.0
        for k in range(1, 30):
            term *= -((2 * k - 1) ** 2) / (k * 8.0 * x)
            total += term
            if abs(term) < 1e-17:
                break
        return math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) * total
    # exp(x) factored out so the sum stays O(1)
    total = 0.5
    t = _TRAP_STEP
    while True:
        v = math.exp(-x * (math.cosh(t) - 1.0))
        total += v
        if v < 1e-18:
            break
        t += _TRAP_STEP
    return total * _TRAP_STEP * math.exp(-x)


@njit
def _k1_scalar(x):
    if x <= _SERIES_MAX:
        q = 0.25 * x * x
        # I1 and the digamma sum share the factor (x/2)^{2k}/(k!(k+1)!)
        term = 1.0
        i1_sum = 1.0
        psi_k1 = -EULER_GAMMA
        psi_k2 = 1.0 - EULER_GAMMA
        tail = psi_k1 + psi_k2
        k = 0
        while True:
            k += 1
            term *= q / (k * (k + 1.0))
            psi_k1 += 1.0 / k
            psi_k2 += 1.0 / (k + 1.0)
            i1_sum += term
            tail += term * (psi_k1 + psi_k2)
            if term * (abs(psi_k1) + abs(psi_k2) + 1.0) < 1e-18 * i1_sum:
                break
        i1 = 0.5 * x * i1_sum
        return 1.0 / x + math.log(0.5 * x) * i1 - 0.25 * x * tail
    if x >= _ASYMP_MIN:
        total = 1.0
        term = 1.0
        for k in range(1, 30):
            term *= (4.0 - (2 * k - 1) ** 2) / (k * 8.0 * x)
            total += term
            if abs(term) < 1e-17:
                break
        return math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) * total
    total = 0.5
    t = _TRAP_STEP
    while True:
        v = math.exp(-x * (math.cosh(t) - 1.0)) * math.cosh(t)
        total += v
        if v < 1e-18:
            break
        t += _TRAP_STEP
    return total * _TRAP_STEP * math.exp(-x)


@njit
def _k0_loop(x):
    out = np.empty(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        out[i] = _k0_scalar(flat[i])
    return out


@njit
def _k1_loop(x):
    out = np.empty(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        out[i] = _k1_scalar(flat[i])
    return out


def _series_np(x, order):
    q = 0.25 * x * x
    term = np.ones_like(x)
    if order == 0:
        i0 = np.ones_like(x)
        tail = np.zeros_like(x)
        harmonic = 0.0
        for k in range(1, 40):
            term = term * q / (k * k)
            harmonic += 1.0 / k
            i0 += term
            tail += term * harmonic
        return -(np.log(0.5 * x) + EULER_GAMMA) * i0 + tail
    i1_sum = np.ones_like(x)
    psi_k1, psi_k2 = -EULER_GAMMA, 1.0 - EULER_GAMMA
    tail = np.full_like(x, psi_k1 + psi_k2)
    for k in range(1, 40):
        term = term * q / (k * (k + 1.0))
        psi_k1 += 1.0 / k
        psi_k2 += 1.0 / (k + 1.0)
        i1_sum += term
        tail += term * (psi_k1 + psi_k2)
    return 1.0 / x + np.log(0.5 * x) * 0.5 * x * i1_sum - 0.25 * x * tail


def _asymp_np(x, order):
    mu = 4.0 * order * order
    total = np.ones_like(x)
    term = np.ones_like(x)
    for k in range(1, 30):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        total += term
    return np.sqrt(np.pi / (2.0 * x)) * np.exp(-x) * total


def _trap_np(x, order):
    t = np.arange(0.0, 6.0, _TRAP_STEP)
    w = np.full(t.size, _TRAP_STEP)
    w[0] *= 0.5
    ch = np.cosh(t)
    vals = np.exp(-np.outer(x, ch - 1.0))
    if order == 1:
        vals = vals * ch
    return (vals @ w) * np.exp(-x)


def _kn_numpy(x, order):
    out = np.empty(x.size)
    flat = x.ravel()
    lo = flat <= _SERIES_MAX
    hi = flat >= _ASYMP_MIN
    mid = ~(lo | hi)
    out[lo] = _series_np(flat[lo], order)
    out[hi] = _asymp_np(flat[hi], order)
    out[mid] = _trap_np(flat[mid], order)
    return out


_k0_impl = select(_k0_loop, lambda x: _kn_numpy(x, 0))
_k1_impl = select(_k1_loop, lambda x: _kn_numpy(x, 1))


def _prepare(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("Bessel K is only evaluated for positive arguments")
    return arr


def k0(x):
    """Modified Bessel function of the second kind, order 0."""
    arr = _prepare(x)
    out = _k0_impl(np.ascontiguousarray(arr)).reshape(arr.shape)
    return out if arr.ndim else float(out)


def k1(x):
    """Modified Bessel function of the second kind, order 1 (equals -K0')."""
    arr = _prepare(x)
    out = _k1_impl(np.ascontiguousarray(arr)).reshape(arr.shape)
    return out if arr.ndim else float(out)
