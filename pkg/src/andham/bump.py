"""Smooth compactly supported primitives shared by the mollifier and the
dyadic partition of unity."""

import numpy as np


def _f(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def bump(r):
    """Unnormalised standard bump exp(-1/(1-r^2)) on |r| < 1, zero elsewhere."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = _f(t)
    b = _f(1.0 - t)
    return a / (a + b)


def cutoff(s):
    """Radial cutoff equal to 1 on [0, 1/2] and 0 on [1, inf)."""
    return smooth_step(2.0 - 2.0 * np.asarray(s, dtype=float))


def partition(s):
    """Dyadic partition function supported in [1/4, 1].

    sum_n partition(2**n * s) == 1 for s > 0 and
    sum_{n >= 0} partition(2**n * s) == cutoff(s).
    """
    s = np.asarray(s, dtype=float)
    return cutoff(s) - cutoff(2.0 * s)
