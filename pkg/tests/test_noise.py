import math

import numpy as np
import pytest
from scipy import stats

from andham import noise
from andham.errors import UnresolvedMollifier
from andham.noise import PERIODIC, LatticeGrid, Mollifier


def test_grid_invariants():
    g = LatticeGrid(2, 1.5, 64)
    assert g.h == 2 * 1.5 / 64
    assert g.cell_count == 64**2
    assert g.shape == (63, 63)
    assert LatticeGrid(2, 1.5, 64, PERIODIC).shape == (64, 64)
    assert np.all(g.boundary_distance() > 0)
    with pytest.raises(ValueError):
        LatticeGrid(2, 1.0, 63)
    with pytest.raises(ValueError):
        LatticeGrid(4, 1.0, 64)


def test_sample_white_is_deterministic():
    g = LatticeGrid(2, 1.0, 32)
    a = noise.sample_white(g, 7, 3)
    b = noise.sample_white(g, 7, 3)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, noise.sample_white(g, 7, 4).values)
    assert not a.values.flags.writeable


def test_white_mean_clt_bound():
    g = LatticeGrid(1, 1.0, 2**14, PERIODIC)
    w = noise.sample_white(g, 11)
    bound = 4 * math.sqrt(g.h**-g.d / g.N**g.d)
    assert abs(w.values.mean()) < bound


def test_white_variance_over_seeds():
    # chi-square oracle: the pooled variance of 100 x 256^2 cells is within 5% of h^-2
    g = LatticeGrid(2, 1.0, 256, PERIODIC)
    var = np.mean([np.var(noise.sample_white(g, s).values) for s in range(100)])
    assert abs(var * g.h**2 - 1) < 0.05
    # per-seed chi-square statistics stay inside their 99.9% band
    dof = g.size - 1
    lo, hi = stats.chi2.ppf([0.0005, 0.9995], dof)
    for s in range(5):
        v = noise.sample_white(g, s).values * g.h
        chi = np.sum((v - v.mean()) ** 2)
        assert lo < chi < hi


def test_white_cells_are_gaussian():
    g = LatticeGrid(2, 1.0, 128, PERIODIC)
    w = noise.sample_white(g, 5).values.ravel() * g.h
    assert stats.kstest(w, "norm").pvalue > 0.01


def test_discrete_kernel_mass_and_symmetry():
    for d in (1, 2, 3):
        g = LatticeGrid(d, 1.0, 64)
        k = Mollifier(0.2).discrete_kernel(g)
        assert abs(k.sum() * g.h**d - 1) < 1e-12
        assert np.allclose(k, np.flip(k))


def test_profile_is_even_and_unit_mass():
    from scipy import integrate

    for prof in noise.PROFILES:
        m = Mollifier(1.0, prof)
        for d in (1, 2, 3):
            val, _ = integrate.quad(lambda r: m.unit_profile(r, d) * r ** (d - 1), 0, 1, epsabs=1e-13)
            assert val * noise.sphere_area(d) == pytest.approx(1.0, rel=1e-10)
        x = np.array([[0.3, -0.2]])
        assert m(x) == m(-x)


def test_mollify_zero_and_constant():
    g = LatticeGrid(2, 1.0, 64, PERIODIC)
    mol = Mollifier(0.125)
    z = noise.mollify(noise.zero_field(g), mol)
    assert np.all(z.values == 0)
    c = noise.mollify(noise.deterministic(g, 3.5), mol)
    assert np.max(np.abs(c.values - 3.5)) < 1e-12


def test_mollify_spike_gives_profile():
    g = LatticeGrid(2, 1.0, 64)
    spike = np.zeros(g.shape)
    centre = (g.n_axis // 2,) * 2
    spike[centre] = 1.0 / g.h**2
    mol = Mollifier(0.125)
    out = noise.mollify(noise.deterministic(g, spike), mol).values
    assert abs(out.sum() * g.h**2 - 1) < 1e-10
    ker = mol.discrete_kernel(g)
    m = (ker.shape[0] - 1) // 2
    window = out[centre[0] - m : centre[0] + m + 1, centre[1] - m : centre[1] + m + 1]
    assert np.max(np.abs(window - ker)) < 1e-9 * ker.max()


def test_mollify_is_linear(rng):
    g = LatticeGrid(1, 1.0, 256)
    mol = Mollifier(0.05)
    u, v = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    lhs = noise.mollify(noise.deterministic(g, 2 * u - 3 * v), mol).values
    rhs = 2 * noise.mollify(noise.deterministic(g, u), mol).values - 3 * noise.mollify(noise.deterministic(g, v), mol).values
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_unresolved_mollifier():
    g = LatticeGrid(1, 1.0, 64)
    with pytest.raises(UnresolvedMollifier):
        noise.mollify(noise.sample_white(g, 0), Mollifier(g.h))


def test_mollify_commutes_with_periodic_shift():
    g = LatticeGrid(2, 1.0, 64, PERIODIC)
    w = noise.sample_white(g, 3)
    mol = Mollifier(0.1)
    a = noise.mollify(noise.deterministic(g, np.roll(w.values, (5, -3), axis=(0, 1))), mol).values
    b = np.roll(noise.mollify(w, mol).values, (5, -3), axis=(0, 1))
    # FFT convolution: equality up to rounding
    assert np.max(np.abs(a - b)) < 1e-11 * np.max(np.abs(b))


def test_dirichlet_mollify_uses_zero_extension():
    g = LatticeGrid(1, 1.0, 128)
    out = noise.mollify(noise.deterministic(g, 1.0), Mollifier(0.1)).values
    assert out[g.n_axis // 2] == pytest.approx(1.0, abs=1e-12)
    assert out[0] < 0.75


def test_coupling_converges_on_smooth_input():
    # sup error of mollified sin profile is O(eps^2)
    g = LatticeGrid(1, 1.0, 4096, PERIODIC)
    x = g.axis()
    f = np.sin(np.pi * x)
    errs = []
    for eps in (0.08, 0.04, 0.02):
        out = noise.mollify(noise.deterministic(g, f), Mollifier(eps)).values
        errs.append(np.max(np.abs(out - f)))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.15)


def test_rescale_noise():
    g = LatticeGrid(2, 1.0, 32)
    w = noise.mollify(noise.sample_white(g, 1), Mollifier(0.125))
    same = noise.rescale_noise(w, 1.0)
    assert np.array_equal(same.values, w.values)
    big = noise.rescale_noise(w, 3.0)
    assert big.grid.L == 3.0 and big.grid.N == 32
    assert np.max(np.abs(big.values)) == np.max(np.abs(w.values)) * 3.0**-2
    assert big.epsilon == pytest.approx(0.375)
    with pytest.raises(ValueError):
        noise.rescale_noise(big, 2.0)


def test_rescaled_variance_matches_weak_noise_law():
    # L^-2 xi_eps(x/L) has the law of L^{d/2-2} zeta_{eps L}: variance ratio L^{d-4}
    d, L, N, eps = 2, 2.0, 64, 0.125
    g = LatticeGrid(d, 1.0, N, PERIODIC)
    gL = g.with_L(L)
    resc = np.var([noise.rescale_noise(noise.mollify(noise.sample_white(g, s), Mollifier(eps)), L).values for s in range(60)])
    direct = np.var([noise.mollify(noise.sample_white(gL, 1000 + s), Mollifier(eps * L)).values for s in range(60)])
    assert resc / (L ** (d - 4) * direct) == pytest.approx(1.0, rel=0.05)


def test_csv_and_binary_roundtrip(tmp_path):
    g = LatticeGrid(2, 1.5, 8, PERIODIC)
    w = noise.mollify(noise.sample_white(g, 9), Mollifier(0.75))
    noise.to_binary(w, tmp_path / "f.bin")
    back = noise.from_binary(tmp_path / "f.bin")
    assert back.grid == g and back.kind == w.kind and back.seed == 9
    assert back.epsilon == w.epsilon
    assert np.array_equal(back.values, w.values)
    noise.to_csv(w, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == noise.CSV_SCHEMA
    assert lines[1] == "i0,i1,value"
    assert len(lines) == 2 + g.size
    vals = np.array([float(l.split(",")[-1]) for l in lines[2:]]).reshape(g.shape)
    assert np.array_equal(vals, w.values)
