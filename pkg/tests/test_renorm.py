import math

import numpy as np
import pytest

from andham import renorm
from andham.greens import GreensKernel
from andham.noise import LatticeGrid, Mollifier

LN2_2PI = math.log(2) / (2 * math.pi)


def test_one_dimension_needs_no_counterterm():
    rc = renorm.compute_c1(1, 1.0, 2**-5)
    assert rc.c1 == 0.0 and rc.C == 0.0
    # the raw self-energy is finite and tends to P_+(0) (P_+ is continuous in d = 1)
    plus0 = float(GreensKernel(1, 1.0).decompose().plus(np.zeros((1, 1)))[0])
    assert renorm.self_energy_integral(1, 1.0, 2**-9) == pytest.approx(plus0, rel=1e-2)


def test_two_dimensional_log_increment():
    """c1(eps/2) - c1(eps) -> ln 2 / (2 pi): the log coefficient of P at 0."""
    inc = [renorm.compute_c1(2, 1.0, 2.0**-e).c1 - renorm.compute_c1(2, 1.0, 2.0 ** -(e - 1)).c1 for e in (7, 8, 9)]
    assert inc[-1] == pytest.approx(LN2_2PI, rel=5e-3)
    assert abs(inc[-1] - LN2_2PI) < abs(inc[0] - LN2_2PI)


def test_quadrature_error_estimate_is_small():
    rc = renorm.compute_c1(2, 1.0, 2**-6)
    assert rc.error_estimate < renorm.TARGET_REL_ERR * abs(rc.c1)


def test_mass_scaling_identity():
    """P^(4)(x) = P^(1)(2x) in d = 2 and the cut-off shifts by one level."""
    assert renorm.compute_c1(2, 4.0, 2**-5).c1 == pytest.approx(renorm.compute_c1(2, 1.0, 2**-4).c1, rel=1e-12)


def test_three_dimensional_leading_order():
    """eps * c1 -> c_rho + P_+^reg(0) eps: linear in eps, so second differences
    of eps * c1 in eps shrink by about four per halving."""
    e = [2.0**-k for k in (5, 6, 7, 8)]
    v = [x * renorm.compute_c1(3, 1.0, x).c1 for x in e]
    d1 = [v[i] - v[i + 1] for i in range(3)]
    ratios = [d1[i] / d1[i + 1] for i in range(2)]
    for r in ratios:
        assert r == pytest.approx(2.0, rel=0.1)


@pytest.mark.parametrize("d", [2, 3])
def test_continuum_matches_monte_carlo(d):
    n = 5 * 10**4 if d == 2 else 2 * 10**5
    mc = renorm.c1_monte_carlo(d, 1.0, 2**-4, n=n)
    ref = renorm.compute_c1(d, 1.0, 2**-4).c1
    assert abs(mc.c1 - ref) < 4 * mc.error_estimate


@pytest.mark.slow
def test_second_order_constants_match_monte_carlo():
    mc = renorm.c11_c12_monte_carlo(1.0, 2**-4, n=2 * 10**5)
    c11, c12, err = renorm.compute_c11_c12(1.0, 2**-4)
    assert err < 1e-6
    assert abs(mc["c11"][0] - c11) < 4 * mc["c11"][1]
    assert abs(mc["c12"][0] - c12) < 4 * mc["c12"][1]


def test_lattice_self_energy_converges_to_c1():
    ref = renorm.compute_c1(2, 1.0, 2**-4).c1
    vals = [renorm.lattice_self_energy(LatticeGrid(2, 1.0, N, "periodic"), 1.0, 2**-4) for N in (128, 256, 512)]
    errs = [abs(v - ref) for v in vals]
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 2e-4
    # the raw pairing converges to a different constant: the smooth part matters
    raw = renorm.lattice_self_energy(LatticeGrid(2, 1.0, 256, "periodic"), 1.0, 2**-4, raw=True)
    assert abs(raw - ref) > 0.1


def test_lattice_self_energy_is_size_independent():
    a = renorm.lattice_self_energy(LatticeGrid(2, 1.0, 256, "periodic"), 1.0, 2**-4)
    b = renorm.lattice_self_energy(LatticeGrid(2, 2.0, 512, "periodic"), 1.0, 2**-4)
    assert a == pytest.approx(b, abs=1e-6)


def test_mollifier_profiles_differ_by_a_constant():
    diffs = [
        renorm.compute_c1(2, 1.0, 2.0**-e, "cosine").c1 - renorm.compute_c1(2, 1.0, 2.0**-e).c1 for e in (6, 7, 8)
    ]
    assert abs(diffs[2] - diffs[1]) < abs(diffs[1] - diffs[0])
    assert abs(diffs[2] - diffs[1]) < 1e-3


def test_mass_sensitivity_is_bounded():
    """C^(a) - C^(1) stays bounded as eps -> 0 (difference of two log-divergent terms)."""
    gaps = [renorm.compute_c1(2, 10.0, 2.0**-e).c1 - renorm.compute_c1(2, 1.0, 2.0**-e).c1 for e in (6, 7, 8)]
    # the gap converges: successive increments contract by roughly four
    assert abs(gaps[2] - gaps[1]) < 0.4 * abs(gaps[1] - gaps[0])


def test_rho2_has_unit_mass():
    mol = Mollifier(0.1)
    edges = np.linspace(0, 0.2, 401)
    r, w = renorm._panel_rule(edges)
    for d in (1, 2, 3):
        mass = float(np.dot(w, renorm.rho2(mol, d, r) * r ** (d - 1))) * renorm.sphere_area(d)
        assert mass == pytest.approx(1.0, rel=1e-6)


def test_constants_cache_and_methods():
    a = renorm.constants(2, 1.0, 2**-5)
    assert renorm.constants(2, 1.0, 2**-5) is a
    with pytest.raises(ValueError):
        renorm.constants(2, 1.0, 2**-5, method="nonsense")
    with pytest.raises(ValueError):
        renorm.constants(2, 1.0, 2**-5, method=renorm.LATTICE)


def test_scaled_constants():
    base = renorm.constants(2, 1.0, 2**-7)
    same = renorm.scaled_constants(base, 1.0)
    assert same.delta_L == 0.0 and same.C == base.C
    s = renorm.scaled_constants(base, 2.0)
    # L^2 delta_L = c1(eps) - c1(2 eps) -> ln 2 / (2 pi)
    assert s.delta_L * 4 == pytest.approx(LN2_2PI, rel=0.02)
    assert abs(s.eps_sensitivity) < 0.01 * abs(s.delta_L)


def test_csv_roundtrip(tmp_path):
    rows, slope = renorm.eps_sweep(2, levels=3, first=4)
    path = tmp_path / "r.csv"
    renorm.write_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == renorm.CSV_SCHEMA
    assert len(lines) == 2 + 3
    assert float(lines[2].split(",")[4]) == rows[0].c1
    assert slope < 0
