import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bergmanlab.envelopes import radial_oracle
from bergmanlab.errors import DimensionZero
from bergmanlab.geometry import PoleSet, ProjectivePoint, make_grid
from bergmanlab.sections import build_orthonormal_basis
from bergmanlab.zeros import (
    EmpiricalDivisor,
    RandomSection,
    ReducedEquilibrium,
    equilibrium_pairings,
    fs_pairings,
    harmonic_battery,
    pair_with_current,
    radial_ks,
    sample_section,
    speed_experiment,
    zero_divisor,
)

import oracles

POLE = PoleSet.of(("0,0", 0.5))


@pytest.fixture(scope="module")
def pole_space():
    return build_orthonormal_basis(1, 40, POLE)


@pytest.fixture(scope="module")
def pole_equilibrium():
    return ReducedEquilibrium.from_oracle(radial_oracle(1, POLE), POLE, make_grid(96, 192))


def test_sample_is_unit_and_reproducible(pole_space):
    a = sample_section(pole_space, 5)
    b = sample_section(pole_space, 5)
    assert np.array_equal(a.coeffs, b.coeffs)
    assert np.linalg.norm(a.coeffs) == pytest.approx(1.0, abs=1e-12)
    assert not np.array_equal(a.coeffs, sample_section(pole_space, 6).coeffs)


def test_one_dimensional_space_gives_a_fixed_divisor():
    space = build_orthonormal_basis(1, 2, PoleSet.of(("0,0", 0.5), ("inf", 0.5)))
    assert space.dim == 1
    d1 = zero_divisor(sample_section(space, 1))
    d2 = zero_divisor(sample_section(space, 2))
    assert d1.points == d2.points
    assert abs(sample_section(space, 3).coeffs[0]) == pytest.approx(1.0)


def test_coefficient_covariance_matches_sphere_moments():
    space = build_orthonormal_basis(1, 4, PoleSet())
    assert space.dim == 5
    c = np.array([sample_section(space, s).coeffs for s in range(10_000)])
    cov = c.T @ c.conj() / len(c)
    # E|c_i|^2 = 1/5, Var|c_i|^2 = 4/(25*6); off-diagonal E|c_i c_j|^2 = 1/30
    se_diag = math.sqrt(4 / (25 * 6) / len(c))
    se_off = math.sqrt(1 / 30 / len(c))
    assert np.all(np.abs(np.diag(cov).real - 0.2) < 4 * se_diag)
    off = cov[~np.eye(5, dtype=bool)]
    assert np.all(np.abs(off) < 4 * se_off)


def test_quadratic_embedded_as_section():
    space = build_orthonormal_basis(1, 2, PoleSet())
    q = np.array([-1.0, 0.0, 1.0])
    b = q / np.sqrt([1.0, 2.0, 1.0])  # q in the sqrt(binom)-scaled monomial basis
    c = space.r_scaled @ b
    div = zero_divisor(RandomSection(space, c / np.linalg.norm(c)))
    assert div.total == 2
    pts = sorted(pt.affine.real for pt, _ in div.points)
    assert np.allclose(pts, [-1, 1], atol=1e-12)


def test_first_basis_element_has_all_zeros_at_infinity():
    space = build_orthonormal_basis(1, 7, PoleSet())
    e0 = np.zeros(space.dim, complex)
    e0[0] = 1
    div = zero_divisor(RandomSection(space, e0))
    assert div.total == 7
    assert div.infinity_multiplicity == 7


@settings(max_examples=20)
@given(st.integers(1, 2), st.integers(3, 30), st.integers(1, 99), st.integers(0, 2**31))
def test_divisor_mass_and_forced_multiplicity(k, p, cents, seed):
    poles = PoleSet.of(("0.3,-0.4", cents / 100 / 2), ("inf", cents / 100 / 3))
    space = build_orthonormal_basis(k, p, poles)
    div = zero_divisor(sample_section(space, seed))
    assert div.total == k * p
    for (pt, _), t in zip(poles, space.thresholds):
        assert div.multiplicity_at(pt) >= t


def test_scale_invariance(pole_space):
    s = sample_section(pole_space, 9)
    d1 = zero_divisor(s)
    d2 = zero_divisor(RandomSection(pole_space, s.coeffs * (3 - 4j)))
    r1 = np.sort_complex(d1.free_roots[np.isfinite(d1.free_roots)])
    r2 = np.sort_complex(d2.free_roots[np.isfinite(d2.free_roots)])
    assert np.max(np.abs(r1 - r2)) < 1e-10


def test_divisor_text_format(pole_space):
    div = zero_divisor(sample_section(pole_space, 1))
    text = div.to_text()
    assert text.splitlines()[-1].startswith("INF ")
    parsed = EmpiricalDivisor.parse(text)
    assert sum(m for _, m in parsed) == div.total
    assert dict((z, m) for z, m in parsed if z is not None).get(0j) == 20


def test_mass_pairing_gives_k_three_ways(pole_space, pole_equilibrium):
    div = zero_divisor(sample_section(pole_space, 0))
    reps = pair_with_current(div, pole_equilibrium, space=pole_space)
    one = reps[0]
    assert one.test_function == "one"
    for v in (one.value_empirical, one.value_equilibrium, one.value_fs):
        assert v == pytest.approx(1.0, abs=1e-3)


def test_two_form_pairing_with_k_two():
    poles = PoleSet.of(("0,0", 0.5))
    space = build_orthonormal_basis(2, 10, poles)
    eq = ReducedEquilibrium.from_oracle(radial_oracle(2, poles), poles, make_grid(64, 128))
    reps = pair_with_current(zero_divisor(sample_section(space, 0)), eq, space=space)
    assert reps[0].value_empirical == pytest.approx(2.0)
    assert reps[0].value_equilibrium == pytest.approx(2.0, abs=1e-3)
    assert reps[0].value_fs == pytest.approx(2.0, abs=1e-3)


def test_symmetric_equilibrium_kills_nonconstant_harmonics():
    eq = ReducedEquilibrium.from_oracle(radial_oracle(1, PoleSet()), PoleSet(), make_grid(32, 64))
    vals = equilibrium_pairings(eq, harmonic_battery())
    assert vals[0] == pytest.approx(1.0)
    assert np.max(np.abs(vals[1:])) < 1e-8


def test_pole_equilibrium_zonal_pairing_matches_closed_form(pole_equilibrium):
    # T_eq = 1/2 delta_0 + omega_FS restricted to |z| >= 1; <x3> = 1/2*(-1) + int_{u<=1/2} (1 - 2u) du = -1/4
    vals = dict(zip([c.name for c in harmonic_battery()], equilibrium_pairings(pole_equilibrium, harmonic_battery())))
    assert vals["x3"] == pytest.approx(-0.25, abs=1e-4)


def test_triangle_consistency(pole_space, pole_equilibrium):
    reps = pair_with_current(zero_divisor(sample_section(pole_space, 3)), pole_equilibrium, space=pole_space)
    for r in reps:
        lhs = abs(r.value_empirical - r.value_equilibrium)
        rhs = abs(r.value_empirical - r.value_fs) + abs(r.value_fs - r.value_equilibrium)
        assert lhs <= rhs + 1e-12


def test_fs_pairing_is_the_expected_divisor_pairing():
    # symmetric case: gamma_p = omega_FS exactly, so the x3 pairing vanishes
    space = build_orthonormal_basis(1, 12, PoleSet())
    vals = fs_pairings(space, harmonic_battery())
    assert vals[0] == pytest.approx(1.0)
    assert np.max(np.abs(vals[1:])) < 1e-10


def test_radial_ks_is_small_for_uniform_symmetric_roots():
    space = build_orthonormal_basis(1, 100, PoleSet())
    prof = radial_oracle(1, PoleSet())
    ks = [radial_ks(zero_divisor(sample_section(space, s)), prof.density_cdf_u) for s in range(20)]
    assert np.mean(ks) <= 0.05
    # and the oracle CDF itself is the uniform law in u
    u = np.linspace(0, 1, 11)
    assert np.allclose(prof.density_cdf_u(u), oracles.analytic_u_cdf(1, 0, 0, u), atol=1e-3)


def test_speed_experiment_is_deterministic_and_well_formed():
    kw = dict(k=1, p_list=[10, 20], poles=POLE, n_samples=8, seed=4)
    a = speed_experiment(**kw)
    b = speed_experiment(**kw)
    assert a.to_csv() == b.to_csv()
    lines = a.to_csv().splitlines()
    assert lines[0] == "p,seed,D,exceed"
    assert len(lines) == 1 + 16
    assert {int(l.split(",")[0]) for l in lines[1:]} == {10, 20}
    assert a.fit_p == 10
    assert a.exceedance()[10] <= 0.125 + 1e-12


def test_single_point_ensemble_has_deterministic_D():
    poles = PoleSet.of(("0,0", 0.5), ("inf", 0.4))  # p=4: dim 1
    rep = speed_experiment(1, [4], poles, n_samples=3, seed=0)
    assert len({round(r[2], 14) for r in rep.rows}) == 1


def test_zero_dimensional_space_cannot_be_sampled(pole_space):
    import dataclasses

    empty = dataclasses.replace(pole_space, m=-1)
    with pytest.raises(DimensionZero):
        sample_section(empty, 0)


def test_speed_report_ks_matches_single_divisor_ks():
    rep = speed_experiment(1, [20], POLE, n_samples=3, seed=2)
    cdf = radial_oracle(1, POLE).density_cdf_u
    space = build_orthonormal_basis(1, 20, POLE)
    from bergmanlab.zeros import _sample_seed

    want = [radial_ks(zero_divisor(sample_section(space, _sample_seed(2, 20, i))), cdf) for i in range(3)]
    assert np.allclose(rep.ks(cdf, 20), want)
