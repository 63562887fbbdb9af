import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bergmanlab.geometry import (
    GridField,
    PoleSet,
    ProjectivePoint,
    chordal_sigma,
    chordal_sigma_h,
    fs_weight,
    make_grid,
    sphere_coords,
    to_homogeneous,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(finite, finite)
def test_point_text_round_trip(re, im):
    pt = ProjectivePoint.from_affine(complex(re, im))
    back = ProjectivePoint.parse(pt.format())
    assert back.affine == pt.affine


def test_infinity_parsing_and_coordinates():
    inf = ProjectivePoint.parse("inf")
    assert inf.is_infinity
    assert inf.format() == "inf"
    z0, z1 = inf.homogeneous()
    assert abs(z0) == 0 and abs(z1) == pytest.approx(1.0)
    assert ProjectivePoint.parse(" 0.5, -2 ").affine == complex(0.5, -2)


@pytest.mark.parametrize("bad", ["", "a,b", "1,2,3", "nan,0", "inf,1"])
def test_point_parse_rejects_garbage(bad):
    with pytest.raises(ValueError):
        ProjectivePoint.parse(bad)


@given(finite, finite, finite, finite)
def test_chordal_distance_is_symmetric_and_bounded(a, b, c, d):
    x = ProjectivePoint.from_affine(complex(a, b))
    y = ProjectivePoint.from_affine(complex(c, d))
    s = chordal_sigma(x, y)
    assert 0.0 <= s <= 1.0 + 1e-15
    assert s == pytest.approx(chordal_sigma(y, x), abs=1e-15)
    assert chordal_sigma(x, x) <= 1e-12


def test_chordal_distance_known_values():
    zero, one, inf = (ProjectivePoint.parse(s) for s in ("0,0", "1,0", "inf"))
    assert chordal_sigma(zero, inf) == pytest.approx(1.0)
    assert chordal_sigma(zero, one) == pytest.approx(1 / math.sqrt(2))
    assert fs_weight(zero, 3) == pytest.approx(0.0, abs=1e-300) or fs_weight(zero, 3) >= 0


@given(st.floats(0, 2 * math.pi), st.floats(0, math.pi))
def test_chordal_distance_is_unitarily_invariant(alpha, beta):
    rng = np.random.default_rng(7)
    x = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    y = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    x, y = x / np.linalg.norm(x), y / np.linalg.norm(y)
    u = np.array([[np.cos(beta), -np.sin(beta) * np.exp(-1j * alpha)], [np.sin(beta) * np.exp(1j * alpha), np.cos(beta)]])
    ux, uy = u @ x, u @ y
    assert chordal_sigma_h(ux[0], ux[1], uy[0], uy[1]) == pytest.approx(chordal_sigma_h(x[0], x[1], y[0], y[1]), abs=1e-14)


def test_sphere_coords_lie_on_unit_sphere():
    g = make_grid(8, 12)
    x1, x2, x3 = sphere_coords(*g.homogeneous)
    assert np.allclose(x1**2 + x2**2 + x3**2, 1.0)


@pytest.mark.parametrize("n_radial,n_angular", [(4, 4), (16, 32), (33, 10)])
def test_grid_weights_form_probability_measure(n_radial, n_angular):
    g = make_grid(n_radial, n_angular)
    assert g.size == n_radial * n_angular
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.diff(g.u_radial) > 0)
    assert g.grid_id == f"gl{n_radial}x{n_angular}"


def test_grid_integrates_low_degree_harmonics_exactly():
    g = make_grid(12, 16)
    x1, x2, x3 = sphere_coords(*g.homogeneous)
    assert g.integrate(x3**2) == pytest.approx(1 / 3, abs=1e-14)
    assert g.integrate(x1 * x2) == pytest.approx(0.0, abs=1e-15)
    assert g.integrate(x3**10) == pytest.approx(1 / 11, abs=1e-13)


def test_grid_field_text_round_trip_keeps_full_precision():
    g = make_grid(6, 8)
    rng = np.random.default_rng(3)
    field = GridField(g, rng.standard_normal(g.size) * 10.0 ** rng.integers(-30, 30, g.size), "value")
    text = field.to_text()
    assert text.splitlines()[0].split()[-4:] == ["u", "theta", "weight", "value"]
    back = GridField.from_text(text)
    assert np.array_equal(back.values, field.values)
    assert np.array_equal(back.grid.u, g.u)


def test_grid_field_rejects_wrong_length():
    g = make_grid(4, 4)
    with pytest.raises(ValueError):
        GridField(g, np.zeros(3))


def test_pole_set_validation():
    with pytest.raises(ValueError):
        PoleSet.of(("0,0", 0.5), ("0,0", 0.2))
    with pytest.raises(ValueError):
        PoleSet.of(("0,0", -0.1))
    with pytest.raises(ValueError):
        PoleSet.of(("inf", 0.0))
    ps = PoleSet.of(("0,0", 0.5), ("inf", 0.25))
    assert ps.tau_sum == 0.75
    assert ps.is_radial()
    assert ps.tau_at_zero() == 0.5 and ps.tau_at_infinity() == 0.25
    assert not PoleSet.of(("1,0", 0.5)).is_radial()


@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50), st.integers(1, 99)), max_size=4, unique_by=lambda r: r[:2]))
def test_pole_set_records_round_trip(items):
    ps = PoleSet(tuple((f"{a / 10},{b / 10}", t / 100) for a, b, t in items))
    back = PoleSet.from_records(ps.to_records())
    assert back.to_records() == ps.to_records()


def test_weighted_log_sigma_matches_pointwise_distance():
    ps = PoleSet.of(("0.5,0.5", 0.3), ("inf", 0.2))
    pts = [ProjectivePoint.parse(s) for s in ("1,0", "-2,3", "0,0.1")]
    z0, z1 = to_homogeneous(pts)
    got = ps.weighted_log_sigma(z0, z1)
    want = [0.3 * math.log(chordal_sigma(x, ps.points[0])) + 0.2 * math.log(chordal_sigma(x, ps.points[1])) for x in pts]
    assert np.allclose(got, want)
