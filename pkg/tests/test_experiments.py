import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bergmanlab.errors import NotBig, ValidationError
from bergmanlab.experiments import (
    Scenario,
    emit_report,
    equilibrium_data,
    run_bigness_study,
    run_bound_diagnostics,
    run_rate_study,
    run_speed_study,
)
from bergmanlab.geometry import PoleSet
from bergmanlab.sections import WeightSpec

SMALL = Scenario(
    "small",
    1,
    PoleSet.of(("0,0", 0.5)),
    p_list=(8, 16, 32),
    envelope_grid=(32, 64),
    n_samples=6,
    seed=3,
)

taus = st.integers(1, 99).map(lambda c: c / 100)
points = st.one_of(
    st.just("inf"),
    st.tuples(st.floats(-50, 50, allow_nan=False), st.floats(-50, 50, allow_nan=False)).map(lambda t: f"{t[0]!r},{t[1]!r}"),
)


@settings(max_examples=40)
@given(
    k=st.integers(1, 4),
    poles=st.lists(st.tuples(points, taus), max_size=3, unique_by=lambda x: x[0]),
    p_list=st.lists(st.integers(1, 300), min_size=1, max_size=5, unique=True),
    seed=st.integers(0, 2**63),
    weight=st.sampled_from(["zero", "constant", "holder", "zonal", "harmonics", "loglog"]),
    c=st.floats(-3, 3, allow_nan=False),
)
def test_scenario_json_round_trip(k, poles, p_list, seed, weight, c):
    sc = Scenario("h", k, PoleSet.of(*poles), WeightSpec.preset(weight, c=c), p_list=tuple(p_list), seed=seed)
    text = sc.to_json()
    back = Scenario.from_json(text)
    assert back == sc
    assert back.to_json() == text


def test_scenario_file_round_trip(tmp_path):
    path = tmp_path / "s.json"
    SMALL.save(path)
    assert Scenario.load(path) == SMALL
    assert list(Scenario.load(path).poles)[0][1] == 0.5


@pytest.mark.parametrize(
    "bad",
    [
        {"name": "x"},
        {"k": 0},
        {"k": 1.5},
        {"k": 1, "p_list": []},
        {"k": 1, "p_list": [4, 4]},
        {"k": 1, "color": "red"},
        {"k": 1, "poles": [{"point": "nan,0", "tau": 0.5}]},
        {"k": 1, "weight": {"kind": "preset", "name": "nope"}},
        {"k": 1, "p_list": [100], "grid": [8, 8]},
        {"k": 1, "n_samples": 0},
    ],
)
def test_scenario_rejects_bad_input(bad):
    with pytest.raises(ValidationError):
        Scenario.from_dict(bad)


@pytest.mark.parametrize("text", ["not json", "[1, 2]", '{"k": "one"}'])
def test_scenario_rejects_bad_text(text):
    with pytest.raises(ValidationError):
        Scenario.from_json(text)


def test_bigness_table():
    big = run_bigness_study(1, PoleSet.of(("0,0", 0.3), ("1,0", 0.2)), [100, 200, 400])
    assert big.big and big.slope_ok()
    assert big.rows[-1][1] == 400 + 1 - 120 - 80
    nb = run_bigness_study(1, PoleSet.of(("0,0", 0.5), ("inf", 0.5)), [100, 200, 400])
    assert not nb.big and nb.slope_ok()
    assert [r[1] for r in nb.rows] == [1, 1, 1]
    assert nb.to_csv().splitlines()[0] == "p,dim,dim_over_p,is_big"


def test_not_big_scenario_refuses_to_run():
    sc = SMALL.replace(poles=PoleSet.of(("0,0", 0.6), ("inf", 0.4)))
    with pytest.raises(NotBig):
        run_rate_study(sc)


def test_symmetric_rate_study_matches_closed_form():
    # no poles, zero weight: P_p = p + 1, phi_eq = 0
    sc = Scenario("sym", 1, p_list=(4, 16, 64))
    table = run_rate_study(sc)
    for p, l1, sup, c in table.rows:
        assert l1 == pytest.approx(math.log(p + 1) / (2 * p), abs=1e-9)
        assert sup == pytest.approx(l1, abs=1e-9)
        assert c == pytest.approx(l1 * p / math.log(p))
    assert table.mode == "rate" and table.passed()


def test_pole_rate_and_bounds_small():
    eq = equilibrium_data(SMALL)
    assert eq.profile is not None
    rate = run_rate_study(SMALL, eq=eq)
    assert np.all(np.diff(rate.column(1)) < 0)
    bounds = run_bound_diagnostics(SMALL, eq=eq)
    assert len(bounds.rows) == 3
    assert min(bounds.column(5)) >= -1e-6
    assert bounds.to_csv().splitlines()[0] == "p,S_p,C_upper,delta_star,C_lower,lower_residual_min"


@pytest.fixture(scope="module")
def studies():
    eq = equilibrium_data(SMALL)
    return dict(
        rate=run_rate_study(SMALL, eq=eq),
        bigness=run_bigness_study(SMALL.k, SMALL.poles, SMALL.sorted_p),
        bounds=run_bound_diagnostics(SMALL, eq=eq),
        speed=run_speed_study(SMALL, eq=eq),
        eq=eq,
    )


def test_report_is_byte_stable(tmp_path, studies):
    a = emit_report(tmp_path / "a", SMALL, **studies)
    b = emit_report(tmp_path / "b", SMALL, **studies)
    assert [p.name for p in a] == [p.name for p in b]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    names = {p.name for p in a}
    assert {"manifest.json", "rate.csv", "bounds.csv", "speed.csv", "bigness.csv", "plot_free_boundary.dat"} <= names


def test_report_refuses_overwrite(tmp_path, studies):
    emit_report(tmp_path, SMALL, **studies)
    with pytest.raises(FileExistsError):
        emit_report(tmp_path, SMALL, **studies)
    emit_report(tmp_path, SMALL, force=True, **studies)


def test_manifest_contents(tmp_path, studies):
    emit_report(tmp_path, SMALL, **studies)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert Scenario.from_dict(man["scenario"]) == SMALL
    assert {"numpy", "scipy", "mpmath", "bergmanlab", "python"} <= set(man["versions"])
    assert [row["t"] for row in man["thresholds"]] == [4, 8, 16]
    assert man["seeds"]["scenario"] == 3


def test_free_boundary_plot_data(tmp_path, studies):
    emit_report(tmp_path, SMALL, **studies)
    rows = [l.split() for l in (tmp_path / "plot_free_boundary.dat").read_text().splitlines()[1:]]
    oracle = [float(r) for s, r in rows if s == "oracle"]
    solver = [float(r) for s, r in rows if s == "solver"]
    assert oracle == [pytest.approx(1.0)]
    assert len(solver) == 1
    # within a couple of radial cells on the coarse grid
    assert abs(math.log(solver[0])) < 0.25
