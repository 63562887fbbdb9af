"""Scenario files and the convergence studies built on the section, envelope and zero modules."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from bergmanlab.envelopes import EnvelopeProblem, RadialProfile, radial_oracle, solve_envelope
from bergmanlab.errors import NotBig, ValidationError
from bergmanlab.geometry import PoleSet, SphereGrid, make_grid
from bergmanlab.sections import (
    WeightSpec,
    build_orthonormal_basis,
    dimension,
    is_big,
    modulus_of_continuity,
    resolution_floor,
    threshold,
)
from bergmanlab.zeros import ReducedEquilibrium, SpeedReport, parallel_map, speed_experiment

__all__ = [
    "Scenario",
    "RateTable",
    "BignessTable",
    "BoundReport",
    "EquilibriumData",
    "equilibrium_data",
    "run_rate_study",
    "run_bigness_study",
    "run_bound_diagnostics",
    "run_speed_study",
    "emit_report",
]

SWEEP_DELTAS = tuple(2.0**-j for j in range(1, 17))
AWAY_DELTA = 0.1


def _fmt(x) -> str:
    return repr(float(x))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------- scenario


@dataclass(frozen=True, eq=False)
class Scenario:
    """One experiment configuration.

    ``grid`` is the evaluation grid for section spaces (``None`` means the
    resolution floor of the largest p); ``envelope_grid`` is used when the
    equilibrium potential needs the obstacle solver.
    """

    name: str
    k: int
    poles: PoleSet = field(default_factory=PoleSet)
    weight: WeightSpec = field(default_factory=WeightSpec.zero)
    grid: tuple[int, int] | None = None
    envelope_grid: tuple[int, int] = (256, 512)
    p_list: tuple[int, ...] = (25, 50, 100)
    n_samples: int = 200
    seed: int = 0
    tolerances: dict = field(default_factory=lambda: {"envelope": 1e-8, "roots": 1e-8, "gram": 1e-8})

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "k": self.k,
            "poles": self.poles.to_records(),
            "weight": self.weight.to_record(),
            "grid": list(self.grid) if self.grid else None,
            "envelope_grid": list(self.envelope_grid),
            "p_list": list(self.p_list),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "tolerances": dict(sorted(self.tolerances.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            known = {"name", "k", "poles", "weight", "grid", "envelope_grid", "p_list", "n_samples", "seed", "tolerances"}
            extra = set(d) - known
            if extra:
                raise ValidationError(f"unknown scenario keys: {sorted(extra)}")
            grid = d.get("grid")
            sc = cls(
                name=str(d.get("name", "scenario")),
                k=_as_int(d["k"], "k"),
                poles=PoleSet.from_records(d.get("poles", [])),
                weight=WeightSpec.from_record(d.get("weight", {"kind": "zero"})),
                grid=tuple(_as_int(v, "grid") for v in grid) if grid else None,
                envelope_grid=tuple(_as_int(v, "envelope_grid") for v in d.get("envelope_grid", (256, 512))),
                p_list=tuple(_as_int(v, "p_list") for v in d.get("p_list", (25, 50, 100))),
                n_samples=_as_int(d.get("n_samples", 200), "n_samples"),
                seed=_as_int(d.get("seed", 0), "seed"),
                tolerances={**cls.__dataclass_fields__["tolerances"].default_factory(), **d.get("tolerances", {})},
            )
        except ValidationError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"invalid scenario: {exc}") from exc
        sc.validate()
        return sc

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"scenario file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("scenario file must hold a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    def replace(self, **changes) -> "Scenario":
        d = self.to_dict()
        for key, val in changes.items():
            if key == "poles" and isinstance(val, PoleSet):
                val = val.to_records()
            elif key == "weight" and isinstance(val, WeightSpec):
                val = val.to_record()
            d[key] = list(val) if isinstance(val, tuple) else val
        return Scenario.from_dict(d)

    def validate(self) -> None:
        if self.k < 1:
            raise ValidationError("k must be a positive integer")
        if not self.p_list or any(p < 1 for p in self.p_list):
            raise ValidationError("p_list must hold positive integers")
        if len(set(self.p_list)) != len(self.p_list):
            raise ValidationError("p_list entries must be distinct")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be positive")
        if self.grid is not None:
            need = resolution_floor(self.k, max(self.p_list))
            if self.grid[0] < need[0] or self.grid[1] < need[1]:
                raise ValidationError(f"grid {self.grid} is below the resolution floor {need} for p = {max(self.p_list)}")
        if min(self.envelope_grid) < 4:
            raise ValidationError("envelope grid needs at least 4 x 4 nodes")

    def require_big(self) -> None:
        if not is_big(self.k, self.poles):
            raise NotBig(self.k, self.poles.tau_sum)

    @property
    def sorted_p(self) -> list[int]:
        return sorted(self.p_list)

    def section_grid(self) -> SphereGrid:
        return make_grid(*(self.grid or resolution_floor(self.k, max(self.p_list))))

    def threshold_table(self) -> list[dict]:
        return [
            {"point": pt.format(), "tau": tau, "p": p, "t": threshold(tau, p)}
            for pt, tau in self.poles
            for p in self.sorted_p
        ]


def _as_int(v, what) -> int:
    if isinstance(v, bool) or not float(v).is_integer():
        raise ValidationError(f"{what} must be an integer, got {v!r}")
    return int(v)


# ---------------------------------------------------------------- equilibrium


@dataclass(frozen=True, eq=False)
class EquilibriumData:
    """phi_req of a scenario, exact (radial oracle) or from the obstacle solver."""

    k: int
    poles: PoleSet
    profile: RadialProfile | None
    result: object | None

    def phi_req_at(self, z0, z1) -> np.ndarray:
        if self.profile is not None:
            return self.profile.phi_req_at(z0, z1)
        return WeightSpec.from_grid(self.result.phi_req)(z0, z1)

    def reduced(self, grid: SphereGrid) -> ReducedEquilibrium:
        if self.profile is not None:
            return ReducedEquilibrium.from_oracle(self.profile, self.poles, grid)
        return ReducedEquilibrium.from_result(self.result)


def equilibrium_data(scenario: Scenario, force_solver: bool = False) -> EquilibriumData:
    scenario.require_big()
    if scenario.poles.is_radial() and scenario.weight.is_radial and not force_solver:
        return EquilibriumData(scenario.k, scenario.poles, radial_oracle(scenario.k, scenario.poles, scenario.weight), None)
    grid = make_grid(*scenario.envelope_grid)
    prob = EnvelopeProblem.build(scenario.k, scenario.poles, scenario.weight, grid)
    return EquilibriumData(scenario.k, scenario.poles, None, solve_envelope(prob, tol=scenario.tolerances["envelope"]))


def _potential_gap(space, eq: EquilibriumData, z0, z1) -> np.ndarray:
    """phi_p - phi_eq, with the logarithmic pole terms combined before subtraction."""
    gap = space.log_free_kernel(z0, z1) / (2.0 * space.p) - eq.phi_req_at(z0, z1)
    if len(space.poles):
        rates = np.array(space.thresholds, float) / space.p - np.array(space.poles.taus)
        gap = gap + rates @ space.poles.log_sigmas(z0, z1)
    return gap


def _build(args):
    scenario, p, grid = args
    return build_orthonormal_basis(
        scenario.k, p, scenario.poles, scenario.weight, grid=grid, max_defect=scenario.tolerances["gram"]
    )


def _spaces(scenario: Scenario, grid: SphereGrid, workers):
    built = parallel_map(_build, [(scenario, p, grid) for p in scenario.sorted_p], workers)
    return dict(zip(scenario.sorted_p, built))


# ---------------------------------------------------------------- rate study


@dataclass
class RateTable:
    rows: list  # (p, L1_error, sup_error_away, C_hat)
    mode: str  # "rate" or "convergence"
    scenario: str = ""

    def column(self, i) -> np.ndarray:
        return np.array([r[i] for r in self.rows])

    def halves(self):
        n = len(self.rows)
        lo = (n + 1) // 2
        return self.rows[:lo], self.rows[lo:]

    def rate_bounded(self, factor: float = 1.5) -> bool:
        """max C_hat over the upper half of p_list <= factor * median over the lower half."""
        lower, upper = self.halves()
        if not upper:
            return True
        return max(r[3] for r in upper) <= factor * float(np.median([r[3] for r in lower]))

    def l1_decreasing(self) -> bool:
        l1 = self.column(1)
        return bool(np.all(np.diff(l1) <= 0))

    def passed(self) -> bool:
        return self.rate_bounded() if self.mode == "rate" else self.l1_decreasing()

    def to_csv(self) -> str:
        return _csv(["p", "L1_error", "sup_error_away", "C_hat"], self.rows)


def run_rate_study(scenario: Scenario, workers: int | None = None, spaces: dict | None = None, eq=None) -> RateTable:
    """L1 and away-from-pole sup distance between phi_p and phi_eq on one common grid."""
    scenario.require_big()
    grid = scenario.section_grid()
    eq = eq or equilibrium_data(scenario)
    spaces = spaces or _spaces(scenario, grid, workers)
    z0, z1 = grid.homogeneous
    away = np.ones(grid.size, bool)
    if len(scenario.poles):
        away = np.all(scenario.poles.log_sigmas(z0, z1) >= math.log(AWAY_DELTA), axis=0)
    rows = []
    for p in scenario.sorted_p:
        gap = _potential_gap(spaces[p], eq, z0, z1)
        l1 = float(np.dot(grid.weights, np.abs(gap)))
        sup = float(np.max(np.abs(gap[away]))) if away.any() else float("nan")
        rows.append((p, l1, sup, l1 * p / math.log(p) if p > 1 else float("inf")))
    mode = "rate" if scenario.weight.holder is not None else "convergence"
    return RateTable(rows, mode, scenario.name)


# ---------------------------------------------------------------- bigness


@dataclass
class BignessTable:
    k: int
    poles: PoleSet
    rows: list  # (p, dim, dim/p)
    big: bool

    def slope_ok(self, eps: float = 0.05) -> bool:
        p_max, dim_max, slope = self.rows[-1]
        if self.big:
            return slope >= (self.k - self.poles.tau_sum) * (1 - eps)
        return dim_max <= len(self.poles) + 1

    def to_csv(self) -> str:
        return _csv(["p", "dim", "dim_over_p", "is_big"], [(p, d, s, int(self.big)) for p, d, s in self.rows])


def run_bigness_study(k: int, poles: PoleSet, p_list: Sequence[int]) -> BignessTable:
    rows = [(p, dimension(k, p, poles), dimension(k, p, poles) / p) for p in sorted(p_list)]
    return BignessTable(k, poles, rows, is_big(k, poles))


# ---------------------------------------------------------------- bound diagnostics


@dataclass
class BoundReport:
    deltas: tuple
    omega: list
    rows: list  # (p, S_p, C_upper, delta_star, C_lower, lower_residual_min)

    def column(self, i) -> np.ndarray:
        return np.array([r[i] for r in self.rows])

    @staticmethod
    def _bounded(first: float, last: float, factor: float) -> bool:
        # factor * first when first > 0; the same relative slack on |first| otherwise
        return last <= first + (factor - 1.0) * abs(first)

    def upper_bounded(self, factor: float = 1.5) -> bool:
        c = self.column(2)
        return self._bounded(c[0], c[-1], factor)

    def lower_bounded(self, factor: float = 1.5) -> bool:
        c = self.column(4)
        return self._bounded(c[0], c[-1], factor)

    def interior_delta(self) -> bool:
        lo, hi = min(self.deltas), max(self.deltas)
        return all(lo < r[3] < hi for r in self.rows)

    def passed(self) -> bool:
        return self.upper_bounded() and self.lower_bounded() and min(self.column(5)) >= -1e-6

    def to_csv(self) -> str:
        return _csv(["p", "S_p", "C_upper", "delta_star", "C_lower", "lower_residual_min"], self.rows)


def _near_pole_points(poles: PoleSet, n_dist: int = 12, n_ang: int = 16):
    """Points at chordal distances 10^-1 ... 10^-6 around each pole."""
    out0, out1 = [], []
    dist = np.logspace(-1, -6, n_dist)
    ang = 2 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
    d, a = np.meshgrid(dist, ang, indexing="ij")
    v0 = np.sqrt(1 - d**2).ravel()
    v1 = (d * np.exp(1j * a)).ravel()
    for pt, _ in poles:
        x0, x1 = pt.homogeneous()
        out0.append(x0 * v0 - np.conj(x1) * v1)
        out1.append(x1 * v0 + np.conj(x0) * v1)
    if not out0:
        return np.zeros(0, complex), np.zeros(0, complex)
    return np.concatenate(out0), np.concatenate(out1)


def run_bound_diagnostics(
    scenario: Scenario,
    workers: int | None = None,
    spaces: dict | None = None,
    eq=None,
    deltas: Sequence[float] = SWEEP_DELTAS,
    omega_samples: int = 20000,
) -> BoundReport:
    """Smallest constants in the upper template S_p <= C (1 - log d)/p + d + Omega(d) (all swept d)
    and the lower template phi_p >= phi_eq - C/p + (1/p) sum log sigma_j (all grid nodes)."""
    scenario.require_big()
    grid = scenario.section_grid()
    eq = eq or equilibrium_data(scenario)
    spaces = spaces or _spaces(scenario, grid, workers)
    deltas = tuple(sorted(deltas, reverse=True))
    d = np.array(deltas)
    omega = modulus_of_continuity(scenario.weight, d, samples=omega_samples, seed=scenario.seed)
    z0, z1 = grid.homogeneous
    n0, n1 = _near_pole_points(scenario.poles)
    rows = []
    for p in scenario.sorted_p:
        sp = spaces[p]
        s_p = float(np.max(sp.log_kernel(z0, z1))) / (2 * p)
        cands = p * (s_p - d - omega) / (1 - np.log(d))
        j = int(np.argmax(cands))

        def lower_excess(a0, a1):
            # p (phi_eq - phi_p) + sum_j log sigma_j
            ex = -p * _potential_gap(sp, eq, a0, a1)
            if len(scenario.poles):
                ex = ex + np.sum(scenario.poles.log_sigmas(a0, a1), axis=0)
            return ex

        c_low = float(np.max(lower_excess(z0, z1)))
        resid = -lower_excess(n0, n1) + c_low if n0.size else np.zeros(1)
        rows.append((p, s_p, float(cands[j]), float(d[j]), c_low, float(np.min(resid)) / p))
    return BoundReport(deltas, [float(x) for x in omega], rows)


# ---------------------------------------------------------------- speed


def run_speed_study(scenario: Scenario, workers: int | None = None, eq=None, fit_p: int | None = None) -> SpeedReport:
    scenario.require_big()
    eq = eq or equilibrium_data(scenario)
    return speed_experiment(
        scenario.k,
        scenario.sorted_p,
        scenario.poles,
        scenario.weight,
        n_samples=scenario.n_samples,
        seed=scenario.seed,
        fit_p=fit_p,
        equilibrium=eq.reduced(make_grid(*scenario.envelope_grid)),
        workers=workers,
        root_tol=scenario.tolerances["roots"],
    )


# ---------------------------------------------------------------- report


def _versions() -> dict:
    import mpmath
    import scipy

    from bergmanlab import __version__

    return {
        "bergmanlab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "mpmath": mpmath.__version__,
        "python": platform.python_version(),
    }


def _jsonable(v):
    return v.item() if isinstance(v, np.generic) else v


def _series(header: Sequence[str], cols) -> str:
    lines = ["# " + " ".join(header)]
    for row in zip(*cols):
        lines.append(" ".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _profile_series(eq: EquilibriumData, scenario: Scenario):
    """phi_req against |z| along the positive real axis: solver ring means and the oracle."""
    out = {}
    grid = make_grid(*scenario.envelope_grid)
    if eq.result is not None:
        res = eq.result
    elif scenario.poles.is_radial() and scenario.weight.is_radial:
        res = solve_envelope(EnvelopeProblem.build(scenario.k, scenario.poles, scenario.weight, grid), tol=scenario.tolerances["envelope"])
    else:
        res = None
    r = np.exp(0.5 * (np.log1p(-grid.u_radial) - np.log(grid.u_radial)))
    cols = [r]
    header = ["r"]
    if res is not None:
        ring = res.phi_req.values.reshape(grid.n_radial, grid.n_angular).mean(axis=1)
        cols.append(ring)
        header.append("phi_req_solver")
        contact = res.contact_set.values.reshape(grid.n_radial, grid.n_angular).mean(axis=1) > 0.5
        fb_solver = [float(x) for x in _switches(r, contact)]
    else:
        fb_solver = []
    if eq.profile is not None:
        cols.append(eq.profile.phi_req(np.log(r)))
        header.append("phi_req_oracle")
    out["plot_envelope_profile.dat"] = _series(header, cols)
    lines = ["# source r"]
    lines += [f"solver {_fmt(x)}" for x in fb_solver]
    if eq.profile is not None:
        lines += [f"oracle {_fmt(x)}" for x in eq.profile.free_boundary_radii()]
    out["plot_free_boundary.dat"] = "\n".join(lines) + "\n"
    return out


def _switches(r, contact):
    """Last contact ring at each change of the ring contact indicator (r ascending order handled)."""
    order = np.argsort(r)
    r, c = r[order], contact[order]
    return [r[i] if c[i] else r[i + 1] for i in range(len(r) - 1) if c[i] != c[i + 1]]


def emit_report(
    out_dir,
    scenario: Scenario,
    rate: RateTable | None = None,
    bigness: BignessTable | None = None,
    bounds: BoundReport | None = None,
    speed: SpeedReport | None = None,
    eq: EquilibriumData | None = None,
    force: bool = False,
) -> list[Path]:
    """Write manifest, CSV tables and plot-data series; byte-stable for a fixed scenario."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} is not empty; pass force=True (--force) to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    manifest = {
        "scenario": scenario.to_dict(),
        "versions": _versions(),
        "seeds": {"scenario": scenario.seed, "per_sample": "SeedSequence([seed, p, index])"},
        "thresholds": scenario.threshold_table(),
        "tables": [],
    }
    if bigness is not None:
        files["bigness.csv"] = bigness.to_csv()
    if rate is not None:
        files["rate.csv"] = rate.to_csv()
        lower, _ = rate.halves()
        c_ref = float(np.median([r[3] for r in lower]))
        p = rate.column(0)
        files["plot_L1_vs_p.dat"] = _series(
            ["p", "L1_error", "reference_C_logp_over_p"], [p, rate.column(1), c_ref * np.log(p) / p]
        )
        manifest["rate"] = {"mode": rate.mode, "rate_bounded": bool(rate.rate_bounded()), "C_reference": c_ref}
    if bounds is not None:
        files["bounds.csv"] = bounds.to_csv()
        files["plot_modulus.dat"] = _series(["delta", "omega"], [bounds.deltas, bounds.omega])
        manifest["bounds"] = {
            "upper_bounded": bool(bounds.upper_bounded()),
            "lower_bounded": bool(bounds.lower_bounded()),
            "interior_delta": bool(bounds.interior_delta()),
        }
    if speed is not None:
        files["speed.csv"] = speed.to_csv()
        manifest["speed"] = {
            "c_hat": speed.c_hat,
            "fit_p": speed.fit_p,
            "median_D": {str(k): v for k, v in speed.median_D().items()},
            "exceedance": {str(k): v for k, v in speed.exceedance().items()},
            "median_nonincreasing": bool(speed.median_nonincreasing()),
            "failures": [[_jsonable(v) for v in f] for f in speed.failures],
        }
        if speed.root_u and eq is not None and eq.profile is not None:
            p_max = max(speed.p_list)
            u = np.sort(speed.root_u[p_max])
            emp = np.arange(1, u.size + 1) / u.size
            files["plot_root_cdf.dat"] = _series(["u", "empirical_cdf", "equilibrium_cdf"], [u, emp, eq.profile.density_cdf_u(u)])
    if eq is not None:
        files.update(_profile_series(eq, scenario))
    manifest["tables"] = sorted(files)
    files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    written = []
    for name in sorted(files):
        path = out / name
        path.write_text(files[name])
        written.append(path)
    return written
