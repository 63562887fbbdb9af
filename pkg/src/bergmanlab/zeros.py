"""Random sections of the constrained spaces, their zero divisors, and pairings with test functions."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from bergmanlab.errors import DimensionZero, NumericalError, RootFindingFailed
from bergmanlab.geometry import GridField, PoleSet, ProjectivePoint, SphereGrid, make_grid, sphere_coords, to_homogeneous
from bergmanlab.roots import aberth_roots
from bergmanlab.sections import SectionSpace, WeightSpec, build_orthonormal_basis

log = logging.getLogger(__name__)

__all__ = [
    "RandomSection",
    "EmpiricalDivisor",
    "TestFunction",
    "ReducedEquilibrium",
    "PairingReport",
    "SpeedReport",
    "harmonic_battery",
    "sample_section",
    "zero_divisor",
    "pair_with_current",
    "equilibrium_pairings",
    "fs_pairings",
    "radial_ks",
    "expectation_check",
    "speed_experiment",
    "worker_count",
    "parallel_map",
]

WORKERS_ENV = "BERGMANLAB_WORKERS"


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None


def parallel_map(fn, items, workers: int | None = None):
    """map() over a process pool; results come back in input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# ---------------------------------------------------------------- sections and divisors


@dataclass(frozen=True, eq=False)
class RandomSection:
    space: SectionSpace
    coeffs: np.ndarray
    seed: object = None

    def values(self, z0, z1) -> np.ndarray:
        """Chart-normalized values sum_j c_j E_j(x)."""
        return self.space.section_values(z0, z1) @ self.coeffs


def sample_section(space: SectionSpace, seed=None) -> RandomSection:
    """Normalized standard complex Gaussian coordinates in the ONB (Fubini-Study volume on the projectivization)."""
    if space.dim < 1:
        raise DimensionZero("cannot sample from a zero-dimensional space")
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(space.dim) + 1j * rng.standard_normal(space.dim)
    c = c / np.linalg.norm(c)
    c.setflags(write=False)
    return RandomSection(space, c, seed)


@dataclass(frozen=True, eq=False)
class EmpiricalDivisor:
    """Zeros with multiplicity; ``free_roots`` are the zeros of the free factor (inf allowed)."""

    points: list
    total: int
    p: int
    free_roots: np.ndarray

    @property
    def infinity_multiplicity(self) -> int:
        return sum(m for pt, m in self.points if pt.is_infinity)

    def multiplicity_at(self, point) -> int:
        pt = point if isinstance(point, ProjectivePoint) else ProjectivePoint.from_affine(point)
        return sum(m for q, m in self.points if q == pt)

    def free_u(self) -> np.ndarray:
        """u = 1/(1+|z|^2) of the free-factor zeros (0 for zeros at infinity)."""
        r = self.free_roots
        with np.errstate(over="ignore", invalid="ignore"):
            return np.where(np.isfinite(r), 1.0 / (1.0 + np.abs(r) ** 2), 0.0)

    def pair(self, chi: "TestFunction") -> float:
        """(1/p) sum mult * chi(point)."""
        pts = [pt for pt, _ in self.points]
        mult = np.array([m for _, m in self.points], float)
        z0, z1 = to_homogeneous(pts)
        return float(np.dot(mult, chi(z0, z1)) / self.p)

    def to_text(self) -> str:
        lines = ["# re im multiplicity"]
        inf = 0
        for pt, m in self.points:
            if pt.is_infinity:
                inf += m
                continue
            z = pt.affine
            lines.append(f"{z.real:.17g} {z.imag:.17g} {m}")
        lines.append(f"INF {inf}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @staticmethod
    def parse(text: str) -> list[tuple[complex | None, int]]:
        out = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "INF":
                out.append((None, int(parts[1])))
            else:
                out.append((complex(float(parts[0]), float(parts[1])), int(parts[2])))
        return out


def _effective_range(space: SectionSpace, coeffs) -> tuple[int, int, np.ndarray]:
    b = space.kostlan_coeffs(coeffs)
    size = np.abs(b) * np.abs(np.diag(space.r_scaled))
    sig = np.flatnonzero(size > 1e-14 * np.linalg.norm(coeffs))
    if sig.size == 0:
        raise NumericalError("section vanishes identically at working precision")
    return int(sig[0]), int(sig[-1]), b


def zero_divisor(section: RandomSection, tol: float = 1e-8) -> EmpiricalDivisor:
    """Zeros of K * B * q: forced zeros at the poles, roots of q, and the degree deficit at infinity."""
    space = section.space
    lo, hi, _ = _effective_range(space, section.coeffs)
    d = space.free_factor_coeffs(section.coeffs)
    found = aberth_roots(d[lo : hi + 1], tol=tol) if hi > lo else np.zeros(0, complex)
    counts: dict[ProjectivePoint, int] = {}
    order: list[ProjectivePoint] = []

    def add(pt, m):
        if m <= 0:
            return
        if pt not in counts:
            counts[pt] = 0
            order.append(pt)
        counts[pt] += m

    for r in found:
        add(ProjectivePoint.from_affine(complex(r)), 1)
    zero = ProjectivePoint.from_affine(0j)
    add(zero, lo)
    for (pt, _), t in zip(space.poles, space.thresholds):
        add(pt, t)
    add(ProjectivePoint.infinity(), space.m - hi)
    free = np.concatenate([found, np.zeros(lo, complex), np.full(space.m - hi, np.inf + 0j)])
    points = [(pt, counts[pt]) for pt in order]
    total = sum(m for _, m in points)
    if total != space.k * space.p:
        raise NumericalError(f"divisor mass {total} differs from kp = {space.k * space.p}")
    return EmpiricalDivisor(points, total, space.p, free)


# ---------------------------------------------------------------- test functions


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A spherical harmonic chi of degree l, so dd^c chi = -2 l (l+1) chi omega_FS."""

    name: str
    degree: int
    fn: Callable
    c2: float

    __test__ = False  # not a pytest class

    def __call__(self, z0, z1) -> np.ndarray:
        x1, x2, x3 = sphere_coords(np.asarray(z0, complex), np.asarray(z1, complex))
        return np.asarray(self.fn(x1, x2, x3), float) * np.ones(np.shape(x1))

    def ddc_density(self, z0, z1) -> np.ndarray:
        return -2.0 * self.degree * (self.degree + 1) * self(z0, z1)


def harmonic_battery(include_constant: bool = True) -> list[TestFunction]:
    """Constant, the three linear and five quadratic harmonics.

    C^2 bounds: |a| for a linear function a.x; 4 ||Q|| (spectral norm) for
    a traceless quadratic form x.Qx.
    """
    s = []
    if include_constant:
        s.append(TestFunction("one", 0, lambda x1, x2, x3: np.ones_like(x1), 1.0))
    s += [
        TestFunction("x1", 1, lambda x1, x2, x3: x1, 1.0),
        TestFunction("x2", 1, lambda x1, x2, x3: x2, 1.0),
        TestFunction("x3", 1, lambda x1, x2, x3: x3, 1.0),
        TestFunction("x1x2", 2, lambda x1, x2, x3: x1 * x2, 4 * 0.5),
        TestFunction("x1x3", 2, lambda x1, x2, x3: x1 * x3, 4 * 0.5),
        TestFunction("x2x3", 2, lambda x1, x2, x3: x2 * x3, 4 * 0.5),
        TestFunction("x1^2-x2^2", 2, lambda x1, x2, x3: x1**2 - x2**2, 4 * 1.0),
        TestFunction("3x3^2-1", 2, lambda x1, x2, x3: 3 * x3**2 - 1, 4 * 2.0),
    ]
    return s


# ---------------------------------------------------------------- currents


@dataclass(frozen=True, eq=False)
class ReducedEquilibrium:
    """T_eq = (k - sum tau) omega + dd^c phi_req + sum tau_j delta_{a_j}, with phi_req sampled on a grid."""

    k: int
    poles: PoleSet
    phi_req: GridField

    @classmethod
    def from_result(cls, result) -> "ReducedEquilibrium":
        return cls(result.problem.k, result.problem.poles, result.phi_req)

    @classmethod
    def from_oracle(cls, profile, poles: PoleSet, grid: SphereGrid) -> "ReducedEquilibrium":
        return cls(profile.k, poles, profile.on_grid(grid, "phi_req"))


def equilibrium_pairings(eq: ReducedEquilibrium, battery: Sequence[TestFunction]) -> np.ndarray:
    g = eq.phi_req.grid
    z0, z1 = g.homogeneous
    w = g.weights
    theta = eq.k - eq.poles.tau_sum
    a0, a1 = eq.poles.homogeneous()
    out = []
    for chi in battery:
        val = theta * np.dot(w, chi(z0, z1)) + np.dot(w, eq.phi_req.values * chi.ddc_density(z0, z1))
        if len(eq.poles):
            val += float(np.dot(eq.poles.taus, chi(a0, a1)))
        out.append(val)
    return np.array(out)


def fs_pairings(space: SectionSpace, battery: Sequence[TestFunction], grid: SphereGrid | None = None) -> np.ndarray:
    """<(1/p) gamma_p, chi> = k int chi + int (1/2p) log sum|F|^2 dd^c chi + sum (t_j/p)(chi(a_j) - int chi)."""
    grid = grid or space.grid
    z0, z1 = grid.homogeneous
    w = grid.weights
    logf = space.log_free_kernel(z0, z1)
    a0, a1 = space.poles.homogeneous()
    rates = np.array(space.thresholds, float) / space.p
    out = []
    for chi in battery:
        mean = np.dot(w, chi(z0, z1))
        val = space.k * mean + np.dot(w, logf * chi.ddc_density(z0, z1)) / (2 * space.p)
        if len(space.poles):
            val += float(np.dot(rates, chi(a0, a1) - mean))
        out.append(val)
    return np.array(out)


@dataclass(frozen=True)
class PairingReport:
    test_function: str
    value_empirical: float
    value_equilibrium: float
    value_fs: float
    c2_norm: float


def pair_with_current(
    divisor: EmpiricalDivisor,
    equilibrium,
    battery: Sequence[TestFunction] | None = None,
    space: SectionSpace | None = None,
) -> list[PairingReport]:
    """Pair (1/p)[s=0], T_eq and, when ``space`` is given, (1/p) gamma_p with each test function."""
    battery = battery or harmonic_battery()
    if not isinstance(equilibrium, ReducedEquilibrium):
        equilibrium = ReducedEquilibrium.from_result(equilibrium)
    teq = equilibrium_pairings(equilibrium, battery)
    fs = fs_pairings(space, battery) if space is not None else np.full(len(battery), np.nan)
    return [
        PairingReport(chi.name, divisor.pair(chi), float(teq[i]), float(fs[i]), chi.c2)
        for i, chi in enumerate(battery)
    ]


def radial_ks(divisor: EmpiricalDivisor, cdf_u: Callable) -> float:
    """Kolmogorov-Smirnov distance between free-root u-values and a CDF in u."""
    u = divisor.free_u()
    if u.size == 0:
        return 0.0
    return float(stats.kstest(u, cdf_u).statistic)


# ---------------------------------------------------------------- Monte Carlo


def _sample_seed(seed: int, p: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, p, i]).generate_state(1, np.uint64)[0])


def _pairing_task(args):
    space, battery, seed, tol = args
    try:
        div = zero_divisor(sample_section(space, seed), tol=tol)
    except RootFindingFailed as exc:
        return seed, None, str(exc), None
    return seed, np.array([div.pair(chi) for chi in battery]), None, div.free_u()


def expectation_check(
    space: SectionSpace,
    n_samples: int = 2000,
    seed: int = 0,
    battery: Sequence[TestFunction] | None = None,
    workers: int | None = None,
) -> list[dict]:
    """Sample mean of (1/p)[s=0] paired with chi against the deterministic (1/p) gamma_p pairing."""
    battery = list(battery or harmonic_battery())
    seeds = [_sample_seed(seed, space.p, i) for i in range(n_samples)]
    results = parallel_map(_pairing_task, [(space, battery, s, 1e-8) for s in seeds], workers)
    vals = np.array([r[1] for r in results if r[1] is not None])
    fs = fs_pairings(space, battery)
    out = []
    for j, chi in enumerate(battery):
        mean = float(vals[:, j].mean())
        se = float(vals[:, j].std(ddof=1) / math.sqrt(len(vals)))
        z = abs(mean - fs[j]) / se if se > 0 else (0.0 if abs(mean - fs[j]) < 1e-12 else math.inf)
        out.append({"test_function": chi.name, "mean": mean, "se": se, "fs": float(fs[j]), "z": z})
    return out


@dataclass
class SpeedReport:
    k: int
    p_list: list
    n_samples: int
    seed: int
    fit_p: int
    c_hat: float
    rows: list = field(default_factory=list)  # (p, seed, D, exceed)
    failures: list = field(default_factory=list)
    lambda_rule: str = "3*log(p)"
    root_u: dict = field(default_factory=dict)  # p -> pooled u-values of free roots
    sample_u: dict = field(default_factory=dict, repr=False)  # p -> per-sample u-values

    def D(self, p: int) -> np.ndarray:
        return np.array([r[2] for r in self.rows if r[0] == p])

    def median_D(self) -> dict:
        return {p: float(np.median(self.D(p))) for p in self.p_list}

    def ks(self, cdf_u: Callable, p: int) -> np.ndarray:
        """Per-sample KS distance of the free-root u-values at ``p`` against ``cdf_u``."""
        return np.array([stats.kstest(u, cdf_u).statistic if u.size else 0.0 for u in self.sample_u[p]])

    def exceedance(self) -> dict:
        return {p: float(np.mean([r[3] for r in self.rows if r[0] == p])) for p in self.p_list}

    def median_nonincreasing(self) -> bool:
        meds = [self.median_D()[p] for p in sorted(self.p_list)]
        tail = meds[len(meds) // 2 :]
        return all(b <= a for a, b in zip(tail, tail[1:]))

    def exceedance_ok(self, level: float = 0.05) -> bool:
        return self.exceedance()[max(self.p_list)] <= level

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "seed", "D", "exceed"])
        for p, s, d, e in self.rows:
            w.writerow([p, s, repr(float(d)), int(e)])
        return buf.getvalue()


def default_lambda(p: int) -> float:
    return 3.0 * math.log(p)


def speed_experiment(
    k: int,
    p_list: Sequence[int],
    poles: PoleSet,
    weight: WeightSpec | None = None,
    n_samples: int = 200,
    lam: Callable[[int], float] = default_lambda,
    seed: int = 0,
    fit_p: int | None = None,
    equilibrium: ReducedEquilibrium | None = None,
    battery: Sequence[TestFunction] | None = None,
    workers: int | None = None,
    spaces: dict | None = None,
    root_tol: float = 1e-8,
) -> SpeedReport:
    """D(s) = max over non-constant test functions of |<(1/p)[s=0] - T_eq, chi>| / ||chi||_C2, per p and sample.

    The constant c_hat is the 95% quantile of D p / lambda_p at ``fit_p``
    (default: the smallest p); a sample exceeds when D > c_hat lambda_p / p.
    """
    from bergmanlab.envelopes import EnvelopeProblem, radial_oracle, solve_envelope

    if not poles.tau_sum < k:
        from bergmanlab.errors import NotBig

        raise NotBig(k, poles.tau_sum)
    weight = weight or WeightSpec.zero()
    p_list = sorted(int(p) for p in p_list)
    fit_p = p_list[0] if fit_p is None else int(fit_p)
    if fit_p not in p_list:
        raise ValueError("fit_p must be one of p_list")
    battery = list(battery or harmonic_battery(include_constant=False))
    if equilibrium is None:
        grid = make_grid(128, 256)
        if poles.is_radial() and weight.is_radial:
            equilibrium = ReducedEquilibrium.from_oracle(radial_oracle(k, poles, weight), poles, grid)
        else:
            equilibrium = ReducedEquilibrium.from_result(solve_envelope(EnvelopeProblem.build(k, poles, weight, grid)))
    teq = equilibrium_pairings(equilibrium, battery)
    c2 = np.array([chi.c2 for chi in battery])

    raw = []
    failures = []
    root_u = {}
    sample_u = {}
    for p in p_list:
        space = (spaces or {}).get(p) or build_orthonormal_basis(k, p, poles, weight)
        seeds = [_sample_seed(seed, p, i) for i in range(n_samples)]
        results = parallel_map(_pairing_task, [(space, battery, s, root_tol) for s in seeds], workers)
        pooled = []
        for s, vals, err, u in results:
            if vals is None:
                failures.append((p, s, err))
                continue
            raw.append((p, s, float(np.max(np.abs(vals - teq) / c2))))
            pooled.append(u)
        root_u[p] = np.concatenate(pooled) if pooled else np.zeros(0)
        sample_u[p] = pooled
        bad = sum(1 for f in failures if f[0] == p)
        if bad > 0.01 * n_samples:
            raise RootFindingFailed(f"{bad} of {n_samples} samples failed at p={p}")

    fit = np.array([d * p / lam(p) for p, _, d in raw if p == fit_p])
    c_hat = float(np.quantile(fit, 0.95))
    rows = [(p, s, d, bool(d > c_hat * lam(p) / p)) for p, s, d in raw]
    return SpeedReport(k, p_list, n_samples, seed, fit_p, c_hat, rows, failures, root_u=root_u, sample_u=sample_u)
