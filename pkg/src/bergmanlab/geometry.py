"""Points, quadrature grids and pole data on the Riemann sphere.

Points are stored in one of two affine charts (z near 0, w = 1/z near
infinity) and are converted to unit homogeneous coordinates (Z0, Z1) with
|Z0|^2 + |Z1|^2 = 1 for every numerical evaluation.  In those coordinates

    u = 1/(1+|z|^2) = |Z0|^2,
    chordal distance  sigma(Z, W) = |Z0 W1 - Z1 W0|,

and the Fubini-Study form of unit mass is du dtheta / 2pi, so a
Gauss-Legendre rule in u tensored with the trapezoid rule in arg z
integrates against it.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Chart",
    "ProjectivePoint",
    "SphereGrid",
    "GridField",
    "PoleSet",
    "chordal_sigma",
    "chordal_sigma_h",
    "make_grid",
    "fs_weight",
    "to_homogeneous",
    "sphere_coords",
]


class Chart(enum.Enum):
    AFFINE = "affine"
    INFINITY = "infinity"


@dataclass(frozen=True)
class ProjectivePoint:
    """A point of CP^1 in canonical two-chart form.

    ``chart == AFFINE`` holds the coordinate z with |z| <= 1, otherwise
    ``coord`` is w = 1/z with |w| < 1 (w = 0 is the point at infinity).
    """

    chart: Chart
    coord: complex
    exact: complex | None = field(default=None, compare=False, repr=False)  # affine input, kept for lossless text

    def __post_init__(self):
        object.__setattr__(self, "coord", complex(self.coord))
        if not (math.isfinite(self.coord.real) and math.isfinite(self.coord.imag)):
            raise ValueError("chart coordinate must be finite")
        if self.chart is Chart.AFFINE and abs(self.coord) > 1.0:
            raise ValueError("affine chart requires |z| <= 1; use ProjectivePoint.from_affine")
        if self.chart is Chart.INFINITY and abs(self.coord) >= 1.0:
            raise ValueError("infinity chart requires |w| < 1; use ProjectivePoint.from_affine")

    @classmethod
    def from_affine(cls, z) -> "ProjectivePoint":
        if z is None or (isinstance(z, str) and z.strip().lower() in ("inf", "infinity")):
            return cls.infinity()
        z = complex(z)
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            return cls.infinity()
        if abs(z) <= 1.0:
            return cls(Chart.AFFINE, z)
        return cls(Chart.INFINITY, 1.0 / z, z)

    @classmethod
    def from_chart_w(cls, w) -> "ProjectivePoint":
        w = complex(w)
        if abs(w) < 1.0:
            return cls(Chart.INFINITY, w)
        return cls(Chart.AFFINE, 1.0 / w)

    @classmethod
    def from_homogeneous(cls, z0, z1) -> "ProjectivePoint":
        z0, z1 = complex(z0), complex(z1)
        if z0 == 0 and z1 == 0:
            raise ValueError("(0, 0) is not a point of CP^1")
        if abs(z1) <= abs(z0):
            return cls(Chart.AFFINE, z1 / z0)
        return cls(Chart.INFINITY, z0 / z1)

    @classmethod
    def infinity(cls) -> "ProjectivePoint":
        return cls(Chart.INFINITY, 0j)

    @classmethod
    def parse(cls, text: str) -> "ProjectivePoint":
        """Parse ``"re,im"`` or ``"inf"``."""
        s = text.strip().lower()
        if s in ("inf", "infinity"):
            return cls.infinity()
        parts = s.split(",")
        if len(parts) > 2:
            raise ValueError(f"cannot parse point {text!r}; expected 're,im' or 'inf'")
        vals = [float(x) for x in parts] + [0.0] * (2 - len(parts))
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"point coordinates must be finite, got {text!r}")
        return cls.from_affine(complex(*vals))

    def format(self) -> str:
        if self.is_infinity:
            return "inf"
        z = self.affine
        return f"{z.real!r},{z.imag!r}"

    @property
    def is_infinity(self) -> bool:
        return self.chart is Chart.INFINITY and self.coord == 0

    @property
    def affine(self) -> complex:
        """Affine coordinate z; complex infinity for the point at infinity."""
        if self.chart is Chart.AFFINE:
            return self.coord
        if self.exact is not None:
            return self.exact
        if self.coord == 0:
            return complex(math.inf, 0.0)
        return 1.0 / self.coord

    def homogeneous(self) -> tuple[complex, complex]:
        """Unit representative (Z0, Z1)."""
        c = self.coord
        n = math.sqrt(1.0 + abs(c) ** 2)
        if self.chart is Chart.AFFINE:
            return 1.0 / n, c / n
        return c / n, 1.0 / n

    @property
    def u(self) -> float:
        z0, _ = self.homogeneous()
        return abs(z0) ** 2


def to_homogeneous(points) -> tuple[np.ndarray, np.ndarray]:
    """Unit homogeneous coordinates for ProjectivePoints or complex affine values.

    Complex input may contain ``inf``/``nan`` entries, read as the point at infinity.
    """
    if isinstance(points, ProjectivePoint):
        points = [points]
    if len(points) and isinstance(points[0], ProjectivePoint):
        h = np.array([p.homogeneous() for p in points], dtype=complex).reshape(-1, 2)
        return h[:, 0], h[:, 1]
    z = np.asarray(points, dtype=complex).ravel()
    bad = ~np.isfinite(z)
    small = np.abs(np.where(bad, 0, z)) <= 1.0
    z0 = np.empty(z.shape, complex)
    z1 = np.empty(z.shape, complex)
    zs = np.where(small & ~bad, z, 0)
    n = np.sqrt(1.0 + np.abs(zs) ** 2)
    z0[:] = 1.0 / n
    z1[:] = zs / n
    big = ~small & ~bad
    if big.any():
        w = 1.0 / z[big]
        nb = np.sqrt(1.0 + np.abs(w) ** 2)
        z0[big] = w / nb
        z1[big] = 1.0 / nb
    z0[bad] = 0.0
    z1[bad] = 1.0
    return z0, z1


def chordal_sigma_h(z0, z1, a0, a1):
    """Chordal distance between unit homogeneous representatives (vectorized)."""
    return np.abs(z0 * a1 - z1 * a0)


def chordal_sigma(x: ProjectivePoint, a: ProjectivePoint) -> float:
    """Chordal distance |z-a| / sqrt((1+|z|^2)(1+|a|^2)), the FS norm of the section of O(1) vanishing at a."""
    x0, x1 = x.homogeneous()
    a0, a1 = a.homogeneous()
    return min(1.0, abs(x0 * a1 - x1 * a0))


def fs_weight(x: ProjectivePoint, k: int) -> float:
    """Weight (k/2) log(1+|z|^2) of the Fubini-Study metric on O(k) in the affine frame.

    Computed as -k log|Z0|, which in the infinity chart reads
    (k/2) log(1+|w|^2) + k log|1/w|; it is +inf at the point at infinity.
    """
    z0, _ = x.homogeneous()
    if z0 == 0:
        return math.inf
    return -k * math.log(abs(z0))


def sphere_coords(z0, z1):
    """Cartesian coordinates on the unit sphere S^2 (stereographic from the affine chart).

    x1 + i x2 = 2 z / (1+|z|^2),  x3 = (|z|^2 - 1)/(|z|^2 + 1).
    """
    c = 2.0 * np.conj(z0) * z1
    x3 = np.abs(z1) ** 2 - np.abs(z0) ** 2
    return c.real, c.imag, x3


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Tensor Gauss-Legendre(u) x trapezoid(arg z) quadrature against omega_FS.

    Nodes are stored radial-major: node ``i * n_angular + j`` has
    ``u = u_radial[i]`` and ``theta = theta_angular[j]``.
    """

    n_radial: int
    n_angular: int
    u_radial: np.ndarray
    w_radial: np.ndarray
    theta_angular: np.ndarray

    @property
    def grid_id(self) -> str:
        return f"gl{self.n_radial}x{self.n_angular}"

    @property
    def size(self) -> int:
        return self.n_radial * self.n_angular

    @cached_property
    def u(self) -> np.ndarray:
        return np.repeat(self.u_radial, self.n_angular)

    @cached_property
    def theta(self) -> np.ndarray:
        return np.tile(self.theta_angular, self.n_radial)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.repeat(self.w_radial / self.n_angular, self.n_angular)

    @cached_property
    def homogeneous(self) -> tuple[np.ndarray, np.ndarray]:
        z0 = np.sqrt(self.u).astype(complex)
        z1 = np.sqrt(1.0 - self.u) * np.exp(1j * self.theta)
        return z0, z1

    @cached_property
    def t(self) -> np.ndarray:
        """log|z| at the nodes."""
        return 0.5 * (np.log1p(-self.u) - np.log(self.u))

    @property
    def nodes(self) -> list[ProjectivePoint]:
        z0, z1 = self.homogeneous
        return [ProjectivePoint.from_homogeneous(a, b) for a, b in zip(z0, z1)]

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def ring_chunks(self, max_rows: int):
        """Yield slices of whole radial rings holding at most ``max_rows`` nodes (at least one ring)."""
        rings = max(1, max_rows // self.n_angular)
        for i in range(0, self.n_radial, rings):
            stop = min(self.n_radial, i + rings)
            yield slice(i * self.n_angular, stop * self.n_angular)


def make_grid(n_radial: int, n_angular: int) -> SphereGrid:
    if int(n_radial) != n_radial or int(n_angular) != n_angular:
        raise ValueError("grid counts must be integers")
    n_radial, n_angular = int(n_radial), int(n_angular)
    if n_radial < 2:
        raise ValueError(f"n_radial must be >= 2, got {n_radial}")
    if n_angular < 4:
        raise ValueError(f"n_angular must be >= 4, got {n_angular}")
    x, w = np.polynomial.legendre.leggauss(n_radial)
    u = 0.5 * (x + 1.0)
    w = 0.5 * w
    w = w / w.sum()
    theta = 2.0 * np.pi * np.arange(n_angular) / n_angular
    return SphereGrid(n_radial, n_angular, u, w, theta)


@dataclass(frozen=True, eq=False)
class GridField:
    """A real scalar field sampled at the nodes of a SphereGrid."""

    grid: SphereGrid
    values: np.ndarray
    name: str = "value"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values for a grid of {self.grid.size} nodes")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        return self.grid.integrate(self.values)

    def to_text(self) -> str:
        g = self.grid
        buf = io.StringIO()
        buf.write("u theta weight value\n")
        np.savetxt(buf, np.column_stack([g.u, g.theta, g.weights, self.values]), fmt="%.17g")
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str, grid: SphereGrid | None = None, name: str = "value") -> "GridField":
        lines = text.splitlines()
        if not lines or lines[0].split() != ["u", "theta", "weight", "value"]:
            raise ValueError("missing 'u theta weight value' header")
        data = np.loadtxt(io.StringIO("\n".join(lines[1:])), ndmin=2)
        if grid is None:
            u = np.unique(data[:, 0])
            th = np.unique(data[:, 1])
            grid = make_grid(u.size, th.size)
            if not np.allclose(grid.u, data[:, 0], rtol=0, atol=1e-14):
                raise ValueError("node layout is not a Gauss-Legendre tensor grid")
        return cls(grid, data[:, 3], name)


@dataclass(frozen=True)
class PoleSet:
    """Distinct points a_j with positive vanishing rates tau_j."""

    poles: tuple[tuple[ProjectivePoint, float], ...] = ()

    def __post_init__(self):
        items = []
        for pt, tau in self.poles:
            if not isinstance(pt, ProjectivePoint):
                pt = ProjectivePoint.parse(pt) if isinstance(pt, str) else ProjectivePoint.from_affine(pt)
            tau = float(tau)
            if not (tau > 0 and math.isfinite(tau)):
                raise ValueError(f"tau must be a positive real, got {tau}")
            items.append((pt, tau))
        for i in range(len(items)):
            for j in range(i):
                if chordal_sigma(items[i][0], items[j][0]) <= 1e-14:
                    raise ValueError("pole points must be pairwise distinct")
        object.__setattr__(self, "poles", tuple(items))

    @classmethod
    def of(cls, *pairs) -> "PoleSet":
        return cls(tuple(pairs))

    def __len__(self):
        return len(self.poles)

    def __iter__(self):
        return iter(self.poles)

    @property
    def points(self) -> list[ProjectivePoint]:
        return [p for p, _ in self.poles]

    @property
    def taus(self) -> list[float]:
        return [t for _, t in self.poles]

    @property
    def tau_sum(self) -> float:
        return float(sum(self.taus))

    def thresholds(self, p: int) -> list[int]:
        from bergmanlab.sections import threshold

        return [threshold(tau, p) for tau in self.taus]

    def homogeneous(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.poles:
            return np.zeros(0, complex), np.zeros(0, complex)
        return to_homogeneous(self.points)

    def log_sigmas(self, z0, z1) -> np.ndarray:
        """Array (n_poles, n_points) of log sigma_j at the given points."""
        a0, a1 = self.homogeneous()
        with np.errstate(divide="ignore"):
            return np.log(np.abs(np.outer(a1, z0) - np.outer(a0, z1)))

    def weighted_log_sigma(self, z0, z1, rates: Sequence[float] | None = None) -> np.ndarray:
        """sum_j rate_j log sigma_j at the given points (rates default to tau)."""
        rates = self.taus if rates is None else rates
        if not self.poles:
            return np.zeros(np.shape(z0))
        return np.asarray(rates, float) @ self.log_sigmas(z0, z1)

    def is_radial(self) -> bool:
        """True when every pole is 0 or infinity."""
        return all(p.is_infinity or p.affine == 0 for p in self.points)

    def tau_at_zero(self) -> float:
        return float(sum(t for p, t in self.poles if not p.is_infinity and p.affine == 0))

    def tau_at_infinity(self) -> float:
        return float(sum(t for p, t in self.poles if p.is_infinity))

    def to_records(self) -> list[dict]:
        return [{"point": p.format(), "tau": t} for p, t in self.poles]

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "PoleSet":
        return cls(tuple((ProjectivePoint.parse(r["point"]), float(r["tau"])) for r in records))
