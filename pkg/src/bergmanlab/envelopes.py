"""Equilibrium envelopes with prescribed logarithmic poles.

The reduced envelope v = phi_req is the largest function with

    v <= psi := phi - sum_j tau_j log sigma_j,   c rho + L v >= 0,

where c = k - sum tau_j, L is a finite-volume dd^c on the log-cylinder
(t, theta) = (log|z|, arg z) and rho is the cell mass of omega_FS as seen
by the same operator.  This is a linear complementarity problem with an
M-matrix; the default solver is a primal-dual active set method, with
projected SOR available as an alternative.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from bergmanlab.errors import MaxIterations, NotBig
from bergmanlab.geometry import (
    GridField,
    PoleSet,
    ProjectivePoint,
    SphereGrid,
    chordal_sigma_h,
    to_homogeneous,
)
from bergmanlab.sections import WeightSpec

log = logging.getLogger(__name__)

__all__ = [
    "CylinderOperator",
    "EnvelopeProblem",
    "EnvelopeResult",
    "EquilibriumCurrent",
    "RadialProfile",
    "StabilityReport",
    "solve_envelope",
    "radial_oracle",
    "equilibrium_current",
    "envelope_stability_check",
    "holder_diagnostic",
    "holder_constant",
    "T_CUTOFF",
]

T_CUTOFF = 12.0


def _psi0(t):
    """(1/2) log(1 + e^{2t}) without overflow."""
    t = np.asarray(t, float)
    return np.where(t > 0, t + 0.5 * np.log1p(np.exp(-2 * np.abs(t))), 0.5 * np.log1p(np.exp(2 * np.minimum(t, 0))))


def _dpsi0(t):
    t = np.asarray(t, float)
    return 0.5 * (1.0 + np.tanh(t))


# ---------------------------------------------------------------- discretization


@dataclass(frozen=True, eq=False)
class CylinderOperator:
    """Finite-volume dd^c on a SphereGrid, in units of cell mass.

    Ring i covers u in [b_i, b_{i+1}] with b the cumulative Gauss-Legendre
    weights, so its omega_FS mass is exactly w_i.  ``up``/``down`` couple
    ring i to rings i-1 / i+1 (towards infinity / towards 0), ``ang``
    couples angular neighbours.  Both caps carry zero flux.
    """

    grid: SphereGrid
    up: np.ndarray
    down: np.ndarray
    ang: np.ndarray
    rho: np.ndarray

    @classmethod
    def build(cls, grid: SphereGrid, T: float = T_CUTOFF) -> "CylinderOperator":
        n, N = grid.n_radial, grid.n_angular
        t = 0.5 * (np.log1p(-grid.u_radial) - np.log(grid.u_radial))
        b = np.concatenate([[0.0], np.cumsum(grid.w_radial)])
        b[-1] = 1.0
        with np.errstate(divide="ignore"):
            tb = 0.5 * (np.log1p(-b) - np.log(b))
        tb = np.clip(tb, -T, T)
        h = tb[:-1] - tb[1:]
        dt = t[:-1] - t[1:]
        up = np.zeros(n)
        down = np.zeros(n)
        up[1:] = 1.0 / (N * dt)
        down[:-1] = 1.0 / (N * dt)
        ang = h * N / (4 * np.pi**2)
        # rho = discrete dd^c psi0 with the exact cap fluxes (1 at infinity, 0 at the origin)
        p0 = _psi0(t)
        rho = np.zeros(n)
        rho[0] += 1.0 / N
        rho[1:] += up[1:] * (p0[:-1] - p0[1:])
        rho[:-1] += down[:-1] * (p0[1:] - p0[:-1])
        return cls(grid, up, down, ang, rho)

    @property
    def shape(self):
        return self.grid.n_radial, self.grid.n_angular

    def apply(self, v) -> np.ndarray:
        """(L v) per cell, in mass units; sums to zero over the sphere."""
        V = np.asarray(v, float).reshape(self.shape)
        out = np.zeros_like(V)
        out[1:] += self.up[1:, None] * (V[:-1] - V[1:])
        out[:-1] += self.down[:-1, None] * (V[1:] - V[:-1])
        out += self.ang[:, None] * (np.roll(V, 1, axis=1) + np.roll(V, -1, axis=1) - 2 * V)
        return out.ravel()

    def rho_nodes(self) -> np.ndarray:
        return np.repeat(self.rho, self.grid.n_angular)

    def diagonal(self) -> np.ndarray:
        return np.repeat(self.up + self.down + 2 * self.ang, self.grid.n_angular)

    def matrix(self) -> sp.csr_matrix:
        """Sparse A = -L (an M-matrix whose kernel is the constants)."""
        n, N = self.shape
        idx = np.arange(n * N).reshape(n, N)
        rows, cols, vals = [], [], []

        def couple(a, b, coef):
            rows.extend([a, a])
            cols.extend([a, b])
            vals.extend([coef, -coef])

        up = np.repeat(self.up, N)
        down = np.repeat(self.down, N)
        ang = np.repeat(self.ang, N)
        flat = idx.ravel()
        mask_up = up > 0
        couple(flat[mask_up], np.roll(idx, 1, axis=0).ravel()[mask_up], up[mask_up])
        mask_dn = down > 0
        couple(flat[mask_dn], np.roll(idx, -1, axis=0).ravel()[mask_dn], down[mask_dn])
        if N > 1:
            couple(flat, np.roll(idx, 1, axis=1).ravel(), ang)
            couple(flat, np.roll(idx, -1, axis=1).ravel(), ang)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        return sp.csr_matrix((v, (r, c)), shape=(n * N, n * N))


# ---------------------------------------------------------------- problem / result


def _separate_poles_from_nodes(poles: PoleSet, grid: SphereGrid) -> PoleSet:
    z0, z1 = grid.homogeneous
    moved = []
    half = math.pi / grid.n_angular
    for pt, tau in poles:
        a0, a1 = pt.homogeneous()
        if np.min(chordal_sigma_h(z0, z1, a0, a1)) < 1e-12:
            new = ProjectivePoint.from_homogeneous(a0, a1 * np.exp(1j * half))
            log.warning("pole %s sits on a grid node; moved by half an angular cell to %s", pt.format(), new.format())
            pt = new
        moved.append((pt, tau))
    return PoleSet(tuple(moved))


@dataclass(frozen=True, eq=False)
class EnvelopeProblem:
    """Obstacle data on a fixed grid: psi = phi - sum tau_j log sigma_j and theta mass k - sum tau_j."""

    k: int
    poles: PoleSet
    weight: WeightSpec
    grid: SphereGrid
    theta_mass: float
    obstacle: GridField
    node_poles: PoleSet

    @classmethod
    def build(cls, k: int, poles: PoleSet, weight: WeightSpec | None, grid: SphereGrid) -> "EnvelopeProblem":
        weight = weight or WeightSpec.zero()
        theta_mass = k - poles.tau_sum
        if not theta_mass > 0:
            raise NotBig(k, poles.tau_sum)
        node_poles = _separate_poles_from_nodes(poles, grid)
        z0, z1 = grid.homogeneous
        phi = weight(z0, z1)
        obstacle = phi - node_poles.weighted_log_sigma(z0, z1)
        if not np.all(np.isfinite(obstacle)):
            raise ValueError("obstacle is not finite on the grid nodes")
        return cls(k, poles, weight, grid, theta_mass, GridField(grid, obstacle, "obstacle"), node_poles)

    def with_weight(self, weight: WeightSpec) -> "EnvelopeProblem":
        return EnvelopeProblem.build(self.k, self.poles, weight, self.grid)

    def log_sigma_sum(self) -> np.ndarray:
        return self.node_poles.weighted_log_sigma(*self.grid.homogeneous)


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    phi_req: GridField
    phi_eq: GridField
    iterations: int
    complementarity_residual: float
    contact_set: GridField
    slack: np.ndarray
    method: str
    problem: EnvelopeProblem = field(repr=False)

    @property
    def grid(self) -> SphereGrid:
        return self.phi_req.grid

    def theta_density_mass(self) -> float:
        """Total discrete mass of theta + dd^c phi_req."""
        return float(np.sum(self.slack))

    def summary(self) -> dict:
        cur = equilibrium_current(self, self.problem)
        return {
            "grid": self.grid.grid_id,
            "theta_mass": self.problem.theta_mass,
            "iterations": self.iterations,
            "residual": self.complementarity_residual,
            "method": self.method,
            "atoms": [{"point": p.format(), "mass": m} for p, m in cur.atoms],
            "free_boundary_radii": cur.free_boundary.get("radii", []),
        }

    def export(self, path_prefix) -> None:
        """Write phi_req/phi_eq/contact as columnar text plus a JSON summary."""
        import json
        from pathlib import Path

        prefix = Path(path_prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        for f in (self.phi_req, self.phi_eq, self.contact_set):
            f.save(prefix.with_name(f"{prefix.name}_{f.name}.txt"))
        prefix.with_name(f"{prefix.name}_summary.json").write_text(json.dumps(self.summary(), indent=2) + "\n")


def _residual(gap, slack_density):
    return float(np.max(np.abs(np.minimum(gap, slack_density))))


def solve_envelope(
    problem: EnvelopeProblem,
    grid: SphereGrid | None = None,
    tol: float = 1e-8,
    method: str = "pdas",
    max_iter: int | None = None,
    omega: float = 1.8,
    initial=None,
) -> EnvelopeResult:
    """Largest v <= obstacle with c*rho + L v >= 0.

    ``method="pdas"`` (default) runs a primal-dual active-set iteration with
    sparse LU solves, warm-started from a half-resolution contact set on
    large grids (``initial`` may pass a boolean contact guess instead); ``method="psor"`` runs red-black projected SOR.  The
    complementarity residual is max |min(obstacle - v, slack / rho)|, with
    the slack divided by the operator diagonal so that both arms are in
    potential units (cap cells have tiny mass, so a density-scaled slack
    there would be dominated by rounding).
    """
    if grid is not None and grid is not problem.grid:
        problem = EnvelopeProblem.build(problem.k, problem.poles, problem.weight, grid)
    grid = problem.grid
    if not problem.theta_mass > 0:
        raise NotBig(problem.k, problem.poles.tau_sum)
    if grid.n_radial < 4 or grid.n_angular < 4:
        raise ValueError("envelope solver needs at least 4 x 4 nodes")
    op = CylinderOperator.build(grid)
    psi = np.array(problem.obstacle.values)
    rho = op.rho_nodes()
    diag = op.diagonal()
    f = problem.theta_mass * rho

    if method == "pdas":
        if initial is None and grid.n_radial >= 128 and grid.n_angular % 2 == 0:
            initial = _coarse_contact(problem, grid, tol)
        v, iters = _pdas(op, psi, f, diag, tol, max_iter or 500, initial)
    elif method == "psor":
        v, iters = _psor(op, psi, f, diag, tol, max_iter or 200_000, omega, initial)
    else:
        raise ValueError(f"unknown envelope method {method!r}")

    slack = f + op.apply(v)
    gap = psi - v
    res = _residual(gap, slack / diag)
    contact = gap <= max(tol, 1e-12)
    phi_eq = v + problem.log_sigma_sum()
    return EnvelopeResult(
        GridField(grid, v, "phi_req"),
        GridField(grid, phi_eq, "phi_eq"),
        iters,
        res,
        GridField(grid, contact.astype(float), "contact"),
        slack,
        method,
        problem,
    )


def _coarse_contact(problem, grid, tol):
    """Contact set of a half-resolution solve, interpolated to the fine nodes."""
    from bergmanlab.geometry import make_grid

    coarse = make_grid(grid.n_radial // 2, grid.n_angular // 2)
    res = solve_envelope(EnvelopeProblem.build(problem.k, problem.poles, problem.weight, coarse), tol=tol)
    return WeightSpec.from_grid(res.contact_set)(*grid.homogeneous) > 0.5


def _pdas(op, psi, f, diag, tol, max_iter, initial):
    A = op.matrix().tocsr()
    n = psi.size
    if initial is None:
        active = np.ones(n, bool)
    else:
        active = np.asarray(initial, bool).copy()
    v = psi.copy()
    prev = None
    for it in range(1, max_iter + 1):
        if not active.any():
            active[np.argmin(psi)] = True
        inactive = ~active
        v = psi.copy()
        if inactive.any():
            ii = np.flatnonzero(inactive)
            aa = np.flatnonzero(active)
            A_ii = A[ii][:, ii].tocsc()
            rhs = f[ii] - A[ii][:, aa] @ psi[aa]
            v[ii] = spla.spsolve(A_ii, rhs)
        slack = (f - A @ v) / diag
        gap = psi - v
        res = _residual(gap, slack)
        new_active = gap - slack < 0
        if res <= tol or (prev is not None and np.array_equal(new_active, active)):
            return v, it
        prev = active
        active = new_active
    raise MaxIterations(f"active-set iteration did not settle in {max_iter} steps", best=v, residual=res)


def _psor(op, psi, f, diag_nodes, tol, max_iter, omega, initial):
    n, N = op.shape
    if N % 2:
        raise ValueError("red-black ordering needs an even number of angular nodes")
    P = psi.reshape(n, N)
    F = f.reshape(n, N)
    up = op.up[:, None]
    down = op.down[:, None]
    ang = op.ang[:, None]
    diag = up + down + 2 * ang
    V = np.full((n, N), float(np.min(psi))) if initial is None else np.minimum(np.asarray(initial, float).reshape(n, N), P)
    ii, jj = np.indices((n, N))
    colors = [(ii + jj) % 2 == 0, (ii + jj) % 2 == 1]
    check_every = 50
    res = math.inf
    for sweep in range(1, max_iter + 1):
        for mask in colors:
            nb = np.zeros_like(V)
            nb[1:] += up[1:] * V[:-1]
            nb[:-1] += down[:-1] * V[1:]
            nb += ang * (np.roll(V, 1, axis=1) + np.roll(V, -1, axis=1))
            gs = (F + nb) / diag
            upd = np.minimum(P, V + omega * (gs - V))
            V = np.where(mask, upd, V)
        if sweep % check_every == 0 or sweep == max_iter:
            v = V.ravel()
            slack = (f + op.apply(v)) / diag_nodes
            res = _residual(psi - v, slack)
            if res <= tol:
                return v, sweep
    raise MaxIterations(f"projected SOR did not reach {tol:g} in {max_iter} sweeps", best=V.ravel(), residual=res)


# ---------------------------------------------------------------- equilibrium current


@dataclass(frozen=True, eq=False)
class EquilibriumCurrent:
    atoms: list
    density: GridField
    free_boundary: dict

    @property
    def total_mass(self) -> float:
        return float(sum(m for _, m in self.atoms) + self.density.integral())


def _ring_contact_radii(contact: np.ndarray, grid: SphereGrid) -> list[float]:
    """Radii |z| where the ring-averaged contact indicator switches, for rotation-invariant data."""
    frac = contact.reshape(grid.n_radial, grid.n_angular).mean(axis=1) > 0.5
    t = 0.5 * (np.log1p(-grid.u_radial) - np.log(grid.u_radial))
    radii = []
    for i in range(grid.n_radial - 1):
        if frac[i] != frac[i + 1]:
            # the last contact ring, not the midpoint: the discrete contact edge sits on a node
            radii.append(float(math.exp(t[i] if frac[i] else t[i + 1])))
    return sorted(radii)


def equilibrium_current(result: EnvelopeResult, problem: EnvelopeProblem | None = None, grid=None) -> EquilibriumCurrent:
    """Atoms tau_j at the poles plus the density of theta + dd^c phi_req against omega_FS."""
    problem = problem or result.problem
    g = result.grid
    density = result.slack / g.weights
    atoms = [(pt, tau) for pt, tau in problem.poles]
    contact = result.contact_set.values > 0.5
    fb = {"contact_fraction": float(np.dot(g.weights, contact))}
    if problem.poles.is_radial() and problem.weight.is_radial:
        fb["radii"] = _ring_contact_radii(contact, g)
    return EquilibriumCurrent(atoms, GridField(g, density, "density"), fb)


# ---------------------------------------------------------------- radial oracle


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Rotation-invariant envelope: g = phi_eq + k psi0 is the largest convex
    minorant of f + k psi0 in t = log|z| with slopes in [tau_0, k - tau_inf]."""

    k: int
    tau0: float
    tau_inf: float
    t: np.ndarray
    g: np.ndarray
    G: np.ndarray
    touch: np.ndarray

    @property
    def slope_range(self):
        return self.tau0, self.k - self.tau_inf

    def g_at(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        out = np.interp(t, self.t, self.g)
        s_lo = (self.g[1] - self.g[0]) / (self.t[1] - self.t[0])
        s_hi = (self.g[-1] - self.g[-2]) / (self.t[-1] - self.t[-2])
        out = np.where(t < self.t[0], self.g[0] + s_lo * (t - self.t[0]), out)
        return np.where(t > self.t[-1], self.g[-1] + s_hi * (t - self.t[-1]), out)

    def slope_at(self, t) -> np.ndarray:
        """Right derivative g'(t) of the piecewise-linear profile."""
        s = np.diff(self.g) / np.diff(self.t)
        i = np.clip(np.searchsorted(self.t, np.asarray(t, float), side="right") - 1, 0, s.size - 1)
        return s[i]

    def phi_eq(self, t) -> np.ndarray:
        return self.g_at(t) - self.k * _psi0(t)

    def phi_req(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        p0 = _psi0(t)
        return self.phi_eq(t) - self.tau0 * (t - p0) + self.tau_inf * p0

    def _t_of(self, z0, z1):
        with np.errstate(divide="ignore"):
            return np.log(np.abs(z1)) - np.log(np.abs(z0))

    def phi_eq_at(self, z0, z1) -> np.ndarray:
        return self.phi_eq(self._t_of(z0, z1))

    def phi_req_at(self, z0, z1) -> np.ndarray:
        return self.phi_req(self._t_of(z0, z1))

    def on_grid(self, grid: SphereGrid, which: str = "phi_req") -> GridField:
        fn = self.phi_req if which == "phi_req" else self.phi_eq
        return GridField(grid, fn(grid.t), which)

    def contact_intervals(self) -> list[tuple[float, float]]:
        """Maximal t-intervals on which g touches f + k psi0 (up to the sampling step)."""
        touch = self.touch
        out = []
        i, n = 0, touch.size
        while i < n:
            if touch[i]:
                j = i
                while j + 1 < n and touch[j + 1]:
                    j += 1
                out.append((float(self.t[i]), float(self.t[j])))
                i = j + 1
            else:
                i += 1
        return out

    def free_boundary_radii(self) -> list[float]:
        lo, hi = self.t[0], self.t[-1]
        radii = []
        for a, b in self.contact_intervals():
            if a > lo:
                radii.append(math.exp(a))
            if b < hi:
                radii.append(math.exp(b))
        return sorted(radii)

    def continuous_mass(self) -> float:
        return self.k - self.tau0 - self.tau_inf

    def density_cdf_u(self, u) -> np.ndarray:
        """CDF in u = 1/(1+|z|^2) of the normalized absolutely continuous part of T_eq."""
        u = np.clip(np.asarray(u, float), 1e-300, 1.0)
        with np.errstate(divide="ignore"):
            t = 0.5 * (np.log1p(-u) - np.log(u))
        s = np.clip(self.slope_at(t), self.tau0, self.k - self.tau_inf)
        cdf = ((self.k - self.tau_inf) - s) / self.continuous_mass()
        return np.clip(np.where(u >= 1.0, 1.0, cdf), 0.0, 1.0)


def _lower_hull(x, y):
    """Indices of the lower convex hull of points sorted by x (monotone chain)."""
    hull = []
    for i in range(x.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            if (y[b] - y[a]) * (x[i] - x[a]) >= (y[i] - y[a]) * (x[b] - x[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull)


def radial_oracle(
    k: int,
    poles: PoleSet,
    weight: WeightSpec | None = None,
    T: float = T_CUTOFF,
    samples: int = 200_001,
) -> RadialProfile:
    """Exact rotation-invariant envelope via a constrained 1-D convex minorant."""
    weight = weight or WeightSpec.zero()
    if not poles.is_radial():
        raise ValueError("radial oracle needs every pole at 0 or infinity")
    if not weight.is_radial:
        raise ValueError("radial oracle needs a rotation-invariant weight")
    tau0, tau_inf = poles.tau_at_zero(), poles.tau_at_infinity()
    if not tau0 + tau_inf < k:
        raise NotBig(k, tau0 + tau_inf)
    t = np.linspace(-T, T, samples)
    G = weight.radial_profile(t) + k * _psi0(t)
    h = _lower_hull(t, G)
    g = np.interp(t, t[h], G[h])
    touch = np.zeros(t.size, bool)
    touch[h] = True
    # hull edges spanning several samples are bridges over non-contact intervals,
    # unless the gap they leave is at rounding level
    scale = 1e-12 * max(1.0, float(np.max(np.abs(G))))
    for a, b in zip(h[:-1], h[1:]):
        if b - a > 1 and np.max(G[a:b] - g[a:b]) <= scale:
            touch[a:b] = True
    s_lo, s_hi = tau0, k - tau_inf
    idx = np.arange(t.size)
    slopes = np.diff(g) / np.diff(t)
    # supporting lines of slope s_lo / s_hi replace the hull where it is flatter / steeper
    left = np.flatnonzero(slopes >= s_lo)
    i0 = left[0] if left.size else t.size - 1
    g = np.where(idx < i0, g[i0] + s_lo * (t - t[i0]), g)
    touch &= idx >= i0
    slopes = np.diff(g) / np.diff(t)
    right = np.flatnonzero(slopes > s_hi)
    if right.size:
        i1 = right[0]
        g = np.where(idx > i1, g[i1] + s_hi * (t - t[i1]), g)
        touch &= idx <= i1
    return RadialProfile(k, tau0, tau_inf, t, g, G, touch)


# ---------------------------------------------------------------- stability


@dataclass
class StabilityReport:
    weight_gap: float
    envelope_gap: float
    tol: float
    ordered: bool
    monotone_violations: int
    stability_violations: int

    @property
    def passed(self) -> bool:
        return self.stability_violations == 0 and self.monotone_violations == 0


def envelope_stability_check(
    problem1: EnvelopeProblem,
    problem2: EnvelopeProblem,
    grid: SphereGrid | None = None,
    tol: float = 1e-8,
    results=None,
) -> StabilityReport:
    """Sup-norm stability |req1 - req2| <= sup|phi1 - phi2| and monotonicity when phi1 <= phi2."""
    if problem1.k != problem2.k or problem1.poles != problem2.poles:
        raise ValueError("stability check needs the same k and poles")
    grid = grid or problem1.grid
    if results is None:
        r1 = solve_envelope(problem1, grid, tol)
        r2 = solve_envelope(problem2, grid, tol)
    else:
        r1, r2 = results
    z0, z1 = grid.homogeneous
    w1 = problem1.weight(z0, z1)
    w2 = problem2.weight(z0, z1)
    wgap = float(np.max(np.abs(w1 - w2)))
    d = np.asarray(r1.phi_req.values) - np.asarray(r2.phi_req.values)
    slack = 2 * tol + 1e-10
    stab = int(np.sum(np.abs(d) > wgap + slack))
    ordered = bool(np.all(w1 <= w2))
    mono = int(np.sum(d > slack)) if ordered else 0
    return StabilityReport(wgap, float(np.max(np.abs(d))), tol, ordered, mono, stab)


# ---------------------------------------------------------------- regularity


def holder_constant(
    field: GridField,
    nu: float,
    rho: float = 0.0,
    poles: PoleSet | None = None,
    meridians: int = 8,
) -> float:
    """Empirical weighted Hölder constant of a grid field.

    Pairs are all node pairs along ``meridians`` evenly spaced meridians plus
    every pair of angular neighbours; each quotient is
    |f(z) - f(w)| * min(dist(z, A), dist(w, A))^rho / dist(z, w)^nu.
    """
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    g = field.grid
    n, N = g.n_radial, g.n_angular
    vals = np.asarray(field.values).reshape(n, N)
    z0, z1 = g.homogeneous
    Z0 = z0.reshape(n, N)
    Z1 = z1.reshape(n, N)
    if rho > 0 and poles is not None and len(poles):
        dA = np.min(np.exp(poles.log_sigmas(z0, z1)), axis=0).reshape(n, N)
    else:
        dA = np.ones((n, N))
        rho = 0.0
    best = 0.0
    cols = np.unique(np.linspace(0, N, meridians, endpoint=False).astype(int))
    iu, ju = np.triu_indices(n, 1)
    for j in cols:
        f = vals[:, j]
        d = chordal_sigma_h(Z0[iu, j], Z1[iu, j], Z0[ju, j], Z1[ju, j])
        q = np.abs(f[iu] - f[ju]) * np.minimum(dA[iu, j], dA[ju, j]) ** rho / d**nu
        best = max(best, float(np.max(q)))
    nb0 = np.roll(Z0, -1, axis=1)
    nb1 = np.roll(Z1, -1, axis=1)
    d = chordal_sigma_h(Z0, Z1, nb0, nb1)
    q = np.abs(vals - np.roll(vals, -1, axis=1)) * np.minimum(dA, np.roll(dA, -1, axis=1)) ** rho / d**nu
    return max(best, float(np.max(q)))


def holder_diagnostic(
    result: EnvelopeResult,
    problem: EnvelopeProblem | None = None,
    grid: SphereGrid | None = None,
    nu: float = 1.0,
    rho: float = 0.0,
    which: str = "phi_eq",
) -> float:
    """Empirical constant for phi_eq (singular set = poles) or phi_req (no singular set)."""
    problem = problem or result.problem
    if which == "phi_eq":
        return holder_constant(result.phi_eq, nu, rho, problem.node_poles)
    if which == "phi_req":
        return holder_constant(result.phi_req, nu, 0.0, None)
    raise ValueError("which must be 'phi_eq' or 'phi_req'")
