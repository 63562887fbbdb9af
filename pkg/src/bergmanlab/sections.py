"""Pole-constrained section spaces of O(kp) and their partial Bergman kernels.

A section of O(kp) vanishing to order >= t_j at a_j is B q with
B = prod_j (z - a_j)^{t_j} (a pole at infinity lowers the admissible degree
instead) and deg q <= m = kp - sum_j t_j.  Pointwise norms are evaluated in
unit homogeneous coordinates, where

    |B q|_{h^p}(x) = prod_j sigma_j(x)^{t_j} * e^{-p phi(x)} * |sum_i b_i a_i(x)|,
    a_i = sqrt(binom(m, i)) Z0^{m-i} Z1^i,

up to one global constant.  Every |a_i| <= 1, so the weighted evaluation
matrix has O(1) entries in either chart and never overflows.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg as sla
from scipy.special import gammaln

from bergmanlab.errors import DimensionZero, IllConditioned
from bergmanlab.geometry import (
    GridField,
    PoleSet,
    ProjectivePoint,
    SphereGrid,
    chordal_sigma_h,
    make_grid,
    sphere_coords,
    to_homogeneous,
)

log = logging.getLogger(__name__)

__all__ = [
    "threshold",
    "dimension",
    "is_big",
    "WeightSpec",
    "SectionSpace",
    "BergmanField",
    "build_orthonormal_basis",
    "bergman_field",
    "variational_check",
    "VariationalReport",
    "modulus_of_continuity",
    "resolution_floor",
    "default_grid",
    "scaled_monomials",
]

_CHUNK_ENTRIES = 4_000_000


def threshold(tau: float, p: int) -> int:
    """Smallest admissible vanishing order: tau*p if it is an integer, else floor(tau*p) + 1."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if p < 1 or int(p) != p:
        raise ValueError(f"p must be a positive integer, got {p}")
    x = float(tau) * int(p)
    r = round(x)
    # tau given as a decimal (0.3) makes tau*p land one ulp off the integer
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return int(math.floor(x)) + 1


def dimension(k: int, p: int, poles: PoleSet) -> int:
    """dim of the sections of O(kp) vanishing to order >= t_j(p) at each pole."""
    return max(0, k * p + 1 - sum(poles.thresholds(p)))


def is_big(k: int, poles: PoleSet) -> bool:
    return poles.tau_sum < k


def resolution_floor(k: int, p: int) -> tuple[int, int]:
    """Minimum (n_radial, n_angular) for building an ONB at tensor power p."""
    return 2 * p + 16, 2 * k * p + 16


def default_grid(k: int, p: int) -> SphereGrid:
    return make_grid(*resolution_floor(k, p))


# ---------------------------------------------------------------- weights


def _interp_periodic(theta_nodes, values_2d, u_nodes, u, theta):
    """Bilinear interpolation on a (u, theta) tensor table, periodic in theta, clamped in u."""
    nr, na = values_2d.shape
    uc = np.clip(u, u_nodes[0], u_nodes[-1])
    i = np.clip(np.searchsorted(u_nodes, uc) - 1, 0, nr - 2)
    fu = (uc - u_nodes[i]) / (u_nodes[i + 1] - u_nodes[i])
    s = np.mod(theta, 2 * np.pi) / (2 * np.pi) * na
    j = np.floor(s).astype(int) % na
    fj = s - np.floor(s)
    j1 = (j + 1) % na
    v0 = values_2d[i, j] * (1 - fj) + values_2d[i, j1] * fj
    v1 = values_2d[i + 1, j] * (1 - fj) + values_2d[i + 1, j1] * fj
    return v0 * (1 - fu) + v1 * fu


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Global weight phi of h = h0 exp(-2 phi).

    kind is one of ``"zero"``, ``"radial"`` (tabulated in t = log|z|),
    ``"grid"`` (tabulated on a SphereGrid, bilinear in (u, arg z)) or
    ``"preset"``.  ``holder`` is ``(nu, constant)`` when a Hölder bound
    with respect to chordal distance is known.
    """

    kind: str = "zero"
    name: str = ""
    params: dict = field(default_factory=dict)
    holder: tuple[float, float] | None = (1.0, 0.0)
    _table: tuple = ()

    # -- constructors
    @classmethod
    def zero(cls) -> "WeightSpec":
        return cls("zero", "zero", {}, (1.0, 0.0))

    @classmethod
    def constant(cls, c: float) -> "WeightSpec":
        return cls("preset", "constant", {"c": float(c)}, (1.0, 0.0))

    @classmethod
    def radial(cls, t, values) -> "WeightSpec":
        t = np.asarray(t, float)
        v = np.asarray(values, float)
        if t.ndim != 1 or t.shape != v.shape or np.any(np.diff(t) <= 0):
            raise ValueError("radial table needs increasing t and matching values")
        return cls("radial", "radial", {}, None, (t, v))

    @classmethod
    def from_grid(cls, gf: GridField) -> "WeightSpec":
        g = gf.grid
        table = np.asarray(gf.values, float).reshape(g.n_radial, g.n_angular)
        return cls("grid", g.grid_id, {}, None, (g, table))

    @classmethod
    def preset(cls, name: str, **params) -> "WeightSpec":
        name = name.lower()
        c = float(params.get("c", 1.0))
        if name == "zero":
            return cls.zero()
        if name == "constant":
            return cls.constant(c)
        if name in ("holder", "lipschitz"):
            nu = 1.0 if name == "lipschitz" else float(params.get("nu", 0.5))
            if not 0 < nu <= 1:
                raise ValueError("Hölder exponent must lie in (0, 1]")
            center = params.get("center", "0,0")
            ProjectivePoint.parse(center)
            return cls("preset", "holder", {"c": c, "nu": nu, "center": center}, (nu, abs(c)))
        if name == "zonal":
            # |x3(x) - x3(y)| <= |x - y| = 2 sigma(x, y)
            return cls("preset", "zonal", {"c": c}, (1.0, 2 * abs(c)))
        if name == "harmonics":
            degree = int(params.get("degree", 3))
            seed = int(params.get("seed", 0))
            return cls("preset", "harmonics", {"c": c, "degree": degree, "seed": seed}, None)
        if name == "loglog":
            center = params.get("center", "0,0")
            ProjectivePoint.parse(center)
            return cls("preset", "loglog", {"c": c, "center": center}, None)
        raise ValueError(f"unknown weight preset {name!r}")

    # -- evaluation
    def __call__(self, z0, z1) -> np.ndarray:
        z0 = np.asarray(z0, complex)
        z1 = np.asarray(z1, complex)
        if self.kind == "zero":
            return np.zeros(z0.shape)
        if self.kind == "radial":
            t_tab, v_tab = self._table
            with np.errstate(divide="ignore"):
                t = np.log(np.abs(z1)) - np.log(np.abs(z0))
            t = np.clip(t, t_tab[0], t_tab[-1])
            return np.interp(t, t_tab, v_tab)
        if self.kind == "grid":
            g, table = self._table
            u = np.abs(z0) ** 2
            theta = np.angle(z1) - np.angle(z0)
            return _interp_periodic(g.theta_angular, table, g.u_radial, u, theta)
        p = self.params
        c = p.get("c", 0.0)
        if self.name == "constant":
            return np.full(z0.shape, c)
        if self.name == "holder":
            a0, a1 = ProjectivePoint.parse(p["center"]).homogeneous()
            return c * chordal_sigma_h(z0, z1, a0, a1) ** p["nu"]
        if self.name == "zonal":
            return c * sphere_coords(z0, z1)[2]
        if self.name == "harmonics":
            x1, x2, x3 = sphere_coords(z0, z1)
            coeffs = self._harmonic_coeffs()
            out = np.zeros(z0.shape)
            for (a, b, e), w in coeffs.items():
                out += w * x1**a * x2**b * x3**e
            return c * out
        if self.name == "loglog":
            a0, a1 = ProjectivePoint.parse(p["center"]).homogeneous()
            s = chordal_sigma_h(z0, z1, a0, a1)
            with np.errstate(divide="ignore"):
                return np.where(s > 0, c / (1.0 - np.log(np.where(s > 0, s, 1.0))), 0.0)
        raise ValueError(f"cannot evaluate weight {self.kind}/{self.name}")

    def _harmonic_coeffs(self) -> dict:
        rng = np.random.default_rng(self.params["seed"])
        deg = self.params["degree"]
        out = {}
        for d in range(1, deg + 1):
            for a in range(d + 1):
                for b in range(d + 1 - a):
                    out[(a, b, d - a - b)] = rng.standard_normal() / (d * d)
        return out

    def at_points(self, points) -> np.ndarray:
        return self(*to_homogeneous(points))

    def on_grid(self, grid: SphereGrid) -> np.ndarray:
        return self(*grid.homogeneous)

    @property
    def is_radial(self) -> bool:
        if self.kind in ("zero", "radial"):
            return True
        if self.kind == "preset":
            if self.name in ("constant", "zonal"):
                return True
            if self.name in ("holder", "loglog"):
                ctr = ProjectivePoint.parse(self.params["center"])
                return ctr.is_infinity or ctr.affine == 0
        return False

    def radial_profile(self, t) -> np.ndarray:
        """Values along the positive real axis at log|z| = t (meaningful for radial weights)."""
        t = np.asarray(t, float)
        z0 = 1.0 / np.sqrt(1.0 + np.exp(2 * t))
        z1 = np.exp(t) * z0
        return self(z0.astype(complex), z1.astype(complex))

    def to_record(self) -> dict:
        if self.kind in ("zero", "preset"):
            return {"kind": self.kind, "name": self.name, "params": dict(self.params)}
        if self.kind == "radial":
            t, v = self._table
            return {"kind": "radial", "t": t.tolist(), "values": v.tolist()}
        raise ValueError("grid-tabulated weights are not serializable in scenario files")

    @classmethod
    def from_record(cls, rec: dict) -> "WeightSpec":
        kind = rec.get("kind", "zero")
        if kind == "zero":
            return cls.zero()
        if kind == "preset":
            return cls.preset(rec["name"], **rec.get("params", {}))
        if kind == "radial":
            return cls.radial(rec["t"], rec["values"])
        raise ValueError(f"unknown weight kind {kind!r}")


# ---------------------------------------------------------------- basis


def _log_sqrt_binom(m: int) -> np.ndarray:
    i = np.arange(m + 1)
    return 0.5 * (gammaln(m + 1) - gammaln(i + 1) - gammaln(m - i + 1))


def scaled_monomials(z0, z1, m: int) -> np.ndarray:
    """Matrix a[x, i] = sqrt(binom(m, i)) Z0^{m-i} Z1^i, rows summing to |Z|^{2m} = 1 in squared modulus."""
    z0 = np.asarray(z0, complex).ravel()
    z1 = np.asarray(z1, complex).ravel()
    i = np.arange(m + 1)
    with np.errstate(divide="ignore"):
        l0 = np.log(np.abs(z0))
        l1 = np.log(np.abs(z1))
    e0 = (m - i)[None, :]
    e1 = i[None, :]
    with np.errstate(invalid="ignore"):
        logmag = _log_sqrt_binom(m)[None, :] + np.where(e0 == 0, 0.0, e0 * l0[:, None]) + np.where(
            e1 == 0, 0.0, e1 * l1[:, None]
        )
    phase = e0 * np.angle(z0)[:, None] + e1 * np.angle(z1)[:, None]
    return np.exp(logmag + 1j * phase)


@dataclass(frozen=True, eq=False)
class SectionSpace:
    """H^0_0(CP^1, O(kp)) with an orthonormal basis for the weighted L^2 product.

    The ONB is ``E_j = K prod sigma^t e^{-p phi} sum_i (R^{-1})_{ij} a_i``
    with ``R`` upper triangular.  ``R`` is stored as ``r_scaled`` times
    ``exp(log_shift)`` so that its entries stay in floating-point range.
    """

    k: int
    p: int
    poles: PoleSet
    weight: WeightSpec
    grid: SphereGrid
    thresholds: tuple[int, ...]
    m: int
    r_scaled: np.ndarray
    log_shift: float
    gram_scaled: np.ndarray
    gram_error: float
    condition: float
    passes: int

    @property
    def dim(self) -> int:
        return self.m + 1

    def log_prefactor(self, z0, z1) -> np.ndarray:
        """log of prod sigma_j^{t_j} e^{-p phi}, i.e. the pole and weight part of every section."""
        z0 = np.asarray(z0, complex)
        z1 = np.asarray(z1, complex)
        return self.poles.weighted_log_sigma(z0, z1, self.thresholds) - self.p * self.weight(z0, z1)

    def free_values(self, z0, z1) -> np.ndarray:
        """F[x, j]: ONB values with the pole and weight prefactor removed."""
        a = scaled_monomials(z0, z1, self.m)
        f = sla.solve_triangular(self.r_scaled, a.T, trans="T", lower=False).T
        return f * math.exp(-self.log_shift)

    def section_values(self, z0, z1) -> np.ndarray:
        """E[x, j]: ONB sections as chart-normalized values (modulus = pointwise h^p norm)."""
        z0 = np.asarray(z0, complex).ravel()
        z1 = np.asarray(z1, complex).ravel()
        pre = np.exp(self.log_prefactor(z0, z1))
        return self.free_values(z0, z1) * pre[:, None]

    def log_free_kernel(self, z0, z1) -> np.ndarray:
        """log sum_j |F_j|^2, the kernel with the pole and weight prefactor divided out."""
        z0 = np.asarray(z0, complex).ravel()
        z1 = np.asarray(z1, complex).ravel()
        out = np.empty(z0.size)
        step = max(1, _CHUNK_ENTRIES // (self.dim + 1))
        for s in range(0, z0.size, step):
            sl = slice(s, s + step)
            f = self.free_values(z0[sl], z1[sl])
            with np.errstate(divide="ignore"):
                out[sl] = np.log(np.einsum("ij,ij->i", f.real, f.real) + np.einsum("ij,ij->i", f.imag, f.imag))
        return out

    def log_kernel(self, z0, z1) -> np.ndarray:
        """log P_p; -inf on the base locus."""
        z0 = np.asarray(z0, complex).ravel()
        z1 = np.asarray(z1, complex).ravel()
        return self.log_free_kernel(z0, z1) + 2.0 * self.log_prefactor(z0, z1)

    def kernel(self, z0, z1) -> np.ndarray:
        return np.exp(self.log_kernel(z0, z1))

    def fs_potential(self, z0, z1) -> np.ndarray:
        """phi_p = phi + (1/2p) log P_p (the weight cancels analytically)."""
        return self.weight(z0, z1) + self.log_kernel(z0, z1) / (2.0 * self.p)

    def free_factor_coeffs(self, coeffs) -> np.ndarray:
        """Ascending monomial coefficients of q for the section sum_j coeffs_j E_j (up to a constant)."""
        c = np.asarray(coeffs, complex).ravel()
        if c.size != self.dim:
            raise ValueError(f"expected {self.dim} coefficients, got {c.size}")
        b = sla.solve_triangular(self.r_scaled, c, lower=False)
        return b * np.exp(_log_sqrt_binom(self.m))

    def kostlan_coeffs(self, coeffs) -> np.ndarray:
        """Coefficients of the section in the a_i basis (b = R^{-1} c), up to a constant."""
        return sla.solve_triangular(self.r_scaled, np.asarray(coeffs, complex).ravel(), lower=False)

    def export_text(self) -> str:
        """ONB coefficients of q(z) = sum_i c_i z^i, one basis section per row as ``re im`` pairs.

        The j-th ONB section is K * B(z) * q_j(z) * exp(-log_shift) with
        K = prod_j (1+|a_j|^2)^{-t_j/2} and B = prod_{finite a_j} (z - a_j)^{t_j}.
        """
        lines = [
            f"# k {self.k}",
            f"# p {self.p}",
            "# poles " + " ".join(f"{pt.format()}:{tau!r}" for pt, tau in self.poles),
            "# thresholds " + " ".join(str(t) for t in self.thresholds),
            f"# grid {self.grid.grid_id}",
            f"# log_shift {self.log_shift!r}",
            f"# dim {self.dim} m {self.m}",
        ]
        eye = np.eye(self.dim, dtype=complex)
        for j in range(self.dim):
            q = self.free_factor_coeffs(eye[j])
            lines.append(" ".join(f"{c.real:.17g} {c.imag:.17g}" for c in q))
        return "\n".join(lines) + "\n"


def _row_logscale(k, p, poles, thresholds, weight, grid, sl):
    z0, z1 = grid.homogeneous
    z0, z1 = z0[sl], z1[sl]
    return 0.5 * np.log(grid.weights[sl]) + poles.weighted_log_sigma(z0, z1, thresholds) - p * weight(z0, z1)


def _chunks(grid: SphereGrid, m: int):
    return grid.ring_chunks(max(grid.n_angular, _CHUNK_ENTRIES // (m + 1)))


class _RowAssembler:
    """Weighted evaluation rows exp(logscale - shift) * a_i(x) for whole grid rings.

    On a ring Z0 = sqrt(u) and Z1 = sqrt(1-u) e^{i theta_j}, so a_i factors into
    a radial magnitude times e^{i i theta_j}; the phase table is shared by all rings.
    """

    def __init__(self, grid: SphereGrid, m: int, logscale: np.ndarray, shift: float):
        self.grid, self.m = grid, m
        self.scale = np.exp(logscale - shift)
        i = np.arange(m + 1)
        u = grid.u_radial
        with np.errstate(divide="ignore"):
            lm = _log_sqrt_binom(m)[None, :] + 0.5 * (
                (m - i)[None, :] * np.log(u)[:, None] + i[None, :] * np.log1p(-u)[:, None]
            )
        self.mag = np.exp(lm)
        self.phase = np.exp(1j * np.outer(grid.theta_angular, i))

    def __call__(self, sl: slice) -> np.ndarray:
        na = self.grid.n_angular
        r0, r1 = sl.start // na, sl.stop // na
        rows = self.mag[r0:r1, None, :] * self.phase[None, :, :]
        rows = rows.reshape(-1, self.m + 1)
        rows *= self.scale[sl, None]
        return rows


def _weighted_rows(grid, m, logscale_all, shift, sl):
    return _RowAssembler(grid, m, logscale_all, shift)(sl)


def _accumulate_gram(rows_of, chunks, dim, right=None):
    g = np.zeros((dim, dim), complex)
    for sl in chunks:
        rows = rows_of(sl)
        if right is not None:
            rows = sla.solve_triangular(right, rows.T, trans="T", lower=False).T
        g += rows.conj().T @ rows
    return 0.5 * (g + g.conj().T)


def build_orthonormal_basis(
    k: int,
    p: int,
    poles: PoleSet,
    weight: WeightSpec | None = None,
    grid: SphereGrid | None = None,
    enforce_floor: bool = True,
    verify: bool = False,
    max_defect: float = 1e-8,
) -> SectionSpace:
    """Orthonormalize the pole-constrained sections of O(kp) on a quadrature grid.

    The column-equilibrated weighted evaluation matrix A is factored by
    CholeskyQR when its Gram matrix is well conditioned, by chunked
    Householder QR otherwise; a second CholeskyQR pass on A R^{-1} then
    restores orthogonality.  The attainable accuracy is limited by the
    condition number of A; when it threatens ``max_defect`` an extra pass
    measures ||E^H W E - I||_2 on the build grid (always done with
    ``verify=True``) and IllConditioned is raised if it is exceeded.
    """
    weight = weight or WeightSpec.zero()
    if k < 1 or p < 1:
        raise ValueError("k and p must be positive integers")
    dim = dimension(k, p, poles)
    if dim == 0:
        raise DimensionZero(f"H^0_0 has dimension 0 for k={k}, p={p}, thresholds={poles.thresholds(p)}")
    grid = grid or default_grid(k, p)
    nr_min, na_min = resolution_floor(k, p)
    if enforce_floor and (grid.n_radial < nr_min or grid.n_angular < na_min):
        raise ValueError(
            f"grid {grid.grid_id} below the resolution floor {nr_min}x{na_min} for k={k}, p={p}"
        )
    thresholds = tuple(poles.thresholds(p))
    m = dim - 1

    logscale = _row_logscale(k, p, poles, thresholds, weight, grid, slice(None))
    finite = np.isfinite(logscale)
    if not finite.any():
        raise IllConditioned(f"every node of grid {grid.grid_id} lies on the base locus")
    shift = float(np.max(logscale[finite]))
    rows_of = _RowAssembler(grid, m, logscale, shift)
    chunks = list(_chunks(grid, m))

    gram = _accumulate_gram(rows_of, chunks, dim)
    d = np.sqrt(np.real(np.diag(gram)))
    if not np.all(d > 0) or not np.all(np.isfinite(d)):
        raise IllConditioned(f"{int(np.sum(~(d > 0)))} basis columns vanish on grid {grid.grid_id}")
    gs = gram / np.outer(d, d)
    ev = np.linalg.eigvalsh(gs)
    cond = math.inf if ev[0] <= 0 else float(ev[-1] / ev[0])

    r1 = None
    if cond < 1e12:
        try:
            r1 = np.linalg.cholesky(gs).conj().T * d[None, :]
            kappa = math.sqrt(cond)
        except np.linalg.LinAlgError:
            r1 = None
    if r1 is None:
        r1 = _householder_r(rows_of, chunks, m, d)
        kappa = float(np.linalg.cond(r1 / d[None, :]))
    # evaluating sum_i (R^{-1})_ij a_i cancels to about eps * kappa relative accuracy
    predicted = kappa * np.finfo(float).eps
    if predicted > 1e3 * max_defect:
        raise IllConditioned(
            f"basis condition {kappa:.3e} on grid {grid.grid_id} limits the Gram identity to ~{predicted:.1e} "
            f"(k={k}, p={p})"
        )
    verify = verify or predicted > 1e-2 * max_defect

    passes = 1
    # one CholeskyQR pass leaves an orthogonality defect of order eps * cond(Gs)
    if cond > 1e6:
        passes = 2
        g2 = _accumulate_gram(rows_of, chunks, dim, right=r1)
        try:
            r2 = np.linalg.cholesky(g2).conj().T
        except np.linalg.LinAlgError as exc:
            raise IllConditioned(
                f"weighted evaluation matrix is rank deficient at working precision (k={k}, p={p})"
            ) from exc
        r = r2 @ r1
    else:
        r = r1

    rel = np.abs(np.diag(r)) / d
    if not np.all(np.isfinite(rel)) or rel.min() < dim * np.finfo(float).eps * 10:
        raise IllConditioned(
            f"numerical rank < {dim} on grid {grid.grid_id}: min relative pivot {rel.min():.3e}"
        )
    gram_error = math.nan
    if verify:
        g3 = _accumulate_gram(rows_of, chunks, dim, right=r)
        gram_error = float(np.linalg.norm(g3 - np.eye(dim), 2))
        if gram_error > max_defect:
            raise IllConditioned(
                f"Gram identity defect {gram_error:.3e} exceeds {max_defect:.1e} (k={k}, p={p}, "
                f"basis condition {kappa:.3e})"
            )
    return SectionSpace(k, p, poles, weight, grid, thresholds, m, r, shift, gram, gram_error, kappa, passes)


def _householder_r(rows_of, chunks, m, d):
    """R factor of the weighted matrix by chunked (TSQR) Householder QR of its equilibrated columns."""
    r = None
    for sl in chunks:
        rows = rows_of(sl) / d[None, :]
        stack = rows if r is None else np.vstack([r, rows])
        r = np.linalg.qr(stack, mode="r")[: m + 1]
    s = np.diag(r)
    ph = np.where(np.abs(s) > 0, s / np.abs(s), 1.0)
    r = r / ph[:, None]
    return r * d[None, :]


# ---------------------------------------------------------------- kernel fields


@dataclass(frozen=True, eq=False)
class BergmanField:
    space: SectionSpace
    P: GridField
    log_P: GridField
    phi_p: GridField

    @property
    def grid(self) -> SphereGrid:
        return self.P.grid

    def trace(self) -> float:
        return self.P.integral()


def bergman_field(space: SectionSpace, weight: WeightSpec | None = None, grid: SphereGrid | None = None) -> BergmanField:
    """P_p, log P_p and phi_p sampled on ``grid`` (default: the build grid)."""
    if weight is not None and weight is not space.weight:
        log.debug("bergman_field: using the weight the space was built with")
    grid = grid or space.grid
    z0, z1 = grid.homogeneous
    logp = space.log_kernel(z0, z1)
    phi = space.weight(z0, z1)
    return BergmanField(
        space,
        GridField(grid, np.exp(logp), "P"),
        GridField(grid, logp, "log_P"),
        GridField(grid, phi + logp / (2.0 * space.p), "phi_p"),
    )


@dataclass
class VariationalReport:
    point: ProjectivePoint
    P: float
    max_ratio: float
    violations: int
    trials: int
    extremal_value: float
    extremal_norm2: float
    extremal_rel_error: float

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.extremal_rel_error <= 1e-8


def variational_check(
    space: SectionSpace,
    weight: WeightSpec | None = None,
    grid: SphereGrid | None = None,
    x: ProjectivePoint | None = None,
    trials: int = 100,
    seed: int = 0,
    slack: float = 1e-6,
) -> VariationalReport:
    """Check P_p(x) = max |S(x)|^2 over unit-norm S.

    Random sections are drawn in the a_i basis and normalized by grid
    quadrature (not through the ONB); the extremal section is the
    normalized reproducing kernel at x.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    x = x or ProjectivePoint.from_affine(0.3 + 0.2j)
    grid = grid or space.grid
    z0, z1 = to_homogeneous([x])
    m = space.m
    logpre = float(space.log_prefactor(z0, z1)[0])
    logP = float(space.log_kernel(z0, z1)[0])
    P = math.exp(logP) if np.isfinite(logP) else 0.0

    logscale = _row_logscale(space.k, space.p, space.poles, space.thresholds, space.weight, grid, slice(None))
    shift = float(np.max(logscale[np.isfinite(logscale)]))
    chunks = list(_chunks(grid, m))

    rows_of = _RowAssembler(grid, m, logscale, shift)

    def quadrature(coef_fn, ncols):
        # sum over nodes of |rows @ coef|^2, accumulated chunk by chunk
        acc = np.zeros(ncols)
        for sl in chunks:
            v = coef_fn(rows_of(sl))
            acc += np.sum(v.real**2 + v.imag**2, axis=0)
        return acc

    # equilibrate so that random draws excite every column comparably
    d = np.sqrt(quadrature(lambda rows: rows, m + 1))
    a = scaled_monomials(z0, z1, m)[0] / d

    rng = np.random.default_rng(seed)
    max_ratio = 0.0
    violations = 0
    done = 0
    while done < trials:
        n = min(2000, trials - done)
        b = rng.standard_normal((m + 1, n)) + 1j * rng.standard_normal((m + 1, n))
        norm2 = quadrature(lambda rows: (rows / d[None, :]) @ b, n)
        if np.isfinite(logpre):
            val = np.abs(a @ b) ** 2 * math.exp(2 * logpre - 2 * shift)
        else:
            val = np.zeros(n)
        ratio = val / norm2
        if P > 0:
            violations += int(np.sum(ratio > P * (1 + slack)))
            max_ratio = max(max_ratio, float(ratio.max() / P))
        else:
            violations += int(np.sum(ratio > 0))
            max_ratio = max(max_ratio, float(ratio.max()))
        done += n

    # extremal section: ONB coefficients conj(E_j(x)) / sqrt(P), norm by quadrature
    e = space.section_values(z0, z1)[0]
    if P > 0:
        c = (np.conj(e) / math.sqrt(P))[:, None]
        r = space.r_scaled
        scale = math.exp(shift - space.log_shift)
        norm2 = float(
            quadrature(lambda rows: sla.solve_triangular(r, rows.T, trans="T", lower=False).T @ c, 1)[0]
        ) * scale**2
        ext_value = float(np.abs(e @ c[:, 0]) ** 2) / norm2
        rel = abs(ext_value - P) / P
    else:
        ext_value = float(np.sum(np.abs(e) ** 2))
        norm2 = 1.0
        rel = 0.0 if ext_value == 0 else math.inf
    return VariationalReport(x, P, max_ratio, violations, trials, ext_value, norm2, rel)


# ---------------------------------------------------------------- modulus of continuity


def _random_sphere_points(rng, n):
    u = rng.uniform(0.0, 1.0, n)
    th = rng.uniform(0.0, 2 * np.pi, n)
    return np.sqrt(u).astype(complex), np.sqrt(1 - u) * np.exp(1j * th)


def random_pairs(rng, n, max_dist):
    """n pairs (x, y) with x uniform for omega_FS and chordal(x, y) uniform in (0, max_dist)."""
    x0, x1 = _random_sphere_points(rng, n)
    dist = rng.uniform(0.0, min(max_dist, 1.0), n)
    alpha = rng.uniform(0.0, 2 * np.pi, n)
    v0 = np.sqrt(1 - dist**2)
    v1 = dist * np.exp(1j * alpha)
    # SU(2) element mapping (1, 0) to (x0, x1) preserves chordal distance
    y0 = x0 * v0 - np.conj(x1) * v1
    y1 = x1 * v0 + np.conj(x0) * v1
    return (x0, x1), (y0, y1), dist


def modulus_of_continuity(weight: WeightSpec, delta, samples: int = 20000, seed: int = 0):
    """Monte Carlo estimate of sup{|phi(x) - phi(y)| : chordal(x, y) < delta}.

    ``delta`` may be a scalar or an array; array results are made
    nondecreasing in delta by a cumulative max.
    """
    scalar = np.isscalar(delta)
    deltas = np.atleast_1d(np.asarray(delta, float))
    if np.any(deltas <= 0):
        raise ValueError("delta must be positive")
    order = np.argsort(deltas)
    out = np.empty(deltas.size)
    running = 0.0
    for idx in order:
        rng = np.random.default_rng([seed, int(idx)])
        (x0, x1), (y0, y1), _ = random_pairs(rng, samples, deltas[idx])
        est = float(np.max(np.abs(weight(x0, x1) - weight(y0, y1)))) if samples else 0.0
        running = max(running, est)
        out[idx] = running
    return float(out[0]) if scalar else out
