"""Reference computations that share no code with the package under test."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

PRIME = 1_000_000_009  # = 1 mod 4, so sqrt(-1) exists in GF(PRIME)


def _sqrt_minus_one(q=PRIME):
    for g in range(2, 100):
        r = pow(g, (q - 1) // 4, q)
        if r * r % q == q - 1:
            return r
    raise RuntimeError("no square root of -1 found")


I_MOD = _sqrt_minus_one()


def exact_threshold(tau: str, p: int) -> int:
    return math.ceil(Fraction(tau) * p)


def _to_mod(fr: Fraction, q=PRIME) -> int:
    return fr.numerator % q * pow(fr.denominator % q, q - 2, q) % q


def rank_mod(rows: np.ndarray, q=PRIME) -> int:
    """Rank over GF(q) by row reduction on int64 (entries < 2^30, products < 2^62)."""
    a = np.array(rows, dtype=np.int64) % q
    n_rows, n_cols = a.shape
    rank = 0
    for col in range(n_cols):
        if rank == n_rows:
            break
        piv = np.flatnonzero(a[rank:, col])
        if piv.size == 0:
            continue
        r = rank + piv[0]
        a[[rank, r]] = a[[r, rank]]
        inv = pow(int(a[rank, col]), q - 2, q)
        a[rank] = a[rank] * inv % q
        others = np.flatnonzero(a[:, col])
        others = others[others != rank]
        if others.size:
            f = a[others, col][:, None]
            a[others] = (a[others] - f * a[rank][None, :]) % q
        rank += 1
    return rank


def brute_force_dimension(k: int, p: int, poles) -> int:
    """poles: list of (point, tau_str) with point = (Fraction re, Fraction im) or None for infinity.

    Sections of O(kp) are polynomials sum_i c_i z^i of degree <= kp; vanishing
    to order t at a finite a means f^(j)(a) = 0 for j < t, and at infinity it
    means c_i = 0 for i > kp - t.  The dimension is kp + 1 minus the rank of
    these linear conditions, computed exactly over a prime field.
    """
    n = k * p + 1
    rows = []
    for point, tau in poles:
        t = exact_threshold(tau, p)
        if point is None:
            for i in range(max(0, n - t), n):
                row = np.zeros(n, np.int64)
                row[i] = 1
                rows.append(row)
            continue
        a = (_to_mod(point[0]) + I_MOD * _to_mod(point[1])) % PRIME
        for j in range(min(t, n)):
            row = np.zeros(n, np.int64)
            for i in range(j, n):
                # d^j/dz^j z^i at a = i!/(i-j)! a^(i-j)
                coef = math.perm(i, j) % PRIME
                row[i] = coef * pow(a, i - j, PRIME) % PRIME
            rows.append(row)
        if t > n:
            rows.extend(np.eye(n, dtype=np.int64))
    if not rows:
        return n
    return n - rank_mod(np.array(rows))


# ---------------------------------------------------------------- Bergman kernel by direct Gram assembly


def direct_bergman(k, p, poles, x_points, weight=None, n_u=200, n_theta=None):
    """P_p at x_points from the Gram matrix of z^i * prod (z - a)^t in the weighted FS norm.

    poles: list of (complex or None, t).  Quadrature: Gauss-Legendre in
    x3 = 2u - 1 times the trapezoid rule in arg z, with its own node counts.
    ``weight`` is a callable phi(z) on the affine chart.
    """
    n_theta = n_theta or 2 * k * p + 24
    m = k * p - sum(t for a, t in poles)
    deg_cap = k * p - sum(t for a, t in poles if a is None)
    finite = [(a, t) for a, t in poles if a is not None]
    x, w = np.polynomial.legendre.leggauss(n_u)
    u = (x + 1) / 2
    wu = w / 2
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    r = np.sqrt((1 - u) / u)
    z = (r[:, None] * np.exp(1j * th[None, :])).ravel()
    wq = (wu[:, None] * np.full(n_theta, 1.0 / n_theta)[None, :]).ravel()

    def basis(zz):
        b = np.ones_like(zz)
        for a, t in finite:
            b = b * (zz - a) ** t
        cols = np.stack([zz**i for i in range(m + 1)], axis=1) * b[:, None]
        fs = (1 + np.abs(zz) ** 2) ** (-k * p / 2)
        phi = weight(zz) if weight is not None else 0.0
        return cols * (fs * np.exp(-p * phi))[:, None]

    assert m <= deg_cap
    v = basis(z)
    gram = (v.conj().T * wq) @ v
    vx = basis(np.asarray(x_points, complex))
    # with G_il = <v_i, v_l> linear in the second slot, P = v G^{-1} v^H
    sol = np.linalg.solve(gram, vx.conj().T)
    return np.real(np.einsum("ij,ji->i", vx, sol))


def symmetric_kernel_with_pole_at_zero(p, t, u):
    """P_p for k = 1, phi = 0 and one pole of order t at z = 0, in u = 1/(1+|z|^2)."""
    j = np.arange(t, p + 1)
    logc = np.array([math.lgamma(p + 1) - math.lgamma(i + 1) - math.lgamma(p - i + 1) for i in j])
    u = np.asarray(u, float)[:, None]
    terms = np.exp(logc[None, :] + j[None, :] * np.log1p(-u) + (p - j)[None, :] * np.log(u))
    return (p + 1) * terms.sum(axis=1)


# ---------------------------------------------------------------- rotation-invariant envelopes in closed form


def _psi0(t):
    return 0.5 * np.logaddexp(0.0, 2 * np.asarray(t, float))


def analytic_phi_eq(k, tau0, tau_inf, t):
    """phi_eq for phi = 0 with poles of order tau0 at 0 and tau_inf at infinity, as a function of t = log|z|.

    g = phi_eq + k psi0 is k psi0 between the tangency points of slopes tau0
    and k - tau_inf and linear outside; tangency of slope s happens where
    k e^{2t}/(1+e^{2t}) = s.
    """
    t = np.asarray(t, float)
    g = k * _psi0(t)
    if tau0 > 0:
        ta = 0.5 * math.log(tau0 / (k - tau0))
        g = np.where(t < ta, k * _psi0(ta) + tau0 * (t - ta), g)
    if tau_inf > 0:
        s = k - tau_inf
        tb = 0.5 * math.log(s / (k - s))
        g = np.where(t > tb, k * _psi0(tb) + s * (t - tb), g)
    return g - k * _psi0(t)


def analytic_free_boundary(k, tau0, tau_inf):
    out = []
    if tau0 > 0:
        out.append(math.sqrt(tau0 / (k - tau0)))
    if tau_inf > 0:
        s = k - tau_inf
        out.append(math.sqrt(s / (k - s)))
    return sorted(out)


def analytic_u_cdf(k, tau0, tau_inf, u):
    """CDF in u = 1/(1+|z|^2) of the normalized continuous part of T_eq (phi = 0).

    On the contact region T_eq = k omega_FS and omega_FS has uniform density in u.
    """
    u = np.asarray(u, float)
    u_in = 1 - tau0 / k  # inner free boundary
    u_out = tau_inf / k  # outer free boundary
    mass = k - tau0 - tau_inf
    return np.clip(k * (np.clip(u, u_out, u_in) - u_out) / mass, 0.0, 1.0)
