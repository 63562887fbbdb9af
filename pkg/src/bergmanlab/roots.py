"""Simultaneous polynomial root finding (Ehrlich-Aberth) for high-degree free factors."""

from __future__ import annotations

import logging
import math

import numpy as np

from bergmanlab.errors import RootFindingFailed

log = logging.getLogger(__name__)

__all__ = ["aberth_roots", "polish_residuals", "newton_polygon_radii"]

_EPS = np.finfo(float).eps
_MP_MAX_DEGREE = 80


def newton_polygon_radii(coeffs) -> np.ndarray:
    """Initial radii from the upper hull of (i, log|a_i|), one per root (Bini's rule)."""
    a = np.abs(np.asarray(coeffs, complex))
    n = a.size - 1
    idx = np.flatnonzero(a > 0)
    la = np.log(a[idx])
    hull = []
    for i, y in zip(idx, la):
        while len(hull) >= 2:
            (i1, y1), (i2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (i - i1) <= (y - y1) * (i2 - i1):
                hull.pop()
            else:
                break
        hull.append((i, y))
    radii = np.empty(n)
    for (i1, y1), (i2, y2) in zip(hull[:-1], hull[1:]):
        radii[i1:i2] = math.exp((y1 - y2) / (i2 - i1))
    return radii


def _horner(coeffs_desc, z):
    """Value, derivative and the running bound sum |a_i| |z|^i for many points at once."""
    p = np.full(z.shape, coeffs_desc[0], complex)
    dp = np.zeros(z.shape, complex)
    az = np.abs(z)
    bound = np.full(z.shape, abs(coeffs_desc[0]))
    for c in coeffs_desc[1:]:
        dp = dp * z + p
        p = p * z + c
        bound = bound * az + abs(c)
    return p, dp, bound


def _newton_ratios(asc, z):
    """p/p' and a stopping test; inside the unit disk in z, outside via w = 1/z."""
    n = asc.size - 1
    ratio = np.empty(z.shape, complex)
    small = np.zeros(z.shape, bool)
    inner = np.abs(z) <= 1.0
    if inner.any():
        p, dp, b = _horner(asc[::-1], z[inner])
        ratio[inner] = p / dp
        small[inner] = np.abs(p) <= 4 * n * _EPS * b
    outer = ~inner
    if outer.any():
        w = 1.0 / z[outer]
        g, dg, b = _horner(asc, w)
        ratio[outer] = 1.0 / (w * (n - w * dg / g))
        small[outer] = np.abs(g) <= 4 * n * _EPS * b
    return ratio, small


def polish_residuals(coeffs, roots) -> np.ndarray:
    """|q(r)| / sum |a_i| |r|^i at each root, evaluated stably in either chart."""
    asc = np.asarray(coeffs, complex)
    r = np.asarray(roots, complex)
    out = np.empty(r.shape)
    inner = np.abs(r) <= 1
    if inner.any():
        p, _, b = _horner(asc[::-1], r[inner])
        out[inner] = np.abs(p) / b
    if (~inner).any():
        g, _, b = _horner(asc, 1.0 / r[~inner])
        out[~inner] = np.abs(g) / b
    return out


def aberth_roots(coeffs, max_iter: int = 500, tol: float = 1e-8, seed: int = 0, fallback: bool = True) -> np.ndarray:
    """All roots of sum_i coeffs[i] z^i (ascending), which must have nonzero ends.

    Every returned root r satisfies |q(r)| <= tol * sum_i |a_i| |r|^i.
    Failed runs restart from fresh angles; low degrees then fall back to
    mpmath's polyroots before RootFindingFailed is raised.
    """
    asc = np.asarray(coeffs, complex).ravel()
    if asc.size < 2:
        return np.zeros(0, complex)
    if asc[0] == 0 or asc[-1] == 0:
        raise ValueError("leading and constant coefficients must be nonzero")
    asc = asc / np.max(np.abs(asc))
    n = asc.size - 1
    if n == 1:
        return np.array([-asc[0] / asc[1]])

    radii = newton_polygon_radii(asc)
    res = None
    for attempt in range(3):
        z = _aberth(asc, radii, max_iter, np.random.default_rng([seed, attempt]))
        res = polish_residuals(asc, z)
        if np.all(np.isfinite(z)) and np.all(res <= tol):
            return z
    if fallback and n <= _MP_MAX_DEGREE:
        log.info("Aberth left %d roots above tolerance; retrying with mpmath", int(np.sum(~(res <= tol))))
        z2 = _mp_roots(asc)
        if z2 is not None:
            res2 = polish_residuals(asc, z2)
            if np.all(res2 <= tol):
                return z2
            res = res2
    bad = ~(res <= tol)
    raise RootFindingFailed(
        f"{int(np.sum(bad))} of {n} roots above residual tolerance {tol:g} (worst {np.nanmax(np.where(np.isfinite(res), res, np.inf)):.3e})",
        residuals=np.sort(np.nan_to_num(res, nan=np.inf))[::-1],
    )


def _aberth(asc, radii, max_iter, rng):
    n = asc.size - 1
    ang = 2 * np.pi * np.arange(n) / n + rng.uniform(0, 2 * np.pi)
    z = radii * np.exp(1j * ang)
    active = np.ones(n, bool)
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            ratio, small = _newton_ratios(asc, z[idx])
            diff = z[idx, None] - z[None, :]
            diff[np.arange(idx.size), idx] = 1.0
            s = np.sum(1.0 / diff, axis=1) - 1.0
            corr = ratio / (1.0 - ratio * s)
            corr[small] = 0.0
            znew = z[idx] - corr
            bad = ~np.isfinite(znew)
            if bad.any():
                # restart runaway estimates on their initial circle
                znew[bad] = radii[idx[bad]] * np.exp(2j * np.pi * rng.uniform(size=int(bad.sum())))
                corr[bad] = np.inf
            z[idx] = znew
            done = small | (np.abs(corr) <= 4 * _EPS * np.abs(znew))
            active[idx[done]] = False
    return z


def _mp_roots(asc):
    import mpmath

    try:
        with mpmath.workdps(60):
            r = mpmath.polyroots([mpmath.mpc(c.real, c.imag) for c in asc[::-1]], maxsteps=400, extraprec=200)
    except mpmath.libmp.NoConvergence:
        return None
    return np.array([complex(x) for x in r])
