"""Deterministic reference integrals used to check the Monte Carlo code paths.

Everything here reduces to one- or two-dimensional smooth quadratures through
the overlap-area identity: for x, y uniform on the unit box, z = x - y has
density A(z) = (1 - |z_1|)_+ (1 - |z_2|)_+.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special


def _theta_rule(order: int = 64):
    # the radial reach 1/max(cos, sin) has a kink at pi/4, so split there
    x, w = np.polynomial.legendre.leggauss(order)
    th = np.concatenate([(x + 1) * math.pi / 8, math.pi / 4 + (x + 1) * math.pi / 8])
    return th, np.concatenate([w, w]) * math.pi / 8


def box_pair_integral(a: float, order: int = 64) -> float:
    """Integral over the unit box squared of |x - y|^{-a}, for a < 2.

    In polar coordinates about z = x - y the radial integral of
    rho^{1-a} (1 - rho c)(1 - rho s) is closed form; the angular one is Gauss.
    """
    if a >= 2:
        return math.inf
    th, w = _theta_rule(order)
    c, s = np.cos(th), np.sin(th)
    M = 1.0 / np.maximum(c, s)
    inner = (M ** (2 - a) / (2 - a) - (c + s) * M ** (3 - a) / (3 - a)
             + c * s * M ** (4 - a) / (4 - a))
    return float(4.0 * (w * inner).sum())


def separation_pdf(s) -> np.ndarray:
    """Density of |x - y| for x, y independent uniform on the unit box."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    lo = (s >= 0) & (s <= 1)
    sl = s[lo]
    out[lo] = 2 * sl * (math.pi - 4 * sl + sl ** 2)
    hi = (s > 1) & (s <= math.sqrt(2))
    sh = s[hi]
    out[hi] = 2 * sh * (4 * np.sqrt(sh ** 2 - 1) - (sh ** 2 + 2 - math.pi)
                        - 4 * np.arccos(1 / sh))
    return out


def separation_bin_probs(edges, a: float) -> np.ndarray:
    """Bin probabilities of |x - y| under the law proportional to |x - y|^{-a} on the box squared."""
    edges = np.asarray(edges, dtype=float)
    f = lambda s: s ** (-a) * separation_pdf(np.array([s]))[0]
    brk = [1.0]
    mass = np.array([integrate.quad(f, lo, hi, points=[p for p in brk if lo < p < hi] or None,
                                    epsabs=1e-13, epsrel=1e-11, limit=200)[0]
                     for lo, hi in zip(edges[:-1], edges[1:])])
    return mass / box_pair_integral(a)


def dipole_n1_integral(beta: float) -> float:
    """Integral over the box squared of min(1, |x - y|/2)^{-beta}; the cap never binds in the box."""
    return 2.0 ** beta * box_pair_integral(beta)


def gauss_jacobi_radial(power: float, order: int):
    """Nodes/weights on [0, 1] for the weight rho^power (power > -1)."""
    x, w = special.roots_jacobi(order, 0.0, power)
    # (1 + x)^power on [-1, 1] mapped to rho = (1 + x)/2
    return (x + 1) / 2, w / 2 ** (power + 1)


def _graded_panels(n_panels: int, order: int, grade: float = 3.0):
    """Gauss rule on [-1/2, 1/2] with panels refined toward both ends."""
    u = np.linspace(0.0, 1.0, n_panels // 2 + 1) ** grade * 0.5
    edges = np.unique(np.concatenate([-0.5 + u, 0.5 - u]))
    gx, gw = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    return ((a + b) / 2 + (b - a) / 2 * gx).ravel(), ((b - a) / 2 * gw).ravel()


def coulomb_k1_integral(beta: float, r: float = math.inf, n_panels: int = 12,
                        order: int = 8, n_theta: int = 24, n_rho: int = 16) -> float:
    """Integral over D x D of |x - y|^{-beta^2} F_r(x, y), D = [-1/2, 1/2]^2.

    F_r(x, y) = ((1 - |x|^2/r^2)(1 - |y|^2/r^2))^{-beta^2/2} |1 - x conj(y)/r^2|^{beta^2},
    written in real arithmetic.  The inner integral is in polar coordinates about x
    with Gauss-Jacobi in rho (weight rho^{1 - beta^2}) and the angle split at the
    directions of the four corners; the outer one is graded composite Gauss.
With the default orders the relative error is about 1e-5.
    """
    a = beta ** 2
    if a >= 2:
        return math.inf
    px, pw = _graded_panels(n_panels, order)
    X, Y = np.meshgrid(px, px, indexing="ij")
    WX = np.outer(pw, pw).ravel()
    x = np.stack([X.ravel(), Y.ravel()], axis=1)
    t, tw = gauss_jacobi_radial(1.0 - a, n_rho)
    gx, gw = np.polynomial.legendre.leggauss(n_theta)
    corners = np.array([[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]])
    ang = np.sort(np.arctan2(corners[None, :, 1] - x[:, None, 1],
                             corners[None, :, 0] - x[:, None, 0]), axis=1)
    ang = np.concatenate([ang, ang[:, :1] + 2 * math.pi], axis=1)
    inv_r2 = 0.0 if math.isinf(r) else 1.0 / r ** 2
    total = np.zeros(len(x))
    for s in range(4):
        lo, hi = ang[:, s:s + 1], ang[:, s + 1:s + 2]
        th = (lo + hi) / 2 + (hi - lo) / 2 * gx[None, :]
        c, sn = np.cos(th), np.sin(th)
        with np.errstate(divide="ignore"):
            tx = np.where(c > 0, (0.5 - x[:, :1]) / c, np.where(c < 0, (-0.5 - x[:, :1]) / c, np.inf))
            ty = np.where(sn > 0, (0.5 - x[:, 1:]) / sn, np.where(sn < 0, (-0.5 - x[:, 1:]) / sn, np.inf))
        R = np.minimum(tx, ty)
        rho = R[..., None] * t[None, None, :]
        yx = x[:, 0, None, None] + rho * c[..., None]
        yy = x[:, 1, None, None] + rho * sn[..., None]
        x2 = (x[:, 0] ** 2 + x[:, 1] ** 2)[:, None, None]
        y2 = yx ** 2 + yy ** 2
        dot = x[:, 0, None, None] * yx + x[:, 1, None, None] * yy
        F = ((1 - x2 * inv_r2) * (1 - y2 * inv_r2)) ** (-a / 2) \
            * (1 - 2 * dot * inv_r2 + x2 * y2 * inv_r2 ** 2) ** (a / 2)
        radial = R ** (2 - a) * (F * tw).sum(axis=-1)
        total += ((hi - lo)[:, 0] / 2) * (radial * gw[None, :]).sum(axis=1)
    return float((WX * total).sum())
