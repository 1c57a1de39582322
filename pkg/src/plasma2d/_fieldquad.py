"""Compiled cell rules for the truncated-field energy quadrature.

The integrand |E|^2 is smooth except across the circles |x - p| = r(p), where the
truncated field jumps.  A cell crossed by exactly one circle is integrated in
polar coordinates about that charge: the self term q^2/rho^2 is done in closed
form and the cross term is smooth in (theta, rho).  Cells crossed by two or more
circles fall back to tensor Gauss and are refined by the driver.
"""

import math

import numba as nb
import numpy as np

GAUSS_ORDER = 6


def gauss_nodes(order: int = GAUSS_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    return x / 2.0, w / 2.0


@nb.njit(cache=True)
def _field_rest(px, py, ch, q, r2, skip):
    ex = 0.0
    ey = 0.0
    for k in range(ch.shape[0]):
        if k == skip:
            continue
        dx = px - ch[k, 0]
        dy = py - ch[k, 1]
        s2 = dx * dx + dy * dy
        if s2 >= r2[k] and s2 > 0.0:
            ex -= q[k] * dx / s2
            ey -= q[k] * dy / s2
    return ex, ey


@nb.njit(cache=True)
def _gauss_cell(x0, x1, y0, y1, ch, q, r2, skip, gx, gw):
    h = x1 - x0
    cx = 0.5 * (x0 + x1)
    cy = 0.5 * (y0 + y1)
    acc = 0.0
    for a in range(gx.size):
        for b in range(gx.size):
            ex, ey = _field_rest(cx + h * gx[a], cy + h * gx[b], ch, q, r2, skip)
            acc += gw[a] * gw[b] * (ex * ex + ey * ey)
    return acc * h * h


@nb.njit(cache=True)
def _ray_box(px, py, c, s, x0, x1, y0, y1):
    tmin = -1e300
    tmax = 1e300
    if c != 0.0:
        t1 = (x0 - px) / c
        t2 = (x1 - px) / c
        tmin = max(tmin, min(t1, t2))
        tmax = min(tmax, max(t1, t2))
    elif px < x0 or px > x1:
        return 0.0, -1.0
    if s != 0.0:
        t1 = (y0 - py) / s
        t2 = (y1 - py) / s
        tmin = max(tmin, min(t1, t2))
        tmax = min(tmax, max(t1, t2))
    elif py < y0 or py > y1:
        return 0.0, -1.0
    return max(tmin, 0.0), tmax


@nb.njit(cache=True)
def _wrap(a, inside, ref):
    if inside:
        return a % (2.0 * math.pi)
    return ref + ((a - ref + math.pi) % (2.0 * math.pi)) - math.pi


@nb.njit(cache=True)
def _polar_piece(k, x0, x1, y0, y1, ch, q, r2, gx, gw):
    """Integral over cell minus D(p_k, r_k) of |E|^2 - |E without charge k|^2."""
    px = ch[k, 0]
    py = ch[k, 1]
    r = math.sqrt(r2[k])
    inside = x0 < px < x1 and y0 < py < y1
    ref = math.atan2(0.5 * (y0 + y1) - py, 0.5 * (x0 + x1) - px)
    brk = np.empty(12)
    nb_ = 0
    xs = (x0, x1, x1, x0)
    ys = (y0, y0, y1, y1)
    for i in range(4):
        brk[nb_] = _wrap(math.atan2(ys[i] - py, xs[i] - px), inside, ref)
        nb_ += 1
    # angles where the circle crosses an edge
    for i in range(4):
        ax = xs[i]
        ay = ys[i]
        dx = xs[(i + 1) % 4] - ax
        dy = ys[(i + 1) % 4] - ay
        fx = ax - px
        fy = ay - py
        A = dx * dx + dy * dy
        B = 2.0 * (fx * dx + fy * dy)
        C = fx * fx + fy * fy - r2[k]
        disc = B * B - 4.0 * A * C
        if disc < 0.0:
            continue
        sq = math.sqrt(disc)
        for t in ((-B - sq) / (2.0 * A), (-B + sq) / (2.0 * A)):
            if 0.0 <= t <= 1.0:
                brk[nb_] = _wrap(math.atan2(ay + t * dy - py, ax + t * dx - px), inside, ref)
                nb_ += 1
    b = np.sort(brk[:nb_])
    if inside:
        b2 = np.empty(nb_ + 1)
        b2[:nb_] = b
        b2[nb_] = b[0] + 2.0 * math.pi
        b = b2
    qk = q[k]
    acc = 0.0
    for j in range(b.size - 1):
        t0 = b[j]
        t1 = b[j + 1]
        if t1 - t0 <= 1e-15:
            continue
        for a in range(gx.size):
            th = 0.5 * (t0 + t1) + (t1 - t0) * gx[a]
            c = math.cos(th)
            s = math.sin(th)
            lo, hi = _ray_box(px, py, c, s, x0, x1, y0, y1)
            lo = max(lo, r)
            if hi <= lo:
                continue
            line = qk * qk * math.log(hi / lo)
            for bb in range(gx.size):
                rho = 0.5 * (lo + hi) + (hi - lo) * gx[bb]
                ex, ey = _field_rest(px + rho * c, py + rho * s, ch, q, r2, k)
                line += gw[bb] * (hi - lo) * (-2.0 * qk * (c * ex + s * ey))
            acc += gw[a] * (t1 - t0) * line
    return acc


@nb.njit(cache=True)
def cell_rule(cx, cy, h, ch, q, r2, gx, gw, nhit):
    """Integral of |E|^2 over each square cell; ``nhit`` receives circle-crossing counts."""
    n = cx.size
    out = np.empty(n)
    for c in range(n):
        x0 = cx[c] - 0.5 * h[c]
        x1 = cx[c] + 0.5 * h[c]
        y0 = cy[c] - 0.5 * h[c]
        y1 = cy[c] + 0.5 * h[c]
        nh = 0
        first = -1
        for k in range(ch.shape[0]):
            px = ch[k, 0]
            py = ch[k, 1]
            dx = max(x0 - px, 0.0, px - x1)
            dy = max(y0 - py, 0.0, py - y1)
            fx = max(abs(x0 - px), abs(x1 - px))
            fy = max(abs(y0 - py), abs(y1 - py))
            if dx * dx + dy * dy <= r2[k] and r2[k] <= fx * fx + fy * fy:
                if nh == 0:
                    first = k
                nh += 1
        nhit[c] = nh
        if nh == 1:
            out[c] = (_gauss_cell(x0, x1, y0, y1, ch, q, r2, first, gx, gw)
                      + _polar_piece(first, x0, x1, y0, y1, ch, q, r2, gx, gw))
        else:
            out[c] = _gauss_cell(x0, x1, y0, y1, ch, q, r2, -1, gx, gw)
    return out
