"""Compiled Metropolis kernel.  All randomness arrives as pre-drawn uniforms."""

import math

import numba as nb
import numpy as np

SINGLE, DIPOLE, RESAMPLE = 0, 1, 2
UNIFORMS_PER_STEP = 5


@nb.njit(cache=True)
def full_energy(pos, neg, cross_weight):
    n = pos.shape[0]
    w = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            w -= math.log(math.hypot(pos[i, 0] - pos[j, 0], pos[i, 1] - pos[j, 1]))
            w -= math.log(math.hypot(neg[i, 0] - neg[j, 0], neg[i, 1] - neg[j, 1]))
    w *= 2.0
    for i in range(n):
        for j in range(n):
            w += cross_weight * math.log(math.hypot(pos[i, 0] - neg[j, 0], pos[i, 1] - neg[j, 1]))
    return w


@nb.njit(cache=True)
def _interaction(same, other, idx, px, py, cross_weight):
    """Terms involving one charge at (px, py); returns nan on a coincidence."""
    w = 0.0
    for j in range(same.shape[0]):
        if j == idx:
            continue
        d = math.hypot(same[j, 0] - px, same[j, 1] - py)
        if d == 0.0:
            return math.nan
        w -= 2.0 * math.log(d)
    for j in range(other.shape[0]):
        d = math.hypot(other[j, 0] - px, other[j, 1] - py)
        if d == 0.0:
            return math.nan
        w += cross_weight * math.log(d)
    return w


@nb.njit(cache=True)
def gale_shapley(xs, ys):
    """Greedy closest-pair matching; ties go to the lowest (i, j).

    Works in rounds: every pair that is mutually closest among the survivors
    (lowest index on ties) is one the greedy sweep over sorted distances would
    take, so all such pairs are matched at once and removed.
    """
    k = xs.shape[0]
    d = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            d[i, j] = math.hypot(xs[i, 0] - ys[j, 0], xs[i, 1] - ys[j, 1])
    sigma = np.full(k, -1, np.int64)
    used = np.zeros(k, np.bool_)
    row_best = np.empty(k, np.int64)
    left = k
    while left > 0:
        for i in range(k):
            row_best[i] = -1
            if sigma[i] >= 0:
                continue
            b = -1
            for j in range(k):
                if not used[j] and (b < 0 or d[i, j] < d[i, b]):
                    b = j
            row_best[i] = b
        for j in range(k):
            if used[j]:
                continue
            b = -1
            for i in range(k):
                if sigma[i] < 0 and (b < 0 or d[i, j] < d[b, j]):
                    b = i
            if row_best[b] == j:
                sigma[b] = j
                used[j] = True
                left -= 1
    return sigma


@nb.njit(cache=True)
def _in_box(x, y):
    return 0.0 <= x <= 1.0 and 0.0 <= y <= 1.0


@nb.njit(cache=True)
def accept_prob(beta, dw):
    """min(1, exp(-(beta/2) dW))."""
    if dw <= 0.0:
        return 1.0
    return math.exp(-0.5 * beta * dw)


@nb.njit(cache=True, nogil=True)
def run_steps(pos, neg, energy, u, beta, scale, cum_mix, cross_weight,
              accepted, proposed, sigma, sigma_ok):
    """Advance the chain by ``u.shape[0]`` steps in place; returns the new energy.

    ``sigma`` caches the Gale-Shapley matching of the current state and is valid
    when ``sigma_ok[0]`` is set.
    """
    n = pos.shape[0]
    for t in range(u.shape[0]):
        um, ui, ua, ub, uacc = u[t, 0], u[t, 1], u[t, 2], u[t, 3], u[t, 4]
        kind = SINGLE if um < cum_mix[0] else (DIPOLE if um < cum_mix[1] else RESAMPLE)
        proposed[kind] += 1
        if kind == SINGLE or kind == RESAMPLE:
            k = min(int(ui * 2 * n), 2 * n - 1)
            if k < n:
                same, other, idx = pos, neg, k
            else:
                same, other, idx = neg, pos, k - n
            if kind == SINGLE:
                nx = same[idx, 0] + scale * (2.0 * ua - 1.0)
                ny = same[idx, 1] + scale * (2.0 * ub - 1.0)
            else:
                nx = ua
                ny = ub
            if not _in_box(nx, ny):
                continue
            after = _interaction(same, other, idx, nx, ny, cross_weight)
            if math.isnan(after):
                continue
            dw = after - _interaction(same, other, idx, same[idx, 0], same[idx, 1], cross_weight)
            if uacc < accept_prob(beta, dw):
                same[idx, 0] = nx
                same[idx, 1] = ny
                energy += dw
                accepted[kind] += 1
                sigma_ok[0] = False
        else:
            if not sigma_ok[0]:
                sigma[:] = gale_shapley(pos, neg)
                sigma_ok[0] = True
            i = min(int(ui * n), n - 1)
            j = sigma[i]
            dx = scale * (2.0 * ua - 1.0)
            dy = scale * (2.0 * ub - 1.0)
            ox, oy = pos[i, 0], pos[i, 1]
            mx, my = neg[j, 0], neg[j, 1]
            if not (_in_box(ox + dx, oy + dy) and _in_box(mx + dx, my + dy)):
                continue
            a1 = _interaction(pos, neg, i, ox + dx, oy + dy, cross_weight)
            if math.isnan(a1):
                continue
            d1 = a1 - _interaction(pos, neg, i, ox, oy, cross_weight)
            pos[i, 0] = ox + dx
            pos[i, 1] = oy + dy
            a2 = _interaction(neg, pos, j, mx + dx, my + dy, cross_weight)
            ok = not math.isnan(a2)
            if ok:
                dw = d1 + a2 - _interaction(neg, pos, j, mx, my, cross_weight)
                ok = uacc < accept_prob(beta, dw)
            if ok:
                neg[j, 0] = mx + dx
                neg[j, 1] = my + dy
                # the reverse move must pick the same pair: it has to stay matched
                s2 = gale_shapley(pos, neg)
                ok = s2[i] == j
                if ok:
                    sigma[:] = s2
                else:
                    neg[j, 0] = mx
                    neg[j, 1] = my
            if ok:
                energy += dw
                accepted[kind] += 1
            else:
                pos[i, 0] = ox
                pos[i, 1] = oy
    return energy
