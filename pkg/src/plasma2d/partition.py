"""Monte Carlo estimates of the partition function and of the dipole-only integral.

Importance sampling for Z.  Negative charges are uniform; a uniformly random
permutation pairs each positive charge with a negative one, and the positive
charge is placed at planar density k(z) proportional to |z|^{-a} inside the disk
of radius sqrt(2) about its partner, a = cross_weight * beta / 2.  The proposal
density is the mixture over all pairings, perm(K)/N! with K_ij = k(x_i - y_j),
so every close +/- encounter carries the singular factor the Boltzmann weight
has.  Points falling outside the box get weight zero.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numba as nb
import numpy as np

from plasma2d.energy import pairwise_energy_batch

BATCH = 1 << 15
REACH = math.sqrt(2.0)
MAX_PAIRS = 8


@dataclass(frozen=True)
class ZEstimate:
    N: int
    beta: float
    log_Z: float
    std_err: float
    n_samples: int
    method: str
    seed: int
    cross_weight: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)


def _check_beta(beta: float) -> None:
    if not (0.0 <= beta < 2.0):
        raise ValueError(f"beta={beta} out of range: need 0 <= β < 2")


@nb.njit(cache=True)
def _permanents(K):
    """Row-by-row subset DP for the permanent of each (n, n) matrix in a stack."""
    B, n = K.shape[0], K.shape[1]
    out = np.empty(B)
    f = np.empty(1 << n)
    for b in range(B):
        f[:] = 0.0
        f[0] = 1.0
        for mask in range(1 << n):
            v = f[mask]
            if v == 0.0:
                continue
            row = 0
            m = mask
            while m:
                row += m & 1
                m >>= 1
            for j in range(n):
                if not mask & (1 << j):
                    f[mask | (1 << j)] += v * K[b, row, j]
        out[b] = f[(1 << n) - 1]
    return out


@nb.njit(cache=True)
def _hafnians(K):
    """Hafnian of each symmetric (m, m) matrix: always pair the lowest free index."""
    B, m = K.shape[0], K.shape[1]
    full = (1 << m) - 1
    out = np.empty(B)
    f = np.empty(1 << m)
    for b in range(B):
        # f[mask] = summed weight of partial matchings covering exactly ``mask``
        f[:] = 0.0
        f[0] = 1.0
        for mask in range(full):
            v = f[mask]
            if v == 0.0:
                continue
            low = 0
            while mask & (1 << low):
                low += 1
            for j in range(low + 1, m):
                if not mask & (1 << j):
                    f[mask | (1 << low) | (1 << j)] += v * K[b, low, j]
        out[b] = f[full]
    return out


def _disk_kernel(d: np.ndarray, a: float) -> np.ndarray:
    """Planar density proportional to |z|^{-a} on the disk of radius sqrt 2."""
    norm = (2.0 - a) / (2.0 * math.pi * REACH ** (2.0 - a))
    with np.errstate(divide="ignore"):
        return np.where(d < REACH, norm * d ** (-a), 0.0)


def _disk_draw(rng, size, a: float) -> np.ndarray:
    s = REACH * rng.random(size) ** (1.0 / (2.0 - a))
    phi = 2.0 * math.pi * rng.random(size)
    return np.stack([s * np.cos(phi), s * np.sin(phi)], axis=-1)


def _in_box(p: np.ndarray) -> np.ndarray:
    return np.all((p >= 0.0) & (p <= 1.0), axis=(-1, -2))


def _direct_batch(N, beta, size, rng, cross_weight):
    x = rng.random((size, N, 2))
    y = rng.random((size, N, 2))
    return -0.5 * beta * pairwise_energy_batch(x, y, cross_weight)


def _importance_batch(N, beta, size, rng, cross_weight):
    a = cross_weight * beta / 2.0
    y = rng.random((size, N, 2))
    perm = np.argsort(rng.random((size, N)), axis=1)
    x = np.take_along_axis(y, perm[..., None], axis=1) + _disk_draw(rng, (size, N), a)
    ok = _in_box(x)
    lw = np.full(size, -np.inf)
    if ok.any():
        xo, yo = x[ok], y[ok]
        d = np.linalg.norm(xo[:, :, None, :] - yo[:, None, :, :], axis=-1)
        log_q = np.log(_permanents(_disk_kernel(d, a))) - math.lgamma(N + 1)
        lw[ok] = -0.5 * beta * pairwise_energy_batch(xo, yo, cross_weight) - log_q
    return lw


def _dipole_batch(N, beta, size, rng):
    m = 2 * N
    a = beta
    # uniform random perfect matching: a random permutation read off in consecutive pairs
    perm = np.argsort(rng.random((size, m)), axis=1)
    first = rng.random((size, N, 2))
    second = first + _disk_draw(rng, (size, N), a)
    pts = np.empty((size, m, 2))
    np.put_along_axis(pts, perm[:, 0::2, None], first, axis=1)
    np.put_along_axis(pts, perm[:, 1::2, None], second, axis=1)
    ok = _in_box(pts)
    lw = np.full(size, -np.inf)
    if ok.any():
        p = pts[ok]
        d = np.linalg.norm(p[:, :, None, :] - p[:, None, :, :], axis=-1)
        K = _disk_kernel(d, a)
        idx = np.arange(m)
        K[:, idx, idx] = 0.0
        d[:, idx, idx] = np.inf
        r = np.minimum(1.0, 0.5 * d.min(axis=2))
        n_match = math.lgamma(m + 1) - math.lgamma(N + 1) - N * math.log(2.0)
        log_q = np.log(_hafnians(K)) - n_match
        lw[ok] = -0.5 * beta * np.log(r).sum(axis=1) - log_q
    return lw


def _log_mean_exp(chunks: list[np.ndarray]) -> tuple[float, float]:
    """log of the mean weight and its delta-method standard error."""
    lw = np.concatenate(chunks)
    n = lw.size
    m = lw.max()
    if not np.isfinite(m):
        raise FloatingPointError("all importance weights vanished")
    w = np.exp(lw - m)
    mean = w.mean()
    var = max((w * w).mean() - mean * mean, 0.0)
    return float(m + math.log(mean)), float(math.sqrt(var / n) / mean)


def _run_batches(fn, n_samples, seed, workers):
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    n_batches = -(-n_samples // BATCH)
    seqs = np.random.SeedSequence(seed).spawn(n_batches)
    sizes = [min(BATCH, n_samples - i * BATCH) for i in range(n_batches)]
    jobs = lambda k: fn(sizes[k], np.random.default_rng(seqs[k]))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            chunks = list(ex.map(jobs, range(n_batches)))
    else:
        chunks = [jobs(k) for k in range(n_batches)]
    return chunks


def log_weights(N: int, beta: float, n_samples: int, method: str = "importance",
                seed: int = 0, cross_weight: float = 1.0, workers: int = 1) -> np.ndarray:
    """The raw log-weights behind :func:`estimate_log_Z`, in batch order."""
    if method == "direct":
        fn = lambda size, rng: _direct_batch(N, beta, size, rng, cross_weight)
    elif method == "importance":
        if N > MAX_PAIRS:
            raise ValueError(f"importance proposal supports N <= {MAX_PAIRS}")
        fn = lambda size, rng: _importance_batch(N, beta, size, rng, cross_weight)
    else:
        raise ValueError(f"unknown method {method!r}")
    return np.concatenate(_run_batches(fn, n_samples, seed, workers))


def estimate_log_Z(N: int, beta: float, n_samples: int, method: str = "importance",
                   seed: int = 0, cross_weight: float = 1.0, workers: int = 1) -> ZEstimate:
    """log Z_{N,beta} = log of the integral over the box^{2N} of exp(-(beta/2) W)."""
    _check_beta(beta)
    if N < 1:
        raise ValueError("N must be positive")
    if method == "direct" and cross_weight * beta >= 1.0:
        raise ValueError("infinite-variance regime, use importance")
    if beta == 0.0:
        return ZEstimate(N, beta, 0.0, 0.0, n_samples, method, seed, cross_weight)
    lw = log_weights(N, beta, n_samples, method, seed, cross_weight, workers)
    log_z, se = _log_mean_exp([lw])
    return ZEstimate(N, beta, log_z, se, n_samples, method, seed, cross_weight)


def reweight_log_Z(energies: np.ndarray, beta: float) -> float:
    """log of mean exp(-(beta/2) W) over a fixed uniform sample of energies."""
    return _log_mean_exp([-0.5 * beta * np.asarray(energies, dtype=float)])[0]


def direct_energies(N: int, n_samples: int, seed: int = 0, cross_weight: float = 1.0) -> np.ndarray:
    """Energies of the uniform sample the direct estimator uses for this seed, any beta."""
    fn = lambda size, rng: -2.0 * _direct_batch(N, 1.0, size, rng, cross_weight)
    return np.concatenate(_run_batches(fn, n_samples, seed, 1))


def log_K(N: int, beta: float, log_Z: float) -> float:
    """Blow-up decomposition log K = log Z - (beta/2) N log N."""
    return log_Z - 0.5 * beta * N * math.log(N)


def estimate_dipole_integral(N: int, beta: float, n_samples: int, seed: int = 0,
                             workers: int = 1) -> ZEstimate:
    """log of the integral over the box^{2N} of prod_p r(p)^{-beta/2}.

    Proposal: a uniform random perfect matching of the 2N charges, the first of
    each pair uniform and the second at planar density proportional to |z|^{-beta}
    around it; the density is the hafnian mixture over all matchings.
    """
    _check_beta(beta)
    if not 1 <= N <= MAX_PAIRS - 2:
        raise ValueError(f"dipole integral supports 1 <= N <= {MAX_PAIRS - 2}")
    if beta == 0.0:
        return ZEstimate(N, beta, 0.0, 0.0, n_samples, "importance", seed)
    fn = lambda size, rng: _dipole_batch(N, beta, size, rng)
    log_z, se = _log_mean_exp(_run_batches(fn, n_samples, seed, workers))
    return ZEstimate(N, beta, log_z, se, n_samples, "importance", seed)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float


def scaling_fit(Ns, log_Ks) -> ScalingFit:
    """Least-squares line log K = slope * N + intercept with the centred R^2."""
    Ns = np.asarray(Ns, dtype=float)
    y = np.asarray(log_Ks, dtype=float)
    A = np.stack([Ns, np.ones_like(Ns)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(coef[0]), float(coef[1]), r2)


def dipole_bound_constant(Ns, log_values, beta: float) -> float:
    """Smallest c with log value <= (beta/2) N log N + c N at every N given."""
    Ns = np.asarray(Ns, dtype=float)
    v = np.asarray(log_values, dtype=float)
    return float(np.max((v - 0.5 * beta * Ns * np.log(Ns)) / Ns))
