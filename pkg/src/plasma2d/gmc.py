"""Disk Gaussian free field, circle averages, imaginary chaos moments and Chebyshev tails.

Points are planar pairs, read as complex numbers where convenient.  The field
lives on the disk D_r centred at 0 with covariance

    g_r(x, y) = -log|x/r - y/r| + log|1 - x conj(y) / r^2|.

The circle average at radius eps replaces -log|x - y| by its double average over
the two circles; the other term is harmonic in each variable and is unchanged.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from plasma2d.geometry import as_point


class CovarianceNotPSD(ArithmeticError):
    """Cholesky failed even after the largest allowed diagonal jitter."""


@dataclass(frozen=True)
class GffKernelParams:
    r: float
    eps: float
    n_angle: int = 64

    def __post_init__(self):
        if not self.r > 2:
            raise ValueError("disk radius r must exceed 2")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.n_angle < 16:
            raise ValueError("n_angle must be at least 16")


def _cplx(p) -> complex:
    a = as_point(p)
    return complex(a[0], a[1])


def _check_inside(params: GffKernelParams, z, clearance: float = 0.0) -> None:
    if np.any(np.abs(z) >= params.r - clearance):
        what = "boundary clearance > eps violated" if clearance else "point outside the disk"
        raise ValueError(what)


def gff_covariance(params: GffKernelParams, x, y) -> float:
    zx, zy = _cplx(x), _cplx(y)
    _check_inside(params, np.array([zx, zy]))
    if zx == zy:
        raise ValueError("covariance diverges at x = y")
    r = params.r
    return -math.log(abs(zx / r - zy / r)) + math.log(abs(1 - zx * zy.conjugate() / r ** 2))


def circle_log_average(d, eps: float, n_angle: int = 64) -> np.ndarray:
    """Double circle average of -log|z - w|, circles of radius eps at distance d.

    The inner average is -log max(|z - y|, eps).  On the outer circle that is
    constant on the arc within eps of y and smooth elsewhere, so the remaining
    arc is done by Gauss-Legendre.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    out = np.where(d >= 2 * eps, -np.log(np.where(d > 0, d, 1.0)), -math.log(eps))
    mid = (d > 0) & (d < 2 * eps)
    if mid.any():
        dm = d[mid]
        th0 = np.arccos(dm / (2 * eps))
        x, w = np.polynomial.legendre.leggauss(n_angle)
        th = th0[:, None] + (math.pi - th0[:, None]) * (x[None, :] + 1) / 2
        f = -0.5 * np.log(eps ** 2 + dm[:, None] ** 2 - 2 * eps * dm[:, None] * np.cos(th))
        arc = (f * w[None, :]).sum(axis=1) * (math.pi - th0) / 2
        out[mid] = (th0 * -math.log(eps) + arc) / math.pi
    return out


def circle_avg_covariance(params: GffKernelParams, x, y) -> float:
    """Covariance of the eps-circle averages of the field at x and y."""
    zx, zy = _cplx(x), _cplx(y)
    _check_inside(params, np.array([zx, zy]), params.eps)
    d = abs(zx - zy)
    if d > 2 * params.eps:
        return gff_covariance(params, x, y)
    r = params.r
    harmonic = math.log(r) + math.log(abs(1 - zx * zy.conjugate() / r ** 2))
    return harmonic + float(circle_log_average(d, params.eps, params.n_angle)[0])


def conformal_radius(params: GffKernelParams, x) -> float:
    z = _cplx(x)
    return params.r * (1 - abs(z) ** 2 / params.r ** 2)


def covariance_matrix(params: GffKernelParams, points) -> np.ndarray:
    """[g_r^eps(x_i, x_j)] for an (n, 2) array of points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    z = pts[:, 0] + 1j * pts[:, 1]
    _check_inside(params, z, params.eps)
    if len(np.unique(pts, axis=0)) != len(pts):
        raise ValueError("grid points must be pairwise distinct")
    r = params.r
    S = np.log(np.abs(1 - z[:, None] * np.conj(z)[None, :] / r ** 2)) + math.log(r)
    d = np.abs(z[:, None] - z[None, :])
    S += circle_log_average(d.ravel(), params.eps, params.n_angle).reshape(d.shape)
    return 0.5 * (S + S.T)


def cholesky_with_jitter(S: np.ndarray, start: float = 1e-12, stop: float = 1e-6):
    """Lower Cholesky factor, adding (jitter * max diagonal) escalating by 10x on failure.

    Returns (L, jitter) where jitter is the relative amount finally used.
    """
    scale = float(np.max(np.diag(S)))
    jitter = 0.0
    while True:
        try:
            A = S + (jitter * scale) * np.eye(len(S)) if jitter else S
            return linalg.cholesky(A, lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            jitter = start if jitter == 0.0 else jitter * 10
            if jitter > stop * (1 + 1e-9):
                raise CovarianceNotPSD("covariance not numerically PSD") from None


def sample_gff_on_grid(params: GffKernelParams, grid, seed: int = 0, n_draws: int | None = None):
    """Joint draw(s) of the circle-averaged field at the grid points.

    Returns a vector, or an (n_draws, n) array when ``n_draws`` is given.
    """
    L, _ = cholesky_with_jitter(covariance_matrix(params, grid))
    rng = np.random.default_rng(seed)
    k = 1 if n_draws is None else n_draws
    draws = (L @ rng.standard_normal((L.shape[0], k))).T
    return draws[0] if n_draws is None else draws


def box_grid(grid_n: int) -> np.ndarray:
    """Cell midpoints of a grid_n x grid_n grid on the unit box centred at the origin."""
    t = (np.arange(grid_n) + 0.5) / grid_n - 0.5
    X, Y = np.meshgrid(t, t, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


@dataclass(frozen=True)
class ChaosSetup:
    """Grid, Cholesky factor and parameters shared read-only across draw batches."""

    params: GffKernelParams
    grid_n: int
    L: np.ndarray
    jitter: float

    @classmethod
    def build(cls, params: GffKernelParams, grid_n: int) -> "ChaosSetup":
        S = covariance_matrix(params, box_grid(grid_n))
        L, jitter = cholesky_with_jitter(S)
        return cls(params, grid_n, L, jitter)


def _chaos_batch(setup: ChaosSetup, beta: float, size: int, ss) -> np.ndarray:
    rng = np.random.default_rng(ss)
    H = setup.L @ rng.standard_normal((setup.L.shape[0], size))
    m = np.exp(1j * beta * H).mean(axis=0)
    return np.abs(m) * setup.params.eps ** (-beta ** 2 / 2)


def chaos_abs_samples(setup: ChaosSetup, beta: float, n_draws: int, seed: int = 0,
                      batch: int = 256, workers: int = 1) -> np.ndarray:
    """|eps^{-beta^2/2} * midpoint sum of exp(i beta h)|, one value per draw."""
    if not 0 <= beta ** 2 < 2:
        raise ValueError(f"beta={beta} out of range: need β² < 2")
    n_batches = -(-n_draws // batch)
    seqs = np.random.SeedSequence(seed).spawn(n_batches)
    sizes = [min(batch, n_draws - i * batch) for i in range(n_batches)]
    job = lambda i: _chaos_batch(setup, beta, sizes[i], seqs[i])
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(job, range(n_batches)))
    else:
        parts = [job(i) for i in range(n_batches)]
    return np.concatenate(parts) if parts else np.zeros(0)


def chaos_moments(params: GffKernelParams, beta: float, ks, grid_n: int, n_draws: int,
                  seed: int = 0, workers: int = 1, setup: ChaosSetup | None = None) -> dict:
    """{k: (mean of |M|^{2k}, standard error)} from one set of draws."""
    setup = setup or ChaosSetup.build(params, grid_n)
    a = chaos_abs_samples(setup, beta, n_draws, seed, workers=workers)
    out = {}
    for k in ks:
        v = a ** (2 * k)
        out[int(k)] = (float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))))
    return out


def chaos_moment(params: GffKernelParams, beta: float, k: int, grid_n: int, n_draws: int,
                 seed: int = 0, workers: int = 1) -> tuple[float, float]:
    return chaos_moments(params, beta, [k], grid_n, n_draws, seed, workers)[k]


def discrete_second_moment(params: GffKernelParams, beta: float, grid_n: int) -> float:
    """Exact E|M|^2 for the discretised field: a double sum over grid pairs."""
    S = covariance_matrix(params, box_grid(grid_n))
    v = np.diag(S)
    logs = -0.5 * beta ** 2 * (v[:, None] + v[None, :] - 2 * S) - beta ** 2 * math.log(params.eps)
    return float(np.exp(logs).mean())


def _as_cplx_array(pts) -> np.ndarray:
    a = np.asarray(pts, dtype=float).reshape(-1, 2)
    return a[:, 0] + 1j * a[:, 1]


def finite_r_correction(params: GffKernelParams, xs, ys, beta: float) -> float:
    """F_r(x, y, beta) by direct products of complex moduli."""
    x, y = _as_cplx_array(xs), _as_cplx_array(ys)
    _check_inside(params, np.concatenate([x, y]))
    r2 = params.r ** 2
    b2 = beta ** 2
    val = np.prod((1 - np.abs(x) ** 2 / r2) ** (-b2 / 2)) * np.prod((1 - np.abs(y) ** 2 / r2) ** (-b2 / 2))
    num = np.prod(np.abs(1 - x[:, None] * np.conj(y)[None, :] / r2))
    iu = np.triu_indices(len(x), 1)
    den = (np.prod(np.abs(1 - x[:, None] * np.conj(x)[None, :] / r2)[iu])
           * np.prod(np.abs(1 - y[:, None] * np.conj(y)[None, :] / r2)[iu]))
    return float(val * (num / den) ** b2)


def log_finite_r_correction(params: GffKernelParams, xs, ys, beta: float) -> float:
    """log F_r accumulated term by term in log space, in real arithmetic."""
    x = np.asarray(xs, dtype=float).reshape(-1, 2)
    y = np.asarray(ys, dtype=float).reshape(-1, 2)
    r2 = params.r ** 2
    b2 = beta ** 2

    def log_mod(p, q):
        # |1 - p conj(q)/r^2|^2 = 1 - 2 p.q / r^2 + |p|^2 |q|^2 / r^4
        return 0.5 * math.log1p(-2 * (p @ q) / r2 + (p @ p) * (q @ q) / r2 ** 2)

    total = 0.0
    for p in np.vstack([x, y]):
        if p @ p >= r2:
            raise ValueError("point outside the disk")
        total += -0.5 * b2 * math.log1p(-(p @ p) / r2)
    for p in x:
        for q in y:
            total += b2 * log_mod(p, q)
    for pts in (x, y):
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                total -= b2 * log_mod(pts[i], pts[j])
    return total


# -- moment tables and Chebyshev tails ------------------------------------------------

@dataclass(frozen=True)
class MomentTable:
    """Rows (k, log of the 2k-th absolute moment, standard error), k ascending."""

    k: np.ndarray
    log_moment: np.ndarray
    std_err: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=np.int64)
        lm = np.asarray(self.log_moment, dtype=float)
        se = np.asarray(self.std_err, dtype=float)
        if not (k.shape == lm.shape == se.shape) or k.ndim != 1 or len(k) == 0:
            raise ValueError("moment table needs matching nonempty columns")
        if np.any(k < 1) or np.any(np.diff(k) <= 0):
            raise ValueError("k values must be distinct, ascending and >= 1")
        for name, v in (("k", k), ("log_moment", lm), ("std_err", se)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def from_rows(cls, rows) -> "MomentTable":
        rows = sorted(rows)
        return cls(*(np.array(c) for c in zip(*rows))) if rows else cls([], [], [])

    def rows(self):
        return list(zip(self.k.tolist(), self.log_moment.tolist(), self.std_err.tolist()))

    def to_csv(self) -> str:
        lines = ["k,log_moment,std_err"]
        lines += [f"{k},{lm!r},{se!r}" for k, lm, se in self.rows()]
        return "\n".join(lines) + "\n"


def tail_bound(table: MomentTable, x: float) -> tuple[int, float]:
    """min over table rows of log_moment - 2k log x, with the minimising k (smallest on ties)."""
    if not x > 0:
        raise ValueError("x must be positive")
    vals = table.log_moment - 2 * table.k * math.log(x)
    i = int(np.argmin(vals))
    return int(table.k[i]), float(vals[i])


def tail_scan(table: MomentTable, xs) -> list[tuple[float, int, float]]:
    return [(float(x), *tail_bound(table, x)) for x in xs]


@dataclass(frozen=True)
class MomentFit:
    leading: float
    linear: float
    fixed_leading: bool


def fit_moment_growth(table: MomentTable, leading: float | None = None) -> MomentFit:
    """Weighted fit of log_moment = a k log k + C k.

    With ``leading`` given, a is held at that value and only C is fitted;
    otherwise both are fitted.
    """
    k = table.k.astype(float)
    y = table.log_moment
    w = 1.0 / np.maximum(table.std_err, 1e-12) ** 2
    klogk = k * np.log(k)
    if leading is not None:
        C = float((w * k * (y - leading * klogk)).sum() / (w * k * k).sum())
        return MomentFit(float(leading), C, True)
    A = np.stack([klogk, k], axis=1) * np.sqrt(w)[:, None]
    (a, C), *_ = np.linalg.lstsq(A, y * np.sqrt(w), rcond=None)
    return MomentFit(float(a), float(C), False)


def extrapolate_moment_table(table: MomentTable, fit: MomentFit, k_max: int) -> MomentTable:
    """Measured rows kept; rows up to k_max filled in from the fitted growth law."""
    ks = np.arange(1, k_max + 1)
    lm = fit.leading * ks * np.log(ks) + fit.linear * ks
    se = np.full(k_max, np.nan)
    measured = dict(zip(table.k.tolist(), zip(table.log_moment.tolist(), table.std_err.tolist())))
    for i, k in enumerate(ks):
        if k in measured:
            lm[i], se[i] = measured[k]
    return MomentTable(ks, lm, se)


def implied_tail_exponent(table: MomentTable, xs) -> float:
    """Least-squares slope of log(-log bound) against log x over the scan points."""
    xs = np.asarray(xs, dtype=float)
    b = np.array([tail_bound(table, x)[1] for x in xs])
    if np.any(b >= 0):
        raise ValueError("tail bound is not informative (>= 0) on part of the scan")
    return float(np.polyfit(np.log(xs), np.log(-b), 1)[0])


def synthetic_klogk_table(k_max: int = 6) -> MomentTable:
    ks = np.arange(1, k_max + 1)
    return MomentTable(ks, ks * np.log(ks), np.zeros(k_max))
