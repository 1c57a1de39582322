"""Logarithmic interaction energy: pairwise sums, truncated-field quadrature, continuum energy.

Conventions.  For a neutral configuration with positive charges ``x_i`` and
negative charges ``y_j`` the Hamiltonian is

    W = sum_{i != j} (-log|x_i - x_j| - log|y_i - y_j|) + cross_weight * sum_{i,j} log|x_i - y_j|

where the like-sign sums run over ordered pairs.  ``cross_weight=1`` is the
default Hamiltonian.  ``cross_weight=2`` gives the energy summed over all ordered
pairs of distinct charges, which is the quantity the truncated field measures.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.spatial.distance import cdist, pdist

from plasma2d import _fieldquad
from plasma2d.geometry import (
    DegenerateConfigurationError,
    NNDistances,
    SignedConfig,
    as_point,
    nn_half_distances,
)


class NonNeutralError(ValueError):
    """Raised when an operation needs as many positive as negative charges."""


def _require_neutral_simple(config: SignedConfig) -> None:
    if not config.neutral:
        raise NonNeutralError(
            f"non-neutral configuration: {config.n_pos} positive vs {config.n_neg} negative")
    config.require_simple()


def _safe_log(d: np.ndarray) -> np.ndarray:
    if np.any(d == 0.0):
        raise DegenerateConfigurationError("degenerate configuration: coincident points")
    return np.log(d)


def like_sum(points: np.ndarray) -> float:
    """sum over ordered pairs i != j of -log|p_i - p_j|."""
    if len(points) < 2:
        return 0.0
    return float(-2.0 * _safe_log(pdist(points)).sum())


def cross_sum(config: SignedConfig) -> float:
    """sum_{i,j} log|x_i - y_j| over positive x and negative y."""
    if config.n_pos == 0 or config.n_neg == 0:
        return 0.0
    return float(_safe_log(cdist(config.pos, config.neg)).sum())


def pairwise_energy(config: SignedConfig, cross_weight: float = 1.0) -> float:
    """Hamiltonian of a simple neutral configuration by direct summation."""
    _require_neutral_simple(config)
    return like_sum(config.pos) + like_sum(config.neg) + cross_weight * cross_sum(config)


def pairwise_energy_batch(pos: np.ndarray, neg: np.ndarray, cross_weight: float = 1.0) -> np.ndarray:
    """Vectorised Hamiltonian for stacks ``pos, neg`` of shape (B, N, 2)."""
    pos = np.asarray(pos, dtype=float)
    neg = np.asarray(neg, dtype=float)
    n = pos.shape[1]
    iu = np.triu_indices(n, 1)

    def like(p):
        d = np.linalg.norm(p[:, :, None, :] - p[:, None, :, :], axis=-1)[:, iu[0], iu[1]]
        return -2.0 * np.log(d).sum(axis=1)

    dx = np.linalg.norm(pos[:, :, None, :] - neg[:, None, :, :], axis=-1)
    with np.errstate(divide="ignore"):
        return like(pos) + like(neg) + cross_weight * np.log(dx).reshape(len(pos), -1).sum(axis=1)


@dataclass(frozen=True)
class PointMove:
    """Displacement of one charge: ``sign`` is +1 or -1, ``index`` indexes that sign's list."""

    sign: int
    index: int
    new: tuple[float, float]

    def apply(self, config: SignedConfig) -> SignedConfig:
        pos = np.array(config.pos)
        neg = np.array(config.neg)
        target = pos if self.sign == 1 else neg
        target[self.index] = as_point(self.new)
        return SignedConfig(pos, neg)


def point_interaction(pos: np.ndarray, neg: np.ndarray, sign: int, index: int,
                      at: np.ndarray, cross_weight: float = 1.0) -> float:
    """All Hamiltonian terms involving charge (sign, index) placed at ``at``."""
    same, other = (pos, neg) if sign == 1 else (neg, pos)
    d_same = np.hypot(same[:, 0] - at[0], same[:, 1] - at[1])
    d_same = np.delete(d_same, index)
    d_other = np.hypot(other[:, 0] - at[0], other[:, 1] - at[1])
    if np.any(d_same == 0.0) or np.any(d_other == 0.0):
        raise DegenerateConfigurationError("degenerate configuration: move creates a coincidence")
    return float(-2.0 * np.log(d_same).sum() + cross_weight * np.log(d_other).sum())


def energy_delta(config: SignedConfig, move: PointMove, cross_weight: float = 1.0) -> float:
    """W(after) - W(before) for a single-point move, in O(N)."""
    old = (config.pos if move.sign == 1 else config.neg)[move.index]
    new = as_point(move.new)
    if np.array_equal(old, new):
        return 0.0
    after = point_interaction(config.pos, config.neg, move.sign, move.index, new, cross_weight)
    before = point_interaction(config.pos, config.neg, move.sign, move.index, old, cross_weight)
    return after - before


def dipole_sum(nn: NNDistances) -> float:
    return float(np.log(nn.merged).sum())


# -- truncated field -------------------------------------------------------------

def truncated_field_at(config: SignedConfig, nn: NNDistances, x) -> np.ndarray:
    """Gradient of the smeared potential: sum_p q_p * -(x - p)/|x - p|^2 outside D(p, r(p))."""
    return truncated_field(config.points, config.charges, nn.merged, np.asarray(x, float)[None, :])[0]


def truncated_field(points: np.ndarray, charges: np.ndarray, radii: np.ndarray,
                    xs: np.ndarray) -> np.ndarray:
    """Field at each row of ``xs`` (shape (m, 2)); returns (m, 2)."""
    d = xs[:, None, :] - points[None, :, :]
    s2 = (d ** 2).sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where((s2 >= radii ** 2) & (s2 > 0.0), -charges / s2, 0.0)
    return (coef[..., None] * d).sum(axis=1)


def smeared_potential(config: SignedConfig, nn: NNDistances, x) -> float:
    """sum_p q_p * (-log max(|x - p|, r(p))): the potential of charges smeared on circles."""
    d = np.hypot(*(np.asarray(x, float)[None, :] - config.points).T)
    return float((config.charges * -np.log(np.maximum(d, nn.merged))).sum())


@dataclass(frozen=True)
class QuadBudget:
    """Quadrature parameters for :func:`field_energy_quadrature`.

    ``tol`` is the target refinement error on the (1/2 pi)-normalised energy.
    ``half_width`` overrides the default box half-width 2 * (diameter + 1).
    ``min_cell_rel`` is the size, relative to min r(p), down to which cells cut by
    two or more truncation circles are forcibly refined.
    """

    tol: float = 1e-3
    max_cells: int = 1_000_000
    min_cell_rel: float = 1e-3
    half_width: float | None = None
    base_grid: int = 8

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_cells < 4 * self.base_grid ** 2:
            raise ValueError("max_cells too small for the base grid")


_OFF = np.array([[-1, -1], [1, -1], [-1, 1], [1, 1]], dtype=float) / 4.0


def _children(cx, cy, h):
    kx = (cx[:, None] + h[:, None] * _OFF[:, 0]).ravel()
    ky = (cy[:, None] + h[:, None] * _OFF[:, 1]).ravel()
    return kx, ky, np.repeat(h / 2.0, 4)


class _Rule:
    def __init__(self, ch, q, r2):
        self.ch = np.ascontiguousarray(ch)
        self.q = np.ascontiguousarray(q)
        self.r2 = np.ascontiguousarray(r2)
        self.gx, self.gw = _fieldquad.gauss_nodes()

    def __call__(self, cx, cy, h):
        nh = np.empty(cx.size, dtype=np.int64)
        v = _fieldquad.cell_rule(cx, cy, h, self.ch, self.q, self.r2, self.gx, self.gw, nh)
        return v, nh


def _inner_square(rule, c, L, tol, max_cells, hmin, base):
    h0 = 2.0 * L / base
    ticks = -L + h0 * (np.arange(base) + 0.5)
    X, Y = np.meshgrid(c[0] + ticks, c[1] + ticks, indexing="ij")
    cx, cy, h = X.ravel(), Y.ravel(), np.full(base * base, h0)
    own, _ = rule(cx, cy, h)
    v, nh = rule(*_children(cx, cy, h))
    kids, khit = v.reshape(-1, 4), nh.reshape(-1, 4)
    while True:
        err = np.abs(own - kids.sum(axis=1))
        total = float(err.sum())
        multi = (khit.max(axis=1) > 1) & (h / 2.0 > hmin)
        if (total <= tol and not multi.any()) or 4 * cx.size > max_cells:
            break
        sel = multi.copy()
        if total > tol:
            # refine the leaves carrying the top half of the error mass
            order = np.argsort(-err, kind="stable")
            k = int(np.searchsorted(np.cumsum(err[order]), 0.5 * total)) + 1
            sel[order[:k]] = True
        ncx, ncy, nh_ = _children(cx[sel], cy[sel], h[sel])
        nown = kids[sel].ravel()
        gv, gh = rule(*_children(ncx, ncy, nh_))
        keep = ~sel
        cx = np.concatenate([cx[keep], ncx])
        cy = np.concatenate([cy[keep], ncy])
        h = np.concatenate([h[keep], nh_])
        own = np.concatenate([own[keep], nown])
        kids = np.concatenate([kids[keep], gv.reshape(-1, 4)])
        khit = np.concatenate([khit[keep], gh.reshape(-1, 4)])
    return float(kids.sum()), total, int(4 * cx.size)


def _exterior(points, charges, radii, c, L, n_theta, n_u):
    """Integral of |E|^2 outside the square via rho = rho_min(theta)/u, u in (0, 1]."""
    edges = np.linspace(-np.pi / 4, 7 * np.pi / 4, 5)
    brk = np.sort(np.concatenate([edges, edges[:-1] + np.pi / 4]))
    tx, tw = np.polynomial.legendre.leggauss(n_theta)
    ux, uw = np.polynomial.legendre.leggauss(n_u)
    u, uw = (ux + 1) / 2, uw / 2
    total = 0.0
    for a, b in zip(brk[:-1], brk[1:]):
        th = (a + b) / 2 + (b - a) / 2 * tx
        wt = tw * (b - a) / 2
        rmin = L / np.maximum(np.abs(np.cos(th)), np.abs(np.sin(th)))
        rho = rmin[:, None] / u[None, :]
        xs = np.stack([c[0] + rho * np.cos(th)[:, None], c[1] + rho * np.sin(th)[:, None]], -1)
        E = truncated_field(points, charges, radii, xs.reshape(-1, 2))
        f = (E ** 2).sum(-1).reshape(rho.shape)
        total += float((wt[:, None] * uw[None, :] * f * rmin[:, None] ** 2 / u[None, :] ** 3).sum())
    return total


def crude_tail_bound(points: np.ndarray, c: np.ndarray, L: float, diam: float) -> float:
    """Multipole bound on (1/2 pi) * integral of |E|^2 outside radius L about c; inf if L <= diam."""
    if L <= diam:
        return math.inf
    d_tot = float(np.hypot(*(points - c).T).sum() + 2.0 * diam * len(points))
    return 4.0 * math.pi * d_tot ** 2 / (L - diam) ** 2 * 0.5 / (2.0 * math.pi)


def field_energy_quadrature(config: SignedConfig, budget: QuadBudget | None = None,
                            nn: NNDistances | None = None) -> tuple[float, float]:
    """(1/2 pi) * integral over R^2 of |grad V_{N,r}|^2 and an a-posteriori error bound."""
    budget = budget or QuadBudget()
    if not config.neutral:
        raise NonNeutralError("non-neutral configuration: field energy diverges")
    if len(config) == 0:
        return 0.0, 0.0
    config.require_simple()
    nn = nn or nn_half_distances(config)
    pts, q, r = config.points, config.charges, nn.merged
    c = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    diam = config.diameter()
    L = 2.0 * (diam + 1.0) if budget.half_width is None else float(budget.half_width)
    if L <= 0:
        raise ValueError("half_width must be positive")
    two_pi = 2.0 * math.pi
    rule = _Rule(pts, q, r ** 2)
    inner, inner_err, _ = _inner_square(rule, c, L, budget.tol * two_pi, budget.max_cells,
                                        budget.min_cell_rel * float(r.min()), budget.base_grid)
    ext_hi = _exterior(pts, q, r, c, L, 24, 12)
    ext_lo = _exterior(pts, q, r, c, L, 16, 8)
    estimate = (inner + ext_hi) / two_pi
    bound = (inner_err + abs(ext_hi - ext_lo)) / two_pi
    contained = np.all(np.abs(pts - c).max(axis=1) + r < L)
    if not contained:
        # the mapped exterior rule assumes a smooth integrand outside the square
        bound += crude_tail_bound(pts, c, L, diam)
    return estimate, bound


@dataclass(frozen=True)
class EnergyBreakdown:
    """Both sides of the energy identity.

    ``residual = pairwise + cross_sum - field_quad - dipole_sum`` where ``cross_sum``
    is sum_{i,j} log|x_i - y_j|: the field energy sees every ordered pair of
    distinct charges, so the cross term enters once more than in ``pairwise``.
    """

    pairwise: float
    cross_sum: float
    field_quad: float
    dipole_sum: float
    residual: float
    quad_error_bound: float

    @property
    def passes(self) -> bool:
        return abs(self.residual) <= self.quad_error_bound

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EnergyBreakdown":
        return cls(**json.loads(text))


def energy_identity_check(config: SignedConfig, budget: QuadBudget | None = None) -> EnergyBreakdown:
    _require_neutral_simple(config)
    if len(config) == 0:
        return EnergyBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    nn = nn_half_distances(config)
    w = pairwise_energy(config)
    xs = cross_sum(config)
    fq, err = field_energy_quadrature(config, budget, nn)
    ds = dipole_sum(nn)
    return EnergyBreakdown(w, xs, fq, ds, w + xs - fq - ds, err)


# -- continuum energy ------------------------------------------------------------

# mean of log|z| over the square [-1/2, 1/2]^2
SQUARE_LOG_MEAN = (math.log(2.0) - 3.0 + math.pi / 2.0) / 2.0 - math.log(2.0)


@dataclass(frozen=True)
class GridDensity:
    """Probability density sampled at cell midpoints of a uniform grid on the unit box."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("density grid must be square")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and nonnegative")
        mass = v.sum() * (1.0 / v.shape[0]) ** 2
        if not math.isclose(mass, 1.0, rel_tol=1e-6):
            raise ValueError(f"density integrates to {mass}, expected 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def cell_size(self) -> float:
        return 1.0 / self.n

    @classmethod
    def from_function(cls, f, n: int) -> "GridDensity":
        t = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(t, t, indexing="ij")
        v = np.asarray(f(X, Y), dtype=float)
        return cls(v / (v.sum() / n ** 2))

    @classmethod
    def uniform(cls, n: int) -> "GridDensity":
        return cls(np.ones((n, n)))


def log_kernel_table(n: int) -> np.ndarray:
    """log|c_a - c_b| on offsets (2n-1)^2 of an n x n grid of unit-box cells, self cell averaged."""
    h = 1.0 / n
    k = np.arange(-(n - 1), n) * h
    KX, KY = np.meshgrid(k, k, indexing="ij")
    with np.errstate(divide="ignore"):
        K = 0.5 * np.log(KX ** 2 + KY ** 2)
    K[n - 1, n - 1] = math.log(h) + SQUARE_LOG_MEAN
    return K


def continuum_energy(mu_plus: GridDensity, mu_minus: GridDensity) -> float:
    """-2 pi * double integral of log|x - y| against (mu+ - mu-) x (mu+ - mu-)."""
    if mu_plus.n != mu_minus.n:
        raise ValueError(f"grid mismatch: {mu_plus.n} vs {mu_minus.n}")
    n = mu_plus.n
    nu = (mu_plus.values - mu_minus.values) * mu_plus.cell_size ** 2
    pot = fftconvolve(nu, log_kernel_table(n), mode="valid") if n > 1 else nu * log_kernel_table(1)
    return float(-2.0 * math.pi * (nu * pot).sum())
