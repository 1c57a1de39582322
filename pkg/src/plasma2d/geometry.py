"""Planar signed point configurations and the nearest-neighbour machinery.

Points are stored as ``(n, 2)`` float arrays.  A :class:`SignedConfig` holds the
positive charges and the negative charges separately; wherever a merged list is
needed the positive charges come first, so "lowest (sign, index)" tie-breaking
and "lowest merged index" tie-breaking coincide.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree


class DegenerateConfigurationError(ValueError):
    """Raised when an operation needs a simple configuration and gets coincident points."""


def as_points(points) -> np.ndarray:
    """Coerce ``points`` to a read-only ``(n, 2)`` float array of finite values."""
    arr = np.array(points, dtype=float, copy=True)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim == 1 and arr.shape[0] == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    arr.setflags(write=False)
    return arr


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"expected a finite planar point, got {p!r}")
    return arr


@dataclass(frozen=True)
class SignedConfig:
    """Finite signed point configuration: ``pos`` carry charge +1, ``neg`` charge -1.

    Coincident points are allowed at construction (``simple`` is then False);
    distance and energy routines reject them.
    """

    pos: np.ndarray
    neg: np.ndarray
    simple: bool = field(init=False, repr=False, compare=False)

    def __init__(self, pos=(), neg=()):
        object.__setattr__(self, "pos", as_points(pos))
        object.__setattr__(self, "neg", as_points(neg))
        object.__setattr__(self, "simple", _is_simple(self.points))

    @property
    def n_pos(self) -> int:
        return self.pos.shape[0]

    @property
    def n_neg(self) -> int:
        return self.neg.shape[0]

    def __len__(self) -> int:
        return self.n_pos + self.n_neg

    @property
    def neutral(self) -> bool:
        return self.n_pos == self.n_neg

    @property
    def points(self) -> np.ndarray:
        """Merged ``(n_pos + n_neg, 2)`` array, positive charges first."""
        return np.vstack([self.pos, self.neg])

    @property
    def charges(self) -> np.ndarray:
        return np.concatenate([np.ones(self.n_pos), -np.ones(self.n_neg)])

    def require_simple(self) -> None:
        if not self.simple:
            raise DegenerateConfigurationError("degenerate configuration: coincident points")

    def swapped(self) -> "SignedConfig":
        """Charge conjugate: positive and negative lists exchanged."""
        return SignedConfig(self.neg, self.pos)

    def translated(self, shift) -> "SignedConfig":
        s = as_point(shift)
        return SignedConfig(self.pos + s, self.neg + s)

    def scaled(self, factor: float) -> "SignedConfig":
        return SignedConfig(self.pos * factor, self.neg * factor)

    def diameter(self) -> float:
        pts = self.points
        if len(pts) < 2:
            return 0.0
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        return float(d.max())

    # -- CSV (sign, x, y) -------------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sign", "x", "y"])
        for x, y in self.pos:
            w.writerow([1, repr(float(x)), repr(float(y))])
        for x, y in self.neg:
            w.writerow([-1, repr(float(x)), repr(float(y))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "SignedConfig":
        """Read a config from a path or from CSV text (header ``sign,x,y`` required)."""
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                        and Path(source).exists()):
            text = Path(source).read_text()
        else:
            text = str(source)
        rows = list(csv.reader(io.StringIO(text)))
        rows = [r for r in rows if r and not r[0].lstrip().startswith("#")]
        if not rows:
            raise ValueError("empty CSV: header 'sign,x,y' required")
        header = [h.strip().lower() for h in rows[0]]
        if header != ["sign", "x", "y"]:
            raise ValueError(f"bad CSV header {rows[0]!r}, expected sign,x,y")
        pos, neg = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 columns")
            sign = int(float(row[0]))
            pt = (float(row[1]), float(row[2]))
            if sign == 1:
                pos.append(pt)
            elif sign == -1:
                neg.append(pt)
            else:
                raise ValueError(f"line {lineno}: sign must be +1 or -1")
        return cls(pos, neg)

    @classmethod
    def random_uniform(cls, n_pos: int, n_neg: int | None = None, rng=None) -> "SignedConfig":
        """i.i.d. uniform points in the unit box."""
        rng = np.random.default_rng(rng)
        n_neg = n_pos if n_neg is None else n_neg
        return cls(rng.random((n_pos, 2)), rng.random((n_neg, 2)))


def _is_simple(points: np.ndarray) -> bool:
    if len(points) < 2:
        return True
    return len(np.unique(points, axis=0)) == len(points)


@dataclass(frozen=True)
class NNDistances:
    """Nearest-neighbour half-distances, capped at 1, one entry per point."""

    r_pos: np.ndarray
    r_neg: np.ndarray

    @property
    def merged(self) -> np.ndarray:
        return np.concatenate([self.r_pos, self.r_neg])


def nearest_neighbors(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance to and index of the nearest other point, ties to the lowest index."""
    pts = np.asarray(points, dtype=float)
    m = len(pts)
    if m < 2:
        raise ValueError("need at least 2 points")
    if m <= 512:
        diff = pts[:, None, :] - pts[None, :, :]
        d = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(d, np.inf)
        idx = np.argmin(d, axis=1)  # first occurrence = lowest index
        dist = d[np.arange(m), idx]
    else:
        tree = cKDTree(pts)
        k = min(m, 8)
        dd, ii = tree.query(pts, k=k)
        dist = dd[:, 1].copy()
        idx = np.empty(m, dtype=int)
        for i in range(m):
            cand = [j for dj, j in zip(dd[i], ii[i]) if j != i and dj == dist[i]]
            if len(cand) == 0:
                cand = [ii[i, 1]]
            if dd[i, -1] == dist[i]:
                # ties may extend past k; fall back to an exact scan
                dj = np.hypot(*(pts - pts[i]).T)
                dj[i] = np.inf
                cand = list(np.flatnonzero(dj == dist[i]))
            idx[i] = min(cand)
    if np.any(dist == 0.0):
        raise DegenerateConfigurationError("degenerate configuration: coincident points")
    return dist, idx


def nn_half_distances(config: SignedConfig) -> NNDistances:
    """r(p) = min(1, half the distance from p to the closest other point of either sign)."""
    if len(config) < 2:
        raise ValueError("nearest-neighbour distances need at least 2 points")
    dist, _ = nearest_neighbors(config.points)
    r = np.minimum(1.0, 0.5 * dist)
    return NNDistances(r[: config.n_pos], r[config.n_pos:])


def truncation_kernel(eta: float, x) -> float:
    """Truncated logarithmic kernel (log(eta) - log|x|)_+.

    Vanishes outside the disk of radius ``eta``; returns ``+inf`` at ``x = 0``.
    """
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must lie in (0, 1)")
    norm = float(np.hypot(*as_point(x)))
    if norm == 0.0:
        return math.inf
    return max(0.0, math.log(eta) - math.log(norm))


def gale_shapley_match(xs, ys) -> np.ndarray:
    """Greedy mutual-closest matching of ``xs`` to ``ys``.

    Returns ``sigma`` with ``sigma[i] = j`` (0-based) meaning ``xs[i]`` is paired
    with ``ys[j]``.  Repeatedly pairing the globally closest surviving (x, y) pair
    is the same as repeatedly pairing a mutually closest one; distance ties are
    broken by the lowest (i, j).
    """
    xs = as_points(xs)
    ys = as_points(ys)
    k = len(xs)
    if len(ys) != k:
        raise ValueError(f"length mismatch: {k} vs {len(ys)} points")
    if k == 0:
        return np.zeros(0, dtype=int)
    d = np.linalg.norm(xs[:, None, :] - ys[None, :, :], axis=-1).ravel()
    order = np.lexsort((np.arange(k * k), d))
    sigma = np.full(k, -1, dtype=int)
    used_y = np.zeros(k, dtype=bool)
    matched = 0
    for flat in order:
        i, j = divmod(int(flat), k)
        if sigma[i] >= 0 or used_y[j]:
            continue
        sigma[i] = j
        used_y[j] = True
        matched += 1
        if matched == k:
            break
    return sigma


def rescale_blowup(config: SignedConfig, N: int) -> SignedConfig:
    """Multiply every coordinate by sqrt(N)."""
    if N < 1:
        raise ValueError("N must be a positive integer")
    return config.scaled(math.sqrt(N))


def iter_points(config: SignedConfig) -> Iterable[tuple[int, int, np.ndarray]]:
    """Yield ``(sign, index, point)`` in merged order."""
    for i, p in enumerate(config.pos):
        yield 1, i, p
    for i, p in enumerate(config.neg):
        yield -1, i, p


def in_unit_box(points: Sequence) -> bool:
    pts = np.asarray(points, dtype=float)
    return bool(np.all((pts >= 0.0) & (pts <= 1.0)))
