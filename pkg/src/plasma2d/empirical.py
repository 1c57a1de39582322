"""Empirical measures, blown-up window statistics and uniformity diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from plasma2d.geometry import SignedConfig, as_point, nearest_neighbors

DEFAULT_TAU = 1e-6


@dataclass(frozen=True)
class BinnedMeasure:
    counts: np.ndarray
    total: int

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("counts must be a k x k grid")
        if int(c.sum()) != self.total:
            raise ValueError("counts do not sum to total")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    def __add__(self, other: "BinnedMeasure") -> "BinnedMeasure":
        if self.k != other.k:
            raise ValueError("bin grids differ")
        return BinnedMeasure(self.counts + other.counts, self.total + other.total)


def bin_points(points: np.ndarray, k: int) -> BinnedMeasure:
    """k x k histogram over the unit box; a point on a bin boundary goes to the lower cell."""
    if k < 1:
        raise ValueError("k must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if np.any((pts < 0) | (pts > 1)):
        raise ValueError("points must lie in the unit box")
    idx = np.clip(np.ceil(pts * k).astype(np.int64) - 1, 0, k - 1)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (idx[:, 0], idx[:, 1]), 1)
    return BinnedMeasure(counts, len(pts))


def empirical_measures(config: SignedConfig, k: int) -> tuple[BinnedMeasure, BinnedMeasure]:
    """Per-sign binned counts; ``counts[i][j]`` covers x-bin i and y-bin j."""
    return bin_points(config.pos, k), bin_points(config.neg, k)


def uniformity_distance(m: BinnedMeasure) -> float:
    """Total variation between the binned empirical law and the uniform law on k^2 bins."""
    if m.total == 0:
        raise ValueError("empty measure: total = 0")
    return float(0.5 * np.abs(m.counts / m.total - 1.0 / m.k ** 2).sum())


def time_averaged_measures(trace, k: int) -> tuple[BinnedMeasure, BinnedMeasure]:
    """Accumulate the per-sign binned measures over a trace of configurations."""
    plus = BinnedMeasure(np.zeros((k, k), np.int64), 0)
    minus = BinnedMeasure(np.zeros((k, k), np.int64), 0)
    for cfg in trace:
        p, m = empirical_measures(_as_config(cfg), k)
        plus, minus = plus + p, minus + m
    return plus, minus


@dataclass(frozen=True)
class LocalWindowStats:
    center: tuple[float, float]
    window_side: float
    n_plus: int
    n_minus: int
    discrepancy: int
    log_r_sum: float
    retained_area: float


def _blowup_radii(pts: np.ndarray) -> np.ndarray:
    if len(pts) < 2:
        return np.ones(len(pts))
    dist, _ = nearest_neighbors(pts)
    return np.minimum(1.0, 0.5 * dist)


def _window_stats(pos_b, neg_b, r_pos, r_neg, c, R, side, tau):
    lo, hi = c - R / 2.0, c + R / 2.0

    def inside(p):
        return np.all((p >= lo) & (p < hi), axis=1)

    ip, im = inside(pos_b), inside(neg_b)
    log_r = float(np.log(np.maximum(r_pos[ip], tau)).sum() + np.log(np.maximum(r_neg[im], tau)).sum())
    ov = np.clip(np.minimum(hi, side) - np.maximum(lo, 0.0), 0.0, None)
    n_p, n_m = int(ip.sum()), int(im.sum())
    return LocalWindowStats((float(c[0]), float(c[1])), float(R), n_p, n_m, n_p - n_m, log_r,
                            float(ov[0] * ov[1] / R ** 2))


def local_window(config: SignedConfig, N: int, tag, R: float, tau: float = DEFAULT_TAU) -> LocalWindowStats:
    """Counts of the sqrt(N)-blown-up configuration in the square of side R centred at sqrt(N) tag.

    The window is half-open, [c - R/2, c + R/2)^2.  ``log_r_sum`` adds log max(r, tau)
    over charges in the window, r being the capped half nearest-neighbour distance
    of the blown-up configuration.  ``retained_area`` is the fraction of the window
    inside the blown-up box.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    s = math.sqrt(N)
    c = s * as_point(tag)
    if len(config) == 0:
        return _window_stats(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), np.zeros(0), c, R, s, tau)
    config.require_simple()
    r = _blowup_radii(s * config.points)
    return _window_stats(s * config.pos, s * config.neg, r[: config.n_pos], r[config.n_pos:],
                         c, R, s, tau)


@dataclass(frozen=True)
class WindowProfile:
    R: float
    mean_intensity_plus: float
    mean_intensity_minus: float
    mean_abs_discrepancy: float
    mean_logr_density: float
    se_intensity_plus: float
    se_intensity_minus: float
    se_abs_discrepancy: float
    se_logr_density: float
    mean_retained_area: float
    n_samples: int

    def csv_row(self) -> dict:
        return {"R": self.R, "mean_intensity_plus": self.mean_intensity_plus,
                "mean_intensity_minus": self.mean_intensity_minus,
                "mean_abs_discrepancy": self.mean_abs_discrepancy,
                "mean_logr_density": self.mean_logr_density, "n_samples": self.n_samples}


def _as_config(c) -> SignedConfig:
    if isinstance(c, SignedConfig):
        return c
    return SignedConfig(c[0], c[1])


def averaged_window_profile(trace, N: int, R: float, n_tags: int, seed: int = 0,
                            tau: float = DEFAULT_TAU) -> WindowProfile:
    """Average window statistics over uniform tags and the configurations of a trace.

    Each configuration gets its own tag stream spawned from ``seed``.  Standard
    errors treat the per-configuration tag averages as independent, so a
    correlated trace should be thinned first.
    """
    trace = list(trace)
    if not trace:
        raise ValueError("trace must be nonempty")
    if n_tags < 1:
        raise ValueError("n_tags must be positive")
    s = math.sqrt(N)
    streams = np.random.SeedSequence(seed).spawn(len(trace))
    per = np.empty((len(trace), 5))
    for t, (item, ss) in enumerate(zip(trace, streams)):
        cfg = _as_config(item)
        cfg.require_simple()
        tags = np.random.default_rng(ss).random((n_tags, 2))
        pos_b, neg_b = s * cfg.pos, s * cfg.neg
        r = _blowup_radii(np.vstack([pos_b, neg_b]))
        rows = [_window_stats(pos_b, neg_b, r[: cfg.n_pos], r[cfg.n_pos:], s * tag, R, s, tau)
                for tag in tags]
        per[t] = np.mean([[w.n_plus, w.n_minus, abs(w.discrepancy), w.log_r_sum, w.retained_area]
                          for w in rows], axis=0)
    per[:, [0, 1, 3]] /= R ** 2
    mean = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(len(per)) if len(per) > 1 else np.zeros(5)
    return WindowProfile(float(R), *map(float, mean[[0, 1, 2, 3]]), *map(float, se[[0, 1, 2, 3]]),
                         float(mean[4]), len(trace))


def iid_trace(N: int, n: int, seed: int = 0) -> list[SignedConfig]:
    """n independent configurations of N uniform charges of each sign."""
    rng = np.random.default_rng(seed)
    return [SignedConfig(rng.random((N, 2)), rng.random((N, 2))) for _ in range(n)]
