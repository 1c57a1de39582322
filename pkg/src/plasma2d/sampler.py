"""Metropolis sampling of the Gibbs measure exp(-(beta/2) W) on the unit box.

Three symmetric proposals are mixed: a single-charge displacement uniform in a
square of half-side ``proposal_scale``, a rigid translation of a Gale-Shapley
matched +/- pair, and a uniform resample of one charge.  Proposals leaving the
box are rejected, which is the Metropolis chain for the density restricted to
the box.  A pair translation is accepted only if the pair is still matched
afterwards, so that the reverse move selects the same pair and the proposal
stays symmetric.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from plasma2d import _chain
from plasma2d.geometry import SignedConfig

MOVE_NAMES = ("single", "dipole", "resample")


@dataclass(frozen=True)
class SimParams:
    N: int
    beta: float
    proposal_scale: float | None = None
    move_mix: tuple[float, float, float] = (0.6, 0.3, 0.1)
    seed: int = 0
    burn_in: int = 0
    thin: int = 1
    cross_weight: float = 1.0
    resync_every: int = 10_000

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if not (0.0 <= self.beta < 2.0):
            raise ValueError(f"beta={self.beta} out of range: need 0 <= β < 2")
        if self.proposal_scale is None:
            object.__setattr__(self, "proposal_scale", 0.25 / math.sqrt(self.N))
        if not self.proposal_scale > 0:
            raise ValueError("proposal_scale must be positive")
        mix = tuple(float(m) for m in self.move_mix)
        if len(mix) != 3 or min(mix) < 0 or abs(sum(mix) - 1.0) > 1e-12:
            raise ValueError("move_mix must be 3 nonnegative probabilities summing to 1")
        object.__setattr__(self, "move_mix", mix)
        if self.burn_in < 0 or self.thin < 1 or self.resync_every < 0:
            raise ValueError("burn_in >= 0, thin >= 1 and resync_every >= 0 required")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ChainState:
    """Mutable chain state; ``pos`` and ``neg`` are owned (N, 2) arrays."""

    pos: np.ndarray
    neg: np.ndarray
    energy: float
    rng: np.random.Generator
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(3, np.int64))
    proposed: np.ndarray = field(default_factory=lambda: np.zeros(3, np.int64))
    steps: int = 0
    _sigma: np.ndarray = field(default=None, repr=False)
    _sigma_ok: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._sigma is None:
            self._sigma = np.zeros(len(self.pos), np.int64)
            self._sigma_ok = np.zeros(1, np.bool_)

    @property
    def config(self) -> SignedConfig:
        return SignedConfig(self.pos, self.neg)

    def recompute_energy(self, cross_weight: float = 1.0) -> float:
        return float(_chain.full_energy(self.pos, self.neg, cross_weight))

    def acceptance(self) -> dict:
        return {name: {"accepted": int(a), "proposed": int(p),
                       "rate": float(a / p) if p else float("nan")}
                for name, a, p in zip(MOVE_NAMES, self.accepted, self.proposed)}


def init_chain(params: SimParams) -> ChainState:
    """2N i.i.d. uniform charges in the box, redrawn on an exact coincidence."""
    rng = np.random.default_rng(params.seed)
    while True:
        pts = rng.random((2 * params.N, 2))
        if len(np.unique(pts, axis=0)) == len(pts):
            break
    pos, neg = pts[: params.N].copy(), pts[params.N:].copy()
    return ChainState(pos, neg, float(_chain.full_energy(pos, neg, params.cross_weight)), rng)


def acceptance_probability(beta: float, w_from: float, w_to: float) -> float:
    """Metropolis acceptance min(1, exp(-(beta/2)(W_to - W_from)))."""
    return float(_chain.accept_prob(beta, w_to - w_from))


def advance(state: ChainState, params: SimParams, n_steps: int) -> ChainState:
    """Run ``n_steps`` Metropolis steps in place, re-syncing the cached energy periodically."""
    cum = np.cumsum(params.move_mix)
    done = 0
    while done < n_steps:
        block = n_steps - done
        if params.resync_every:
            block = min(block, params.resync_every - state.steps % params.resync_every)
        u = state.rng.random((block, _chain.UNIFORMS_PER_STEP))
        state.energy = _chain.run_steps(state.pos, state.neg, state.energy, u, params.beta,
                                        params.proposal_scale, cum, params.cross_weight,
                                        state.accepted, state.proposed,
                                        state._sigma, state._sigma_ok)
        done += block
        state.steps += block
        if params.resync_every and state.steps % params.resync_every == 0:
            state.energy = state.recompute_energy(params.cross_weight)
    return state


def metropolis_step(state: ChainState, params: SimParams) -> ChainState:
    return advance(state, params, 1)


Observer = Callable[[ChainState], float]


@dataclass
class ChainRecord:
    energy: np.ndarray
    traces: dict[str, np.ndarray]
    acceptance: dict
    params: SimParams
    wall_time: float
    configs: list | None = None

    def to_csv(self) -> str:
        names = list(self.traces)
        lines = [",".join(["step", "W_N"] + names)]
        for k in range(len(self.energy)):
            row = [str(k), repr(float(self.energy[k]))]
            row += [repr(float(self.traces[n][k])) for n in names]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def metadata(self) -> dict:
        return {"params": self.params.to_dict(), "acceptance": self.acceptance,
                "wall_time": self.wall_time}


def _named(observers) -> dict[str, Observer]:
    if observers is None:
        return {}
    if isinstance(observers, Mapping):
        return dict(observers)
    return {getattr(f, "__name__", f"obs{i}"): f for i, f in enumerate(observers)}


def run_chain(params: SimParams, n_samples: int, observers=None,
              keep_configs: bool = False) -> ChainRecord:
    """Discard ``burn_in`` steps, then record every ``thin``-th state ``n_samples`` times."""
    if n_samples < 0:
        raise ValueError("n_samples must be nonnegative")
    obs = _named(observers)
    t0 = time.perf_counter()
    state = init_chain(params)
    advance(state, params, params.burn_in)
    energy = np.empty(n_samples)
    traces = {name: np.empty(n_samples) for name in obs}
    configs = [] if keep_configs else None
    for k in range(n_samples):
        advance(state, params, params.thin)
        energy[k] = state.energy
        for name, f in obs.items():
            traces[name][k] = f(state)
        if keep_configs:
            configs.append((state.pos.copy(), state.neg.copy()))
    return ChainRecord(energy, traces, state.acceptance(), params,
                       time.perf_counter() - t0, configs)


def run_chains(params: Sequence[SimParams], n_samples: int, observers=None,
               keep_configs: bool = False, workers: int = 1) -> list[ChainRecord]:
    """Independent chains; results are returned in input order whatever ``workers`` is."""
    job = lambda p: run_chain(p, n_samples, observers, keep_configs)
    if workers <= 1:
        return [job(p) for p in params]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(job, params))


def effective_sample_size(x) -> float:
    """ESS from the initial positive sequence of autocorrelations."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    y = x - x.mean()
    var = y @ y / n
    if var == 0:
        return float(n)
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = 1.0
    for k in range(1, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return float(n / tau)


def split_chain_check(x) -> tuple[float, float]:
    """(|mean1 - mean2|, combined standard error) of the two halves, ESS-corrected."""
    x = np.asarray(x, dtype=float)
    a, b = x[: len(x) // 2], x[len(x) // 2:]
    se = math.sqrt(a.var(ddof=1) / effective_sample_size(a) + b.var(ddof=1) / effective_sample_size(b))
    return abs(a.mean() - b.mean()), se
