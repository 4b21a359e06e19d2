"""Exact path sampling (direct-method SSA), ensemble projection and empirical FPTs."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .ctmc import GeneratorMatrix
from .errors import ConfigError
from .fpt import FptCdf

DEFAULT_PATHS = 1000
FAST_PATHS = 200
_BATCH = 512


@dataclass(frozen=True)
class SsaPath:
    """Right-continuous sample path.

    ``states[k]`` is occupied on ``[jump_times[k], jump_times[k + 1])``; the
    first entry of ``jump_times`` is the start time 0 and the last state is
    held until ``t_end``. ``absorbed`` marks paths that stopped in a state
    with no outgoing transitions, which are then valid for all later times.
    """

    jump_times: np.ndarray
    states: np.ndarray
    seed: int
    t_end: float
    stream: int | None = None
    absorbed: bool = False

    @property
    def n_jumps(self) -> int:
        return len(self.states) - 1

    @property
    def horizon(self) -> float:
        return np.inf if self.absorbed else self.t_end

    def state_at(self, t):
        """State index occupied at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise ConfigError(f"time outside the simulated horizon [0, {self.t_end}]")
        pos = np.searchsorted(self.jump_times, t, side="right") - 1
        return self.states[pos]


@dataclass(frozen=True)
class EnsembleSummary:
    t_grid: np.ndarray
    mean_coords: np.ndarray
    std_coords: np.ndarray
    n_paths: int

    @property
    def standard_error(self) -> np.ndarray:
        return self.std_coords / np.sqrt(self.n_paths)


class _JumpTables:
    """Per-state cumulative jump tables held as Python lists for the hot loop."""

    def __init__(self, q: GeneratorMatrix):
        off = q.offdiag
        indptr, indices, data = off.indptr, off.indices, off.data
        self.exit = q.exit_rates.tolist()
        self.targets = []
        self.cumulative = []
        for i in range(q.n_states):
            lo, hi = indptr[i], indptr[i + 1]
            self.targets.append(indices[lo:hi].tolist())
            self.cumulative.append(np.cumsum(data[lo:hi]).tolist())


def _rng(seed: int, stream: int | None) -> np.random.Generator:
    if stream is None:
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _run(tables: _JumpTables, s0: int, t_end: float, rng, stop=None):
    exit_rates, targets, cumulative = tables.exit, tables.targets, tables.cumulative
    times, states = [0.0], [s0]
    t, s = 0.0, s0
    absorbed = False
    buf, k = None, _BATCH
    while True:
        rate = exit_rates[s]
        if rate <= 0.0 or (stop is not None and stop[s]):
            absorbed = rate <= 0.0
            break
        if k >= _BATCH:
            buf = rng.random(2 * _BATCH).tolist()
            k = 0
        u1, u2 = buf[2 * k], buf[2 * k + 1]
        k += 1
        t -= math.log1p(-u1) / rate
        if t > t_end:
            break
        cum = cumulative[s]
        j = bisect_right(cum, u2 * cum[-1])
        s = targets[s][min(j, len(cum) - 1)]
        times.append(t)
        states.append(s)
    return times, states, absorbed


def _check_start(q: GeneratorMatrix, s0, t_end):
    if not 0 <= int(s0) < q.n_states:
        raise ConfigError(f"initial state {s0} outside [0, {q.n_states})")
    if not t_end > 0:
        raise ConfigError("t_end must be positive")


def ssa_simulate(q: GeneratorMatrix, s0: int, t_end: float, seed: int,
                 stream: int | None = None, _tables=None) -> SsaPath:
    """Simulate one path with exponential holding times and jump-matrix moves.

    ``stream`` selects an independent child stream of ``seed``; ensembles use
    one stream per member so results do not depend on execution order.
    """
    _check_start(q, s0, t_end)
    tables = _tables or _JumpTables(q)
    times, states, absorbed = _run(tables, int(s0), float(t_end), _rng(seed, stream))
    return SsaPath(np.array(times), np.array(states, dtype=np.int64), int(seed),
                   float(t_end), stream, absorbed)


def simulate_ensemble(q: GeneratorMatrix, s0: int, t_end: float, n_paths: int,
                      seed: int) -> list:
    """``n_paths`` paths; member ``i`` uses child stream ``i`` of ``seed``."""
    if n_paths < 1:
        raise ConfigError("n_paths must be >= 1")
    _check_start(q, s0, t_end)
    tables = _JumpTables(q)
    return [ssa_simulate(q, s0, t_end, seed, i, tables) for i in range(n_paths)]


def occupancy(paths, t_grid) -> np.ndarray:
    """State index of every path at every grid time (paths x times)."""
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) <= 0):
        raise ConfigError("time grid must be strictly increasing")
    if not paths:
        raise ConfigError("need at least one path")
    for p in paths:
        if t[-1] > p.horizon or t[0] < 0:
            raise ConfigError(
                f"grid end {t[-1]} exceeds the horizon {p.t_end} of a simulated path"
            )
    return np.stack([p.state_at(t) for p in paths])


def project_ensemble(paths, y, t_grid) -> EnsembleSummary:
    """Mean and standard deviation of embedded positions across paths."""
    coords = np.asarray(getattr(y, "coords", y), dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    occ = occupancy(paths, t_grid)
    pos = coords[occ]
    mean = pos.mean(axis=0)
    std = pos.std(axis=0, ddof=1) if len(paths) > 1 else np.zeros_like(mean)
    return EnsembleSummary(np.asarray(t_grid, dtype=float), mean, std, len(paths))


def ssa_fpt(q: GeneratorMatrix, s0: int, target, t_end: float, n_paths: int,
            seed: int) -> FptCdf:
    """Empirical first-passage CDF into ``target`` with those states made absorbing.

    Paths that have not entered the target by ``t_end`` are censored.
    """
    mask = np.zeros(q.n_states, dtype=bool)
    mask[np.asarray(sorted(target), dtype=np.int64)] = True
    if not mask.any():
        raise ConfigError("target set must be non-empty")
    if mask[int(s0)]:
        raise ConfigError("initial state lies inside the target set")
    if n_paths < 1:
        raise ConfigError("n_paths must be >= 1")
    _check_start(q, s0, t_end)
    tables = _JumpTables(q)
    stop = mask.tolist()
    hits = []
    for i in range(n_paths):
        times, states, _ = _run(tables, int(s0), float(t_end), _rng(seed, i), stop)
        if stop[states[-1]]:
            hits.append(times[-1])
    return FptCdf.empirical(hits, n_paths - len(hits))
