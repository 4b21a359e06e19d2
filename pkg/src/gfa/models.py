"""Reference models: birth-death, Lotka-Volterra, SIRS, genetic switch, grid walks."""

from __future__ import annotations

import itertools

import numpy as np

from .ctmc import GeneratorMatrix, Reaction, ReactionNetwork, StateLabel, build_reaction_ctmc
from .errors import CapacityError, ConfigError


def birth_death_network(N=30, birth=10.0, death=0.5) -> ReactionNetwork:
    """Two independent birth-death processes; birth happens at ``birth/N``."""
    return ReactionNetwork(
        species=("A", "B"),
        reactions=(
            Reaction((0, 0), (1, 0), birth),
            Reaction((1, 0), (0, 0), death),
            Reaction((0, 0), (0, 1), birth),
            Reaction((0, 1), (0, 0), death),
        ),
        cap=int(N),
    )


def lotka_volterra_network(N=30, b=0.5, c=0.1, d=1 / 3, volume=None) -> ReactionNetwork:
    """Prey ``R`` and predator ``F``: R -> 2R, R + F -> 2F, F -> 0."""
    return ReactionNetwork(
        species=("R", "F"),
        reactions=(
            Reaction((1, 0), (2, 0), b),
            Reaction((1, 1), (0, 2), c),
            Reaction((0, 1), (0, 0), d),
        ),
        cap=int(N),
        volume=volume,
    )


def sirs_network(N=30, k_i=0.1, k_r=0.05, k_s=0.01) -> ReactionNetwork:
    """Closed SIRS population of size ``N``: S + I -> 2I, I -> R, R -> S."""
    return ReactionNetwork(
        species=("S", "I", "R"),
        reactions=(
            Reaction((1, 1, 0), (0, 2, 0), k_i),
            Reaction((0, 1, 0), (0, 0, 1), k_r),
            Reaction((0, 0, 1), (1, 0, 0), k_s),
        ),
        cap=int(N),
        total=int(N),
    )


def build_genetic_switch(switch_rate=1e-4, cap_A=40, active_rate=1.0,
                         inactive_rate=0.1, degradation=0.05):
    """Gene toggling between an active (P) and inactive (P̄) promoter.

    States are ``(n_P, n_A)`` with ``n_P`` in {0, 1}; ``n_P = 1`` is the
    active mode. Ordering is lexicographic, mode flag most significant.
    """
    if not switch_rate > 0:
        raise ConfigError("switch_rate must be positive")
    cap_A = int(cap_A)
    if cap_A < 1:
        raise ConfigError("cap_A must be >= 1")
    n_A = cap_A + 1

    def idx(mode, a):
        return mode * n_A + a

    rows, cols, rates = [], [], []
    for mode in (0, 1):
        transcription = active_rate if mode == 1 else inactive_rate
        for a in range(n_A):
            rows.append(idx(mode, a)); cols.append(idx(1 - mode, a)); rates.append(switch_rate)
            if a < cap_A:
                rows.append(idx(mode, a)); cols.append(idx(mode, a + 1)); rates.append(transcription)
            if a > 0:
                rows.append(idx(mode, a)); cols.append(idx(mode, a - 1)); rates.append(degradation * a)
    q = GeneratorMatrix.from_rates(2 * n_A, rows, cols, rates)
    labels = [StateLabel((mode, a), "P" if mode == 1 else "P̄")
              for mode in (0, 1) for a in range(n_A)]
    return q, labels


def grid_walk(shape, rate=1.0, max_states=2_000_000):
    """Symmetric nearest-neighbour walk on a rectangular grid (no wraparound)."""
    shape = tuple(int(n) for n in shape)
    if any(n < 1 for n in shape):
        raise ConfigError("grid sides must be >= 1")
    n = int(np.prod(shape))
    if n > max_states:
        raise CapacityError(f"grid with {n} states exceeds limit {max_states}")
    ids = np.arange(n).reshape(shape)
    rows, cols = [], []
    for axis in range(len(shape)):
        lo = np.take(ids, np.arange(shape[axis] - 1), axis=axis).ravel()
        hi = np.take(ids, np.arange(1, shape[axis]), axis=axis).ravel()
        rows += [lo, hi]
        cols += [hi, lo]
    rows = np.concatenate(rows) if rows else np.array([], dtype=int)
    cols = np.concatenate(cols) if cols else np.array([], dtype=int)
    q = GeneratorMatrix.from_rates(n, rows, cols, np.full(rows.size, float(rate)))
    labels = [StateLabel(c) for c in itertools.product(*(range(s) for s in shape))]
    return q, labels


BUILDERS = {
    "birth_death": lambda **kw: build_reaction_ctmc(birth_death_network(**kw)),
    "lotka_volterra": lambda **kw: build_reaction_ctmc(lotka_volterra_network(**kw)),
    "sirs": lambda **kw: build_reaction_ctmc(sirs_network(**kw)),
    "genetic_switch": build_genetic_switch,
    "grid": grid_walk,
}

NETWORKS = {
    "birth_death": birth_death_network,
    "lotka_volterra": lotka_volterra_network,
    "sirs": sirs_network,
}

SPECIES = {
    "birth_death": ("A", "B"),
    "lotka_volterra": ("R", "F"),
    "sirs": ("S", "I", "R"),
    "genetic_switch": ("P", "A"),
}
