"""Generator matrices, reaction-network state spaces and CTMC transformations."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import CapacityError, ConfigError, NumericalError

ROW_SUM_TOL = 1e-12
MAX_STATES = 2_000_000


class GeneratorMatrix:
    """Sparse CTMC rate matrix with zero row sums.

    Only off-diagonal rates are stored explicitly; the diagonal is always
    recomputed as the negated row sum, so the row-sum invariant holds by
    construction. Instances are treated as immutable.
    """

    def __init__(self, offdiag):
        off = sp.csr_matrix(offdiag, dtype=float)
        if off.shape[0] != off.shape[1]:
            raise ConfigError(f"generator must be square, got {off.shape}")
        off = (off - sp.diags(off.diagonal())).tocsr()
        off.eliminate_zeros()
        off.sum_duplicates()
        off.sort_indices()
        if off.nnz and off.data.min() < 0:
            raise ConfigError("off-diagonal rates must be non-negative")
        if off.nnz and not np.all(np.isfinite(off.data)):
            raise ConfigError("rates must be finite")
        off.data.flags.writeable = False
        self._off = off
        self._exit = np.asarray(off.sum(axis=1)).ravel()
        self._exit.flags.writeable = False

    @classmethod
    def from_rates(cls, n_states, rows, cols, rates):
        """Build from coordinate lists; duplicate (i, j) entries are summed."""
        n_states = int(n_states)
        if n_states < 1:
            raise ConfigError("n_states must be positive")
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        rates = np.asarray(rates, dtype=float)
        if rows.size and (rows.min() < 0 or cols.min() < 0
                          or rows.max() >= n_states or cols.max() >= n_states):
            raise ConfigError("state index outside [0, n_states)")
        off = sp.coo_matrix((rates, (rows, cols)), shape=(n_states, n_states))
        return cls(off)

    @classmethod
    def from_dense(cls, q):
        q = np.array(q, dtype=float)
        np.fill_diagonal(q, 0.0)
        return cls(q)

    @property
    def n_states(self) -> int:
        return self._off.shape[0]

    @property
    def offdiag(self) -> sp.csr_matrix:
        """Off-diagonal rates as a read-only CSR matrix."""
        return self._off

    @property
    def exit_rates(self) -> np.ndarray:
        """Total outgoing rate per state, i.e. ``-Q_ii``."""
        return self._exit

    @property
    def nnz(self) -> int:
        return self._off.nnz

    def diagonal(self) -> np.ndarray:
        return -self._exit

    def tocsr(self) -> sp.csr_matrix:
        """Full generator, diagonal included."""
        return (self._off - sp.diags(self._exit)).tocsr()

    def toarray(self) -> np.ndarray:
        return self.tocsr().toarray()

    def edges(self):
        """Off-diagonal entries in row-major order as ``(rows, cols, rates)``."""
        coo = self._off.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def restrict(self, members) -> "GeneratorMatrix":
        """Generator on ``members`` with transitions leaving the set dropped."""
        members = np.asarray(members, dtype=np.int64)
        return GeneratorMatrix(self._off[members][:, members])

    def __matmul__(self, other):
        return self.tocsr() @ other

    def __repr__(self):
        return f"GeneratorMatrix(n_states={self.n_states}, nnz={self.nnz})"


@dataclass(frozen=True)
class StateLabel:
    coords: tuple
    name: str | None = None

    def __str__(self):
        body = ",".join(str(c) for c in self.coords)
        return f"{self.name}({body})" if self.name else f"({body})"


@dataclass(frozen=True)
class Reaction:
    """Mass-action reaction given by reactant/product stoichiometry vectors."""

    reactants: tuple
    products: tuple
    rate: float

    @property
    def order(self) -> int:
        return int(sum(self.reactants))


@dataclass(frozen=True)
class ReactionNetwork:
    """A population CTMC description.

    ``volume`` is the divisor used for zeroth- and second-order propensities;
    it defaults to ``cap``. ``total``, when set, restricts the state space to
    count vectors summing to it (closed populations such as SIRS).
    """

    species: tuple
    reactions: tuple
    cap: int
    volume: float | None = None
    total: int | None = None

    def __post_init__(self):
        m = len(self.species)
        if m == 0:
            raise ConfigError("network needs at least one species")
        if int(self.cap) < 1:
            raise ConfigError("cap must be >= 1")
        for r in self.reactions:
            if len(r.reactants) != m or len(r.products) != m:
                raise ConfigError("stoichiometry length must equal species count")
            if any(int(u) != u or u < 0 for u in (*r.reactants, *r.products)):
                raise ConfigError("stoichiometries must be non-negative integers")
            if not r.rate > 0:
                raise ConfigError(f"rate constants must be positive, got {r.rate}")

    @property
    def scale(self) -> float:
        return float(self.cap if self.volume is None else self.volume)

    @classmethod
    def from_dict(cls, species, reactions, cap, volume=None, total=None):
        """Build from name-keyed stoichiometry mappings.

        ``reactions`` is a sequence of mappings with keys ``reactants``,
        ``products`` (each a ``{species: count}`` mapping) and ``rate``.
        """
        species = tuple(species)
        index = {s: i for i, s in enumerate(species)}

        def vec(stoich: Mapping[str, int]):
            v = [0] * len(species)
            for name, count in (stoich or {}).items():
                if name not in index:
                    raise ConfigError(f"unknown species {name!r}")
                v[index[name]] = int(count)
            return tuple(v)

        rxns = tuple(
            Reaction(vec(r.get("reactants")), vec(r.get("products")), float(r["rate"]))
            for r in reactions
        )
        return cls(species, rxns, int(cap), volume, total)


def propensity(reaction: Reaction, counts: np.ndarray, scale: float) -> np.ndarray:
    """Vectorised mass-action propensity over rows of ``counts``.

    Zeroth order gives ``k/scale``, first order ``k*n``, second order
    ``k*n_i*n_j/scale`` (``k*n*(n-1)/scale`` for homodimers), and higher orders
    ``k * prod(falling factorials) / scale**(order-1)``.
    """
    counts = np.asarray(counts, dtype=float)
    out = np.full(counts.shape[0], reaction.rate)
    for i, u in enumerate(reaction.reactants):
        for j in range(int(u)):
            out *= counts[:, i] - j
    order = reaction.order
    if order == 0:
        out /= scale
    elif order > 1:
        out /= scale ** (order - 1)
    return out


def enumerate_states(net: ReactionNetwork, max_states: int = MAX_STATES) -> np.ndarray:
    """All count vectors in ``[0, cap]^m`` (lexicographic), optionally on a simplex."""
    m = len(net.species)
    box = (net.cap + 1) ** m
    if box > max_states:
        raise CapacityError(
            f"state space (cap+1)^m = {box} exceeds limit {max_states}"
        )
    states = np.array(list(itertools.product(range(net.cap + 1), repeat=m)),
                      dtype=np.int64).reshape(-1, m)
    if net.total is not None:
        states = states[states.sum(axis=1) == net.total]
        if states.shape[0] == 0:
            raise ConfigError(f"no states with total {net.total} under cap {net.cap}")
    return states


def build_reaction_ctmc(net: ReactionNetwork, max_states: int = MAX_STATES):
    """Enumerate the truncated state space of ``net`` and its generator.

    Reactions whose products would exceed the cap are dropped in that state
    (reflecting boundary). Returns ``(GeneratorMatrix, list[StateLabel])``.
    """
    states = enumerate_states(net, max_states)
    n, m = states.shape
    radix = (net.cap + 1) ** np.arange(m - 1, -1, -1)
    lookup = np.full((net.cap + 1) ** m, -1, dtype=np.int64)
    lookup[states @ radix] = np.arange(n)

    rows, cols, rates = [], [], []
    for r in net.reactions:
        u = np.asarray(r.reactants)
        change = np.asarray(r.products) - u
        if not change.any():
            continue
        target = states + change
        ok = np.all(states >= u, axis=1) & np.all(target <= net.cap, axis=1)
        ok &= np.all(target >= 0, axis=1)
        src = np.nonzero(ok)[0]
        dst = lookup[target[src] @ radix]
        keep = dst >= 0
        src, dst = src[keep], dst[keep]
        rate = propensity(r, states[src], net.scale)
        pos = rate > 0
        rows.append(src[pos])
        cols.append(dst[pos])
        rates.append(rate[pos])
    if rows:
        q = GeneratorMatrix.from_rates(n, np.concatenate(rows), np.concatenate(cols),
                                       np.concatenate(rates))
    else:
        q = GeneratorMatrix.from_rates(n, [], [], [])
    labels = [StateLabel(tuple(int(c) for c in s)) for s in states]
    return q, labels


def perturb_rates(q: GeneratorMatrix, sigma: float, seed: int) -> GeneratorMatrix:
    """Add ``|eta|``, ``eta ~ N(0, sigma^2)``, to every existing transition rate."""
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    rows, cols, rates = q.edges()
    rng = np.random.default_rng(seed)
    eta = rng.normal(0.0, sigma, size=rates.size) if sigma > 0 else np.zeros(rates.size)
    return GeneratorMatrix.from_rates(q.n_states, rows, cols, rates + np.abs(eta))


def _n_weak_components(n, rows, cols) -> int:
    adj = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    return connected_components(adj, directed=True, connection="weak")[0]


def remove_transitions(q: GeneratorMatrix, p_remove: float, seed: int,
                       max_attempts: int = 100) -> GeneratorMatrix:
    """Randomly delete transitions without creating absorbing or isolated states.

    Each edge is proposed for removal with probability ``p_remove``. A proposal
    is rejected (the edge kept) if it would leave its source with no outgoing
    transition or its target with no incoming one. A whole pattern is redrawn
    if it splits the graph into more weakly connected components than before.
    """
    if not 0 <= p_remove < 1:
        raise ConfigError("p_remove must lie in [0, 1)")
    rows, cols, rates = q.edges()
    if p_remove == 0 or rates.size == 0:
        return q
    n = q.n_states
    base_components = _n_weak_components(n, rows, cols)
    out0 = np.bincount(rows, minlength=n)
    in0 = np.bincount(cols, minlength=n)
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        propose = rng.random(rates.size) < p_remove
        out_deg = out0.copy()
        in_deg = in0.copy()
        keep = np.ones(rates.size, dtype=bool)
        for e in np.nonzero(propose)[0]:
            i, j = rows[e], cols[e]
            if out_deg[i] > 1 and in_deg[j] > 1:
                keep[e] = False
                out_deg[i] -= 1
                in_deg[j] -= 1
        if _n_weak_components(n, rows[keep], cols[keep]) <= base_components:
            return GeneratorMatrix.from_rates(n, rows[keep], cols[keep], rates[keep])
    raise NumericalError(
        f"no valid removal pattern found after {max_attempts} attempts"
    )


@dataclass(frozen=True)
class StateSubset:
    root: int
    radius: int
    members: tuple
    index_map: dict = field(repr=False)

    def local(self, state: int) -> int:
        return self.index_map[state]


def undirected_adjacency(q: GeneratorMatrix) -> sp.csr_matrix:
    off = q.offdiag
    adj = (off + off.T).tocsr()
    adj.data[:] = 1.0
    return adj


def extract_subset(q: GeneratorMatrix, root: int, radius: int):
    """States within ``radius`` undirected hops of ``root`` and their generator."""
    if not 0 <= root < q.n_states:
        raise ConfigError(f"root {root} outside [0, {q.n_states})")
    if radius < 0:
        raise ConfigError("radius must be >= 0")
    adj = undirected_adjacency(q)
    dist = {root: 0}
    queue = deque([root])
    while queue:
        s = queue.popleft()
        if dist[s] == radius:
            continue
        for t in adj.indices[adj.indptr[s]:adj.indptr[s + 1]]:
            t = int(t)
            if t not in dist:
                dist[t] = dist[s] + 1
                queue.append(t)
    members = tuple(sorted(dist))
    subset = StateSubset(root, radius, members, {s: k for k, s in enumerate(members)})
    return subset, q.restrict(members)


def _coords(y) -> np.ndarray:
    return np.asarray(getattr(y, "coords", y), dtype=float)


def drift_observations(q: GeneratorMatrix, y) -> np.ndarray:
    """Per-state drift ``R_i = sum_{j != i} (Y_j - Y_i) Q_ij``."""
    y = _coords(y)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != q.n_states:
        raise ConfigError(f"embedding has {y.shape[0]} rows, generator {q.n_states}")
    return q.offdiag @ y - q.exit_rates[:, None] * y


def default_eps(q: GeneratorMatrix) -> float:
    """Half the largest admissible uniformisation step."""
    qmax = float(q.exit_rates.max(initial=0.0))
    return 0.5 / qmax if qmax > 0 else 1.0


def uniformise(q: GeneratorMatrix, eps: float | None = None) -> sp.csr_matrix:
    """Similarity matrix ``W = D (I + eps Q)`` with ``D`` making ``W_ii = 1``."""
    qmax = float(q.exit_rates.max(initial=0.0))
    if eps is None:
        eps = default_eps(q)
    if not eps > 0 or (qmax > 0 and not eps < 1.0 / qmax):
        raise ConfigError(
            f"eps={eps} must satisfy 0 < eps < 1/max|Q_ii| with max|Q_ii|={qmax}"
        )
    diag = 1.0 - eps * q.exit_rates
    p = (eps * q.offdiag + sp.diags(diag)).tocsr()
    w = (sp.diags(1.0 / diag) @ p).tocsr()
    # (1/d) * d can miss 1 by an ulp; the definition of D makes it exactly one
    w.setdiag(1.0)
    return w


def label_index(labels: Sequence[StateLabel]) -> dict:
    return {lab.coords: k for k, lab in enumerate(labels)}
