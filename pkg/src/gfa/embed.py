"""Spectral state embeddings: directed diffusion maps and Laplacian eigenmaps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .ctmc import GeneratorMatrix, undirected_adjacency
from .errors import ConfigError, ConvergenceError, DisconnectedGraphError

DENSE_LIMIT = 2000
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class Embedding:
    """State coordinates ``coords`` (N x K) plus the spectrum that produced them.

    ``eigenvalues`` are the K retained Laplacian-type eigenvalues, ascending,
    with the trivial zero excluded.
    """

    coords: np.ndarray
    eigenvalues: np.ndarray
    method: str
    eps: float | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 2:
            raise ConfigError("embedding coordinates must be a 2-d array")
        if not np.all(np.isfinite(coords)):
            raise ConfigError("embedding coordinates must be finite")
        if coords.shape[1] >= coords.shape[0]:
            raise ConfigError("embedding dimension K must be smaller than N")
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "eigenvalues", np.asarray(self.eigenvalues, dtype=float))

    @property
    def n_states(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def bbox_diagonal(self) -> float:
        span = self.coords.max(axis=0) - self.coords.min(axis=0)
        return float(np.linalg.norm(span))


@dataclass(frozen=True)
class SymmetricOperator:
    matrix: object
    kind: str

    def __post_init__(self):
        a = self.matrix
        if a.shape[0] != a.shape[1]:
            raise ConfigError("operator must be square")
        asym = abs(a - a.T)
        asym = asym.max() if sp.issparse(asym) else np.max(asym, initial=0.0)
        if asym > 1e-10:
            raise ConfigError(f"operator not symmetric (max |A - A^T| = {asym:.3g})")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _inf_norm(a) -> float:
    return float(abs(a).sum(axis=1).max())


def eigensolve_symmetric(op: SymmetricOperator, m: int, which: str = "smallest"):
    """``m`` extreme eigenpairs of a symmetric operator.

    Returns ``(values, vectors)`` ordered ascending for ``"smallest"`` and
    descending for ``"largest"``. Vectors are unit-norm with their
    largest-magnitude entry positive. Dense LAPACK is used up to
    ``DENSE_LIMIT`` states, Lanczos (ARPACK) above; both paths must meet a
    relative residual of ``RESIDUAL_TOL``.
    """
    if not 1 <= m < op.n:
        raise ConfigError(f"need 1 <= m < N, got m={m}, N={op.n}")
    return _extreme_pairs(op, m, which)


def _extreme_pairs(op: SymmetricOperator, m: int, which: str):
    """Worker for :func:`eigensolve_symmetric`; also accepts ``m == N`` (dense only)."""
    n = op.n
    if which not in ("smallest", "largest"):
        raise ConfigError(f"which must be 'smallest' or 'largest', got {which!r}")
    a = op.matrix
    if n <= DENSE_LIMIT or m == n:
        dense = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
        dense = (dense + dense.T) / 2
        idx = [0, m - 1] if which == "smallest" else [n - m, n - 1]
        vals, vecs = la.eigh(dense, subset_by_index=idx)
    else:
        a = sp.csr_matrix(a)
        try:
            if which == "smallest":
                shift = -1e-6 * max(_inf_norm(a), 1.0)
                vals, vecs = spla.eigsh(a, k=m, sigma=shift, which="LM", tol=1e-12)
            else:
                vals, vecs = spla.eigsh(a, k=m, which="LA", tol=1e-12, maxiter=20 * n)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos did not converge: {exc}") from exc
    order = np.argsort(vals)
    if which == "largest":
        order = order[::-1]
    vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    norm = max(_inf_norm(a), np.finfo(float).tiny)
    resid = np.linalg.norm(a @ vecs - vecs * vals, axis=0) / norm
    if resid.max() > RESIDUAL_TOL:
        raise ConvergenceError(
            f"eigenpair residual {resid.max():.3g} exceeds {RESIDUAL_TOL}"
        )
    return vals, _fix_signs(vecs)


def _check_connected(adj):
    n_comp = connected_components(adj, directed=False)[0]
    if n_comp > 1:
        raise DisconnectedGraphError(n_comp)


def _to_matrix(w):
    if sp.issparse(w):
        w = sp.csr_matrix(w, dtype=float)
        return w if w.shape[0] > DENSE_LIMIT else w.toarray()
    return np.asarray(w, dtype=float)


def diffusion_operator(w) -> SymmetricOperator:
    """Symmetric normalised operator ``H_ss^(1)`` of a similarity matrix."""
    w = _to_matrix(w)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ConfigError("similarity matrix must be square")
    if (w.min() if not sp.issparse(w) else w.data.min(initial=0.0)) < 0:
        raise ConfigError("similarity matrix must be non-negative")
    diag = w.diagonal()
    if np.max(np.abs(diag - 1.0)) > 1e-12:
        raise ConfigError("similarity matrix must have unit diagonal")
    s = (w + w.T) / 2
    _check_connected(s)
    p_inv = 1.0 / np.asarray(s.sum(axis=1)).ravel()
    if sp.issparse(s):
        v = sp.diags(p_inv) @ s @ sp.diags(p_inv)
    else:
        v = p_inv[:, None] * s * p_inv[None, :]
    d_isqrt = 1.0 / np.sqrt(np.asarray(v.sum(axis=1)).ravel())
    if sp.issparse(v):
        h = (sp.diags(d_isqrt) @ v @ sp.diags(d_isqrt)).tocsr()
        h = (h + h.T) / 2
    else:
        h = d_isqrt[:, None] * v * d_isqrt[None, :]
        h = (h + h.T) / 2
    return SymmetricOperator(h, "H_ss1")


def diffusion_map(w, k: int, eps: float | None = None,
                  diffusion_time: float | None = None) -> Embedding:
    """Embed states with the top non-trivial eigenvectors of ``H_ss^(1)``.

    The trivial (Perron) eigenvector of ``H`` is dropped. Returned
    eigenvalues are those of ``I - H``, ascending. With ``diffusion_time``
    set, column ``k`` is scaled by ``exp(-lambda_k * t)``.
    """
    n = w.shape[0]
    if not 1 <= k < n:
        raise ConfigError(f"need 1 <= K < N, got K={k}, N={n}")
    op = diffusion_operator(w)
    mu, phi = _extreme_pairs(op, k + 1, "largest")
    lam = 1.0 - mu
    if abs(lam[0]) > 1e-8 or np.any(lam[1:] - lam[0] <= 1e-10):
        raise DisconnectedGraphError(1 + int(np.sum(lam[1:] - lam[0] <= 1e-10)))
    coords, lam = phi[:, 1:], lam[1:]
    if diffusion_time is not None:
        coords = coords * np.exp(-lam * diffusion_time)
    return Embedding(coords, lam, "diffusion_map", eps)


def laplacian_operator(q: GeneratorMatrix):
    """Binary adjacency ``W_ij = 1 - [Q_ij = 0][Q_ji = 0]`` and its Laplacian."""
    adj = undirected_adjacency(q)
    _check_connected(adj)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    lap = (sp.diags(deg) - adj).tocsr()
    return lap, deg


def laplacian_eigenmap(q: GeneratorMatrix, k: int,
                       variant: str = "generalized") -> Embedding:
    """Unweighted Laplacian eigenmap of the transition graph.

    ``variant="generalized"`` solves ``L y = lambda D y`` (coordinates are
    D-orthonormal); ``variant="combinatorial"`` solves ``L y = lambda y``,
    whose grid-graph eigenvectors are exactly the separable cosines
    ``cos(pi/n (x - 1/2))``.
    """
    n = q.n_states
    if not 1 <= k < n:
        raise ConfigError(f"need 1 <= K < N, got K={k}, N={n}")
    lap, deg = laplacian_operator(q)
    if variant == "generalized":
        d_isqrt = 1.0 / np.sqrt(deg)
        sym = (sp.diags(d_isqrt) @ lap @ sp.diags(d_isqrt)).tocsr()
        sym = (sym + sym.T) / 2
        vals, vecs = _extreme_pairs(SymmetricOperator(sym, "unweighted_laplacian"),
                                    k + 1, "smallest")
        vecs = _fix_signs(vecs * d_isqrt[:, None])
    elif variant == "combinatorial":
        vals, vecs = _extreme_pairs(SymmetricOperator(lap, "unweighted_laplacian"),
                                    k + 1, "smallest")
    else:
        raise ConfigError(f"unknown Laplacian variant {variant!r}")
    if abs(vals[0]) > 1e-8 or np.any(vals[1:] <= 1e-10):
        raise DisconnectedGraphError(1 + int(np.sum(vals[1:] <= 1e-10)))
    return Embedding(vecs[:, 1:], vals[1:], "laplacian_eigenmap")


def embed(q: GeneratorMatrix, k: int, method: str = "diffusion_map",
          eps: float | None = None, diffusion_time: float | None = None) -> Embedding:
    """Front door used by the pipeline: uniformise then embed, or Laplacian eigenmap."""
    from .ctmc import default_eps, uniformise

    if method == "diffusion_map":
        eps = default_eps(q) if eps is None else eps
        return diffusion_map(uniformise(q, eps), k, eps=eps, diffusion_time=diffusion_time)
    if method == "laplacian_eigenmap":
        return laplacian_eigenmap(q, k)
    if method == "laplacian_eigenmap_combinatorial":
        return laplacian_eigenmap(q, k, variant="combinatorial")
    raise ConfigError(f"unknown embedding method {method!r}")
