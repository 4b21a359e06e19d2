"""Deterministic trajectories: GFA fluid, exact projected mean, spectral and classical fluids."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .ctmc import GeneratorMatrix, ReactionNetwork, propensity
from .errors import ConfigError, IntegrationError, NumericalError

KINDS = ("gfa_fluid", "spectral_fluid", "classical_fluid", "projected_mean")
DENSE_LIMIT = 2000
DEFAULT_SAMPLES = 200


@dataclass(frozen=True)
class Trajectory:
    """Coordinates ``points[i]`` at ``times[i]``; ``dense`` optionally interpolates."""

    times: np.ndarray
    points: np.ndarray
    kind: str
    dense: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if self.kind not in KINDS:
            raise ConfigError(f"unknown trajectory kind {self.kind!r}")
        if t.ndim != 1 or t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigError("trajectory times must start at 0 and strictly increase")
        if p.shape[0] != t.size:
            raise ConfigError("one point per time is required")
        if not np.all(np.isfinite(p)):
            raise NumericalError("trajectory contains non-finite coordinates")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def at(self, t):
        """Position at time(s) ``t`` via dense output or linear interpolation."""
        if self.dense is not None:
            return np.asarray(self.dense(t)).T
        t = np.atleast_1d(t)
        return np.column_stack([np.interp(t, self.times, self.points[:, k])
                                for k in range(self.dim)])


def uniform_grid(t_end: float, n_samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    if not t_end > 0:
        raise ConfigError("t_end must be positive")
    if n_samples < 2:
        raise ConfigError("need at least two samples")
    return np.linspace(0.0, float(t_end), int(n_samples))


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ConfigError("time grid must start at 0 and strictly increase")
    return t


def integrate_ode(rhs, y0, t_grid, rtol=1e-6, atol=1e-9, kind="gfa_fluid",
                  events=None, max_step=np.inf, first_step=None) -> Trajectory:
    """Dormand-Prince 5(4) integration sampled on ``t_grid``.

    ``max_step`` and ``first_step`` are passed to the solver; fixing both with
    loose tolerances gives a constant-step scheme, useful for order checks.
    """
    if not (rtol > 0 and atol > 0):
        raise ConfigError("tolerances must be positive")
    t = _check_grid(t_grid)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if t.size == 1:
        return Trajectory(t, y0[None, :], kind)
    sol = solve_ivp(rhs, (0.0, t[-1]), y0, method="RK45", rtol=rtol, atol=atol,
                    dense_output=True, events=events, max_step=max_step,
                    first_step=first_step)
    if sol.status == -1:
        raise IntegrationError(sol.message, sol.t[-1], sol.y[:, -1])
    return Trajectory(t, sol.sol(t).T, kind, dense=sol.sol)


def integrate_gfa(field_, y0, t_end, rtol=1e-6, atol=1e-9,
                  n_samples=DEFAULT_SAMPLES, t_grid=None) -> Trajectory:
    """Integrate ``dy/dt = m(y)`` where ``m`` is the GP posterior mean drift."""
    if not t_end > 0:
        raise ConfigError("t_end must be positive")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y0.size != field_.input_dim:
        raise ConfigError(f"y0 has {y0.size} coordinates, field expects {field_.input_dim}")
    grid = uniform_grid(t_end, n_samples) if t_grid is None else _check_grid(t_grid)

    def rhs(_t, y):
        return field_(y)

    return integrate_ode(rhs, y0, grid, rtol, atol, "gfa_fluid")


def _check_distribution(pi0, n):
    pi0 = np.asarray(pi0, dtype=float)
    if pi0.shape != (n,):
        raise ConfigError(f"initial distribution must have length {n}")
    if np.any(pi0 < 0) or abs(pi0.sum() - 1.0) > 1e-10:
        raise ConfigError("initial distribution must be non-negative and sum to 1")
    return pi0


def point_mass(n: int, state: int) -> np.ndarray:
    pi0 = np.zeros(n)
    pi0[state] = 1.0
    return pi0


def transient_distribution(q: GeneratorMatrix, pi0, t_grid) -> np.ndarray:
    """Solve the forward equation ``dp/dt = Q^T p``; one row per grid time.

    Up to ``DENSE_LIMIT`` states the step propagators ``expm(dt Q^T)`` are
    formed densely (Pade scaling-and-squaring) and reused across equal steps;
    larger chains use the Krylov-free truncated Taylor action of
    :func:`scipy.sparse.linalg.expm_multiply`.
    """
    n = q.n_states
    pi0 = _check_distribution(pi0, n)
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ConfigError("time grid must be non-negative and strictly increasing")
    out = np.empty((t.size, n))
    qt = q.tocsr().T
    if n <= DENSE_LIMIT:
        qt_dense = qt.toarray()
        cache = {}
        p = pi0
        prev = 0.0
        for k, tk in enumerate(t):
            dt = tk - prev
            if dt > 0:
                key = float(f"{dt:.12g}")
                if key not in cache:
                    cache[key] = la.expm(dt * qt_dense)
                p = cache[key] @ p
            out[k] = p
            prev = tk
    else:
        p = pi0
        prev = 0.0
        for k, tk in enumerate(t):
            if tk > prev:
                p = spla.expm_multiply((tk - prev) * qt, p)
            out[k] = p
            prev = tk
    np.clip(out, 0.0, None, out=out)
    return out


def projected_mean(q: GeneratorMatrix, pi0, y, t_grid) -> Trajectory:
    """Exact mean of the embedded chain, ``Y^T p_t``, on ``t_grid``."""
    t = _check_grid(t_grid)
    coords = np.asarray(getattr(y, "coords", y), dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    if coords.shape[0] != q.n_states:
        raise ConfigError("embedding rows must match the generator")
    p = transient_distribution(q, pi0, t)
    return Trajectory(t, p @ coords, "projected_mean")


def eigen_embedding(q: GeneratorMatrix):
    """Eigen-decomposition ``Q = V diag(lam) V^-1``; ``V`` orthonormal if ``Q`` is symmetric."""
    a = q.toarray()
    scale = max(np.abs(a).max(), 1.0)
    if np.allclose(a, a.T, rtol=0, atol=1e-12 * scale):
        lam, v = la.eigh((a + a.T) / 2)
        return lam, v
    lam, v = la.eig(a)
    if np.max(np.abs(lam.imag)) > 1e-10 * scale:
        raise NumericalError("generator has a complex spectrum; use a symmetric generator")
    lam, v = lam.real, v.real
    if np.linalg.cond(v) > 1e10:
        raise NumericalError("generator appears defective; spectral fluid needs a "
                             "diagonalisable (e.g. symmetric) generator")
    return lam, v


def spectral_fluid(q: GeneratorMatrix, pi0, t_grid) -> Trajectory:
    """Fluid with drift extended through the kernel ``sum_i Q_ij y_i^T y``.

    With ``V`` the eigenvectors of ``Q`` this is ``y_t = exp(t diag(lam) V^T V) V^T pi0``.
    """
    t = _check_grid(t_grid)
    pi0 = _check_distribution(pi0, q.n_states)
    lam, v = eigen_embedding(q)
    y0 = v.T @ pi0
    gram = v.T @ v
    if np.allclose(gram, np.eye(len(lam)), atol=1e-12):
        pts = np.exp(np.outer(t, lam)) * y0
    else:
        gen = lam[:, None] * gram
        pts = np.array([la.expm(tk * gen) @ y0 for tk in t])
    return Trajectory(t, pts, "spectral_fluid")


def sirs_rhs(k_i, k_r, k_s):
    def rhs(_t, x):
        s, i, r = x
        inf = k_i * i * s
        return [k_s * r - inf, inf - k_r * i, k_r * i - k_s * r]
    return rhs


def classical_fluid_sirs(k_i, k_r, k_s, x0, t_end, rtol=1e-8, atol=1e-10,
                         n_samples=DEFAULT_SAMPLES, t_grid=None) -> Trajectory:
    """Concentration-space SIRS mean-field ODE; ``x0 = (s, i, r)`` sums to one."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (3,) or np.any(x0 < 0) or abs(x0.sum() - 1.0) > 1e-10:
        raise ConfigError("x0 must be three non-negative concentrations summing to 1")
    grid = uniform_grid(t_end, n_samples) if t_grid is None else _check_grid(t_grid)
    return integrate_ode(sirs_rhs(k_i, k_r, k_s), x0, grid, rtol, atol, "classical_fluid")


def mass_action_rhs(net: ReactionNetwork):
    """Count-space mean-field drift with the same propensities as the CTMC."""
    changes = np.array([np.subtract(r.products, r.reactants) for r in net.reactions], float)

    def rhs(_t, x):
        x = np.atleast_2d(x)
        rates = np.array([propensity(r, x, net.scale)[0] for r in net.reactions])
        return rates @ changes

    return rhs


def classical_fluid(net: ReactionNetwork, x0_counts, t_end, rtol=1e-8, atol=1e-10,
                    n_samples=DEFAULT_SAMPLES, t_grid=None) -> Trajectory:
    """Untruncated mean-field ODE of a reaction network, in species counts."""
    x0 = np.asarray(x0_counts, dtype=float)
    if x0.shape != (len(net.species),):
        raise ConfigError("x0 must have one entry per species")
    grid = uniform_grid(t_end, n_samples) if t_grid is None else _check_grid(t_grid)
    return integrate_ode(mass_action_rhs(net), x0, grid, rtol, atol, "classical_fluid")
