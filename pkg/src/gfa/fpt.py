"""First-passage times: CDF containers, Voronoi target regions and fluid crossings."""

from __future__ import annotations

import ast
import operator
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError

BRUTE_FORCE_LIMIT = 10_000
CROSSING_TOL = 1e-6
MAX_REFINE = 64


@dataclass(frozen=True)
class FptCdf:
    """Either an empirical CDF (``kind="empirical"``) or a unit step (``"fluid_step"``).

    Empirical CDFs keep censored samples in the denominator, so they plateau
    at ``1 - censored_fraction``.
    """

    kind: str
    times: np.ndarray | None = None
    n_censored: int = 0
    crossing_time: float = np.inf

    def __post_init__(self):
        if self.kind == "empirical":
            t = np.sort(np.asarray(self.times, dtype=float))
            if np.any(~np.isfinite(t)) or np.any(t < 0):
                raise ConfigError("passage times must be finite and non-negative")
            if self.n_censored < 0:
                raise ConfigError("censor count must be non-negative")
            if t.size + self.n_censored == 0:
                raise ConfigError("empirical CDF needs at least one sample")
            object.__setattr__(self, "times", t)
        elif self.kind == "fluid_step":
            c = float(self.crossing_time)
            if np.isnan(c) or c < 0:
                raise ConfigError("crossing time must be non-negative or +inf")
            object.__setattr__(self, "crossing_time", c)
        else:
            raise ConfigError(f"unknown FPT CDF kind {self.kind!r}")

    @classmethod
    def empirical(cls, times, n_censored: int = 0) -> "FptCdf":
        return cls("empirical", np.asarray(times, dtype=float), int(n_censored))

    @classmethod
    def step(cls, crossing_time: float) -> "FptCdf":
        return cls("fluid_step", crossing_time=crossing_time)

    @property
    def n_total(self) -> int:
        return int(self.times.size + self.n_censored) if self.kind == "empirical" else 1

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n_total if self.kind == "empirical" else 0.0

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "fluid_step":
            return (t >= self.crossing_time).astype(float)
        return np.searchsorted(self.times, t, side="right") / self.n_total

    def quantile(self, p: float) -> float:
        """Smallest time at which the CDF reaches ``p`` (``inf`` if it never does)."""
        if not 0 < p <= 1:
            raise ConfigError("quantile level must lie in (0, 1]")
        if self.kind == "fluid_step":
            return self.crossing_time
        k = int(np.ceil(p * self.n_total - 1e-12))
        return float(self.times[k - 1]) if k <= self.times.size else np.inf

    def median(self) -> float:
        return self.quantile(0.5)


class VoronoiClassifier:
    """Nearest-seed test: is a point closer to a target seed than to any other seed?"""

    def __init__(self, seeds, target_mask):
        seeds = np.asarray(getattr(seeds, "coords", seeds), dtype=float)
        if seeds.ndim == 1:
            seeds = seeds[:, None]
        mask = np.asarray(target_mask, dtype=bool)
        if mask.shape != (seeds.shape[0],):
            raise ConfigError("target mask must have one entry per seed")
        if not np.all(np.isfinite(seeds)):
            raise ConfigError("seeds must be finite")
        if mask.all() or not mask.any():
            raise ConfigError("need at least one target and one non-target seed")
        self.seeds = seeds
        self.target_mask = mask
        self._target = seeds[mask]
        self._other = seeds[~mask]
        self._trees = None

    @property
    def dim(self) -> int:
        return self.seeds.shape[1]

    def _nearest_sq(self, group, tree, pts, brute):
        if brute:
            d2 = ((pts[:, None, :] - group[None, :, :]) ** 2).sum(axis=2)
            return d2.min(axis=1)
        _, idx = tree.query(pts, k=1)
        # recompute with the brute-force formula so both paths agree bit for bit
        return ((pts - group[idx]) ** 2).sum(axis=1)

    def contains(self, points, brute: bool | None = None) -> np.ndarray:
        """Vectorised :func:`classify_point` over the rows of ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ConfigError(f"points have dimension {pts.shape[1]}, seeds {self.dim}")
        if brute is None:
            brute = pts.shape[0] * self.seeds.shape[0] <= BRUTE_FORCE_LIMIT
        if brute:
            trees = (None, None)
        else:
            if self._trees is None:
                self._trees = (cKDTree(self._target), cKDTree(self._other))
            trees = self._trees
        d_t = self._nearest_sq(self._target, trees[0], pts, brute)
        d_o = self._nearest_sq(self._other, trees[1], pts, brute)
        return d_t < d_o


def classify_point(c: VoronoiClassifier, p) -> bool:
    """True iff ``p`` is strictly closer to a target seed; ties count as outside."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ConfigError("query point must be finite")
    return bool(c.contains(p[None, :] if p.ndim == 1 else p)[0])


def _bisect_crossing(position, inside, t_lo, t_hi, tol):
    while t_hi - t_lo > tol:
        mid = 0.5 * (t_lo + t_hi)
        if inside(position(mid)):
            t_hi = mid
        else:
            t_lo = mid
    return t_hi


def crossing_time(times, points, inside, position=None, tol=CROSSING_TOL,
                  max_step=None) -> float:
    """Earliest time at which ``inside`` becomes true along a sampled path.

    ``inside`` maps an (M x K) array to M booleans. Samples are scanned in
    order; intervals whose displacement exceeds ``max_step`` are subdivided
    first. The crossing is then bisected to ``tol`` along ``position`` (the
    dense solution if given, linear interpolation otherwise).
    """
    times = np.asarray(times, dtype=float)
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if position is None:
        def position(t):
            return np.array([np.interp(t, times, points[:, k])
                             for k in range(points.shape[1])])
    if max_step is not None and max_step > 0 and times.size > 1:
        gaps = np.linalg.norm(np.diff(points, axis=0), axis=1)
        pieces = np.clip(np.ceil(gaps / max_step), 1, MAX_REFINE).astype(int)
        if np.any(pieces > 1):
            fine = [times[:1]]
            for i, m in enumerate(pieces):
                fine.append(np.linspace(times[i], times[i + 1], m + 1)[1:])
            times = np.concatenate(fine)
            points = np.array([position(t) for t in times])
    flags = inside(points)
    if flags[0]:
        return 0.0
    hit = np.flatnonzero(flags)
    if hit.size == 0:
        return np.inf
    k = hit[0]

    def inside_one(p):
        return bool(inside(np.atleast_2d(p))[0])

    return float(_bisect_crossing(position, inside_one, times[k - 1], times[k], tol))


def _seed_spacing(seeds) -> float:
    if seeds.shape[0] < 2:
        return np.inf
    d, _ = cKDTree(seeds).query(seeds, k=2)
    gaps = d[:, 1]
    gaps = gaps[gaps > 0]
    return float(np.median(gaps)) if gaps.size else np.inf


def fluid_fpt(traj, c: VoronoiClassifier, tol: float = CROSSING_TOL) -> FptCdf:
    """Step CDF at the time the trajectory first enters the target Voronoi region."""
    if traj.dim != c.dim:
        raise ConfigError("trajectory and classifier dimensions differ")

    def position(t):
        return np.asarray(traj.at(t), dtype=float).reshape(-1)

    t_cross = crossing_time(traj.times, traj.points, c.contains, position, tol,
                            max_step=_seed_spacing(c.seeds))
    return FptCdf.step(t_cross)


def predicate_fpt(traj, predicate, tol: float = CROSSING_TOL) -> FptCdf:
    """Step CDF for a trajectory in species space entering ``predicate(points)``."""
    def position(t):
        return np.asarray(traj.at(t), dtype=float).reshape(-1)

    return FptCdf.step(crossing_time(traj.times, traj.points, predicate, position, tol))


@dataclass(frozen=True)
class CdfComparison:
    sup_distance: float
    quantile_at_step: float | None
    median_ratio: float

    def as_dict(self) -> dict:
        return {"sup_distance": self.sup_distance,
                "quantile_at_step": self.quantile_at_step,
                "median_ratio": self.median_ratio}


def compare_cdfs(a: FptCdf, b: FptCdf, t_grid) -> CdfComparison:
    """Sup distance on ``t_grid``, ``b``'s CDF at ``a``'s step and the median ratio ``a / b``."""
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ConfigError("comparison grid must be a non-empty 1-d array")
    sup = float(np.max(np.abs(a.cdf(t) - b.cdf(t))))
    if a.kind == "fluid_step":
        if np.isinf(a.crossing_time):
            sup = max(sup, float(np.max(b.cdf(t))))
            q_step = None
        else:
            q_step = float(b.cdf(a.crossing_time))
    else:
        q_step = None
    ma, mb = a.median(), b.median()
    if np.isinf(ma) and np.isinf(mb):
        ratio = float("nan")
    elif mb == 0:
        ratio = float("inf") if ma > 0 else float("nan")
    else:
        ratio = ma / mb
    return CdfComparison(sup, q_step, float(ratio))


# -- target predicates ------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv}
_CMPOPS = {ast.Lt: operator.lt, ast.LtE: operator.le, ast.Gt: operator.gt,
           ast.GtE: operator.ge, ast.Eq: operator.eq, ast.NotEq: operator.ne}


def _eval_node(node, env):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.Name):
        if node.id not in env:
            raise ConfigError(f"unknown name {node.id!r} in target predicate; "
                              f"allowed: {sorted(env)}")
        return env[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left, env), _eval_node(node.right, env))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return -_eval_node(node.operand, env)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not):
        return np.logical_not(_eval_node(node.operand, env))
    if isinstance(node, ast.Compare) and all(type(o) in _CMPOPS for o in node.ops):
        left = _eval_node(node.left, env)
        result = True
        for op, comp in zip(node.ops, node.comparators):
            right = _eval_node(comp, env)
            result = np.logical_and(result, _CMPOPS[type(op)](left, right))
            left = right
        return result
    if isinstance(node, ast.BoolOp):
        combine = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
        values = [_eval_node(v, env) for v in node.values]
        out = values[0]
        for v in values[1:]:
            out = combine(out, v)
        return out
    raise ConfigError(f"unsupported syntax in target predicate: {ast.dump(node)[:60]}")


@dataclass(frozen=True)
class TargetPredicate:
    """Boolean expression over species counts and the system size ``N``.

    Example: ``"F >= 0.2*N and F < 0.6*N"``. Only arithmetic, comparisons
    and ``and``/``or``/``not`` are accepted.
    """

    expression: str
    species: tuple
    size: float

    def __post_init__(self):
        try:
            tree = ast.parse(self.expression, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse target predicate {self.expression!r}") from exc
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "_tree", tree)
        # evaluate once on a dummy point so bad names fail at construction
        self(np.zeros((1, len(self.species))))

    def __call__(self, counts) -> np.ndarray:
        x = np.atleast_2d(np.asarray(counts, dtype=float))
        if x.shape[1] != len(self.species):
            raise ConfigError(f"expected {len(self.species)} species columns")
        env = {name: x[:, k] for k, name in enumerate(self.species)}
        env["N"] = float(self.size)
        out = np.broadcast_to(np.asarray(_eval_node(self._tree, env), dtype=bool), (x.shape[0],))
        return np.array(out)

    def mask(self, labels) -> np.ndarray:
        return self(np.array([lab.coords for lab in labels], dtype=float))
