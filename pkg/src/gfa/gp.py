"""Gaussian-process regression of the drift vector field.

All output dimensions share one set of ARD lengthscales; each output has its
own amplitude and noise level. Hyperparameters are optimised jointly in log
space by gradient ascent on the summed log marginal likelihood.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
from scipy.linalg import lapack

from .errors import ConfigError, NumericalError

log = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-8
NOISE_FLOOR = 1e-12


@dataclass(frozen=True)
class SeArdKernel:
    """``a^2 exp(-sum_k (x_k - x'_k)^2 / (2 l_k^2))`` plus white noise ``noise_sd^2``."""

    amplitude: float
    lengthscales: tuple
    noise_sd: float = 0.0

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "noise_sd", float(self.noise_sd))
        if not (self.amplitude > 0 and np.isfinite(self.amplitude)):
            raise ConfigError(f"amplitude must be positive and finite, got {self.amplitude}")
        if not all(v > 0 and np.isfinite(v) for v in ls):
            raise ConfigError(f"lengthscales must be positive and finite, got {ls}")
        if not (self.noise_sd >= 0 and np.isfinite(self.noise_sd)):
            raise ConfigError(f"noise_sd must be non-negative, got {self.noise_sd}")

    def correlation(self, x1, x2):
        """Unit-amplitude SE correlation matrix between rows of ``x1`` and ``x2``."""
        ls = np.asarray(self.lengthscales)
        d = (x1[:, None, :] - x2[None, :, :]) / ls
        return np.exp(-0.5 * np.einsum("ijk,ijk->ij", d, d))


@dataclass(frozen=True)
class DriftField:
    """Fitted GP posterior mean for a vector field ``R^K -> R^D``."""

    kernels: tuple
    train_inputs: np.ndarray
    train_targets: np.ndarray
    jitter: float = DEFAULT_JITTER
    alpha: np.ndarray = field(default=None, repr=False)
    chol: tuple = field(default=None, repr=False)

    @property
    def input_dim(self) -> int:
        return self.train_inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.train_targets.shape[1]

    def __call__(self, x):
        return gp_predict_mean(self, np.atleast_2d(x))[0]

    def hyperparameters(self) -> dict:
        return {
            "lengthscales": list(self.kernels[0].lengthscales),
            "amplitude": [k.amplitude for k in self.kernels],
            "noise_sd": [k.noise_sd for k in self.kernels],
            "jitter": self.jitter,
        }


def kernels_from_dict(record: dict) -> tuple:
    ls = record["lengthscales"]
    return tuple(SeArdKernel(a, ls, s) for a, s in zip(record["amplitude"], record["noise_sd"]))


def _as_2d(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} must be a finite 2-d array")
    return a


def default_kernel(y, r, output: int = 0) -> SeArdKernel:
    """Heuristic start: target std, median pairwise gap per input, 1% noise."""
    amp = float(np.std(r[:, output]))
    amp = amp if amp > 0 else 1.0
    ls = []
    for k in range(y.shape[1]):
        col = y[:, k]
        gaps = np.abs(col[:, None] - col[None, :])[np.triu_indices(len(col), 1)]
        med = float(np.median(gaps)) if gaps.size else 1.0
        ls.append(med if med > 0 else 1.0)
    return SeArdKernel(amp, tuple(ls), 1e-2 * amp)


def _factor(cov):
    try:
        return la.cho_factor(cov, lower=True, check_finite=False)
    except la.LinAlgError:
        lam_min = float(la.eigvalsh(cov, subset_by_index=[0, 0])[0])
        raise NumericalError(
            f"kernel matrix not positive definite after jitter "
            f"(smallest eigenvalue {lam_min:.3g})"
        ) from None


def _covariance(corr, kernel, jitter):
    a2 = kernel.amplitude ** 2
    cov = a2 * corr
    cov[np.diag_indices_from(cov)] += kernel.noise_sd ** 2 + jitter * a2
    return cov


def _fit_field(y, r, kernels, jitter) -> DriftField:
    corr = kernels[0].correlation(y, y)
    alphas, chols = [], []
    for d, kern in enumerate(kernels):
        c = _factor(_covariance(corr, kern, jitter))
        alphas.append(la.cho_solve(c, r[:, d], check_finite=False))
        chols.append(c)
    alpha = np.column_stack(alphas)
    alpha.flags.writeable = False
    return DriftField(tuple(kernels), y, r, jitter, alpha, tuple(chols))


def _unpack(theta, k_in, d_out, noise_fixed):
    ls = np.exp(theta[:k_in])
    amp = np.exp(theta[k_in:k_in + d_out])
    noise = noise_fixed if noise_fixed is not None else np.exp(theta[k_in + d_out:])
    return tuple(SeArdKernel(a, ls, s) for a, s in zip(amp, noise))


def _pack(kernels, fit_noise):
    parts = [np.log(kernels[0].lengthscales), np.log([k.amplitude for k in kernels])]
    if fit_noise:
        parts.append(np.log([max(k.noise_sd, NOISE_FLOOR) for k in kernels]))
    return np.concatenate(parts)


def _sq_diffs(y):
    return (y[:, None, :] - y[None, :, :]) ** 2


def _inverse(c):
    inv, info = lapack.dpotri(c[0], lower=1)
    if info != 0:
        raise NumericalError(f"kernel inverse failed (LAPACK info={info})")
    return np.tril(inv) + np.tril(inv, -1).T


def _lml(y, r, kernels, jitter, with_grad, fit_noise=True, diff2=None):
    """Summed log marginal likelihood and gradient in log-hyperparameters."""
    n, k_in = y.shape
    ls = np.asarray(kernels[0].lengthscales)
    if diff2 is None:
        diff2 = _sq_diffs(y)
    corr = np.exp(-0.5 * (diff2 @ (1.0 / ls ** 2)))
    total = 0.0
    g_ls = np.zeros(k_in)
    g_amp, g_noise = [], []
    for d, kern in enumerate(kernels):
        c = _factor(_covariance(corr, kern, jitter))
        alpha = la.cho_solve(c, r[:, d], check_finite=False)
        total += (-0.5 * r[:, d] @ alpha - np.sum(np.log(np.diag(c[0])))
                  - 0.5 * n * np.log(2 * np.pi))
        if not with_grad:
            continue
        w = np.outer(alpha, alpha) - _inverse(c)
        a2 = kern.amplitude ** 2
        wc = w * corr * a2
        g_ls += 0.5 * np.tensordot(wc, diff2, axes=([0, 1], [0, 1])) / ls ** 2
        tr_w = np.trace(w)
        g_amp.append(wc.sum() + jitter * a2 * tr_w)
        g_noise.append(kern.noise_sd ** 2 * tr_w)
    if not with_grad:
        return total
    parts = [g_ls, g_amp] + ([g_noise] if fit_noise else [])
    return total, np.concatenate([np.atleast_1d(p) for p in parts])


def log_marginal_likelihood(field: DriftField, fit_noise: bool = True):
    """Log marginal likelihood summed over outputs and its log-space gradient.

    Gradient order: ``log l_1..l_K``, ``log a_1..a_D`` and, when
    ``fit_noise``, ``log noise_1..noise_D``.
    """
    return _lml(field.train_inputs, field.train_targets, field.kernels,
                field.jitter, True, fit_noise)


def _optimise(y, r, kernels, jitter, fit_noise, max_iter, gtol, ftol, stall_window=10):
    """Projected gradient ascent in log space with Armijo backtracking.

    Trial step lengths follow the Barzilai-Borwein rule, which adapts the
    step to the local curvature; backtracking halves them until the Armijo
    condition holds.

    Stops when the projected gradient's infinity norm drops below ``gtol``,
    when the last ``stall_window`` iterations improved the likelihood by less
    than ``ftol * max(1, |f|)``, or after ``max_iter`` iterations.
    """
    d_out = r.shape[1]
    k_in = y.shape[1]
    noise_fixed = None if fit_noise else np.array([k.noise_sd for k in kernels])
    lower = np.full(k_in + d_out + (d_out if fit_noise else 0), -np.inf)
    if fit_noise:
        lower[k_in + d_out:] = np.log(NOISE_FLOOR)

    diff2 = _sq_diffs(y)

    def evaluate(theta, with_grad):
        ks = _unpack(theta, k_in, d_out, noise_fixed)
        return _lml(y, r, ks, jitter, with_grad, fit_noise, diff2)

    theta = _pack(kernels, fit_noise)
    f, g = evaluate(theta, True)
    if not np.isfinite(f):
        raise NumericalError(f"non-finite likelihood at initial hyperparameters {theta}")
    step = 0.1 / max(np.max(np.abs(g)), 1e-12)
    history = [f]
    for it in range(max_iter):
        g_proj = np.where((theta <= lower) & (g < 0), 0.0, g)
        if np.max(np.abs(g_proj)) < gtol:
            break
        accepted = False
        while step > 1e-300:
            delta = step * g_proj
            big = np.max(np.abs(delta))
            if big > 1.0:
                delta /= big
            trial = np.maximum(theta + delta, lower)
            try:
                f_trial = evaluate(trial, False)
            except NumericalError:
                f_trial = -np.inf
            if np.isfinite(f_trial) and f_trial >= f + 1e-4 * g_proj @ (trial - theta):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            log.debug("line search exhausted at iteration %d", it)
            break
        s_k = trial - theta
        g_old = g
        theta = trial
        f, g = evaluate(theta, True)
        if not np.isfinite(f):
            raise NumericalError(f"likelihood diverged; last finite iterate {theta}")
        curv = -(s_k @ (g - g_old))
        # Barzilai-Borwein length when the step saw negative curvature, else expand
        step = (s_k @ s_k) / curv if curv > 0 else 2.0 * step
        history.append(f)
        if (len(history) > stall_window
                and f - history[-1 - stall_window] <= ftol * max(1.0, abs(f))):
            break
    log.debug("gp optimisation stopped after %d iterations, lml=%.6g", it + 1, f)
    return _unpack(theta, k_in, d_out, noise_fixed)


def gp_fit(y, r, init=None, optimize: bool = True, *, optimize_noise: bool = True,
           jitter: float = DEFAULT_JITTER, max_iter: int = 500,
           gtol: float = 1e-5, ftol: float = 1e-9) -> DriftField:
    """Fit a GP to drift observations ``r`` at embedded states ``y``.

    ``init`` may be a single :class:`SeArdKernel` (used for every output), a
    sequence with one kernel per output, or ``None`` for the heuristic start.
    """
    y = _as_2d(y, "inputs")
    r = _as_2d(r, "targets")
    if y.shape[0] != r.shape[0]:
        raise ConfigError("inputs and targets must have the same number of rows")
    if y.shape[0] < 1 or (optimize and y.shape[0] < 2):
        raise ConfigError("need at least 2 observations to optimise hyperparameters")
    d_out = r.shape[1]
    if init is None:
        kernels = tuple(default_kernel(y, r, d) for d in range(d_out))
        ls = kernels[0].lengthscales
        kernels = tuple(replace(k, lengthscales=ls) for k in kernels)
    elif isinstance(init, SeArdKernel):
        kernels = (init,) * d_out
    else:
        kernels = tuple(init)
        if len(kernels) != d_out:
            raise ConfigError(f"need {d_out} kernels, got {len(kernels)}")
    if any(k.lengthscales != kernels[0].lengthscales for k in kernels):
        raise ConfigError("all output kernels must share the same lengthscales")
    for k in kernels:
        if len(k.lengthscales) != y.shape[1]:
            raise ConfigError(
                f"kernel has {len(k.lengthscales)} lengthscales for {y.shape[1]} inputs"
            )
    if optimize:
        kernels = _optimise(y, r, kernels, jitter, optimize_noise, max_iter, gtol, ftol)
    return _fit_field(y, r, kernels, jitter)


def gp_predict_mean(field: DriftField, query_points) -> np.ndarray:
    """Posterior mean of every output at each query row (M x D)."""
    xq = np.atleast_2d(np.asarray(query_points, dtype=float))
    if xq.shape[1] != field.input_dim:
        raise ConfigError(
            f"query dimension {xq.shape[1]} does not match input dimension {field.input_dim}"
        )
    corr = field.kernels[0].correlation(xq, field.train_inputs)
    amp2 = np.array([k.amplitude ** 2 for k in field.kernels])
    return (corr @ field.alpha) * amp2
