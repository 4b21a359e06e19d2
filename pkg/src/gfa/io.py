"""Plain-text artifact formats: generators, embeddings, hyperparameters, curves, FPTs."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .ctmc import GeneratorMatrix
from .embed import Embedding
from .errors import ConfigError
from .fluid import Trajectory
from .fpt import FptCdf
from .gp import DriftField, kernels_from_dict
from .ssa import EnsembleSummary

FLOAT_FMT = "{:.17g}"


def _fmt(x) -> str:
    return FLOAT_FMT.format(float(x))


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, record) -> Path:
    path = Path(path)
    path.write_text(json.dumps(record, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _write_rows(path, header, rows, comment=None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (str, int, np.integer)) else _fmt(v)
                             for v in row])
    return path


def _read_rows(path):
    comments, lines = [], []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif line.strip():
                lines.append(line)
    rows = list(csv.reader(lines))
    if not rows:
        raise ConfigError(f"{path} has no header")
    return comments, rows[0], rows[1:]


# -- generator ------------------------------------------------------------

def write_generator(path, q: GeneratorMatrix) -> Path:
    """Coordinate list: first line ``n_states``, then ``i j rate`` per off-diagonal."""
    rows, cols, rates = q.edges()
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{q.n_states}\n")
        for i, j, r in zip(rows, cols, rates):
            fh.write(f"{i} {j} {_fmt(r)}\n")
    return path


def read_generator(path) -> GeneratorMatrix:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"{path} is empty")
    try:
        n = int(lines[0].split()[0])
        data = np.array([ln.split() for ln in lines[1:]], dtype=float).reshape(-1, 3)
    except ValueError as exc:
        raise ConfigError(f"malformed generator file {path}: {exc}") from exc
    return GeneratorMatrix.from_rates(n, data[:, 0].astype(np.int64),
                                      data[:, 1].astype(np.int64), data[:, 2])


# -- embedding --------------------------------------------------------------

def _sidecar(path) -> Path:
    return Path(path).with_suffix(".meta.json")


def write_embedding(path, emb: Embedding) -> Path:
    """CSV ``state_index, y_1..y_K`` plus a ``.meta.json`` sidecar."""
    header = ["state_index"] + [f"y_{k + 1}" for k in range(emb.dim)]
    rows = ([i, *emb.coords[i]] for i in range(emb.n_states))
    _write_rows(path, header, rows)
    write_json(_sidecar(path), {"method": emb.method, "eps": emb.eps,
                                "eigenvalues": emb.eigenvalues.tolist()})
    return Path(path)


def read_embedding(path) -> Embedding:
    _, header, rows = _read_rows(path)
    if header[0] != "state_index":
        raise ConfigError(f"{path} is not an embedding table")
    arr = np.array(rows, dtype=float)
    order = np.argsort(arr[:, 0])
    meta = read_json(_sidecar(path))
    return Embedding(arr[order, 1:], np.array(meta["eigenvalues"]), meta["method"],
                     meta.get("eps"))


# -- GP hyperparameters -------------------------------------------------------

def write_hyperparameters(path, field: DriftField) -> Path:
    return write_json(path, field.hyperparameters())


def read_hyperparameters(path):
    """Return ``(kernels, jitter)`` ready for ``gp_fit(..., init=kernels, optimize=False)``."""
    record = read_json(path)
    return kernels_from_dict(record), float(record.get("jitter", 1e-8))


# -- trajectories and ensembles -------------------------------------------------

def write_trajectory(path, traj: Trajectory) -> Path:
    header = ["t"] + [f"y_{k + 1}" for k in range(traj.dim)]
    rows = ([t, *p] for t, p in zip(traj.times, traj.points))
    return _write_rows(path, header, rows, comment=f"kind={traj.kind}")


def read_trajectory(path) -> Trajectory:
    comments, header, rows = _read_rows(path)
    kind = next((c.split("=", 1)[1] for c in comments if c.startswith("kind=")), None)
    if kind is None or header[0] != "t":
        raise ConfigError(f"{path} is not a trajectory table")
    arr = np.array(rows, dtype=float)
    return Trajectory(arr[:, 0], arr[:, 1:], kind)


def write_ensemble(path, summary: EnsembleSummary) -> Path:
    k = summary.mean_coords.shape[1]
    header = (["t"] + [f"mean_{i + 1}" for i in range(k)]
              + [f"std_{i + 1}" for i in range(k)] + ["n_paths"])
    rows = ([t, *m, *s, summary.n_paths]
            for t, m, s in zip(summary.t_grid, summary.mean_coords, summary.std_coords))
    return _write_rows(path, header, rows)


def read_ensemble(path) -> EnsembleSummary:
    _, header, rows = _read_rows(path)
    arr = np.array(rows, dtype=float)
    k = (arr.shape[1] - 2) // 2
    return EnsembleSummary(arr[:, 0], arr[:, 1:1 + k], arr[:, 1 + k:1 + 2 * k],
                           int(arr[0, -1]))


# -- first-passage times ----------------------------------------------------------

def write_fpt(path, cdf: FptCdf) -> Path:
    """Sorted passage times, one per line, after ``# kind=...`` and ``# censored=...``."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# kind={cdf.kind}\n")
        if cdf.kind == "empirical":
            fh.write(f"# censored={cdf.n_censored}\n")
            for t in cdf.times:
                fh.write(_fmt(t) + "\n")
        else:
            fh.write(_fmt(cdf.crossing_time) + "\n")
    return path


def read_fpt(path) -> FptCdf:
    meta, values = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
        elif line.strip():
            values.append(float(line))
    if meta.get("kind") == "fluid_step":
        return FptCdf.step(values[0])
    if meta.get("kind") == "empirical":
        return FptCdf.empirical(values, int(meta.get("censored", 0)))
    raise ConfigError(f"{path} is not an FPT file")


def write_curves(path, t, columns: dict) -> Path:
    """Wide CSV with a ``t`` column followed by ``name`` or ``name_k`` columns."""
    header, blocks = ["t"], [np.asarray(t, dtype=float)[:, None]]
    for name, values in columns.items():
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            header.append(name)
            blocks.append(v[:, None])
        else:
            header += [f"{name}_{k + 1}" for k in range(v.shape[1])]
            blocks.append(v)
    return _write_rows(path, header, np.hstack(blocks))


def read_curves(path) -> dict:
    _, header, rows = _read_rows(path)
    arr = np.array(rows, dtype=float)
    return {h: arr[:, i] for i, h in enumerate(header)}
