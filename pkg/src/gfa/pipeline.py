"""End-to-end experiment stages with persisted, content-hashed artifacts.

Every stage reads its inputs from the run directory and writes its outputs
there, so any stage can be re-run in isolation once its inputs exist. The
manifest records the configuration, seeds, library versions and a SHA-256
of every artifact; wall-clock timings go to a separate ``run_log.json`` so
that two runs with the same configuration produce identical bundles.
"""

from __future__ import annotations

import logging
import platform
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import io
from .config import ExperimentConfig, dump_config
from .ctmc import (GeneratorMatrix, ReactionNetwork, build_reaction_ctmc,
                   drift_observations, extract_subset, label_index, perturb_rates,
                   remove_transitions)
from .embed import embed
from .errors import ConfigError, GfaError
from .fluid import (DENSE_LIMIT, classical_fluid, integrate_gfa, point_mass, projected_mean,
                    uniform_grid)
from .fpt import FptCdf, TargetPredicate, VoronoiClassifier, compare_cdfs, fluid_fpt, predicate_fpt
from .gp import gp_fit, kernels_from_dict
from .models import NETWORKS, build_genetic_switch, grid_walk
from .ssa import project_ensemble, simulate_ensemble, ssa_fpt

log = logging.getLogger(__name__)

STAGES = ("build", "embed", "drift", "gfa", "ssa", "compare", "fpt")

FILES = {
    "generator": "generator.txt",
    "labels": "labels.csv",
    "embedding": "embedding.csv",
    "drift": "drift_observations.csv",
    "hyperparameters": "hyperparameters.json",
    "gfa": "gfa_trajectory.csv",
    "ssa": "ssa_ensemble.csv",
    "cke": "cke_projected_mean.csv",
    "compare": "comparison.csv",
    "compare_report": "compare_report.json",
    "fpt_report": "fpt_report.json",
    "fpt_cdfs": "fpt_cdfs.csv",
    "fpt_ssa": "fpt_ssa.txt",
    "fpt_gfa": "fpt_gfa.txt",
    "fpt_classical": "fpt_classical.txt",
}


@dataclass(frozen=True)
class Model:
    q: GeneratorMatrix
    labels: list
    species: tuple
    size: float
    network: ReactionNetwork | None = None

    def state(self, coords) -> int:
        key = tuple(int(c) for c in coords)
        idx = label_index(self.labels)
        if key not in idx:
            raise ConfigError(f"state {list(key)} is not in the state space")
        return idx[key]


def build_model(cfg: ExperimentConfig) -> Model:
    """Construct the generator described by the model block (with perturbations/subset)."""
    m = cfg.model
    params = dict(m.params)
    net = None
    if m.builder in NETWORKS:
        net = NETWORKS[m.builder](**params)
    elif m.builder == "custom":
        try:
            net = ReactionNetwork.from_dict(params["species"], params["reactions"],
                                            params["cap"], params.get("volume"),
                                            params.get("total"))
        except KeyError as exc:
            raise ConfigError(f"custom model needs key {exc}") from None
    if net is not None:
        q, labels = build_reaction_ctmc(net)
        species, size = net.species, float(net.cap)
    elif m.builder == "genetic_switch":
        q, labels = build_genetic_switch(**params)
        species, size = ("P", "A"), float(params.get("cap_A", 40))
    elif m.builder == "grid":
        q, labels = grid_walk(**params)
        species = tuple(f"x{k + 1}" for k in range(len(params["shape"])))
        size = float(max(params["shape"]))
    else:
        raise ConfigError(f"unknown builder {m.builder!r}")
    p = m.perturbation
    if p.rate_noise_sigma > 0:
        q = perturb_rates(q, float(p.rate_noise_sigma), int(p.seed))
    if p.removal_prob > 0:
        q = remove_transitions(q, float(p.removal_prob), int(p.seed) + 1)
    if m.subset is not None:
        root = Model(q, labels, species, size).state(m.subset.root)
        subset, q = extract_subset(q, root, int(m.subset.radius))
        labels = [labels[i] for i in sorted(subset.members)]
    # perturbations and subsets change the dynamics; the classical ODE no longer applies
    pure = p.rate_noise_sigma == 0 and p.removal_prob == 0 and m.subset is None
    return Model(q, labels, tuple(species), size, net if pure else None)


def check_model(cfg: ExperimentConfig, model: Model) -> int:
    """Checks that need the state space; returns the initial state index."""
    n = model.q.n_states
    k = int(cfg.embedding.k)
    if k >= n:
        raise ConfigError(f"embedding dimension K={k} must be smaller than N={n}")
    if len(cfg.integration.s0) != len(model.species):
        raise ConfigError(f"s0 needs {len(model.species)} counts for species {model.species}")
    s0 = model.state(cfg.integration.s0)
    if cfg.fpt is not None:
        mask = target_mask(cfg, model)
        if mask[s0]:
            raise ConfigError("initial state lies inside the FPT target set")
    return s0


def target_mask(cfg: ExperimentConfig, model: Model) -> np.ndarray:
    pred = TargetPredicate(cfg.fpt.target, model.species, model.size)
    mask = pred.mask(model.labels)
    if not mask.any():
        log.warning("target predicate %r selects no states", cfg.fpt.target)
    return mask


class Run:
    """One run directory: stage execution, artifact persistence and the manifest."""

    def __init__(self, cfg: ExperimentConfig, out: str | Path | None = None,
                 fast: bool = False):
        self.cfg = cfg
        self.fast = bool(fast)
        self.out = Path(out if out is not None else Path(cfg.output) / cfg.name)
        self.out.mkdir(parents=True, exist_ok=True)
        self._model = None
        self._s0 = None
        log_file = self.out / "run_log.json"
        self.timings = io.read_json(log_file).get("timings_s", {}) if log_file.exists() else {}
        manifest = self.out / "manifest.json"
        self.manifest = io.read_json(manifest) if manifest.exists() else {}
        self.manifest.update(self._header())

    # -- bookkeeping -------------------------------------------------------

    def _header(self) -> dict:
        return {
            "config": self.cfg.to_dict(),
            "fast": self.fast,
            "seeds": {"ssa_root": int(self.cfg.ssa.seed),
                      "perturbation": int(self.cfg.model.perturbation.seed)},
            "n_paths": self.n_paths,
            "versions": {"gfa": _version(), "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
        }

    @property
    def n_paths(self) -> int:
        return int(self.cfg.ssa.fast_paths if self.fast else self.cfg.ssa.n_paths)

    def path(self, key: str) -> Path:
        return self.out / FILES[key]

    def _record(self, stage, inputs, outputs, status="ok", error=None):
        stages = self.manifest.setdefault("stages", {})
        entry = {
            "status": status,
            "inputs": {k: io.file_sha256(self.path(k)) for k in inputs if self.path(k).exists()},
            "outputs": {k: io.file_sha256(self.path(k)) for k in outputs
                        if self.path(k).exists()},
        }
        if error is not None:
            entry["error"] = error
        stages[stage] = entry
        io.write_json(self.out / "manifest.json", self.manifest)
        io.write_json(self.out / "run_log.json", {"timings_s": self.timings})
        (self.out / "config.yaml").write_text(dump_config(self.cfg))

    def _stage(self, name, inputs, outputs, fn):
        missing = [k for k in inputs if not self.path(k).exists()]
        if missing:
            raise ConfigError(f"stage {name!r} needs artifacts {missing}; run earlier stages")
        start = time.perf_counter()
        try:
            result = fn()
        except GfaError as exc:
            exc.stage = name
            self._record(name, inputs, outputs, "failed", f"{type(exc).__name__}: {exc}")
            raise
        self.timings[name] = round(time.perf_counter() - start, 3)
        self._record(name, inputs, outputs)
        return result

    # -- shared state ------------------------------------------------------

    @property
    def model(self) -> Model:
        if self._model is None:
            self._model = build_model(self.cfg)
            self._s0 = check_model(self.cfg, self._model)
        return self._model

    @property
    def s0(self) -> int:
        _ = self.model
        return self._s0

    def generator(self) -> GeneratorMatrix:
        return io.read_generator(self.path("generator"))

    def embedding(self):
        return io.read_embedding(self.path("embedding"))

    def field(self):
        """Drift field rebuilt from stored hyperparameters (no re-optimisation)."""
        emb = self.embedding()
        obs = np.array(io._read_rows(self.path("drift"))[2], dtype=float)[:, 1:]
        record = io.read_json(self.path("hyperparameters"))
        return gp_fit(emb.coords, obs, init=kernels_from_dict(record), optimize=False,
                      jitter=record["jitter"])

    # -- stages -------------------------------------------------------------

    def build(self):
        def go():
            model = self.model
            io.write_generator(self.path("generator"), model.q)
            header = ["state_index", *model.species, "name"]
            rows = ([i, *lab.coords, lab.name or ""] for i, lab in enumerate(model.labels))
            io._write_rows(self.path("labels"), header, rows)
            return model
        return self._stage("build", [], ["generator", "labels"], go)

    def embed(self):
        def go():
            e = self.cfg.embedding
            emb = embed(self.generator(), int(e.k), e.method, e.eps, e.diffusion_time)
            io.write_embedding(self.path("embedding"), emb)
            return emb
        return self._stage("embed", ["generator"], ["embedding"], go)

    def drift(self):
        def go():
            q, emb = self.generator(), self.embedding()
            obs = drift_observations(q, emb)
            header = ["state_index"] + [f"r_{k + 1}" for k in range(obs.shape[1])]
            io._write_rows(self.path("drift"), header,
                           ([i, *row] for i, row in enumerate(obs)))
            g = self.cfg.gp
            init = kernels_from_dict(g.init) if g.init else None
            field = gp_fit(emb.coords, obs, init=init, optimize=g.optimize,
                           optimize_noise=g.optimize_noise, jitter=g.jitter,
                           max_iter=g.max_iter)
            io.write_hyperparameters(self.path("hyperparameters"), field)
            return field
        return self._stage("drift", ["generator", "embedding"], ["drift", "hyperparameters"], go)

    def gfa(self, t_end=None, n_samples=None):
        def go():
            i = self.cfg.integration
            emb = self.embedding()
            traj = integrate_gfa(self.field(), emb.coords[self.s0],
                                 float(t_end or i.t_end), i.rtol, i.atol,
                                 int(n_samples or i.n_samples))
            io.write_trajectory(self.path("gfa"), traj)
            return traj
        return self._stage("gfa", ["embedding", "drift", "hyperparameters"], ["gfa"], go)

    def ssa(self):
        def go():
            traj = io.read_trajectory(self.path("gfa"))
            paths = simulate_ensemble(self.generator(), self.s0, float(traj.times[-1]),
                                      self.n_paths, int(self.cfg.ssa.seed))
            summary = project_ensemble(paths, self.embedding(), traj.times)
            io.write_ensemble(self.path("ssa"), summary)
            return summary
        return self._stage("ssa", ["generator", "embedding", "gfa"], ["ssa"], go)

    def compare(self) -> dict:
        def go():
            q, emb = self.generator(), self.embedding()
            traj = io.read_trajectory(self.path("gfa"))
            ens = io.read_ensemble(self.path("ssa"))
            diag = emb.bbox_diagonal()
            curves = {"gfa": traj.points, "ssa_mean": ens.mean_coords}
            err_ssa = np.linalg.norm(traj.points - ens.mean_coords, axis=1)
            report = {"n_states": q.n_states, "n_paths": ens.n_paths,
                      "bbox_diagonal": diag,
                      "rmse_gfa_vs_ssa": rmse(traj.points, ens.mean_coords),
                      "normalized_rmse_gfa_vs_ssa": rmse(traj.points, ens.mean_coords) / diag,
                      "max_error_gfa_vs_ssa": float(err_ssa.max())}
            if q.n_states <= DENSE_LIMIT:
                cke = projected_mean(q, point_mass(q.n_states, self.s0), emb, traj.times)
                io.write_trajectory(self.path("cke"), cke)
                curves["cke_oracle"] = cke.points
                err_cke = np.linalg.norm(traj.points - cke.points, axis=1)
                curves["error_gfa_vs_cke"] = err_cke
                report.update({
                    "rmse_gfa_vs_cke": rmse(traj.points, cke.points),
                    "normalized_rmse_gfa_vs_cke": rmse(traj.points, cke.points) / diag,
                    "normalized_rmse_ssa_vs_cke": rmse(ens.mean_coords, cke.points) / diag,
                })
            curves["error_gfa_vs_ssa"] = err_ssa
            io.write_curves(self.path("compare"), traj.times, curves)
            io.write_json(self.path("compare_report"), report)
            return report
        return self._stage("compare", ["generator", "embedding", "gfa", "ssa"],
                           ["compare", "cke", "compare_report"], go)

    def fpt(self) -> dict:
        if self.cfg.fpt is None:
            raise ConfigError("configuration has no fpt block")

        def go():
            f = self.cfg.fpt
            model = self.model
            q, emb = self.generator(), self.embedding()
            t_end = float(f.t_end or self.cfg.integration.t_end)
            n_paths = int(self.cfg.ssa.fast_paths if self.fast
                          else (f.n_paths or self.cfg.ssa.n_paths))
            mask = target_mask(self.cfg, model)
            i = self.cfg.integration
            traj = integrate_gfa(self.field(), emb.coords[self.s0], t_end, i.rtol, i.atol,
                                 int(f.n_samples))
            cdfs = {"gfa": fluid_fpt(traj, VoronoiClassifier(emb, mask))
                    if mask.any() else FptCdf.step(np.inf)}
            if mask.any():
                cdfs["ssa"] = ssa_fpt(q, self.s0, np.flatnonzero(mask), t_end, n_paths,
                                      int(self.cfg.ssa.seed))
            else:
                cdfs["ssa"] = FptCdf.empirical([], n_paths)
            if model.network is not None:
                pred = TargetPredicate(f.target, model.species, model.size)
                x0 = np.array(model.labels[self.s0].coords, dtype=float)
                cl = classical_fluid(model.network, x0, t_end, n_samples=int(f.n_samples))
                cdfs["classical"] = predicate_fpt(cl, pred)
            grid = uniform_grid(t_end, int(f.n_samples))
            io.write_curves(self.path("fpt_cdfs"), grid,
                            {k: v.cdf(grid) for k, v in cdfs.items()})
            for k, v in cdfs.items():
                io.write_fpt(self.path(f"fpt_{k}"), v)
            report = {"target": f.target, "n_target_states": int(mask.sum()),
                      "n_paths": n_paths, "t_end": t_end,
                      "censored_fraction": cdfs["ssa"].censored_fraction,
                      "crossing_time_gfa": cdfs["gfa"].crossing_time,
                      "ssa_median": cdfs["ssa"].median(),
                      "gfa_vs_ssa": compare_cdfs(cdfs["gfa"], cdfs["ssa"], grid).as_dict()}
            if "classical" in cdfs:
                report["crossing_time_classical"] = cdfs["classical"].crossing_time
                report["classical_vs_ssa"] = compare_cdfs(cdfs["classical"], cdfs["ssa"],
                                                          grid).as_dict()
                report["gfa_vs_classical"] = compare_cdfs(cdfs["gfa"], cdfs["classical"],
                                                          grid).as_dict()
            io.write_json(self.path("fpt_report"), report)
            return report
        return self._stage("fpt", ["generator", "embedding", "drift", "hyperparameters"],
                           ["fpt_report", "fpt_cdfs", "fpt_ssa", "fpt_gfa", "fpt_classical"],
                           go)

    def run(self, stage: str):
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; choose from {STAGES}")
        return getattr(self, stage)()


def rmse(a, b) -> float:
    """Root mean (over times) squared Euclidean distance between two curves."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=-1))))


def _version() -> str:
    from . import __version__
    return __version__


def run_gfa(cfg: ExperimentConfig, out=None, fast=False) -> Run:
    """Build, embed, fit the drift and integrate; returns the run handle."""
    run = Run(cfg, out, fast)
    _ = run.model
    for stage in ("build", "embed", "drift", "gfa"):
        run.run(stage)
    return run


def run_compare(cfg: ExperimentConfig, out=None, fast=False) -> dict:
    run = run_gfa(cfg, out, fast)
    run.ssa()
    return run.compare()


def run_fpt(cfg: ExperimentConfig, out=None, fast=False) -> dict:
    if cfg.fpt is None:
        raise ConfigError("configuration has no fpt block")
    run = Run(cfg, out, fast)
    _ = run.model
    for stage in ("build", "embed", "drift"):
        run.run(stage)
    return run.fpt()


def run_all(cfg: ExperimentConfig, out=None, fast=False) -> Run:
    run = run_gfa(cfg, out, fast)
    run.ssa()
    run.compare()
    if cfg.fpt is not None:
        run.fpt()
    return run
