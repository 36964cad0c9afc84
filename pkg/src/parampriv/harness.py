"""Experiment orchestration: configs, I0 sweeps, the noise baseline, reports.

A config is one JSON document::

    {
      "models":  {"<label>": <descriptor>, ...},
      "prior":   {"labels": [...], "probs": [...], "values": [...]},
      "pseudo":  ["<label>", ...],
      "horizon": 50,
      "distortion": "absolute_error",
      "I0_grid": [0.0, 0.1, ...],
      "n_paths": 10000,
      "n_trials": 100000,
      "seed": 0,
      "estimator": {"window": 10, "decay": 0.95, "candidates": [0, 1]}
    }

``values`` gives the number the adversary tries to recover for each prior
label.  Leakage is in nats unless a caller converts.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, TextIO

import numpy as np

from .adversary import OccupancyEstimatorConfig, Pipeline, drift_trace, error_probability
from .infotheory import fano_bound, fano_bound_raw, privacy_report
from .model_core import (ConditionalModel, ConfigurationError, ModelRegistry, ParameterPrior,
                         prior_entropy, spawn_generator)
from .randomizer import (CHUNK, DISTORTIONS, DistortionMatrix, estimate_distortion_matrix,
                         solve_randomizer)
from .transform import open_session

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "occupancy_descriptor",
    "occupancy_config",
    "mean_signal_level",
    "run_sweep",
    "write_sweep",
    "baseline_noise",
    "filter_stream",
    "SWEEP_FIELDS",
]

SWEEP_FIELDS = ["I0", "relative_distortion_percent", "achieved_MI", "p_err", "p_err_se",
                "fano_bound", "fano_bound_raw", "distortion"]


def occupancy_descriptor(theta: float, a=0.95, b=10.0, q_w=0.1, q_v=0.1,
                         m0=100.0, q0=1.0) -> dict:
    """Scalar CO2 model ``x' = a x + w + b theta``, ``y = x + v``."""
    return {"kind": "gauss_markov", "A": [[a]], "C": [[1.0]], "Qw": [[q_w]],
            "Qv": [[q_v]], "Q0": [[q0]], "drift": [b * theta], "m0": [m0]}


def occupancy_config(**overrides) -> dict:
    """The building-occupancy experiment: two occupancy levels, six pseudo levels."""
    thetas = [0.0, 1.0]
    pseudo = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    models = {f"occ{t:g}": occupancy_descriptor(t) for t in thetas}
    models.update({f"pseudo{t:g}": occupancy_descriptor(t) for t in pseudo})
    cfg = {
        "models": models,
        "prior": {"labels": [f"occ{t:g}" for t in thetas], "probs": [0.5, 0.5],
                  "values": thetas},
        "pseudo": [f"pseudo{t:g}" for t in pseudo],
        "horizon": 50,
        "distortion": "absolute_error",
        "I0_grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.68, 0.69],
        "n_paths": 10_000,
        "n_trials": 100_000,
        "seed": 0,
        "estimator": {"window": 10, "decay": 0.95, "candidates": thetas, "end": 50},
    }
    cfg.update(overrides)
    return cfg


@dataclass
class ExperimentConfig:
    registry: ModelRegistry
    handles: dict
    prior: ParameterPrior
    values: list
    pseudo_labels: list
    horizon: int
    distortion: str = "absolute_error"
    I0_grid: list = field(default_factory=list)
    n_paths: int = 10_000
    n_trials: int = 100_000
    seed: int = 0
    estimator: OccupancyEstimatorConfig | None = None
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, cfg: Mapping[str, Any]) -> "ExperimentConfig":
        try:
            registry = ModelRegistry()
            handles = {name: registry.register(desc, name)
                       for name, desc in cfg["models"].items()}
            pr = cfg["prior"]
            prior = ParameterPrior(pr["labels"], pr["probs"])
            values = list(pr.get("values", range(prior.size)))
            pseudo = list(cfg.get("pseudo", prior.labels))
            horizon = int(cfg["horizon"])
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"incomplete config: {exc}") from exc
        for label in list(prior.labels) + pseudo:
            if label not in handles:
                raise ConfigurationError(f"label {label!r} has no model descriptor")
        if horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if len(values) != prior.size:
            raise ConfigurationError("prior 'values' must match its labels")
        dist = cfg.get("distortion", "absolute_error")
        if dist not in DISTORTIONS:
            raise ConfigurationError(f"unknown distortion {dist!r}")
        models = [registry[handles[l]] for l in list(prior.labels) + pseudo]
        if len({(m.kind, m.dim) for m in models}) != 1:
            raise ConfigurationError("all models must share one family and dimension")
        grid = [float(x) for x in cfg.get("I0_grid", [])]
        if "I0_grid" in cfg and not grid:
            raise ConfigurationError("I0_grid must be non-empty")
        est = cfg.get("estimator")
        estimator = None
        if est is not None:
            estimator = OccupancyEstimatorConfig(
                window=int(est.get("window", 10)), decay=float(est.get("decay", 0.95)),
                candidates=tuple(float(c) for c in est.get("candidates", values)),
                end=est.get("end"), component=int(est.get("component", 0)))
            if estimator.end is not None and not (estimator.window < estimator.end <= horizon):
                raise ConfigurationError("estimator window does not fit in the horizon")
        return cls(registry, handles, prior, values, pseudo, horizon, dist, grid,
                   int(cfg.get("n_paths", 10_000)), int(cfg.get("n_trials", 100_000)),
                   int(cfg.get("seed", 0)), estimator, dict(cfg))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def model(self, label) -> ConditionalModel:
        try:
            return self.registry[self.handles[label]]
        except KeyError:
            raise ConfigurationError(f"unknown model label {label!r}") from None

    @property
    def true_models(self):
        return [self.model(l) for l in self.prior.labels]

    @property
    def pseudo_models(self):
        return [self.model(l) for l in self.pseudo_labels]


def mean_signal_level(models, prior: ParameterPrior, horizon: int, n_paths: int,
                      seed: int) -> float:
    """Monte Carlo ``sum_i p_i mean_k E[Y_k]`` over all components.

    Uses the same counter-derived streams as the distortion estimate.
    """
    total = np.zeros(len(models))
    for c, start in enumerate(range(0, n_paths, CHUNK)):
        size = min(CHUNK, n_paths - start)
        for i, model in enumerate(models):
            total[i] += model.sample_paths(horizon, size, spawn_generator(seed, 0, c)).mean(
                axis=(1, 2)).sum()
    return float(prior.probs @ (total / n_paths))


def estimate_distortion(cfg: ExperimentConfig, seed: int | None = None) -> DistortionMatrix:
    return estimate_distortion_matrix(cfg.true_models, cfg.pseudo_models, cfg.horizon,
                                      cfg.distortion, cfg.n_paths,
                                      cfg.seed if seed is None else seed)


def run_sweep(cfg: ExperimentConfig, grid: Iterable[float] | None = None, *,
              seed: int | None = None, n_trials: int | None = None,
              D: DistortionMatrix | None = None, n_jobs: int = 1):
    """Solve the randomizer at each leakage budget and score it.

    Returns ``(rows, details)``: CSV-ready rows in :data:`SWEEP_FIELDS` order
    and per-budget policies with privacy reports.
    """
    seed = cfg.seed if seed is None else seed
    grid = list(cfg.I0_grid if grid is None else grid)
    if not grid:
        raise ConfigurationError("empty I0 grid")
    n_trials = cfg.n_trials if n_trials is None else n_trials
    if D is None:
        D = estimate_distortion(cfg, seed)
    signal = mean_signal_level(cfg.true_models, cfg.prior, cfg.horizon, cfg.n_paths, seed)
    H = prior_entropy(cfg.prior)
    m = cfg.prior.size
    rows, details = [], []
    for I0 in grid:
        res = solve_randomizer(D, cfg.prior, I0, pseudo_labels=cfg.pseudo_labels)
        row = {"I0": I0,
               "relative_distortion_percent": 100.0 * res.distortion / signal,
               "achieved_MI": res.mutual_information,
               "distortion": res.distortion}
        if cfg.estimator is not None and n_trials > 0:
            pipe = Pipeline(cfg.prior, cfg.true_models, cfg.values, res.policy,
                            cfg.pseudo_models, cfg.horizon, cfg.estimator)
            row["p_err"], row["p_err_se"] = error_probability(pipe, n_trials, seed, n_jobs)
        else:
            row["p_err"] = row["p_err_se"] = float("nan")
        if m >= 2:
            row["fano_bound"] = fano_bound(H, res.mutual_information, m)
            row["fano_bound_raw"] = fano_bound_raw(H, res.mutual_information, m)
        else:
            row["fano_bound"] = row["fano_bound_raw"] = float("nan")
        rows.append({k: row[k] for k in SWEEP_FIELDS})
        details.append({"I0": I0, "policy": res.policy.to_json(),
                        "report": privacy_report(cfg.prior, res.policy, I0).to_json()})
    return rows, {"distortion_matrix": D.to_json(), "mean_signal": signal,
                  "entropy": H, "cells": details}


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_csv(rows, fields, fh: TextIO):
    writer = csv.writer(fh, lineterminator="\r\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(row[f]) for f in fields])


def write_sweep(rows, details, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        write_csv(rows, SWEEP_FIELDS, fh)
    with open(out / "sweep.json", "w", encoding="utf-8") as fh:
        json.dump(details, fh, indent=2, sort_keys=True)
    return out / "sweep.csv"


def baseline_noise(model: ConditionalModel, estimator: OccupancyEstimatorConfig,
                   horizon: int, noise_variance: float, n_runs: int = 1, seed: int = 0):
    """Estimator traces on raw and noise-added measurements.

    Returns ``(ks, clean, noisy)`` with traces of shape ``(n_runs, len(ks))``.
    The added noise is i.i.d. zero-mean Gaussian.
    """
    if noise_variance < 0:
        raise ValueError("noise variance must be non-negative")
    y = model.sample_paths(horizon, n_runs, spawn_generator(seed, 3))[..., estimator.component]
    noise = spawn_generator(seed, 4).standard_normal(y.shape) * np.sqrt(noise_variance)
    ks, clean = drift_trace(y, estimator)
    _, noisy = drift_trace(y + noise, estimator)
    return ks, clean, noisy


def filter_stream(true_model, pseudo_model, lines: Iterable[str], out: TextIO,
                  emit_u: bool = False) -> int:
    """Disguise newline-delimited CSV vectors as they arrive.

    Returns the number of vectors written.  Raises ``ValueError`` with the
    1-based line number on malformed input.
    """
    session = open_session(true_model, pseudo_model)
    count = 0
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text:
            continue
        try:
            fields = next(csv.reader(io.StringIO(text)))
            y = np.array([float(f) for f in fields])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if y.size != session.dim or not np.all(np.isfinite(y)):
            raise ValueError(f"line {lineno}: expected {session.dim} finite values")
        yt, u = session.step(y)
        vals = list(yt) + (list(u) if emit_u else [])
        out.write(",".join(repr(float(v)) for v in vals) + "\n")
        out.flush()
        count += 1
    return count
