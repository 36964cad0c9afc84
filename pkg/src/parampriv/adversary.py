"""Adversary side: the windowed drift estimator and Monte Carlo error rates."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model_core import ConditionalModel, ParameterPrior, spawn_generator
from .randomizer import RandomizerPolicy
from .transform import SaturationWarning, run_filter

__all__ = [
    "OccupancyEstimatorConfig",
    "Pipeline",
    "drift_statistic",
    "drift_trace",
    "classify_theta",
    "error_probability",
    "wilson_stderr",
]

TRIAL_CHUNK = 4096


@dataclass(frozen=True)
class OccupancyEstimatorConfig:
    """Window length, decay coefficient and decision candidates.

    ``end`` is the 1-based time at which the statistic is read (``None`` means
    the last sample); ``component`` selects the measured channel.
    """

    window: int = 10
    decay: float = 0.95
    candidates: tuple = (0.0, 1.0)
    end: int | None = None
    component: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.decay == 0:
            raise ValueError("decay coefficient must be non-zero")
        if not self.candidates:
            raise ValueError("candidate set must be non-empty")


def drift_statistic(y, config: OccupancyEstimatorConfig, k: int | None = None):
    """``(mean(y[k-W+1 .. k]) - mean(y[k-W .. k-1])) / decay`` for 1-based ``k``.

    ``y`` is a scalar series ``(..., T)``; use :func:`drift_trace` for every ``k``.
    """
    y = np.asarray(y, dtype=float)
    T = y.shape[-1]
    k = (config.end or T) if k is None else k
    W = config.window
    if k < W + 1 or k > T:
        raise ValueError(f"need {W + 1} <= k <= {T} samples, got k={k}")
    recent = y[..., k - W:k].mean(axis=-1)
    lagged = y[..., k - W - 1:k - 1].mean(axis=-1)
    return (recent - lagged) / config.decay


def drift_trace(y, config: OccupancyEstimatorConfig):
    """Statistic at every ``k = W+1 .. T``; returns ``(ks, values)``."""
    y = np.asarray(y, dtype=float)
    ks = np.arange(config.window + 1, y.shape[-1] + 1)
    return ks, np.stack([drift_statistic(y, config, k) for k in ks], axis=-1)


def classify_theta(statistic, candidates: Iterable[float]):
    """Nearest candidate; ties go to the smaller value."""
    cand = np.sort(np.fromiter(candidates, dtype=float))
    if cand.size == 0:
        raise ValueError("candidate set must be non-empty")
    stat = np.asarray(statistic, dtype=float)
    idx = np.argmin(np.abs(stat[..., None] - cand), axis=-1)
    return cand[idx]


def wilson_stderr(errors: int, n: int) -> float:
    """One-sigma half-width of the Wilson score interval."""
    p = errors / n
    return math.sqrt(p * (1 - p) / n + 1.0 / (4 * n * n)) / (1 + 1.0 / n)


@dataclass
class Pipeline:
    """Everything an error-rate experiment needs.

    ``values[i]`` is the numeric parameter the estimator should recover when
    the true model is ``true_models[i]``.
    """

    prior: ParameterPrior
    true_models: Sequence[ConditionalModel]
    values: Sequence[float]
    policy: RandomizerPolicy
    pseudo_models: Sequence[ConditionalModel]
    horizon: int
    estimator: OccupancyEstimatorConfig

    def __post_init__(self):
        if len(self.true_models) != self.prior.size or len(self.values) != self.prior.size:
            raise ValueError("one model and one value per prior support point")
        if self.policy.P.shape != (len(self.pseudo_models), self.prior.size):
            raise ValueError("policy shape does not match the pseudo support and prior")


def _chunk_errors(pipe: Pipeline, seed: int, c: int, size: int) -> int:
    sel = spawn_generator(seed, 1, c)
    u_true = sel.random(size)
    u_pseudo = sel.random(size)
    cum = np.cumsum(pipe.prior.probs)
    i_idx = np.minimum(np.searchsorted(cum, u_true, side="right"), pipe.prior.size - 1)
    j_idx = pipe.policy.sample(i_idx, u_pseudo)
    values = np.asarray(pipe.values, dtype=float)
    est = pipe.estimator
    errors = 0
    for i in np.unique(i_idx):
        mi = pipe.true_models[i]
        y = mi.sample_paths(pipe.horizon, size, spawn_generator(seed, 2, c))
        for j in np.unique(j_idx[i_idx == i]):
            rows = (i_idx == i) & (j_idx == j)
            mj = pipe.pseudo_models[j]
            if mi.same_law(mj):
                yt = y[rows]
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", SaturationWarning)
                    yt = run_filter(mi, mj, y[rows])
            stat = drift_statistic(yt[..., est.component], est)
            guess = classify_theta(stat, est.candidates)
            errors += int(np.count_nonzero(guess != values[i]))
    return errors


def error_probability(pipe: Pipeline, n_trials: int, seed: int = 0, n_jobs: int = 1):
    """Fraction of trials where the estimator misses the true value.

    Each trial draws the private parameter from the prior, the pseudo
    parameter from the policy column, a measurement path, disguises it and
    applies the estimator.  Trials are chunked with counter-derived seeds, so
    two pipelines differing only in the policy share their random numbers.
    Returns ``(p_err, stderr)``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    chunks = [(c, min(TRIAL_CHUNK, n_trials - s))
              for c, s in enumerate(range(0, n_trials, TRIAL_CHUNK))]
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            counts = list(pool.map(lambda cs: _chunk_errors(pipe, seed, *cs), chunks))
    else:
        counts = [_chunk_errors(pipe, seed, c, size) for c, size in chunks]
    errors = sum(counts)
    return errors / n_trials, wilson_stderr(errors, n_trials)
