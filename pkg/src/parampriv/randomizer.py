"""Distortion matrices and the mutual-information-constrained randomizer.

The randomizer is a column-stochastic matrix ``P[j, i] = P(pseudo_j | true_i)``.
Its expected distortion ``sum_ij p_i P[j, i] D[i, j]`` is linear in ``P`` and
the leakage ``I(true; pseudo)`` is convex, so the design problem

    minimize  sum_ij p_i P[j, i] D[i, j]   s.t.  I(true; pseudo) <= I0

is solved along the rate-distortion curve: for a multiplier ``lam`` the
Lagrangian ``<D, P> + lam * I`` is minimised by Blahut-Arimoto iterations,
and ``lam`` is bisected until the leakage meets the budget.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .model_core import ConditionalModel, ParameterPrior, spawn_generator
from .transform import SaturationWarning, run_filter

log = logging.getLogger(__name__)

__all__ = [
    "DISTORTIONS",
    "RandomizerPolicy",
    "DistortionMatrix",
    "SolveResult",
    "mutual_information",
    "expected_distortion",
    "estimate_distortion_matrix",
    "solve_randomizer",
    "blahut_arimoto",
]

CHUNK = 1024


def squared_error(y, yt):
    return np.mean((y - yt) ** 2, axis=-1)


def absolute_error(y, yt):
    return np.mean(np.abs(y - yt), axis=-1)


DISTORTIONS: dict[str, Callable] = {
    "squared_error": squared_error,
    "absolute_error": absolute_error,
}


@dataclass
class RandomizerPolicy:
    """Column-stochastic ``P`` of shape ``(m_pseudo, m_true)``."""

    P: np.ndarray
    pseudo_labels: tuple = ()

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2:
            raise ValueError("policy matrix must be 2-D")
        if np.any(P < -1e-12) or np.any(np.abs(P.sum(axis=0) - 1.0) > 1e-9):
            raise ValueError("policy columns must be probability vectors")
        P = np.clip(P, 0.0, None)
        self.P = P / P.sum(axis=0)
        self.pseudo_labels = tuple(self.pseudo_labels)
        if self.pseudo_labels and len(self.pseudo_labels) != P.shape[0]:
            raise ValueError("one pseudo label per policy row is required")

    @classmethod
    def identity(cls, m: int, pseudo_labels=()):
        return cls(np.eye(m), pseudo_labels)

    @classmethod
    def independent(cls, column: Sequence[float], m: int, pseudo_labels=()):
        col = np.asarray(column, dtype=float).reshape(-1, 1)
        return cls(np.repeat(col, m, axis=1), pseudo_labels)

    def sample(self, true_index, u):
        """Pseudo indices for true indices and uniforms ``u`` (inverse-CDF draw)."""
        cum = np.cumsum(self.P, axis=0)[:, np.asarray(true_index)]
        idx = (np.asarray(u)[None, :] >= cum).sum(axis=0)
        return np.minimum(idx, self.P.shape[0] - 1)

    def to_json(self) -> dict:
        return {"P": self.P.tolist(), "pseudo_labels": [str(s) for s in self.pseudo_labels]}

    @classmethod
    def from_json(cls, obj: dict) -> "RandomizerPolicy":
        return cls(np.asarray(obj["P"], dtype=float), obj.get("pseudo_labels", ()))


@dataclass
class DistortionMatrix:
    """Monte Carlo estimate ``D[i, j]`` with standard errors."""

    D: np.ndarray
    stderr: np.ndarray
    n_samples: np.ndarray
    saturation_fraction: np.ndarray = None
    flagged: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"D": self.D.tolist(), "stderr": self.stderr.tolist(),
                "n_samples": self.n_samples.tolist(),
                "saturation_fraction": None if self.saturation_fraction is None
                else self.saturation_fraction.tolist(),
                "flagged": [list(c) for c in self.flagged]}

    @classmethod
    def from_json(cls, obj: dict) -> "DistortionMatrix":
        D = np.asarray(obj["D"], dtype=float)
        se = np.asarray(obj.get("stderr", np.zeros_like(D)), dtype=float)
        n = np.asarray(obj.get("n_samples", np.zeros(D.shape, int)))
        sat = obj.get("saturation_fraction")
        return cls(D, se, n, None if sat is None else np.asarray(sat),
                   [tuple(c) for c in obj.get("flagged", [])])

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _probs(prior) -> np.ndarray:
    return prior.probs if isinstance(prior, ParameterPrior) else np.asarray(prior, dtype=float)


def _matrix(policy) -> np.ndarray:
    return policy.P if isinstance(policy, RandomizerPolicy) else np.asarray(policy, dtype=float)


def mutual_information(prior, policy) -> float:
    """``I(true; pseudo)`` in nats for prior ``p`` and channel ``P[j, i]``."""
    p = _probs(prior)
    P = _matrix(policy)
    joint = P * p[None, :]
    q = joint.sum(axis=1)
    mask = joint > 0
    ratio = P[mask] / np.broadcast_to(q[:, None], P.shape)[mask]
    return float(max(0.0, np.sum(joint[mask] * np.log(ratio))))


def expected_distortion(D, prior, policy) -> float:
    D = D.D if isinstance(D, DistortionMatrix) else np.asarray(D, dtype=float)
    return float(np.einsum("i,ji,ij->", _probs(prior), _matrix(policy), D))


def estimate_distortion_matrix(prior_models: Sequence[ConditionalModel],
                               pseudo_models: Sequence[ConditionalModel],
                               horizon: int, distortion="absolute_error",
                               n_paths: int = 10_000, seed: int = 0) -> DistortionMatrix:
    """Monte Carlo ``D[i, j] = (1/T) sum_k E d(Y_k, Y~_k)`` under ``(theta_i, pseudo_j)``.

    Paths are generated in fixed-size chunks with counter-derived seeds; every
    true model sees the same seed for a given chunk, so cells share their
    random numbers.  Cells whose two models have the same law are exactly 0.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    dfun = DISTORTIONS[distortion] if isinstance(distortion, str) else distortion
    m, mt = len(prior_models), len(pseudo_models)
    sums = np.zeros((m, mt))
    sq = np.zeros((m, mt))
    sat = np.zeros((m, mt))
    for c, start in enumerate(range(0, n_paths, CHUNK)):
        size = min(CHUNK, n_paths - start)
        for i, mi in enumerate(prior_models):
            y = mi.sample_paths(horizon, size, spawn_generator(seed, 0, c))
            for j, mj in enumerate(pseudo_models):
                if mi.same_law(mj):
                    continue
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", SaturationWarning)
                    yt, _, n_sat = run_filter(mi, mj, y, return_u=True)
                per_path = dfun(y, yt).mean(axis=1)
                sums[i, j] += per_path.sum()
                sq[i, j] += np.sum(per_path ** 2)
                sat[i, j] += n_sat
    mean = sums / n_paths
    var = np.maximum(sq / n_paths - mean ** 2, 0.0) * n_paths / (n_paths - 1)
    dim = prior_models[0].dim
    sat_frac = sat / (n_paths * max(horizon, 1) * dim)
    flagged = [(int(i), int(j)) for i, j in zip(*np.nonzero(sat_frac > 0.01))]
    if flagged:
        log.warning("transform saturation above 1%% in cells %s", flagged)
    return DistortionMatrix(mean, np.sqrt(var / n_paths),
                            np.full((m, mt), n_paths), sat_frac, flagged)


# -- solver ---------------------------------------------------------------------

@dataclass
class SolveResult:
    policy: RandomizerPolicy
    mutual_information: float
    distortion: float
    multiplier: float | None = None


def blahut_arimoto(Dn, p, beta, q0=None, tol=1e-12, max_iter=50_000):
    """Minimise ``<Dn, P> + I / beta`` over channels ``P[j, i]``.

    ``q0`` seeds the output marginal.  Returns ``(P, q)``.
    """
    mt = Dn.shape[1]
    log_q = np.log(np.full(mt, 1.0 / mt) if q0 is None else np.maximum(q0, 1e-300))
    cost = beta * Dn.T
    prev = np.inf
    for _ in range(max_iter):
        logits = log_q[:, None] - cost
        log_z = logsumexp(logits, axis=0)
        P = np.exp(logits - log_z)
        q = P @ p
        with np.errstate(divide="ignore"):
            log_q = np.log(q)
        # At the minimiser over P for this q, <D, P> + I/beta = -(p . log_z)/beta,
        # up to the KL gap between q and the true output marginal.
        value = -float(p @ log_z)
        if abs(prev - value) <= tol * max(1.0, abs(value)):
            break
        prev = value
    return P, q


def _deterministic(D, p):
    P = np.zeros((D.shape[1], D.shape[0]))
    P[np.argmin(D, axis=1), np.arange(D.shape[0])] = 1.0
    return P


def _shared_vertex(D, p):
    P = np.zeros((D.shape[1], D.shape[0]))
    P[int(np.argmin(p @ D)), :] = 1.0
    return P


def solve_randomizer(D, prior, I0: float, *, pseudo_labels=(), mi_tol: float = 1e-6,
                     max_bisect: int = 200) -> SolveResult:
    """Minimum-distortion policy with ``I(true; pseudo) <= I0`` (nats).

    Ties between vertices go to the lowest pseudo index.  The constraint is
    met exactly (up to ``mi_tol`` below the budget) or shown to be inactive.
    """
    D = D.D if isinstance(D, DistortionMatrix) else np.asarray(D, dtype=float)
    p = _probs(prior)
    if D.ndim != 2 or D.shape[0] != p.size:
        raise ValueError(f"distortion matrix shape {D.shape} does not match prior size {p.size}")
    if not np.all(np.isfinite(D)):
        raise ValueError("distortion matrix has non-finite entries")
    if not (I0 >= 0 and np.isfinite(I0)):
        raise ValueError("leakage budget must be a finite non-negative number")

    def result(P, lam=None):
        P = np.clip(P, 0.0, None)
        P = P / P.sum(axis=0)
        pol = RandomizerPolicy(P, pseudo_labels)
        return SolveResult(pol, mutual_information(p, P), expected_distortion(D, p, P), lam)

    P_det = _deterministic(D, p)
    if mutual_information(p, P_det) <= I0:
        return result(P_det, 0.0)
    if I0 == 0:
        return result(_shared_vertex(D, p))

    # Scale-free working copy: shift by the minimum, divide by the range.
    span = float(D.max() - D.min())
    Dn = (D - D.min()) / span

    def at(lam):
        P, _ = blahut_arimoto(Dn, p, 1.0 / lam)
        return P, mutual_information(p, P)

    # Larger lam -> less leakage.  lo: leakage above budget; hi: within budget.
    lam_lo = 1e-8
    P_lo, mi_lo = at(lam_lo)
    if mi_lo <= I0:
        return result(P_lo, lam_lo * span)
    lam_hi = 1.0
    P_hi, mi_hi = at(lam_hi)
    while mi_hi > I0:
        lam_lo, P_lo, mi_lo = lam_hi, P_hi, mi_hi
        lam_hi *= 2.0
        P_hi, mi_hi = at(lam_hi)
    for _ in range(max_bisect):
        if mi_hi >= I0 - mi_tol:
            break
        lam = np.sqrt(lam_lo * lam_hi)
        if not lam_lo < lam < lam_hi:
            break
        P, mi = at(lam)
        if mi > I0:
            lam_lo, P_lo, mi_lo = lam, P, mi
        else:
            lam_hi, P_hi, mi_hi = lam, P, mi
    if mi_hi < I0 - mi_tol:
        # Leakage jumps across a flat stretch of the curve: mix the two ends.
        t_lo, t_hi = 0.0, 1.0
        for _ in range(100):
            t = 0.5 * (t_lo + t_hi)
            if mutual_information(p, t * P_lo + (1 - t) * P_hi) <= I0:
                t_lo = t
            else:
                t_hi = t
        P_hi = t_lo * P_lo + (1 - t_lo) * P_hi
    return result(P_hi, lam_hi * span)
