"""Causal measurement transform from a true to a pseudo parameter.

Component by component, each measurement is pushed through the conditional
CDF of the true model (given the true past) and pulled back through the
conditional inverse CDF of the pseudo model (given the disguised past):

    u   = F_true(y^l   | y^{1:l-1},  y_{1:k-1})
    y~  = F_pseudo^{-1}(u | y~^{1:l-1}, y~_{1:k-1})

The two conditioning histories are kept apart.  For Gauss-Markov models the
histories collapse to two Kalman predictor states, advanced once per step.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import special

from .gauss_markov import GaussMarkovModel
from .model_core import ConditionalModel, ConfigurationError

__all__ = [
    "CLAMP_EPS",
    "SaturationWarning",
    "FilterSession",
    "open_session",
    "run_filter",
    "gaussian_cdf",
    "gaussian_icdf",
]

CLAMP_EPS = 1e-15


class SaturationWarning(RuntimeWarning):
    """A CDF value hit the clamp ``[eps, 1 - eps]`` before inversion."""


def gaussian_cdf(z, mu=0.0, var=1.0):
    if np.any(np.asarray(var) <= 0):
        raise ValueError("variance must be positive")
    return special.ndtr((np.asarray(z, dtype=float) - mu) / np.sqrt(var))


def gaussian_icdf(u, mu=0.0, var=1.0):
    u = np.asarray(u, dtype=float)
    if np.any(np.asarray(var) <= 0):
        raise ValueError("variance must be positive")
    if np.any((u <= 0) | (u >= 1)) or np.any(np.isnan(u)):
        raise ValueError("gaussian_icdf needs u strictly inside (0, 1)")
    return mu + np.sqrt(var) * special.ndtri(u)


def _roundtrip_standard(z):
    """``ndtri(clamp(ndtr(z)))`` evaluated on the nearer tail.

    Returns the image and a mask of clamped entries.  Working on the smaller
    tail keeps full relative precision for large positive ``z``.
    """
    tail = special.ndtr(-np.abs(z))
    saturated = tail < CLAMP_EPS
    w = special.ndtri(np.maximum(tail, CLAMP_EPS))
    return np.where(z > 0, -w, w), saturated


class _GenericSide:
    """Keeps the full history and defers to the model's conditional CDF."""

    def __init__(self, model: ConditionalModel, batch: int):
        self.model = model
        self.past = np.empty((batch, 0, model.dim))

    def begin(self, k):
        pass

    def cdf(self, z, l, prefix):
        return self.model.cond_cdf(z, l, prefix, self.past)

    def icdf(self, u, l, prefix):
        return self.model.cond_icdf(u, l, prefix, self.past)

    def push(self, y):
        self.past = np.concatenate([self.past, y[:, None, :]], axis=1)


class _KalmanSide:
    """One-step-ahead Kalman predictor plus one-component-ahead conditionals."""

    def __init__(self, model: GaussMarkovModel, batch: int):
        self.model = model
        self.theta = model.theta
        self.xhat = np.tile(self.theta.m0, (batch, 1))

    def begin(self, k):
        self.q = self.model.step_quantities(k)
        self.yhat = self.xhat @ self.theta.C.T

    def moments(self, l, prefix):
        mean = self.yhat[:, l]
        if l:
            mean = mean + (prefix - self.yhat[:, :l]) @ self.q.gains[l]
        return mean, self.q.std[l]

    def push(self, y):
        x_filt = self.xhat + (y - self.yhat) @ self.q.gain_t
        self.xhat = x_filt @ self.theta.A.T + self.theta.drift


class FilterSession:
    """Per-stream state of the transform for one ``(true, pseudo)`` pair.

    Parameters
    ----------
    true_model, pseudo_model : ConditionalModel
        Must be of the same kind and dimension.
    batch : int
        Number of independent streams advanced together.
    fast : bool
        Use the Kalman-predictor path when both models are Gauss-Markov.
        ``False`` forces the generic conditional-CDF path (slow; for checks).
    """

    def __init__(self, true_model: ConditionalModel, pseudo_model: ConditionalModel,
                 batch: int = 1, fast: bool = True):
        if true_model.kind != pseudo_model.kind:
            raise ConfigurationError(
                f"model family mismatch: {true_model.kind} vs {pseudo_model.kind}")
        if true_model.dim != pseudo_model.dim:
            raise ConfigurationError(
                f"dimension mismatch: {true_model.dim} vs {pseudo_model.dim}")
        self.true_model = true_model
        self.pseudo_model = pseudo_model
        self.dim = true_model.dim
        self.batch = int(batch)
        self.k = 1
        self.saturations = 0
        self.gaussian = fast and isinstance(true_model, GaussMarkovModel)
        side = _KalmanSide if self.gaussian else _GenericSide
        self._true = side(true_model, self.batch)
        self._pseudo = side(pseudo_model, self.batch)

    def step(self, y_k):
        """Consume ``y_k`` and emit ``(y~_k, u_k)``; accepts ``(d,)`` or ``(batch, d)``."""
        y = np.asarray(y_k, dtype=float)
        single = y.ndim == 1
        y = y.reshape(self.batch, self.dim)
        out = np.empty_like(y)
        u = np.empty_like(y)
        self._true.begin(self.k)
        self._pseudo.begin(self.k)
        n_sat = 0
        for l in range(self.dim):
            if self.gaussian:
                mean, std = self._true.moments(l, y[:, :l])
                z = (y[:, l] - mean) / std
                u[:, l] = special.ndtr(z)
                w, sat = _roundtrip_standard(z)
                mean, std = self._pseudo.moments(l, out[:, :l])
                out[:, l] = mean + std * w
            else:
                u[:, l] = self._true.cdf(y[:, l], l, y[:, :l])
                sat = (u[:, l] < CLAMP_EPS) | (u[:, l] > 1.0 - CLAMP_EPS)
                uc = np.clip(u[:, l], CLAMP_EPS, 1.0 - CLAMP_EPS)
                out[:, l] = self._pseudo.icdf(uc, l, out[:, :l])
            n_sat += int(np.count_nonzero(sat))
        if n_sat:
            self.saturations += n_sat
            warnings.warn(f"{n_sat} CDF value(s) clamped at step {self.k}",
                          SaturationWarning, stacklevel=2)
        self._true.push(y)
        self._pseudo.push(out)
        self.k += 1
        if single:
            return out[0], u[0]
        return out, u


def open_session(true_model: ConditionalModel, pseudo_model: ConditionalModel,
                 batch: int = 1, fast: bool = True) -> FilterSession:
    return FilterSession(true_model, pseudo_model, batch=batch, fast=fast)


def run_filter(true_model, pseudo_model, y, *, return_u=False, fast=True):
    """Transform a whole record.

    ``y`` is ``(T, d)`` for one stream or ``(N, T, d)`` for ``N`` streams; the
    output has the same shape.  With ``return_u`` the CDF values are returned
    as a second array and the session's saturation count as a third.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 2
    if single:
        y = y[None]
    if y.ndim != 3 or y.shape[2] != true_model.dim:
        raise ValueError(f"expected (N, T, {true_model.dim}) input, got {y.shape}")
    session = open_session(true_model, pseudo_model, batch=y.shape[0], fast=fast)
    out = np.empty_like(y)
    u = np.empty_like(y)
    for k in range(y.shape[1]):
        out[:, k], u[:, k] = session.step(y[:, k])
    if single:
        out, u = out[0], u[0]
    if return_u:
        return out, u, session.saturations
    return out
