"""Linear-Gaussian state-space models and their one-step-ahead predictors.

The model is

    X_1 ~ N(m0, Q0)
    X_{k+1} = A X_k + W_k + drift,   W_k ~ N(0, Qw)
    Y_k     = C X_k + V_k,           V_k ~ N(0, Qv)

so the first predictor state is ``xhat_{1|0} = m0`` with covariance ``Q0``.
Predictor states may carry a leading batch axis on ``xhat``; the covariance
recursion does not depend on the data and is shared by every path.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg, special

from .model_core import ConditionalModel, ConfigurationError

log = logging.getLogger(__name__)

__all__ = [
    "GmParameter",
    "PredictorState",
    "ComponentConditional",
    "GaussMarkovModel",
    "initial_state",
    "predict_output",
    "update_state",
    "riccati_step",
    "riccati_fixed_point",
    "component_conditional",
    "conditional_gains",
    "simulate_paths",
    "simulate_path",
    "output_mean",
]


def _is_spd(M: np.ndarray) -> bool:
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        return False
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True, eq=False)
class GmParameter:
    """One Gauss-Markov parameter ``(A, C, Qw, Qv, Q0, drift, m0)``."""

    A: np.ndarray
    C: np.ndarray
    Qw: np.ndarray
    Qv: np.ndarray
    Q0: np.ndarray
    drift: np.ndarray = None
    m0: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ConfigurationError(f"A must be square, got shape {A.shape}")
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if C.ndim != 2 or C.shape[1] != n:
            raise ConfigurationError(f"C must be d x {n}, got shape {C.shape}")
        d = C.shape[0]
        mats = {"A": A, "C": C}
        for name, shape in (("Qw", (n, n)), ("Qv", (d, d)), ("Q0", (n, n))):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.shape != shape:
                raise ConfigurationError(f"{name} must have shape {shape}, got {M.shape}")
            if not _is_spd(M):
                raise ConfigurationError(f"{name} must be symmetric positive definite")
            mats[name] = M
        for name in ("drift", "m0"):
            v = getattr(self, name)
            v = np.zeros(n) if v is None else np.asarray(v, dtype=float).reshape(-1)
            if v.shape != (n,):
                raise ConfigurationError(f"{name} must have length {n}")
            mats[name] = v
        if max(abs(np.linalg.eigvals(A))) >= 1.0:
            raise ConfigurationError("A must be Schur stable (spectral radius < 1)")
        obs = np.vstack([C @ np.linalg.matrix_power(A, i) for i in range(n)])
        if np.linalg.matrix_rank(obs) < n:
            raise ConfigurationError("(A, C) must be observable")
        for name, value in mats.items():
            value = value.copy()
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.C.shape[0]

    def same_law(self, other: "GmParameter") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("A", "C", "Qw", "Qv", "Q0", "drift", "m0"))


@dataclass(frozen=True)
class PredictorState:
    """``xhat_{k|k-1}`` (optionally batched) and its shared error covariance."""

    xhat: np.ndarray
    sigma: np.ndarray
    k: int = 1


@dataclass(frozen=True)
class ComponentConditional:
    mean: np.ndarray | float
    variance: float


def initial_state(theta: GmParameter, batch: int | None = None) -> PredictorState:
    xhat = theta.m0.copy() if batch is None else np.tile(theta.m0, (batch, 1))
    return PredictorState(xhat, theta.Q0.copy(), 1)


def predict_output(state: PredictorState, theta: GmParameter):
    """One-step-ahead output prediction ``C xhat`` and covariance ``C S C' + Qv``."""
    yhat = state.xhat @ theta.C.T
    sigma_out = theta.C @ state.sigma @ theta.C.T + theta.Qv
    return yhat, 0.5 * (sigma_out + sigma_out.T)


def riccati_step(sigma: np.ndarray, theta: GmParameter) -> np.ndarray:
    """``Sigma_{k+1|k}`` from ``Sigma_{k|k-1}``."""
    A, C = theta.A, theta.C
    S = C @ sigma @ C.T + theta.Qv
    cross = A @ sigma @ C.T
    nxt = A @ sigma @ A.T + theta.Qw - cross @ linalg.cho_solve(linalg.cho_factor(S), cross.T)
    return 0.5 * (nxt + nxt.T)


def riccati_fixed_point(theta: GmParameter, tol: float = 1e-13, max_iter: int = 10_000):
    """Iterate the Riccati map from ``Q0`` until successive steps agree.

    Returns ``(sigma, iterations)``; ``iterations`` is the number of steps
    taken before the max-norm change fell below ``tol``.
    """
    sigma = theta.Q0.copy()
    for it in range(1, max_iter + 1):
        nxt = riccati_step(sigma, theta)
        if np.max(np.abs(nxt - sigma)) < tol:
            return nxt, it
        sigma = nxt
    raise RuntimeError(f"Riccati recursion did not converge in {max_iter} steps")


def update_state(state: PredictorState, y, theta: GmParameter) -> PredictorState:
    """Measurement update with ``y_k`` followed by the time update."""
    A, C = theta.A, theta.C
    S = C @ state.sigma @ C.T + theta.Qv
    try:
        factor = linalg.cho_factor(S)
    except linalg.LinAlgError as exc:  # cannot happen with Qv positive definite
        raise FloatingPointError("innovation covariance is not positive definite") from exc
    innov = np.asarray(y, dtype=float) - state.xhat @ C.T
    gain_t = linalg.cho_solve(factor, C @ state.sigma)  # (d, n) = K'
    x_filt = state.xhat + innov @ gain_t
    xhat = x_filt @ A.T + theta.drift
    return PredictorState(xhat, riccati_step(state.sigma, theta), state.k + 1)


def _leading_factor(block: np.ndarray):
    try:
        return linalg.cho_factor(block, lower=True)
    except linalg.LinAlgError:
        jitter = 1e-12 * np.trace(block) / block.shape[0]
        log.warning("output covariance block not SPD; adding jitter %.3g", jitter)
        return linalg.cho_factor(block + jitter * np.eye(block.shape[0]), lower=True)


def conditional_gains(sigma_out: np.ndarray):
    """Per-component regression coefficients and residual variances.

    For component ``l`` the conditional law given the first ``l`` components
    is ``N(yhat_l + g_l @ (prefix - yhat_{:l}), v_l)``; returns the lists
    ``[g_0, ..., g_{d-1}]`` and ``[v_0, ..., v_{d-1}]``.
    """
    d = sigma_out.shape[0]
    gains, variances = [np.zeros(0)], [float(sigma_out[0, 0])]
    for l in range(1, d):
        delta = sigma_out[l, :l]
        g = linalg.cho_solve(_leading_factor(sigma_out[:l, :l]), delta)
        gains.append(g)
        variances.append(float(sigma_out[l, l] - delta @ g))
    return gains, variances


def component_conditional(state: PredictorState, theta: GmParameter, l: int,
                          prefix=None) -> ComponentConditional:
    """Gaussian law of component ``l`` (0-based) given the same-time prefix.

    The mean is the MMSE predictor ``yhat_l + Delta [Sigma_o]_l^{-1} (prefix - yhat_{:l})``.
    """
    yhat, sigma_out = predict_output(state, theta)
    gains, variances = conditional_gains(sigma_out)
    mean = yhat[..., l]
    if l > 0:
        prefix = np.asarray(prefix, dtype=float)
        mean = mean + (prefix[..., :l] - yhat[..., :l]) @ gains[l]
    return ComponentConditional(mean, variances[l])


class StepQuantities(NamedTuple):
    sigma: np.ndarray        # Sigma_{k|k-1}
    sigma_out: np.ndarray    # C Sigma C' + Qv
    gains: list              # per-component regression coefficients
    variances: list          # per-component conditional variances
    std: np.ndarray          # sqrt(variances)
    gain_t: np.ndarray       # transposed Kalman gain, (d, n)


@dataclass(eq=False)
class _StepCache:
    """Data-independent per-step quantities, computed once per parameter.

    Once the Riccati recursion reaches a floating-point fixed point the last
    entry is reused for every later step.
    """

    theta: GmParameter
    entries: list = field(default_factory=list)
    converged_at: int | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def at(self, k: int) -> StepQuantities:
        if self.converged_at is not None and k > self.converged_at:
            return self.entries[-1]
        if k <= len(self.entries):
            return self.entries[k - 1]
        with self._lock:
            return self._extend(k)

    def _extend(self, k: int) -> StepQuantities:
        theta = self.theta
        while len(self.entries) < k:
            sigma = theta.Q0.copy() if not self.entries else self._next
            sigma_out = theta.C @ sigma @ theta.C.T + theta.Qv
            sigma_out = 0.5 * (sigma_out + sigma_out.T)
            gains, variances = conditional_gains(sigma_out)
            gain_t = linalg.cho_solve(linalg.cho_factor(sigma_out), theta.C @ sigma)
            self.entries.append(StepQuantities(sigma, sigma_out, gains, variances,
                                               np.sqrt(np.asarray(variances)), gain_t))
            self._next = riccati_step(sigma, theta)
            if np.array_equal(self._next, sigma):
                self.converged_at = len(self.entries)
                return self.entries[-1]
        return self.entries[k - 1]


class GaussMarkovModel(ConditionalModel):
    """:class:`ConditionalModel` view of a :class:`GmParameter`."""

    kind = "gauss_markov"

    def __init__(self, theta: GmParameter):
        super().__init__(theta.d)
        self.theta = theta
        self._cache = _StepCache(theta)

    def step_quantities(self, k: int) -> StepQuantities:
        """Cached covariance, gains and variances for 1-based step ``k``."""
        return self._cache.at(k)

    def _conditional(self, l, prefix, history):
        history = np.asarray(history, dtype=float)
        if history.ndim == 1:
            history = history.reshape(-1, self.dim)
        batch = history.shape[:-2]
        state = initial_state(self.theta)
        xhat = np.broadcast_to(state.xhat, batch + (self.theta.n,))
        state = PredictorState(xhat, state.sigma, 1)
        for k in range(history.shape[-2]):
            state = update_state(state, history[..., k, :], self.theta)
        cc = component_conditional(state, self.theta, l, prefix)
        return cc.mean, np.sqrt(cc.variance)

    def cond_cdf(self, z, l, prefix=None, history=()):
        mean, std = self._conditional(l, prefix, history)
        return special.ndtr((np.asarray(z, dtype=float) - mean) / std)

    def cond_icdf(self, u, l, prefix=None, history=()):
        mean, std = self._conditional(l, prefix, history)
        return mean + std * special.ndtri(u)

    def sample_paths(self, horizon, n_paths, rng):
        return simulate_paths(self.theta, horizon, n_paths, rng)

    def same_law(self, other):
        return isinstance(other, GaussMarkovModel) and self.theta.same_law(other.theta)


def simulate_paths(theta: GmParameter, horizon: int, n_paths: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw ``(n_paths, horizon, d)`` outputs.

    All standard normals are drawn up front in a fixed layout, so two
    parameters of equal dimensions driven by the same generator state share
    their noise (common random numbers).
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    n, d = theta.n, theta.d
    z0 = rng.standard_normal((n_paths, n))
    zw = rng.standard_normal((n_paths, horizon, n))
    zv = rng.standard_normal((n_paths, horizon, d))
    L0, Lw, Lv = (np.linalg.cholesky(M) for M in (theta.Q0, theta.Qw, theta.Qv))
    x = theta.m0 + z0 @ L0.T
    w = zw @ Lw.T
    v = zv @ Lv.T
    y = np.empty((n_paths, horizon, d))
    for k in range(horizon):
        y[:, k] = x @ theta.C.T + v[:, k]
        x = x @ theta.A.T + w[:, k] + theta.drift
    return y


def simulate_path(theta: GmParameter, horizon: int, seed: int | np.random.Generator = 0):
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return simulate_paths(theta, horizon, 1, rng)[0]


def output_mean(theta: GmParameter, k):
    """Exact ``E[Y_k]`` for 1-based time index ``k`` (array-valued allowed)."""
    k = np.atleast_1d(np.asarray(k, dtype=int))
    out = np.empty((k.size, theta.d))
    for idx, kk in enumerate(k):
        m = theta.m0.copy()
        for _ in range(kk - 1):
            m = theta.A @ m + theta.drift
        out[idx] = theta.C @ m
    return out
