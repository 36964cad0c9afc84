"""Parameter spaces, priors and the conditional-model interface.

Every statistical model used by the privacy filter exposes the law of one
measurement component given the same-time prefix and the full past:

    cond_cdf(z, l, prefix, history)  ->  P(Y_k^l <= z | y_k^{1:l-1}, y_{1:k-1})

with ``l`` a 0-based component index, ``prefix`` the first ``l`` entries of
the current vector and ``history`` the ``(k-1, d)`` array of past vectors.
The time index is implied by ``history.shape[-2]``.  All arguments may carry
a leading batch axis; outputs broadcast over it.
"""

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import special

__all__ = [
    "ConfigurationError",
    "ModelHandle",
    "ParameterPrior",
    "ConditionalModel",
    "Family",
    "IidModel",
    "MarkovModel",
    "ModelRegistry",
    "prior_entropy",
    "register_model",
    "get_model",
    "build_model",
    "bisect_icdf",
    "spawn_generator",
]


class ConfigurationError(ValueError):
    """Raised for malformed model descriptors, priors or pipeline configs."""


@dataclass(frozen=True, eq=False)
class ModelHandle:
    """Opaque reference into a :class:`ModelRegistry`.

    Handles compare by identity: registering the same descriptor twice gives
    two unequal handles.
    """

    serial: int
    name: str | None = None

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"<ModelHandle #{self.serial}{tag}>"


@dataclass(frozen=True)
class ParameterPrior:
    """Finite support of the private parameter with its probabilities."""

    labels: tuple
    probs: np.ndarray

    def __init__(self, labels: Sequence[Any], probs: Sequence[float]):
        labels = tuple(labels)
        probs = np.asarray(probs, dtype=float).reshape(-1)
        if len(labels) == 0:
            raise ConfigurationError("prior needs at least one support point")
        if len(labels) != probs.size:
            raise ConfigurationError(
                f"{len(labels)} labels but {probs.size} probabilities")
        if len(set(labels)) != len(labels):
            raise ConfigurationError("prior labels must be distinct")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ConfigurationError("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probs", probs)

    @property
    def size(self) -> int:
        return len(self.labels)


def prior_entropy(prior: ParameterPrior | Sequence[float]) -> float:
    """Shannon entropy in nats, with ``0 ln 0 = 0``."""
    p = prior.probs if isinstance(prior, ParameterPrior) else np.asarray(prior, float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def spawn_generator(seed: int, *key: int) -> np.random.Generator:
    """Counter-based stream: the same ``(seed, key)`` always yields the same draws."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def bisect_icdf(cdf, u, lo=-1.0, hi=1.0, tol=1e-12, max_iter=400):
    """Invert a monotone CDF by bisection on an auto-expanded bracket.

    ``cdf`` maps an array of points to probabilities elementwise; ``u`` may be
    an array.  Iteration stops once every bracket maps to an interval of
    width ``tol`` in probability, or the bracket collapses in floating point.
    """
    u = np.asarray(u, dtype=float)
    lo = np.full(u.shape, float(lo))
    hi = np.full(u.shape, float(hi))
    for _ in range(2100):
        low = cdf(lo) > u
        if not low.any():
            break
        width = hi - lo
        lo = np.where(low, lo - 2.0 * width, lo)
    for _ in range(2100):
        high = cdf(hi) < u
        if not high.any():
            break
        width = hi - lo
        hi = np.where(high, hi + 2.0 * width, hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        done = (cdf(hi) - cdf(lo) <= tol) | (np.nextafter(lo, hi) >= hi)
        if np.all(done):
            break
    return 0.5 * (lo + hi)


class ConditionalModel(ABC):
    """Sequential conditional law of a ``d``-dimensional measurement process."""

    kind: str = "abstract"

    def __init__(self, dim: int):
        self.dim = int(dim)

    @abstractmethod
    def cond_cdf(self, z, l: int, prefix, history):
        """Conditional CDF of component ``l`` at ``z``."""

    def cond_icdf(self, u, l: int, prefix, history):
        """Inverse of :meth:`cond_cdf` in ``z``; bisection unless overridden."""
        return bisect_icdf(lambda z: self.cond_cdf(z, l, prefix, history), u)

    @abstractmethod
    def sample_paths(self, horizon: int, n_paths: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``(n_paths, horizon, d)`` measurement paths."""

    def sample_path(self, horizon: int, rng: np.random.Generator) -> np.ndarray:
        return self.sample_paths(horizon, 1, rng)[0]

    def same_law(self, other: "ConditionalModel") -> bool:
        """True when ``other`` describes the identical joint law."""
        return self is other


# -- named one-dimensional families --------------------------------------------

_FAMILIES = ("gaussian", "laplace", "exponential")


@dataclass(frozen=True)
class Family:
    """A location-scale density on the real line.

    ``exponential`` has support ``[loc, inf)``; its CDF saturates at 0 below.
    """

    name: str
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.name not in _FAMILIES:
            raise ConfigurationError(
                f"unknown density family {self.name!r}; expected one of {_FAMILIES}")
        if not (math.isfinite(self.loc) and math.isfinite(self.scale)):
            raise ConfigurationError("family parameters must be finite")
        if self.scale <= 0:
            raise ConfigurationError(f"{self.name} scale must be positive, got {self.scale}")

    @classmethod
    def from_descriptor(cls, desc: Mapping[str, Any]) -> "Family":
        try:
            return cls(str(desc["family"]), float(desc.get("loc", 0.0)),
                       float(desc.get("scale", 1.0)))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"bad component descriptor {desc!r}") from exc

    def cdf(self, z, shift=0.0):
        x = (np.asarray(z, dtype=float) - self.loc - shift) / self.scale
        if self.name == "gaussian":
            return special.ndtr(x)
        if self.name == "laplace":
            return np.where(x < 0, 0.5 * np.exp(np.minimum(x, 0.0)),
                            1.0 - 0.5 * np.exp(-np.maximum(x, 0.0)))
        return np.where(x <= 0, 0.0, -np.expm1(-np.maximum(x, 0.0)))

    def icdf(self, u, shift=0.0):
        u = np.asarray(u, dtype=float)
        if self.name == "gaussian":
            x = special.ndtri(u)
        elif self.name == "laplace":
            x = np.where(u < 0.5, np.log(2.0 * np.minimum(u, 0.5)),
                         -np.log(2.0 * (1.0 - np.maximum(u, 0.5))))
        else:
            x = -np.log1p(-u)
        return self.loc + shift + self.scale * x

    def sample(self, rng: np.random.Generator, size):
        if self.name == "gaussian":
            x = rng.standard_normal(size)
        elif self.name == "laplace":
            x = rng.laplace(size=size)
        else:
            x = rng.standard_exponential(size)
        return self.loc + self.scale * x

    def mean(self) -> float:
        return self.loc + (self.scale if self.name == "exponential" else 0.0)


def _families(spec, what: str) -> tuple[Family, ...]:
    if not isinstance(spec, (list, tuple)) or not spec:
        raise ConfigurationError(f"{what} must be a non-empty list of components")
    return tuple(Family.from_descriptor(c) for c in spec)


class IidModel(ConditionalModel):
    """i.i.d. vectors whose components are independent named densities."""

    kind = "iid"

    def __init__(self, components: Sequence[Family]):
        super().__init__(len(components))
        self.components = tuple(components)

    def cond_cdf(self, z, l, prefix=None, history=None):
        return self.components[l].cdf(z)

    def cond_icdf(self, u, l, prefix=None, history=None):
        return self.components[l].icdf(u)

    def sample_paths(self, horizon, n_paths, rng):
        out = np.empty((n_paths, horizon, self.dim))
        for l, fam in enumerate(self.components):
            out[:, :, l] = fam.sample(rng, (n_paths, horizon))
        return out

    def same_law(self, other):
        return isinstance(other, IidModel) and self.components == other.components


class MarkovModel(ConditionalModel):
    """First-order Markov vectors ``y_k = coef @ y_{k-1} + offset + e_k``.

    ``e_k`` has independent components drawn from the ``noise`` families and
    ``y_1`` has independent components from ``initial``.
    """

    kind = "markov"

    def __init__(self, initial: Sequence[Family], coef, offset, noise: Sequence[Family]):
        d = len(initial)
        super().__init__(d)
        self.initial = tuple(initial)
        self.noise = tuple(noise)
        self.coef = np.array(coef, dtype=float).reshape(d, d)
        self.offset = np.array(offset, dtype=float).reshape(d)
        if len(self.noise) != d:
            raise ConfigurationError("markov noise needs one family per component")

    def _shift(self, l, history):
        history = np.asarray(history, dtype=float)
        if history.shape[-2] == 0:
            return None
        return history[..., -1, :] @ self.coef[l] + self.offset[l]

    def cond_cdf(self, z, l, prefix=None, history=None):
        shift = self._shift(l, history)
        if shift is None:
            return self.initial[l].cdf(z)
        return self.noise[l].cdf(z, shift)

    def cond_icdf(self, u, l, prefix=None, history=None):
        shift = self._shift(l, history)
        if shift is None:
            return self.initial[l].icdf(u)
        return self.noise[l].icdf(u, shift)

    def sample_paths(self, horizon, n_paths, rng):
        out = np.empty((n_paths, horizon, self.dim))
        for k in range(horizon):
            for l in range(self.dim):
                if k == 0:
                    out[:, 0, l] = self.initial[l].sample(rng, n_paths)
                else:
                    out[:, k, l] = (out[:, k - 1] @ self.coef[l] + self.offset[l]
                                    + self.noise[l].sample(rng, n_paths))
        return out

    def same_law(self, other):
        return (isinstance(other, MarkovModel) and self.initial == other.initial
                and self.noise == other.noise and np.array_equal(self.coef, other.coef)
                and np.array_equal(self.offset, other.offset))


# -- registry -------------------------------------------------------------------

def _matrix(desc, key, shape=None):
    try:
        value = np.atleast_2d(np.asarray(desc[key], dtype=float))
    except KeyError:
        raise ConfigurationError(f"descriptor is missing field {key!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"field {key!r} is not a numeric matrix") from exc
    if not np.all(np.isfinite(value)):
        raise ConfigurationError(f"field {key!r} has non-finite entries")
    if shape is not None and value.shape != shape:
        raise ConfigurationError(f"field {key!r} has shape {value.shape}, expected {shape}")
    return value


def _vector(desc, key, size, default=None):
    if key not in desc:
        if default is None:
            raise ConfigurationError(f"descriptor is missing field {key!r}")
        return np.full(size, float(default))
    value = np.asarray(desc[key], dtype=float).reshape(-1)
    if value.size == 1 and size > 1:
        value = np.full(size, value.item())
    if value.size != size or not np.all(np.isfinite(value)):
        raise ConfigurationError(f"field {key!r} must be {size} finite numbers")
    return value


def build_model(desc: Mapping[str, Any]) -> ConditionalModel:
    """Construct a model from a JSON-style descriptor."""
    if not isinstance(desc, Mapping) or "kind" not in desc:
        raise ConfigurationError("descriptor must be a mapping with a 'kind' field")
    kind = desc["kind"]
    if kind == "gauss_markov":
        from .gauss_markov import GmParameter, GaussMarkovModel

        A = _matrix(desc, "A")
        n = A.shape[0]
        C = _matrix(desc, "C")
        d = C.shape[0]
        theta = GmParameter(
            A=A, C=C,
            Qw=_matrix(desc, "Qw", (n, n)),
            Qv=_matrix(desc, "Qv", (d, d)),
            Q0=_matrix(desc, "Q0", (n, n)),
            drift=_vector(desc, "drift", n, default=0.0),
            m0=_vector(desc, "m0", n, default=0.0),
        )
        return GaussMarkovModel(theta)
    if kind == "iid":
        return IidModel(_families(desc.get("components"), "iid components"))
    if kind == "markov":
        initial = _families(desc.get("initial"), "markov initial")
        d = len(initial)
        coef = _matrix(desc, "coef", (d, d))
        return MarkovModel(initial, coef, _vector(desc, "offset", d, default=0.0),
                           _families(desc.get("noise"), "markov noise"))
    raise ConfigurationError(f"unknown model kind {kind!r}")


@dataclass
class ModelRegistry:
    """Maps handles to constructed models."""

    _models: dict = field(default_factory=dict)
    _counter: Any = field(default_factory=itertools.count)

    def register(self, descriptor: Mapping[str, Any], name: str | None = None) -> ModelHandle:
        model = build_model(descriptor)
        handle = ModelHandle(next(self._counter), name)
        self._models[handle] = model
        return handle

    def __getitem__(self, handle: ModelHandle) -> ConditionalModel:
        try:
            return self._models[handle]
        except KeyError:
            raise ConfigurationError(f"unknown model handle {handle!r}") from None

    def __contains__(self, handle) -> bool:
        return handle in self._models

    def __len__(self) -> int:
        return len(self._models)


_default_registry = ModelRegistry()


def register_model(descriptor: Mapping[str, Any], name: str | None = None,
                   registry: ModelRegistry | None = None) -> ModelHandle:
    """Validate a descriptor and store its model; returns a fresh handle.

    Without an explicit ``registry`` the process-wide default one is used,
    and :func:`get_model` looks handles up there.
    """
    return (registry or _default_registry).register(descriptor, name)


def get_model(handle: ModelHandle, registry: ModelRegistry | None = None) -> ConditionalModel:
    return (registry or _default_registry)[handle]
