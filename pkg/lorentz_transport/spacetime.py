"""
Events, tangent data and spacetime models in the product splitting M = R x R^n.

Coordinate 0 is the time component. A model bundles the Lorentzian metric g of signature
(-, +, ..., +), an auxiliary complete Riemannian metric h, a time function tau obeying the
splitting bound d_x tau(v) >= max(2|v|_g, |v|_h) on future causal vectors, the Lorentzian
distance and the causal classifier.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .data_types import Coords
from .errors import DimensionMismatchError

logger = logging.getLogger(__name__)

CAUSAL_TOLERANCE = 1e-12


def _as_coords(values: Iterable[float]) -> Coords:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class Event:
    coords: Coords

    def __post_init__(self):
        coords = _as_coords(self.coords)
        if len(coords) < 2:
            raise DimensionMismatchError(2, len(coords), "event (1 + n, n >= 1)")
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"Event coordinates must be finite, got {coords}")
        object.__setattr__(self, "coords", coords)

    @property
    def dimension(self) -> int:
        return len(self.coords)

    @property
    def t(self) -> float:
        return self.coords[0]

    @property
    def spatial(self) -> Coords:
        return self.coords[1:]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def __str__(self):
        return "(" + ", ".join(f"{c:.6g}" for c in self.coords) + ")"


@dataclass(frozen=True)
class TangentVector:
    base: Event
    components: Coords

    def __post_init__(self):
        components = _as_coords(self.components)
        if len(components) != self.base.dimension:
            raise DimensionMismatchError(self.base.dimension, len(components), "tangent vector")
        if not all(math.isfinite(c) for c in components):
            raise ValueError(f"Tangent vector components must be finite, got {components}")
        object.__setattr__(self, "components", components)

    @classmethod
    def from_array(cls, base: Event, array: np.ndarray) -> "TangentVector":
        return cls(base, tuple(np.asarray(array, dtype=float).tolist()))

    @classmethod
    def between(cls, x: Event, y: Event) -> "TangentVector":
        return cls.from_array(x, y.as_array() - x.as_array())

    def as_array(self) -> np.ndarray:
        return np.asarray(self.components, dtype=float)

    def scaled(self, factor: float) -> "TangentVector":
        return TangentVector.from_array(self.base, factor * self.as_array())

    def is_zero(self) -> bool:
        return not any(self.components)


@dataclass(frozen=True)
class Covector:
    base: Event
    components: Coords

    def __post_init__(self):
        components = _as_coords(self.components)
        if len(components) != self.base.dimension:
            raise DimensionMismatchError(self.base.dimension, len(components), "covector")
        if not all(math.isfinite(c) for c in components):
            raise ValueError(f"Covector components must be finite, got {components}")
        object.__setattr__(self, "components", components)

    @classmethod
    def from_array(cls, base: Event, array: np.ndarray) -> "Covector":
        return cls(base, tuple(np.asarray(array, dtype=float).tolist()))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.components, dtype=float)

    def __call__(self, v: TangentVector) -> float:
        return float(np.dot(self.as_array(), v.as_array()))

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


class CausalClass(Enum):
    CHRONOLOGICAL = "chronological"
    NULL_CAUSAL = "null_causal"
    EQUAL = "equal"
    UNRELATED = "unrelated"

    @property
    def is_causal(self) -> bool:
        return self is not CausalClass.UNRELATED


class SplittingCheck(NamedTuple):
    samples: int
    min_slack: float
    passed: bool


class SpacetimeModel(ABC):
    """Interface every spacetime backend provides; instances are immutable."""

    def __init__(self, spatial_dimension: int):
        if spatial_dimension < 1:
            raise ValueError(f"Spatial dimension must be at least 1, got {spatial_dimension}")
        self.__spatial_dimension = int(spatial_dimension)

    @property
    def spatial_dimension(self) -> int:
        return self.__spatial_dimension

    @property
    def dimension(self) -> int:
        return 1 + self.__spatial_dimension

    @property
    def is_flat(self) -> bool:
        """True when geodesics are straight coordinate lines and analytic backends apply."""
        return False

    @property
    @abstractmethod
    def tau_label(self) -> str:
        pass

    @abstractmethod
    def metric_tensor(self, x: Event) -> np.ndarray:
        pass

    @abstractmethod
    def christoffel(self, x: Event) -> np.ndarray:
        """Array G with G[k, i, j] = Gamma^k_ij at x."""

    @abstractmethod
    def tau(self, x: Event) -> float:
        pass

    @abstractmethod
    def tau_differential(self, x: Event) -> Covector:
        pass

    @abstractmethod
    def lorentz_distance(self, x: Event, y: Event) -> float:
        pass

    @abstractmethod
    def causal_classify(self, x: Event, y: Event) -> CausalClass:
        pass

    def h_norm(self, v: TangentVector) -> float:
        self.check_event(v.base)
        return float(np.linalg.norm(v.as_array()))

    def h_distance(self, x: Event, y: Event) -> float:
        self.check_event(x)
        self.check_event(y)
        return float(np.linalg.norm(y.as_array() - x.as_array()))

    def check_event(self, x: Event):
        if x.dimension != self.dimension:
            raise DimensionMismatchError(self.dimension, x.dimension, "event")

    def metric_inner(self, u: TangentVector, v: TangentVector) -> float:
        self.check_event(u.base)
        if v.base != u.base:
            raise ValueError(f"Tangent vectors live at different events {u.base} and {v.base}")
        return float(u.as_array() @ self.metric_tensor(u.base) @ v.as_array())

    def g_norm(self, v: TangentVector) -> float:
        return math.sqrt(abs(self.metric_inner(v, v)))

    def is_future_causal(self, v: TangentVector, tolerance: float = CAUSAL_TOLERANCE) -> bool:
        """Membership in the closed future cone C_x, the zero vector excluded."""
        if v.is_zero():
            return False
        scale = self.h_norm(v) ** 2
        return self.metric_inner(v, v) <= tolerance * scale and self.tau_differential(v.base)(v) > 0.0

    def is_future_timelike(self, v: TangentVector, gate: float = 1e-8) -> bool:
        """Strictly timelike gate |v|_g >= gate * |v|_h."""
        return (not v.is_zero() and self.metric_inner(v, v) < 0.0 and self.tau_differential(v.base)(v) > 0.0
                and self.g_norm(v) >= gate * self.h_norm(v))


class MinkowskiSpacetime(SpacetimeModel):
    """Flat R^{1+n} with time function tau(t, x) = tau_scale * t (tau_scale >= 2)."""

    def __init__(self, spatial_dimension: int = 1, tau_scale: float = 2.0):
        super().__init__(spatial_dimension)
        if tau_scale < 2.0:
            raise ValueError(f"tau = a*t satisfies the splitting bound only for a >= 2, got a = {tau_scale}")
        self.__tau_scale = float(tau_scale)
        metric = np.eye(self.dimension)
        metric[0, 0] = -1.0
        metric.setflags(write=False)
        self.__metric = metric

    @property
    def tau_scale(self) -> float:
        return self.__tau_scale

    @property
    def is_flat(self) -> bool:
        return True

    @property
    def tau_label(self) -> str:
        return "2t" if self.__tau_scale == 2.0 else f"{self.__tau_scale!r}t"

    def metric_tensor(self, x: Event) -> np.ndarray:
        return self.__metric

    def christoffel(self, x: Event) -> np.ndarray:
        return np.zeros((self.dimension,) * 3)

    def tau(self, x: Event) -> float:
        self.check_event(x)
        return self.__tau_scale * x.t

    def tau_differential(self, x: Event) -> Covector:
        self.check_event(x)
        components = np.zeros(self.dimension)
        components[0] = self.__tau_scale
        return Covector.from_array(x, components)

    def _interval(self, x: Event, y: Event):
        self.check_event(x)
        self.check_event(y)
        delta = y.as_array() - x.as_array()
        dt = delta[0]
        spatial_sq = float(np.dot(delta[1:], delta[1:]))
        return dt, spatial_sq

    def causal_classify(self, x: Event, y: Event) -> CausalClass:
        dt, spatial_sq = self._interval(x, y)
        if dt == 0.0 and spatial_sq == 0.0:
            return CausalClass.EQUAL
        if dt <= 0.0:
            return CausalClass.UNRELATED
        q = dt * dt - spatial_sq
        if abs(q) <= CAUSAL_TOLERANCE * (dt * dt + spatial_sq):
            return CausalClass.NULL_CAUSAL
        return CausalClass.CHRONOLOGICAL if q > 0.0 else CausalClass.UNRELATED

    def lorentz_distance(self, x: Event, y: Event) -> float:
        if self.causal_classify(x, y) is not CausalClass.CHRONOLOGICAL:
            return 0.0
        dt, spatial_sq = self._interval(x, y)
        return math.sqrt(dt * dt - spatial_sq)

    def __repr__(self):
        return f"MinkowskiSpacetime(spatial_dimension={self.spatial_dimension}, tau_scale={self.__tau_scale!r})"


def metric_inner(model: SpacetimeModel, u: TangentVector, v: TangentVector) -> float:
    return model.metric_inner(u, v)


def causal_classify(model: SpacetimeModel, x: Event, y: Event) -> CausalClass:
    return model.causal_classify(x, y)


def lorentz_distance(model: SpacetimeModel, x: Event, y: Event) -> float:
    return model.lorentz_distance(x, y)


def tau(model: SpacetimeModel, x: Event) -> float:
    return model.tau(x)


def h_norm(model: SpacetimeModel, v: TangentVector) -> float:
    return model.h_norm(v)


def sample_future_causal_vectors(rng: np.random.Generator, model: SpacetimeModel, base: Event, count: int,
                                 max_time_component: float = 10.0,
                                 include_null: bool = True) -> Sequence[TangentVector]:
    """Random future causal vectors at base; one in ten lies exactly on the cone when include_null."""
    n = model.spatial_dimension
    result = []
    for k in range(count):
        v0 = rng.uniform(0.0, max_time_component) + 1e-6
        direction = rng.normal(size=n)
        direction /= np.linalg.norm(direction)
        speed = 1.0 if include_null and k % 10 == 0 else rng.uniform(0.0, 1.0)
        result.append(TangentVector.from_array(base, np.concatenate(([v0], speed * v0 * direction))))
    return result


def check_splitting(model: SpacetimeModel, vectors: Iterable[TangentVector],
                    tolerance: float = CAUSAL_TOLERANCE) -> SplittingCheck:
    """Sampled check of d_x tau(v) >= max(2|v|_g, |v|_h) on future causal vectors."""
    count = 0
    min_slack = math.inf
    for v in vectors:
        count += 1
        bound = max(2.0 * model.g_norm(v), model.h_norm(v))
        slack = model.tau_differential(v.base)(v) - bound
        min_slack = min(min_slack, slack / max(1.0, model.h_norm(v)))
    passed = count > 0 and min_slack >= -tolerance
    if not passed:
        logger.warning(f"Time function {model.tau_label} violates the splitting bound (min slack {min_slack:.3e})")
    return SplittingCheck(count, min_slack, passed)
