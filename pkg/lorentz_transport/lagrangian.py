"""
The Lagrangians L1(v) = d tau(v) - |v|_g and L2 = L1^2 on the closed future cone, their
actions, the action minimizers and the exponential map of L2.

On the future cone L2 is positively 2-homogeneous in v and strictly convex along the
fiber on timelike vectors, which is what makes the fiber derivative invertible.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.optimize import brentq, root

from .errors import FlowDomainExceededError, NotCausallyRelatedError, NullOrSpacelikeVelocityError
from .extended_real import PLUS_INF, ZERO, ExtReal
from .spacetime import CausalClass, Covector, Event, SpacetimeModel, TangentVector

logger = logging.getLogger(__name__)

TIMELIKE_GATE = 1e-8
DEFAULT_NODES = 256
ODE_ATOL = 1e-9
ODE_RTOL = 1e-9


class Action(Enum):
    A1 = "A1"
    A2 = "A2"


def L1(model: SpacetimeModel, v: TangentVector) -> ExtReal:
    if v.is_zero():
        return ZERO
    if not model.is_future_causal(v):
        return PLUS_INF
    return ExtReal.finite(max(0.0, model.tau_differential(v.base)(v) - model.g_norm(v)))


def L2(model: SpacetimeModel, v: TangentVector) -> ExtReal:
    l1 = L1(model, v)
    if not l1.is_finite:
        return l1
    return ExtReal.finite(l1.value ** 2)


def dL2_dv(model: SpacetimeModel, v: TangentVector, gate: float = TIMELIKE_GATE) -> Covector:
    """dL2/dv = 2 L1(v) (d tau + g(v, .) / |v|_g), defined for strictly timelike v."""
    if not model.is_future_timelike(v, gate):
        raise NullOrSpacelikeVelocityError(v.components, model.g_norm(v))
    g_norm = model.g_norm(v)
    l1 = model.tau_differential(v.base)(v) - g_norm
    g_v = model.metric_tensor(v.base) @ v.as_array()
    return Covector.from_array(v.base, 2.0 * l1 * (model.tau_differential(v.base).as_array() + g_v / g_norm))


def fiber_hessian(model: SpacetimeModel, v: TangentVector, relative_step: float = 1e-6) -> np.ndarray:
    """Central-difference Hessian of L2 along the fiber, from the analytic gradient."""
    base = v.as_array()
    step = relative_step * max(1.0, float(np.linalg.norm(base)))
    dim = base.size
    hessian = np.empty((dim, dim))
    for i in range(dim):
        offset = np.zeros(dim)
        offset[i] = step
        plus = dL2_dv(model, TangentVector.from_array(v.base, base + offset)).as_array()
        minus = dL2_dv(model, TangentVector.from_array(v.base, base - offset)).as_array()
        hessian[:, i] = (plus - minus) / (2.0 * step)
    return 0.5 * (hessian + hessian.T)


def is_positive_definite(matrix: np.ndarray) -> bool:
    return bool(np.linalg.eigvalsh(0.5 * (matrix + matrix.T)).min() > 0.0)


@dataclass(frozen=True, eq=False)
class SampledPath:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    @classmethod
    def from_positions(cls, times: np.ndarray, positions: np.ndarray) -> "SampledPath":
        times = np.asarray(times, dtype=float)
        positions = np.asarray(positions, dtype=float)
        velocities = np.gradient(positions, times, axis=0, edge_order=2)
        return cls(times, positions, velocities)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


def action(model: SpacetimeModel, path: SampledPath, which: Action = Action.A2) -> ExtReal:
    """Composite trapezoidal action; +inf once any sampled velocity leaves the closed cone."""
    lagrangian = L2 if which is Action.A2 else L1
    values = np.empty(len(path.times))
    for k, (position, velocity) in enumerate(zip(path.positions, path.velocities)):
        value = lagrangian(model, TangentVector.from_array(Event(tuple(position)), velocity))
        if not value.is_finite:
            return PLUS_INF
        values[k] = value.value
    return ExtReal.finite(float(trapezoid(values, path.times)))


@dataclass(frozen=True, eq=False)
class MinimizerCurve:
    base: Event
    initial_velocity: TangentVector
    duration: float
    path: SampledPath

    @property
    def samples(self) -> List[Tuple[float, Event, TangentVector]]:
        return [(float(t), Event(tuple(p)), TangentVector.from_array(Event(tuple(p)), v))
                for t, p, v in zip(self.path.times, self.path.positions, self.path.velocities)]

    @property
    def end(self) -> Event:
        return Event(tuple(self.path.positions[-1]))

    def action(self, model: SpacetimeModel, which: Action = Action.A2) -> ExtReal:
        return action(model, self.path, which)

    def l1_profile(self, model: SpacetimeModel) -> np.ndarray:
        return np.array([float(L1(model, v)) for _, _, v in self.samples])


class _ReparametrizedGeodesic:
    """
    Geodesic s -> exp_x(s v) of g together with psi(s) = (1 / L1(v)) int_0^s L1(d/ds exp_x(s v)) ds.

    The state vector is (position, velocity, psi); psi is strictly increasing, so
    exp_L(x, v, t) = exp_x(psi^{-1}(t) v) is recovered by bracketing root-finding on psi.
    """

    def __init__(self, model: SpacetimeModel, x: Event, v: TangentVector, t_max: float,
                 s_budget: float = 1e6):
        self.__model = model
        self.__dim = model.dimension
        l1 = L1(model, v)
        if not model.is_future_timelike(v):
            raise NullOrSpacelikeVelocityError(v.components, model.g_norm(v))
        self.__l1_initial = l1.value
        y0 = np.concatenate((x.as_array(), v.as_array(), [0.0]))

        def reached(s, state):
            return state[-1] - t_max

        reached.terminal = True
        reached.direction = 1

        self.__solution = solve_ivp(self.__rhs, (0.0, s_budget), y0, method="RK45", events=reached,
                                    dense_output=True, atol=ODE_ATOL, rtol=ODE_RTOL)
        if self.__solution.status < 0:
            raise FlowDomainExceededError(f"Geodesic integration failed: {self.__solution.message}")
        if self.__solution.status != 1:
            raise FlowDomainExceededError(
                f"Reparametrized time {t_max} not reached within the geodesic parameter budget {s_budget}")
        self.__s_end = float(self.__solution.t_events[0][0])

    def __rhs(self, s, state):
        dim = self.__dim
        position, velocity = state[:dim], state[dim:2 * dim]
        x = Event(tuple(position))
        gamma = self.__model.christoffel(x)
        acceleration = -np.tensordot(gamma, np.tensordot(velocity, velocity, axes=0), ((1, 2), (0, 1)))
        l1 = float(L1(self.__model, TangentVector.from_array(x, velocity)))
        return np.concatenate((velocity, acceleration, [l1 / self.__l1_initial]))

    def geodesic_parameter(self, t: float) -> float:
        if t == 0.0:
            return 0.0

        def offset(s):
            return self.__solution.sol(s)[-1] - t

        # the terminal event may stop a rounding error short of t
        if offset(self.__s_end) <= 0.0:
            return self.__s_end
        return brentq(offset, 0.0, self.__s_end, xtol=1e-14, rtol=1e-14)

    def state(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Position and reparametrized velocity at L2-time t."""
        dim = self.__dim
        state = self.__solution.sol(self.geodesic_parameter(t))
        position, geodesic_velocity = state[:dim], state[dim:2 * dim]
        l1 = float(L1(self.__model, TangentVector.from_array(Event(tuple(position)), geodesic_velocity)))
        return position, geodesic_velocity * self.__l1_initial / l1


def exp_L(model: SpacetimeModel, x: Event, v: TangentVector, t: float, backend: str = "auto") -> Event:
    """
    Exponential map of L2: the point reached at time t along the maximizing geodesic from x,
    reparametrized so that L1 of the velocity stays constant.
    """
    model.check_event(x)
    if v.base != x:
        raise ValueError(f"Velocity based at {v.base}, expected {x}")
    if v.is_zero() or t == 0.0:
        return x
    if not model.is_future_causal(v):
        raise NullOrSpacelikeVelocityError(v.components, model.g_norm(v))
    if backend not in ("auto", "analytic", "ode"):
        raise ValueError(f"Unknown exp_L backend {backend!r}")
    if backend == "analytic" or (backend == "auto" and model.is_flat):
        if not model.is_flat:
            raise ValueError("The analytic exp_L backend needs a flat model")
        return Event(tuple(x.as_array() + t * v.as_array()))
    if t < 0.0:
        raise FlowDomainExceededError(f"Backward flow (t = {t}) is not integrated")
    position, _ = _ReparametrizedGeodesic(model, x, v, t).state(t)
    return Event(tuple(position))


def shoot_minimizer(model: SpacetimeModel, x: Event, y: Event,
                    initial_guess: Optional[TangentVector] = None, tol: float = 1e-11) -> TangentVector:
    """Initial velocity v with exp_L(x, v, 1) = y, by root-finding on the ODE backend."""
    guess = (initial_guess or TangentVector.between(x, y)).as_array()
    target = y.as_array()

    def residual(components):
        return exp_L(model, x, TangentVector.from_array(x, components), 1.0, backend="ode").as_array() - target

    result = root(residual, guess, method="hybr", tol=tol)
    if not result.success:
        raise FlowDomainExceededError(f"Geodesic shooting from {x} to {y} failed: {result.message}")
    return TangentVector.from_array(x, result.x)


def minimizer(model: SpacetimeModel, x: Event, y: Event, nodes: int = DEFAULT_NODES,
              duration: float = 1.0) -> MinimizerCurve:
    """A2-minimizer from x to y on [0, duration]: a maximizing geodesic with constant L1."""
    causal_class = model.causal_classify(x, y)
    if causal_class not in (CausalClass.CHRONOLOGICAL, CausalClass.NULL_CAUSAL):
        raise NotCausallyRelatedError(f"No minimizing curve from {x} to {y} ({causal_class.name})", x, y)
    if duration <= 0.0:
        raise ValueError(f"Duration must be positive, got {duration}")
    times = np.linspace(0.0, duration, nodes + 1)
    if model.is_flat:
        velocity = (y.as_array() - x.as_array()) / duration
        positions = x.as_array()[None, :] + times[:, None] * velocity[None, :]
        velocities = np.repeat(velocity[None, :], len(times), axis=0)
        initial = TangentVector.from_array(x, velocity)
    else:
        unit = shoot_minimizer(model, x, y)
        initial = unit.scaled(1.0 / duration)
        geodesic = _ReparametrizedGeodesic(model, x, unit, 1.0)
        states = [geodesic.state(t / duration) for t in times]
        positions = np.array([p for p, _ in states])
        velocities = np.array([w for _, w in states]) / duration
    return MinimizerCurve(x, initial, float(duration), SampledPath(times, positions, velocities))


def action_with_refinement(model: SpacetimeModel, x: Event, y: Event, which: Action = Action.A2,
                           nodes: int = DEFAULT_NODES, tolerance: float = 1e-6) -> Tuple[ExtReal, bool]:
    """Action of the minimizer at nodes and 2*nodes; the flag reports agreement within tolerance."""
    coarse = minimizer(model, x, y, nodes).action(model, which)
    fine = minimizer(model, x, y, 2 * nodes).action(model, which)
    if not (coarse.is_finite and fine.is_finite):
        return fine, coarse == fine
    return fine, abs(fine.value - coarse.value) <= tolerance * max(1.0, abs(fine.value))


def cone_cosine(w: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between w and the unit vector v; w belongs to Cone(v, a) when it is >= a."""
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        return 1.0
    return float(np.dot(w, v)) / norm


def cone_deviation(w: np.ndarray, v: np.ndarray) -> Tuple[float, float]:
    """Return |w - |w| v| and its bound 2 sqrt(1 - a) |w| for the tightest a with w in Cone(v, a)."""
    norm = float(np.linalg.norm(w))
    alpha = min(1.0, cone_cosine(w, v))
    return float(np.linalg.norm(w - norm * v)), 2.0 * math.sqrt(max(0.0, 1.0 - alpha)) * norm
