"""
Transport map recovery: T(x) solves dc2/dx (x, T(x)) = -d_x phi.

Since dc2/dx (x, y) = -dL2/dv at the initial velocity of the minimizer from x to y, the
equation becomes dL2/dv (x, v) = d_x phi, which has at most one strictly timelike solution
(the fiber Hessian of L2 is positive definite there); then T(x) = exp_L(x, v, 1).
"""
import csv
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .check_report import CheckReport
from .cost import CostMatrix, cost_c2, dc2_dx
from .errors import AmbiguousArgmaxError, NonFiniteNeighborhoodError, NoTimelikeSolutionError
from .extended_real import ExtReal, psi_minus_cost
from .formatting import format_float
from .kantorovich import SolveResult
from .lagrangian import L2, TIMELIKE_GATE, dL2_dv, exp_L, fiber_hessian, is_positive_definite, minimizer
from .measures import MARGINAL_TOLERANCE, DiscreteMeasure, pushforward
from .potentials import PotentialPair, central_pi_solution, extend_potential_grid
from .spacetime import CausalClass, Covector, Event, SpacetimeModel, TangentVector

logger = logging.getLogger(__name__)

_MODULE = "transport"
TIE_TOLERANCE = 1e-8
SNAP_TOLERANCE = 1e-4
TWIST_TOLERANCE = 1e-9
RELATIVE_STEP = 1e-5


def _stencil(x: np.ndarray, step: float) -> np.ndarray:
    dim = x.size
    offsets = []
    for h in (step, 0.5 * step):
        for k in range(dim):
            e = np.zeros(dim)
            e[k] = h
            offsets.extend((x + e, x - e))
    return np.array(offsets)


def default_step(x: Event) -> float:
    return RELATIVE_STEP * max(1.0, float(np.linalg.norm(x.as_array())))


def numeric_gradient_phi(pp: PotentialPair, matrix: CostMatrix, x: Event, step: Optional[float] = None) -> Covector:
    """Richardson-extrapolated central differences of the extended potential at x."""
    step = default_step(x) if step is None else step
    dim = x.dimension
    values = extend_potential_grid(pp, matrix, _stencil(x.as_array(), step))
    if not np.all(np.isfinite(values)):
        raise NonFiniteNeighborhoodError(f"Extended potential is not finite on the stencil of radius {step:g} "
                                         f"around {x}")
    coarse_plus, coarse_minus = values[0:2 * dim:2], values[1:2 * dim:2]
    fine_plus, fine_minus = values[2 * dim::2], values[2 * dim + 1::2]
    coarse = (coarse_plus - coarse_minus) / (2.0 * step)
    fine = (fine_plus - fine_minus) / step
    return Covector.from_array(x, (4.0 * fine - coarse) / 3.0)


def argmax_scores(pp: PotentialPair, matrix: CostMatrix, i: int) -> List[ExtReal]:
    return [psi_minus_cost(pp.psi[j], matrix[i, j]) for j in range(matrix.shape[1])]


def _ranked(scores: Sequence[ExtReal]) -> List[int]:
    return sorted(range(len(scores)), key=lambda j: scores[j], reverse=True)


def _argmax_on_stencil(pp: PotentialPair, matrix: CostMatrix, x: Event, step: float) -> set:
    """Indices of the maximizing target at every stencil node around x."""
    model = matrix.model

    winners = set()
    for point in _stencil(x.as_array(), step):
        event = Event(tuple(point))
        scores = [psi_minus_cost(psi, cost_c2(model, event, y)) for psi, y in zip(pp.psi, matrix.targets)]
        winners.add(_ranked(scores)[0])
    return winners


def invert_twist(model: SpacetimeModel, x: Event, p: Covector, initial: Optional[TangentVector] = None,
                 tolerance: float = TWIST_TOLERANCE, max_iterations: int = 100) -> Tuple[TangentVector, Event]:
    """
    Solve dL2/dv (x, v) = p for strictly timelike v by damped Newton on F(v) = L2(v) - p(v),
    which is strictly convex on the open future cone; return v and exp_L(x, v, 1).
    """
    target = p.as_array()
    scale = max(1.0, float(np.linalg.norm(target)))
    if initial is None:
        guess = np.zeros(model.dimension)
        guess[0] = max(float(np.linalg.norm(target)), 1e-3) / model.tau_differential(x).norm()
        v = TangentVector.from_array(x, guess)
    else:
        v = initial
    if not model.is_future_timelike(v, TIMELIKE_GATE):
        raise NoTimelikeSolutionError(p.components, "initial velocity is not strictly timelike")

    def objective(w: TangentVector) -> float:
        return L2(model, w).value - float(np.dot(target, w.as_array()))

    for iteration in range(max_iterations):
        residual = dL2_dv(model, v).as_array() - target
        if np.linalg.norm(residual) <= tolerance * scale:
            logger.debug(f"Twist inversion converged after {iteration} Newton steps")
            return v, exp_L(model, x, v, 1.0)
        hessian = fiber_hessian(model, v)
        if is_positive_definite(hessian):
            direction = -np.linalg.solve(hessian, residual)
        else:
            direction = -residual
        slope = float(np.dot(residual, direction))
        current = objective(v)
        alpha = 1.0
        while alpha > 1e-12:
            candidate = TangentVector.from_array(x, v.as_array() + alpha * direction)
            if model.is_future_timelike(candidate, TIMELIKE_GATE) and \
                    objective(candidate) <= current + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            raise NoTimelikeSolutionError(p.components, "line search cannot stay inside the open future cone")
        v = candidate
        norm = float(np.linalg.norm(v.as_array()))
        if norm < 1e-12 * scale:
            raise NoTimelikeSolutionError(p.components, "velocity collapsed to zero")
        if model.g_norm(v) < 1e3 * TIMELIKE_GATE * model.h_norm(v):
            raise NoTimelikeSolutionError(p.components, "velocity drifted to the light cone")
    raise NoTimelikeSolutionError(p.components, f"residual stagnated after {max_iterations} Newton steps")


class TransportEntry(NamedTuple):
    source_index: int
    # index of the target point in nu, -1 when T(x) is not a point of nu
    target_index: int
    argmax_index: int
    target: Event
    velocity: TangentVector
    gradient: Optional[Covector]
    residual: float
    distance: float
    gradient_skipped: bool
    ambiguous: bool = False

    @property
    def agrees_with_argmax(self) -> bool:
        return self.target_index == self.argmax_index


@dataclass(frozen=True)
class TransportMap:
    entries: Tuple[TransportEntry, ...]

    def target_index(self, source_index: int) -> Optional[int]:
        for entry in self.entries:
            if entry.source_index == source_index:
                return entry.target_index
        return None

    def assignment(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Dict[Event, Event]:
        return {mu.points[e.source_index]: nu.points[e.target_index] if e.target_index >= 0 else e.target
                for e in self.entries}

    @property
    def agreement_rate(self) -> float:
        if not self.entries:
            return 1.0
        return sum(e.agrees_with_argmax for e in self.entries) / len(self.entries)

    @property
    def max_residual(self) -> float:
        residuals = [e.residual for e in self.entries if not math.isnan(e.residual)]
        return max(residuals, default=0.0)

    def to_csv(self, path: str):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["source_index", "target_index", "argmax_index", "residual", "distance"])
            for e in self.entries:
                writer.writerow([e.source_index, e.target_index, e.argmax_index, format_float(e.residual),
                                 format_float(e.distance)])


def _twist_residual(model: SpacetimeModel, x: Event, y: Event, gradient: Covector) -> float:
    return float(np.linalg.norm(dc2_dx(model, x, y).as_array() + gradient.as_array()))


def _target_index(matrix: CostMatrix, point: Event, snap_tolerance: float) -> int:
    distances = np.linalg.norm(np.array([y.as_array() for y in matrix.targets]) - point.as_array(), axis=1)
    nearest = int(np.argmin(distances))
    return nearest if distances[nearest] <= snap_tolerance else -1


def recover_map(pp: PotentialPair, solve_result: SolveResult, matrix: CostMatrix,
                tie_tolerance: float = TIE_TOLERANCE, snap_tolerance: float = SNAP_TOLERANCE,
                strict: bool = True, twist_tolerance: float = TWIST_TOLERANCE, centered: bool = True) -> TransportMap:
    """
    T on every mass-carrying source point, by twist inversion of the potential gradient,
    cross-checked against argmax_j (psi_j - c2(x, y_j)). Near a switch of the argmax the
    gradient is unreliable and the oracle target is used directly; the same holds when the
    oracle target is not in I+(x), where the twist condition does not apply.

    With centered, argmax and gradient are taken from the central pi-solution of the plan
    support, which is smooth at every source point unless the argmax genuinely ties. Among
    tied targets a plan-support target is the oracle.
    """
    model = matrix.model
    support = solve_result.support()
    if centered and support:
        pp = central_pi_solution(support, matrix, pp.anchor if pp.anchor in support else None)
    planned = set(support)
    row_mass = np.asarray(solve_result.coupling.plan.sum(axis=1)).ravel()
    entries = []
    for i, x in enumerate(matrix.sources):
        if row_mass[i] <= 0.0:
            continue
        scores = argmax_scores(pp, matrix, i)
        ranked = _ranked(scores)
        top = scores[ranked[0]]
        tied = [j for j in ranked
                if scores[j].is_finite and top.is_finite and top.value - scores[j].value <= tie_tolerance]
        best = next((j for j in tied if (i, j) in planned), ranked[0])
        ambiguous = len(tied) > 1
        if ambiguous:
            if strict:
                raise AmbiguousArgmaxError(i, tied)
            logger.warning(f"Argmax at source point {i} is tied between targets {tied}")
        oracle = matrix.targets[best]
        step = default_step(x)
        causal_class = model.causal_classify(x, oracle)
        chronological = causal_class is CausalClass.CHRONOLOGICAL
        skipped = ambiguous or not chronological or len(_argmax_on_stencil(pp, matrix, x, step)) > 1
        if skipped:
            if causal_class in (CausalClass.CHRONOLOGICAL, CausalClass.NULL_CAUSAL):
                velocity = minimizer(model, x, oracle, nodes=2).initial_velocity
            else:
                velocity = TangentVector.from_array(x, np.zeros(x.dimension))
            entries.append(TransportEntry(i, best, best, oracle, velocity, None, math.nan,
                                          model.lorentz_distance(x, oracle), True, ambiguous))
            continue
        gradient = numeric_gradient_phi(pp, matrix, x, step)
        warm_start = minimizer(model, x, oracle, nodes=2).initial_velocity
        velocity, image = invert_twist(model, x, gradient, warm_start, twist_tolerance)
        if float(np.linalg.norm(image.as_array() - oracle.as_array())) <= snap_tolerance:
            target, target_index = oracle, best
        else:
            target, target_index = image, _target_index(matrix, image, snap_tolerance)
            logger.warning(f"Twist inversion at source point {i} lands at {image}, argmax target is {oracle}")
        residual = _twist_residual(model, x, target, gradient)
        entries.append(TransportEntry(i, target_index, best, target, velocity, gradient, residual,
                                      model.lorentz_distance(x, target), False))
    return TransportMap(tuple(entries))


def verify_map_induces_coupling(tm: TransportMap, solve_result: SolveResult,
                                tolerance: float = MARGINAL_TOLERANCE) -> CheckReport:
    """Each plan row sits on the single column T(x_i), and T pushes mu forward to nu."""
    report = CheckReport("map_induces_coupling")
    coupling = solve_result.coupling
    dense = coupling.dense()
    split_rows = []
    for entry in tm.entries:
        row = dense[entry.source_index]
        columns = [int(j) for j in np.nonzero(row > tolerance)[0]]
        if len(columns) > 1:
            split_rows.append(entry.source_index)
            report.fail(_MODULE, "plan induced by a map", (entry.source_index,),
                        f"mass of source point {entry.source_index} is split over targets {columns}", "transport-map")
        elif columns and columns[0] != entry.target_index:
            report.fail(_MODULE, "plan induced by a map", (entry.source_index, columns[0]),
                        f"plan sends source point {entry.source_index} to {columns[0]}, map to {entry.target_index}",
                        "transport-map")
    mu, nu = coupling.source, coupling.target
    mapped = {e.source_index for e in tm.entries}
    missing = [i for i in range(mu.size) if i not in mapped]
    if missing:
        report.fail(_MODULE, "map defined on the support of mu", missing, f"no map entry for source points {missing}",
                    "transport-map")
    else:
        image = pushforward(mu, tm.assignment(mu, nu))
        for j, (point, weight) in enumerate(zip(nu.points, nu.weights)):
            pushed = image.weights[image.index_of(point)] if point in image.points else 0.0
            if abs(pushed - weight) > tolerance:
                report.fail(_MODULE, "pushforward of mu equals nu", (j,),
                            f"T pushes mass {pushed!r} to target {j}, nu has {weight!r}", "transport-map")
    report.values.update({"split_rows": split_rows, "agreement_rate": tm.agreement_rate,
                          "max_residual": tm.max_residual})
    return report
