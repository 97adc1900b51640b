"""
Discrete Kantorovich problem with forbidden (+inf cost) arcs.

Infinite-cost arcs are left out of the transportation LP altogether, so the LP duals are
those of the structural problem and never depend on a big-M surrogate.
"""
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from networkx.algorithms.flow import edmonds_karp
from scipy import sparse
from scipy.optimize import linprog

from .artifact_component import ArtifactComponent
from .cost import CostMatrix, ExtendedCost
from .data_types import IndexPair, Triple
from .errors import LorentzTransportError, NotCausallyRelatedError
from .measures import MARGINAL_TOLERANCE, Coupling, DiscreteMeasure
from .spacetime import CausalClass

logger = logging.getLogger(__name__)

DEFAULT_METHOD = "highs-ds"
METHODS = ("highs-ds", "highs-ipm", "highs")
ZERO_MASS = 1e-14
EXHAUSTIVE_SUPPORT_LIMIT = 12


def _check_dimensions(matrix: CostMatrix, mu: DiscreteMeasure, nu: DiscreteMeasure):
    if matrix.shape != (mu.size, nu.size):
        raise ValueError(f"Cost matrix shape {matrix.shape} does not match measure sizes ({mu.size}, {nu.size})")


def _flow_value(arcs: np.ndarray, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Max flow from mu to nu through the source-target pairs marked in arcs."""
    graph = nx.DiGraph()
    graph.add_node("source")
    graph.add_node("sink")
    for i, w in enumerate(mu.weights):
        graph.add_edge("source", ("x", i), capacity=w)
    for j, w in enumerate(nu.weights):
        graph.add_edge(("y", j), "sink", capacity=w)
    for i, j in zip(*np.nonzero(arcs)):
        graph.add_edge(("x", int(i)), ("y", int(j)))
    return nx.maximum_flow_value(graph, "source", "sink", flow_func=edmonds_karp)


def check_causally_related(matrix: CostMatrix, mu: DiscreteMeasure, nu: DiscreteMeasure,
                           tolerance: float = MARGINAL_TOLERANCE) -> bool:
    """Whether a coupling supported on finite-cost arcs exists (max-flow value 1)."""
    _check_dimensions(matrix, mu, nu)
    return _flow_value(matrix.admissible, mu, nu) >= 1.0 - tolerance


def check_strictly_timelike(matrix: CostMatrix, mu: DiscreteMeasure, nu: DiscreteMeasure,
                            tolerance: float = MARGINAL_TOLERANCE) -> bool:
    """Whether some coupling charges only chronologically related pairs, y in I+(x)."""
    _check_dimensions(matrix, mu, nu)
    model = matrix.model
    chronological = np.array([[model.causal_classify(x, y) is CausalClass.CHRONOLOGICAL for y in matrix.targets]
                              for x in matrix.sources], dtype=bool).reshape(matrix.shape)
    return _flow_value(chronological, mu, nu) >= 1.0 - tolerance


def hall_condition_holds(admissible: np.ndarray, mu: DiscreteMeasure, nu: DiscreteMeasure,
                         tolerance: float = MARGINAL_TOLERANCE) -> bool:
    """Brute-force supply/demand condition: nu(S) <= mu(N(S)) for every set S of targets."""
    mu_w, nu_w = mu.weight_array(), nu.weight_array()
    for r in range(1, nu.size + 1):
        for subset in itertools.combinations(range(nu.size), r):
            neighbours = admissible[:, list(subset)].any(axis=1)
            if nu_w[list(subset)].sum() > mu_w[neighbours].sum() + tolerance:
                return False
    return True


@dataclass(frozen=True)
class PlanRecord(ArtifactComponent):
    triples: Tuple[Triple, ...]
    total_cost: float
    row_duals: Tuple[float, ...]
    col_duals: Tuple[float, ...]
    statistics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"plan": [list(t) for t in self.triples], "total_cost": self.total_cost,
                "row_duals": list(self.row_duals), "col_duals": list(self.col_duals),
                "statistics": dict(self.statistics)}

    @classmethod
    def read_from_dict(cls, data: Dict[str, Any]) -> "PlanRecord":
        triples = tuple((int(i), int(j), float(m)) for i, j, m in data["plan"])
        return cls(triples, float(data["total_cost"]), tuple(data["row_duals"]), tuple(data["col_duals"]),
                   dict(data.get("statistics", {})))

    def write(self, path: str):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def read(cls, path: str) -> "PlanRecord":
        with open(path) as f:
            return cls.read_from_dict(json.load(f))

    def coupling(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
        plan = sparse.dok_matrix((mu.size, nu.size))
        for i, j, m in self.triples:
            plan[i, j] = m
        return Coupling(mu, nu, plan.tocsr())


@dataclass(frozen=True, eq=False)
class SolveResult:
    coupling: Coupling
    total_cost: ExtendedCost
    row_duals: np.ndarray
    col_duals: np.ndarray
    statistics: Dict[str, Any]

    def support(self, tolerance: float = 0.0) -> List[IndexPair]:
        return self.coupling.support(tolerance)

    def record(self) -> PlanRecord:
        return PlanRecord(tuple(self.coupling.triples()), self.total_cost.value,
                          tuple(self.row_duals.tolist()), tuple(self.col_duals.tolist()), dict(self.statistics))

    @classmethod
    def from_record(cls, record: PlanRecord, mu: DiscreteMeasure, nu: DiscreteMeasure) -> "SolveResult":
        return cls(record.coupling(mu, nu), ExtendedCost.finite(record.total_cost), np.asarray(record.row_duals),
                   np.asarray(record.col_duals), dict(record.statistics))


def plan_cost(plan: np.ndarray, matrix: CostMatrix) -> ExtendedCost:
    """Total cost of a dense plan; mass on a forbidden arc makes it +inf."""
    mass = plan > 0.0
    if np.any(mass & ~matrix.admissible):
        return ExtendedCost.plus_inf()
    return ExtendedCost.finite(math.fsum((plan[mass] * matrix.finite_values[mass]).tolist()))


def _solve_lp(costs: np.ndarray, arcs: np.ndarray, mu: DiscreteMeasure, nu: DiscreteMeasure, method: str):
    m, n = mu.size, nu.size
    k = len(arcs)
    rows = np.concatenate((arcs[:, 0], m + arcs[:, 1]))
    cols = np.concatenate((np.arange(k), np.arange(k)))
    a_eq = sparse.csr_matrix((np.ones(2 * k), (rows, cols)), shape=(m + n, k))
    b_eq = np.concatenate((mu.weight_array(), nu.weight_array()))
    return linprog(costs, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method=method,
                   options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})


def solve(matrix: CostMatrix, mu: DiscreteMeasure, nu: DiscreteMeasure,
          method: str = DEFAULT_METHOD) -> SolveResult:
    """Minimize sum pi_ij c_ij over couplings restricted to admissible arcs (row-major arc order)."""
    _check_dimensions(matrix, mu, nu)
    if method not in METHODS:
        raise ValueError(f"Unknown LP method {method!r}; expected one of {METHODS}")
    if not check_causally_related(matrix, mu, nu):
        raise NotCausallyRelatedError("No coupling of the measures is concentrated on J+")
    arcs = np.argwhere(matrix.admissible)
    costs = matrix.finite_values[arcs[:, 0], arcs[:, 1]]
    result = _solve_lp(costs, arcs, mu, nu, method)
    if result.status == 2:
        raise NotCausallyRelatedError(f"Transportation LP infeasible: {result.message}")
    if result.status != 0:
        raise LorentzTransportError(f"Transportation LP failed with status {result.status}: {result.message}")

    masses = np.where(result.x > ZERO_MASS, result.x, 0.0)
    dense = np.zeros(matrix.shape)
    dense[arcs[:, 0], arcs[:, 1]] = masses
    coupling = Coupling(mu, nu, sparse.csr_matrix(dense))
    marginals = np.asarray(result.eqlin.marginals, dtype=float)
    row_duals, col_duals = marginals[:mu.size], marginals[mu.size:]
    support_size = int(np.count_nonzero(masses))
    if support_size > mu.size + nu.size - 1:
        logger.warning(f"Plan support has {support_size} entries, more than a basic solution "
                       f"({mu.size + nu.size - 1}); method {method} did not return a vertex")
    statistics = {"method": method, "iterations": int(getattr(result, "nit", 0)), "admissible_arcs": int(len(arcs)),
                  "support_size": support_size}
    total = plan_cost(dense, matrix)
    logger.info(f"Solved {matrix.shape[0]}x{matrix.shape[1]} instance: cost {total.value:.12g}, "
                f"{support_size} support entries")
    return SolveResult(coupling, total, row_duals, col_duals, statistics)


def dual_objective(result: SolveResult) -> float:
    return float(result.row_duals @ result.coupling.source.weight_array()
                 + result.col_duals @ result.coupling.target.weight_array())


def dual_slack(result: SolveResult, matrix: CostMatrix) -> Tuple[float, float]:
    """Largest violation of u_i + v_j <= c_ij on admissible arcs and largest slack on the support."""
    reduced = matrix.finite_values - result.row_duals[:, None] - result.col_duals[None, :]
    feasibility = float(max(0.0, -reduced[matrix.admissible].min()))
    support = result.support()
    complementary = max((abs(reduced[i, j]) for i, j in support), default=0.0)
    return feasibility, float(complementary)


def random_feasible_couplings(matrix: CostMatrix, mu: DiscreteMeasure, nu: DiscreteMeasure, count: int,
                              rng: np.random.Generator) -> List[Coupling]:
    """Vertices of the admissible transportation polytope picked by random objectives."""
    arcs = np.argwhere(matrix.admissible)
    couplings = []
    for _ in range(count):
        result = _solve_lp(rng.uniform(size=len(arcs)), arcs, mu, nu, DEFAULT_METHOD)
        if result.status != 0:
            raise NotCausallyRelatedError(f"Transportation LP infeasible: {result.message}")
        dense = np.zeros(matrix.shape)
        dense[arcs[:, 0], arcs[:, 1]] = np.where(result.x > ZERO_MASS, result.x, 0.0)
        couplings.append(Coupling(mu, nu, sparse.csr_matrix(dense)))
    return couplings


class MonotonicityReport:
    def __init__(self, monotone: bool, cycles_checked: int, exhaustive: bool,
                 witness: Optional[Tuple[IndexPair, ...]] = None, gain: float = 0.0):
        self.__monotone = monotone
        self.__cycles_checked = cycles_checked
        self.__exhaustive = exhaustive
        self.__witness = witness
        self.__gain = gain

    @property
    def monotone(self) -> bool:
        return self.__monotone

    @property
    def cycles_checked(self) -> int:
        return self.__cycles_checked

    @property
    def exhaustive(self) -> bool:
        return self.__exhaustive

    @property
    def witness(self) -> Optional[Tuple[IndexPair, ...]]:
        return self.__witness

    @property
    def gain(self) -> float:
        return self.__gain

    def __bool__(self):
        return self.__monotone


def cycle_gain(cycle: Sequence[IndexPair], matrix: CostMatrix) -> float:
    """sum c(x_i, y_i) - sum c(x_{i+1}, y_i); -inf when a reassigned arc is forbidden."""
    lhs = math.fsum(matrix[i, j].value for i, j in cycle)
    rhs = []
    for k, (_, j) in enumerate(cycle):
        next_i = cycle[(k + 1) % len(cycle)][0]
        entry = matrix[next_i, j]
        if not entry.is_finite:
            return -math.inf
        rhs.append(entry.value)
    return lhs - math.fsum(rhs)


def check_c2_monotone(support: Sequence[IndexPair], matrix: CostMatrix, max_cycle_len: int,
                      tolerance: float = 1e-9, samples: int = 20000, seed: int = 0) -> MonotonicityReport:
    """
    Search for a cycle of distinct support pairs that lowers the cost when rotated.

    Exhaustive for supports up to EXHAUSTIVE_SUPPORT_LIMIT pairs; beyond that a seeded sample
    of cycles is sampled, which can find violations but never proves their absence.
    """
    support = list(support)
    for i, j in support:
        if not matrix.admissible[i, j]:
            raise ValueError(f"Support pair ({i}, {j}) has infinite cost")
    size = len(support)
    max_len = min(max_cycle_len, size)
    exhaustive = size <= EXHAUSTIVE_SUPPORT_LIMIT
    checked = 0

    def candidates():
        if exhaustive:
            for length in range(2, max_len + 1):
                for first in range(size):
                    for rest in itertools.permutations(range(first + 1, size), length - 1):
                        yield (first,) + rest
        else:
            rng = np.random.default_rng(seed)
            for _ in range(samples):
                length = int(rng.integers(2, max_len + 1))
                yield tuple(rng.choice(size, size=length, replace=False).tolist())

    for indices in candidates():
        checked += 1
        cycle = tuple(support[k] for k in indices)
        gain = cycle_gain(cycle, matrix)
        scale = max(1.0, max(abs(matrix[i, j].value) for i, j in cycle))
        if gain > tolerance * scale:
            logger.debug(f"Cycle {cycle} violates c2-monotonicity by {gain:.6g}")
            return MonotonicityReport(False, checked, exhaustive, cycle, gain)
    return MonotonicityReport(True, checked, exhaustive)


def compare_methods(matrix: CostMatrix, mu: DiscreteMeasure, nu: DiscreteMeasure,
                    methods: Sequence[str] = ("highs-ds", "highs-ipm")) -> Dict[str, Any]:
    """Solve with several LP backends and report whether optimal values and plans coincide."""
    results = {method: solve(matrix, mu, nu, method) for method in methods}
    costs = {method: r.total_cost.value for method, r in results.items()}
    plans = [r.coupling.dense() for r in results.values()]
    same_plan = all(np.allclose(plans[0], p, atol=MARGINAL_TOLERANCE) for p in plans[1:])
    spread = max(costs.values()) - min(costs.values())
    return {"costs": costs, "cost_spread": spread, "same_plan": bool(same_plan)}
