"""
c2-transforms, c2-convex potentials and pi-solutions built from an optimal support.

The chain supremum

    phi(x) = sup_k sup_{(x_i, y_i) in Gamma} sum_{i=0}^{k} c2(x_i, y_i) - c2(x_{i+1}, y_i),  x_{k+1} = x,

is a longest-path problem on the graph whose nodes are the support pairs. An edge p -> q
carries c2(x_p, y_p) - c2(x_q, y_p) and is absent when that cost is infinite. Cyclical
monotonicity of Gamma is exactly the absence of positive cycles, so relaxation settles within
|Gamma| rounds; a further improvement exposes a violating cycle.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .artifact_component import ArtifactComponent
from .check_report import CheckReport
from .cost import CostMatrix, cost_c2
from .data_types import IndexPair
from .errors import AnchorNotInSupportError, MonotonicityViolatedError, NonIntegrablePotentialError
from .extended_real import (MINUS_INF, PLUS_INF, ExtReal, add_transform, ext_max, ext_min, le_with_tolerance,
                            potential_gap, psi_minus_cost, sub_convexify)
from .formatting import ext_to_json, format_ext, parse_ext
from .kantorovich import SolveResult, plan_cost
from .measures import Coupling, DiscreteMeasure
from .spacetime import CAUSAL_TOLERANCE, Event, MinkowskiSpacetime

logger = logging.getLogger(__name__)

SUPPORT_TOLERANCE = 1e-8
_MODULE = "potentials"


@dataclass(frozen=True)
class PotentialPair(ArtifactComponent):
    phi: Tuple[ExtReal, ...]
    psi: Tuple[ExtReal, ...]
    anchor: IndexPair
    construction_log: Tuple[str, ...] = field(default=())

    def to_dict(self) -> Dict[str, Any]:
        return {"phi": [ext_to_json(v) for v in self.phi], "psi": [ext_to_json(v) for v in self.psi],
                "anchor": list(self.anchor), "construction_log": list(self.construction_log)}

    @classmethod
    def read_from_dict(cls, data: Dict[str, Any]) -> "PotentialPair":
        return cls(tuple(parse_ext(v) for v in data["phi"]), tuple(parse_ext(v) for v in data["psi"]),
                   tuple(data["anchor"]), tuple(data.get("construction_log", ())))

    def shifted(self, amount: float) -> "PotentialPair":
        return PotentialPair(tuple(v.shifted(amount) for v in self.phi), tuple(v.shifted(amount) for v in self.psi),
                             self.anchor, self.construction_log)

    def to_csv(self, path: str):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["side", "index", "value"])
            for side, values in (("phi", self.phi), ("psi", self.psi)):
                for k, v in enumerate(values):
                    writer.writerow([side, k, format_ext(v)])

    @classmethod
    def read_csv(cls, path: str, anchor: IndexPair = (0, 0)) -> "PotentialPair":
        phi: List[ExtReal] = []
        psi: List[ExtReal] = []
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                (phi if row["side"] == "phi" else psi).append(parse_ext(row["value"]))
        return cls(tuple(phi), tuple(psi), anchor)


def c2_transform(phi: Sequence[ExtReal], matrix: CostMatrix) -> Tuple[ExtReal, ...]:
    """psi(y) = inf_x (c2(x, y) + phi(x)) with +inf + (-inf) = +inf."""
    rows, cols = matrix.shape
    return tuple(ext_min(add_transform(matrix[i, j], phi[i]) for i in range(rows)) for j in range(cols))


def c2_convexify(psi: Sequence[ExtReal], matrix: CostMatrix) -> Tuple[ExtReal, ...]:
    """phi(x) = sup_y (psi(y) - c2(x, y)) with inf - inf = -inf."""
    rows, cols = matrix.shape
    return tuple(ext_max(sub_convexify(psi[j], matrix[i, j]) for j in range(cols)) for i in range(rows))


def _chain_weights(support: Sequence[IndexPair], matrix: CostMatrix) -> np.ndarray:
    """weights[p, q] = c2(x_p, y_p) - c2(x_q, y_p), or -inf when c2(x_q, y_p) is infinite."""
    xs = np.array([i for i, _ in support])
    ys = np.array([j for _, j in support])
    base = matrix.finite_values[xs, ys]
    cross = matrix.finite_values[xs[None, :], ys[:, None]]
    return np.where(matrix.admissible[xs[None, :], ys[:, None]], base[:, None] - cross, -math.inf)


def _chain_roots(weights: np.ndarray, anchor_node: int) -> List[int]:
    """The anchor, then every support pair no earlier root reaches along finite chain edges."""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(weights)))
    graph.add_edges_from((int(p), int(q)) for p, q in zip(*np.nonzero(np.isfinite(weights))))
    roots = [anchor_node]
    reached = {anchor_node} | nx.descendants(graph, anchor_node)
    for node in range(len(weights)):
        if node not in reached:
            roots.append(node)
            reached |= {node} | nx.descendants(graph, node)
    return roots


def _positive_cycle(predecessor: np.ndarray, start: int, size: int) -> List[int]:
    node = start
    for _ in range(size):
        if predecessor[node] < 0:
            return []
        node = int(predecessor[node])
    cycle = [node]
    current = int(predecessor[node])
    while current != node and current >= 0 and len(cycle) <= size:
        cycle.append(current)
        current = int(predecessor[current])
    return list(reversed(cycle))


def _chain_values(support: Sequence[IndexPair], matrix: CostMatrix, weights: np.ndarray, roots: Sequence[int],
                  improvement_tolerance: float) -> Tuple[np.ndarray, int]:
    """Longest chain value from the nearest root to every support pair, relaxing all edges per round."""
    size = len(support)
    values = np.full(size, -math.inf)
    values[list(roots)] = 0.0
    predecessor = np.full(size, -1)
    columns = np.arange(size)
    for rounds in range(1, size + 2):
        candidates = values[:, None] + weights
        best = np.argmax(candidates, axis=0)
        gains = candidates[best, columns]
        improved = gains > values + improvement_tolerance
        if not improved.any():
            return values, rounds
        values = np.where(improved, gains, values)
        predecessor[improved] = best[improved]
        if rounds == size + 1:
            cycle = _positive_cycle(predecessor, int(np.flatnonzero(improved)[-1]), size)
            pairs = [support[k] for k in cycle]
            gain = sum(matrix[x, y].value - matrix[pairs[(k + 1) % len(pairs)][0], y].value
                       for k, (x, y) in enumerate(pairs))
            raise MonotonicityViolatedError(cycle, gain)
    return values, size + 1


def _chain_potential(support: Sequence[IndexPair], matrix: CostMatrix, anchor: IndexPair,
                     tolerance: float) -> Tuple[np.ndarray, int, List[int]]:
    """phi as floats with phi(x_anchor) = 0, the relaxation rounds and the chain roots."""
    scale = max(1.0, max(matrix[x, y].value for x, y in support))
    weights = _chain_weights(support, matrix)
    roots = _chain_roots(weights, support.index(anchor))
    values, rounds = _chain_values(support, matrix, weights, roots, tolerance * scale)

    xs = np.array([i for i, _ in support])
    ys = np.array([j for _, j in support])
    closing = values[None, :] + matrix.finite_values[xs, ys][None, :] - matrix.finite_values[:, ys]
    phi = np.where(matrix.admissible[:, ys], closing, -math.inf).max(axis=1)
    # another root may reach the anchor with a positive chain
    return phi - phi[anchor[0]], rounds, roots


def build_pi_solution(support: Sequence[IndexPair], matrix: CostMatrix, anchor: Optional[IndexPair] = None,
                      tolerance: float = 1e-12) -> PotentialPair:
    """
    pi-solution from a c2-monotone support: phi by longest chains, psi = phi^{c2}.

    Support pairs that no chain from the anchor reaches are rooted at further pairs, one per
    unreached component, each starting at chain value 0. The result is still a pi-solution;
    the construction log lists the roots.
    """
    support = sorted(set(tuple(p) for p in support))
    anchor = tuple(anchor) if anchor is not None else support[0]
    if anchor not in support:
        raise AnchorNotInSupportError(anchor)
    values, rounds, roots = _chain_potential(support, matrix, anchor, tolerance)
    phi = [ExtReal.from_float(float(v)) for v in values]
    psi = c2_transform(phi, matrix)
    log = (f"support pairs: {len(support)}", f"anchor: {anchor}", f"relaxation rounds: {rounds}",
           f"chain roots: {[support[r] for r in roots]}")
    if len(roots) > 1:
        logger.info(f"{len(roots) - 1} support components are not chained from anchor {anchor}; "
                    f"rooted at {[support[r] for r in roots[1:]]}")
    return PotentialPair(tuple(phi), psi, anchor, log)


def central_pi_solution(support: Sequence[IndexPair], matrix: CostMatrix, anchor: Optional[IndexPair] = None,
                        tolerance: float = 1e-12) -> PotentialPair:
    """
    Mean of the chain pi-solutions anchored at every support pair, normalized to phi(x_0) = 0.

    A chain potential is tight on the chain edge that defines phi(x_i) as well as on the plan
    pair, so its extension has a kink at every source point reached through another pair. The
    mean is tight off the support only where every anchored potential is, that is where a
    zero-gain rotation of the plan through the pair is optimal as well.
    """
    support = sorted(set(tuple(p) for p in support))
    anchor = tuple(anchor) if anchor is not None else support[0]
    if anchor not in support:
        raise AnchorNotInSupportError(anchor)
    anchored = np.array([_chain_potential(support, matrix, a, tolerance)[0] for a in support])
    mean = (anchored - anchored[:, anchor[0]][:, None]).mean(axis=0)
    phi = [ExtReal.from_float(float(v)) for v in mean]
    psi = c2_transform(phi, matrix)
    log = (f"support pairs: {len(support)}", f"anchor: {anchor}", f"averaged anchors: {len(support)}")
    return PotentialPair(tuple(phi), psi, anchor, log)


def enumerate_chain_potential(support: Sequence[IndexPair], matrix: CostMatrix, anchor: IndexPair,
                              max_length: int) -> Tuple[ExtReal, ...]:
    """Brute-force chain supremum over all chains of at most max_length intermediate pairs."""
    support = sorted(set(tuple(p) for p in support))
    rows, _ = matrix.shape
    best = [-math.inf] * rows

    def close(total: float, last: IndexPair):
        xl, yl = last
        for i in range(rows):
            if matrix.admissible[i, yl]:
                best[i] = max(best[i], total + matrix[xl, yl].value - matrix[i, yl].value)

    def extend(total: float, last: IndexPair, depth: int):
        close(total, last)
        if depth == max_length:
            return
        xl, yl = last
        for nxt in support:
            if matrix.admissible[nxt[0], yl]:
                extend(total + matrix[xl, yl].value - matrix[nxt[0], yl].value, nxt, depth + 1)

    extend(0.0, tuple(anchor), 0)
    return tuple(ExtReal.from_float(b) for b in best)


def verify_pi_solution(pp: PotentialPair, coupling: Coupling, matrix: CostMatrix,
                       tolerance: float = SUPPORT_TOLERANCE) -> CheckReport:
    """(a) psi - phi <= c2 everywhere; (b) equality on the support; (c) finiteness where mass sits."""
    report = CheckReport("pi_solution")
    rows, cols = matrix.shape
    for i in range(rows):
        for j in range(cols):
            gap = potential_gap(pp.psi[j], pp.phi[i])
            if not le_with_tolerance(gap, matrix[i, j], tolerance):
                report.fail(_MODULE, "c2-transform inequality psi - phi <= c2", (i, j),
                            f"psi - phi = {gap} exceeds c2 = {matrix[i, j]}", "pi-solution")
    for i, j in coupling.support():
        gap = potential_gap(pp.psi[j], pp.phi[i])
        cost = matrix[i, j]
        if not (gap.is_finite and cost.is_finite and abs(gap.value - cost.value) <= tolerance):
            report.fail(_MODULE, "pi-solution equality on support", (i, j),
                        f"psi - phi = {gap} but c2 = {cost} on a support pair", "pi-solution")
    row_mass, col_mass = coupling.plan.sum(axis=1), coupling.plan.sum(axis=0)
    for i in range(rows):
        if row_mass[i, 0] > 0.0 and not pp.phi[i].is_finite:
            report.fail(_MODULE, "phi real-valued where mu has mass", (i,), f"phi = {pp.phi[i]}",
                        "pi-solution-finiteness")
    for j in range(cols):
        if col_mass[0, j] > 0.0 and not pp.psi[j].is_finite:
            report.fail(_MODULE, "psi real-valued where nu has mass", (j,), f"psi = {pp.psi[j]}",
                        "pi-solution-finiteness")
    report.values["support_pairs"] = len(coupling.support())
    return report


def dual_value(pp: PotentialPair, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """sum psi nu - sum phi mu; both potentials must be finite where the measures have mass."""
    bad_phi = [i for i, v in enumerate(pp.phi) if not v.is_finite]
    if bad_phi:
        raise NonIntegrablePotentialError("source", bad_phi)
    bad_psi = [j for j, v in enumerate(pp.psi) if not v.is_finite]
    if bad_psi:
        raise NonIntegrablePotentialError("target", bad_psi)
    return (math.fsum(v.value * w for v, w in zip(pp.psi, nu.weights))
            - math.fsum(v.value * w for v, w in zip(pp.phi, mu.weights)))


def duality_gap(pp: PotentialPair, solve_result: SolveResult, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    return dual_value(pp, mu, nu) - solve_result.total_cost.value


def extend_potential(pp: PotentialPair, matrix: CostMatrix, x: Event) -> ExtReal:
    """Canonical c2-convex extension phi^(x) = max_j (psi(y_j) - c2(x, y_j))."""
    return ext_max(psi_minus_cost(psi, cost_c2(matrix.model, x, y)) for psi, y in zip(pp.psi, matrix.targets))


def potential_terms_grid(pp: PotentialPair, matrix: CostMatrix, points: np.ndarray) -> np.ndarray:
    """
    psi(y_j) - c2(x, y_j) for every row x of points and every target, as floats with +-inf.

    Minkowski models use a vectorized form of the cost with the same causal tolerance rule.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    model = matrix.model
    if not isinstance(model, MinkowskiSpacetime):
        return np.array([[float(psi_minus_cost(psi, cost_c2(model, Event(tuple(p)), y)))
                          for psi, y in zip(pp.psi, matrix.targets)] for p in points])
    targets = np.array([y.as_array() for y in matrix.targets])
    delta = targets[None, :, :] - points[:, None, :]
    dt = delta[..., 0]
    spatial_sq = np.sum(delta[..., 1:] ** 2, axis=-1)
    q = dt * dt - spatial_sq
    equal = (dt == 0.0) & (spatial_sq == 0.0)
    null = (dt > 0.0) & (np.abs(q) <= CAUSAL_TOLERANCE * (dt * dt + spatial_sq))
    chronological = (dt > 0.0) & ~null & (q > 0.0)
    causal = equal | null | chronological
    distance = np.where(chronological, np.sqrt(np.where(chronological, q, 0.0)), 0.0)
    tau_gap = model.tau_scale * targets[None, :, 0] - model.tau_scale * points[:, None, 0]
    c1 = np.maximum(0.0, np.where(equal, 0.0, tau_gap - distance))
    c2 = c1 * c1

    psi_kind = np.array([1 if v.is_plus_inf else (-1 if v.is_minus_inf else 0) for v in pp.psi])
    psi_value = np.array([v.value for v in pp.psi])
    terms = np.full(c2.shape, -math.inf)
    finite_terms = causal & (psi_kind[None, :] == 0)
    terms[finite_terms] = (psi_value[None, :] - c2)[finite_terms]
    terms[causal & (psi_kind[None, :] == 1)] = math.inf
    return terms


def extend_potential_grid(pp: PotentialPair, matrix: CostMatrix, points: np.ndarray) -> np.ndarray:
    """extend_potential at every row of points."""
    return potential_terms_grid(pp, matrix, points).max(axis=1)


def weak_duality_holds(pp: PotentialPair, couplings: Sequence[Coupling], matrix: CostMatrix,
                       tolerance: float = SUPPORT_TOLERANCE) -> bool:
    """sum psi nu - sum phi mu <= total cost of every given feasible coupling."""
    for coupling in couplings:
        value = dual_value(pp, coupling.source, coupling.target)
        cost = plan_cost(coupling.dense(), matrix)
        if cost.is_finite and value > cost.value + tolerance:
            return False
    return True
