"""
Grid checks of the regularity of the extended potential phi^ = max_j (psi_j - c2(., y_j)):
local boundedness, midpoint semiconvexity, timelike separation of the optimal coupling,
compactness of near-optimal target sets and the gap between phi^ and the near-cone targets.
"""
import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from .artifact_component import ArtifactComponent
from .check_report import CheckReport
from .cost import CostMatrix, assemble_cost_matrix
from .errors import RegionLeavesDomainError
from .extended_real import ExtReal, ext_max, psi_minus_cost
from .formatting import ext_to_json, format_float, parse_ext
from .kantorovich import SolveResult, check_strictly_timelike
from .measures import support_intersects
from .potentials import PotentialPair, c2_transform, extend_potential, extend_potential_grid, potential_terms_grid
from .spacetime import Event

logger = logging.getLogger(__name__)

_MODULE = "regularity"
GRID_NODES = 33
BOX_SHRINK = 0.5
DEGENERATE_PADDING = 0.05
CHUNK_ROWS = 4096
REGULARITY_CHECKS = ("boundedness", "semiconvexity", "separation", "compactness", "light_cone_gap")
METRICS = ("lorentz", "h")


@dataclass(frozen=True)
class Box(ArtifactComponent):
    """Axis-aligned coordinate box [lower, upper]."""
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError(f"Box corners of dimensions {len(self.lower)} and {len(self.upper)}")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"Box lower corner {self.lower} exceeds upper corner {self.upper}")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def steps(self, nodes: int) -> np.ndarray:
        return (np.asarray(self.upper) - np.asarray(self.lower)) / max(nodes - 1, 1)

    def axes(self, nodes: int) -> List[np.ndarray]:
        return [np.linspace(lo, hi, nodes) for lo, hi in zip(self.lower, self.upper)]

    def grid(self, nodes: int) -> np.ndarray:
        """Grid nodes as rows, in C order of the per-axis index."""
        mesh = np.meshgrid(*self.axes(nodes), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def shrunk(self, factor: float) -> "Box":
        center = 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))
        half = 0.5 * factor * (np.asarray(self.upper) - np.asarray(self.lower))
        return Box(tuple((center - half).tolist()), tuple((center + half).tolist()))

    def contains(self, other: "Box") -> bool:
        return all(a <= b for a, b in zip(self.lower, other.lower)) and \
            all(a >= b for a, b in zip(self.upper, other.upper))

    def to_dict(self) -> Dict[str, Any]:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def read_from_dict(cls, data: Dict[str, Any]) -> "Box":
        return cls(tuple(float(v) for v in data["lower"]), tuple(float(v) for v in data["upper"]))


def default_box(solve_result: SolveResult, shrink: float = BOX_SHRINK, padding: float = DEGENERATE_PADDING) -> Box:
    """
    Bounding box of the mass-carrying source points shrunk by `shrink` about its center.
    Axes along which the points do not spread get +-padding times the largest spread (at least 1).
    """
    mu = solve_result.coupling.source
    rows = sorted({i for i, _ in solve_result.support()})
    points = np.array([mu.points[i].as_array() for i in rows])
    box = Box(tuple(points.min(axis=0).tolist()), tuple(points.max(axis=0).tolist())).shrunk(shrink)
    widths = np.asarray(box.upper) - np.asarray(box.lower)
    pad = padding * max(1.0, float(widths.max()))
    lower = np.where(widths > 0.0, box.lower, np.asarray(box.lower) - pad)
    upper = np.where(widths > 0.0, box.upper, np.asarray(box.upper) + pad)
    return Box(tuple(lower.tolist()), tuple(upper.tolist()))


def _evaluate(func: Callable[[np.ndarray], np.ndarray], points: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(func(points[k:k + CHUNK_ROWS]), dtype=float)
                           for k in range(0, len(points), CHUNK_ROWS)])


def potential_function(pp: PotentialPair, matrix: CostMatrix) -> Callable[[np.ndarray], np.ndarray]:
    return lambda points: extend_potential_grid(pp, matrix, points)


def _finite_grid_values(func: Callable[[np.ndarray], np.ndarray], box: Box, nodes: int) -> np.ndarray:
    values = _evaluate(func, box.grid(nodes))
    bad = int(np.count_nonzero(~np.isfinite(values)))
    if bad:
        raise RegionLeavesDomainError(bad, values.size)
    return values


def check_local_boundedness(pp: PotentialPair, matrix: CostMatrix, box: Box,
                            nodes: int = GRID_NODES) -> Tuple[float, float]:
    values = _finite_grid_values(potential_function(pp, matrix), box, nodes)
    return float(values.min()), float(values.max())


def _offsets(dimension: int) -> List[np.ndarray]:
    """Axis and diagonal index offsets, one of each +-pair."""
    offsets = []
    for k in range(dimension):
        e = np.zeros(dimension, dtype=int)
        e[k] = 1
        offsets.append(e)
    for k, l in itertools.combinations(range(dimension), 2):
        for sign in (1, -1):
            e = np.zeros(dimension, dtype=int)
            e[k], e[l] = 1, sign
            offsets.append(e)
    return offsets


def _shifted(values: np.ndarray, offset: np.ndarray, direction: int) -> np.ndarray:
    """values[i + direction * offset] over the nodes i whose +-offset neighbours lie on the grid."""
    index = []
    for n, o in zip(values.shape, offset):
        reach = abs(int(o))
        start = reach + direction * int(o)
        index.append(slice(start, n - 2 * reach + start))
    return values[tuple(index)]


def check_semiconvexity(func: Callable[[np.ndarray], np.ndarray], box: Box, nodes: int = GRID_NODES) -> float:
    """
    Smallest C >= 0 with f(x + d) + f(x - d) - 2 f(x) >= -C |d|^2 over all grid nodes x and all
    axis and diagonal offsets d of one and two grid steps.
    """
    values = _finite_grid_values(func, box, nodes).reshape((nodes,) * box.dimension)
    steps = box.steps(nodes)
    constant = 0.0
    for base in _offsets(box.dimension):
        for multiple in (1, 2):
            offset = multiple * base
            length_sq = float(np.sum((offset * steps) ** 2))
            if length_sq == 0.0 or np.any(np.abs(offset) * 2 >= nodes):
                continue
            defect = _shifted(values, offset, 1) + _shifted(values, offset, -1) - 2.0 * _shifted(values, offset, 0)
            if defect.size:
                constant = max(constant, float(-defect.min()) / length_sq)
    return constant


def check_timelike_separation(solve_result: SolveResult, matrix: CostMatrix) -> float:
    """delta = min d(x_i, y_j) over the mass-carrying entries of the plan."""
    return min(matrix.model.lorentz_distance(matrix.sources[i], matrix.targets[j]) for i, j in solve_result.support())


def check_near_optimal_compactness(pp: PotentialPair, matrix: CostMatrix, box: Box, nodes: int = GRID_NODES,
                                   lattice: Optional[np.ndarray] = None) -> float:
    """
    h-diameter of {y : psi(y) - c2(x, y) >= phi^(x) - 1 for some grid node x of the box}.

    Candidates are the target support and, when given, lattice rows with psi taken as the
    c2-transform of phi.
    """
    points = box.grid(nodes)
    terms = np.concatenate([potential_terms_grid(pp, matrix, points[k:k + CHUNK_ROWS])
                            for k in range(0, len(points), CHUNK_ROWS)])
    best = terms.max(axis=1)
    bad = int(np.count_nonzero(~np.isfinite(best)))
    if bad:
        raise RegionLeavesDomainError(bad, best.size)
    selected = np.any(terms >= best[:, None] - 1.0, axis=0)
    candidates = [y.as_array() for y, keep in zip(matrix.targets, selected) if keep]
    if lattice is not None and len(lattice):
        sources = [Event(tuple(p)) for p in points]
        events = [Event(tuple(p)) for p in np.atleast_2d(lattice)]
        lattice_matrix = assemble_cost_matrix(matrix.model, sources, events)
        phi_hat = [ExtReal.from_float(v) for v in best]
        psi_hat = c2_transform(phi_hat, lattice_matrix)
        for j, y in enumerate(events):
            if any(psi_minus_cost(psi_hat[j], lattice_matrix[i, j]) >= phi_hat[i].shifted(-1.0)
                   for i in range(len(sources))):
                candidates.append(y.as_array())
    if len(candidates) < 2:
        return 0.0
    stacked = np.array(candidates)
    return float(max(np.linalg.norm(stacked - row, axis=1).max() for row in stacked))


def check_light_cone_gap(pp: PotentialPair, solve_result: SolveResult, matrix: CostMatrix, near_radius: float,
                         metric: str = "lorentz") -> Dict[int, ExtReal]:
    """
    margin(x) = phi^(x) - max (psi(y) - c2(x, y)) over targets within near_radius of x, per
    mass-carrying source point; the empty maximum is -inf and gives margin +inf.
    """
    if metric not in METRICS:
        raise ValueError(f"Unknown metric {metric!r}; expected one of {METRICS}")
    model = matrix.model
    distance = model.lorentz_distance if metric == "lorentz" else model.h_distance
    margins = {}
    for i in sorted({i for i, _ in solve_result.support()}):
        x = matrix.sources[i]
        value = extend_potential(pp, matrix, x)
        near = ext_max(psi_minus_cost(pp.psi[j], matrix[i, j]) for j, y in enumerate(matrix.targets)
                       if distance(x, y) <= near_radius)
        if near.is_minus_inf:
            margins[i] = ExtReal.plus_inf()
        else:
            margins[i] = ExtReal.finite(value.value - near.value) if value.is_finite and near.is_finite else \
                ExtReal.minus_inf()
    return margins


def grid_scan(pp: PotentialPair, matrix: CostMatrix, box: Box, path: str, nodes: int = GRID_NODES):
    """Dump (coordinates, phi^) rows for plotting."""
    points = box.grid(nodes)
    values = _evaluate(potential_function(pp, matrix), points)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"x{k}" for k in range(box.dimension)] + ["phi"])
        for point, value in zip(points, values):
            writer.writerow([format_float(float(c)) for c in point] + [format_float(float(value))])


@dataclass
class RegularityReport(ArtifactComponent):
    box: Box
    nodes: int
    bounds: Optional[Tuple[float, float]] = None
    semiconvexity: Optional[float] = None
    delta: Optional[float] = None
    diameter: Optional[float] = None
    margins: Dict[str, Dict[int, ExtReal]] = field(default_factory=dict)
    check: CheckReport = field(default_factory=lambda: CheckReport("regularity"))

    @property
    def grid_step(self) -> Tuple[float, ...]:
        return tuple(self.box.steps(self.nodes).tolist())

    @property
    def min_margin(self) -> Optional[ExtReal]:
        values = [m for per_metric in self.margins.values() for m in per_metric.values()]
        return min(values) if values else None

    def to_dict(self) -> Dict[str, Any]:
        return {"box": self.box.to_dict(), "nodes": self.nodes, "grid_step": list(self.grid_step),
                "bounds": None if self.bounds is None else list(self.bounds),
                "semiconvexity": self.semiconvexity, "delta": self.delta, "diameter": self.diameter,
                "margins": {metric: {str(i): ext_to_json(m) for i, m in sorted(per_metric.items())}
                            for metric, per_metric in self.margins.items()},
                "check": self.check.to_dict()}

    @classmethod
    def read_from_dict(cls, data: Dict[str, Any]) -> "RegularityReport":
        bounds = data.get("bounds")
        return cls(Box.read_from_dict(data["box"]), int(data["nodes"]),
                   None if bounds is None else (float(bounds[0]), float(bounds[1])),
                   data.get("semiconvexity"), data.get("delta"), data.get("diameter"),
                   {metric: {int(i): parse_ext(m) for i, m in per_metric.items()}
                    for metric, per_metric in data.get("margins", {}).items()},
                   CheckReport.read_from_dict(data["check"]))


def assess_regularity(pp: PotentialPair, solve_result: SolveResult, matrix: CostMatrix, box: Optional[Box] = None,
                      nodes: int = GRID_NODES, checks: FrozenSet[str] = frozenset(REGULARITY_CHECKS),
                      pi_solution_verified: bool = True) -> RegularityReport:
    """
    Run the enabled checks. Violated preconditions become hypothesis flags; a non-positive
    margin on an instance whose pi-solution verified is a finding, since the gap holds only
    almost everywhere.
    """
    box = default_box(solve_result) if box is None else box
    report = RegularityReport(box, nodes)
    check = report.check
    coupling = solve_result.coupling
    overlapping = support_intersects(coupling.source, coupling.target)
    if overlapping:
        check.hypothesis_flags.append("supports of mu and nu intersect")
    if not check_strictly_timelike(matrix, coupling.source, coupling.target):
        check.hypothesis_flags.append("mu and nu are not chronologically related: no coupling charges only pairs "
                                      "with y in I+(x)")

    domain_ok = True
    if "boundedness" in checks:
        try:
            report.bounds = check_local_boundedness(pp, matrix, box, nodes)
        except RegionLeavesDomainError as e:
            domain_ok = False
            check.hypothesis_flags.append(f"box leaves the finiteness domain of phi^: {e}")
    if "semiconvexity" in checks and domain_ok:
        try:
            report.semiconvexity = check_semiconvexity(potential_function(pp, matrix), box, nodes)
        except RegionLeavesDomainError as e:
            check.hypothesis_flags.append(f"box leaves the finiteness domain of phi^: {e}")
        else:
            if not math.isfinite(report.semiconvexity):
                check.fail(_MODULE, "local semiconvexity of phi^", (), "midpoint constant is not finite",
                           "local-semiconvexity")
    if "separation" in checks or "light_cone_gap" in checks:
        report.delta = check_timelike_separation(solve_result, matrix)
        if report.delta <= 0.0:
            check.hypothesis_flags.append("optimal coupling charges null or coincident pairs (delta = 0)")
    if "compactness" in checks and domain_ok:
        try:
            report.diameter = check_near_optimal_compactness(pp, matrix, box, nodes)
        except RegionLeavesDomainError as e:
            check.hypothesis_flags.append(f"box leaves the finiteness domain of phi^: {e}")
        else:
            if not math.isfinite(report.diameter):
                check.fail(_MODULE, "relative compactness of near-optimal targets", (), "diameter is not finite",
                           "near-optimal-compactness")
    if "light_cone_gap" in checks and not overlapping and report.delta is not None and report.delta > 0.0:
        for metric in METRICS:
            margins = check_light_cone_gap(pp, solve_result, matrix, 0.5 * report.delta, metric)
            report.margins[metric] = margins
            for i, margin in margins.items():
                if margin > 0.0:
                    continue
                message = f"{metric} light-cone margin at source point {i} is {margin}"
                if pi_solution_verified:
                    logger.warning(f"Finding: {message}")
                    check.findings.append(message)
                else:
                    check.fail(_MODULE, "positive light-cone gap", (i,), message, "light-cone-gap")
    return report


def semiconvexity_refinement(pp: PotentialPair, matrix: CostMatrix, box: Box,
                             nodes: int = GRID_NODES) -> Tuple[float, float]:
    """Constants on the grid and on the grid with half the step."""
    func = potential_function(pp, matrix)
    return check_semiconvexity(func, box, nodes), check_semiconvexity(func, box, 2 * nodes - 1)
