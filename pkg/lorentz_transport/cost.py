"""
The costs c1(x, y) = tau(y) - tau(x) - d(x, y) and c2 = c1^2 on J+, +inf elsewhere.
"""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import NotChronologicalError
from .extended_real import ExtReal, Kind
from .formatting import format_float, parse_ext
from .lagrangian import dL2_dv, minimizer
from .spacetime import CausalClass, Covector, Event, SpacetimeModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ExtendedCost(ExtReal):
    """A cost value: a non-negative real or +inf."""

    def __post_init__(self):
        super().__post_init__()
        if self.kind is Kind.MINUS_INF:
            raise ValueError("A cost cannot be -inf")
        if self.kind is Kind.FINITE and self.value < 0.0:
            raise ValueError(f"A cost must be non-negative, got {self.value}")


def cost_c1(model: SpacetimeModel, x: Event, y: Event) -> ExtendedCost:
    if not model.causal_classify(x, y).is_causal:
        return ExtendedCost.plus_inf()
    return ExtendedCost.finite(max(0.0, model.tau(y) - model.tau(x) - model.lorentz_distance(x, y)))


def cost_c2(model: SpacetimeModel, x: Event, y: Event) -> ExtendedCost:
    c1 = cost_c1(model, x, y)
    if not c1.is_finite:
        return c1
    return ExtendedCost.finite(c1.value ** 2)


def dc2_dx(model: SpacetimeModel, x: Event, y: Event) -> Covector:
    """dc2/dx (x, y) = -dL2/dv at the initial velocity of the minimizer; only on I+."""
    causal_class = model.causal_classify(x, y)
    if causal_class is not CausalClass.CHRONOLOGICAL:
        raise NotChronologicalError(x, y, causal_class)
    velocity = minimizer(model, x, y, nodes=2).initial_velocity
    return Covector.from_array(x, -dL2_dv(model, velocity).as_array())


@dataclass(frozen=True, eq=False)
class CostMatrix:
    model: SpacetimeModel
    sources: Tuple[Event, ...]
    targets: Tuple[Event, ...]
    finite_values: np.ndarray
    admissible: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.admissible.shape

    def __getitem__(self, index: Tuple[int, int]) -> ExtendedCost:
        i, j = index
        if not self.admissible[i, j]:
            return ExtendedCost.plus_inf()
        return ExtendedCost.finite(float(self.finite_values[i, j]))

    @property
    def infinite_count(self) -> int:
        return int(self.admissible.size - np.count_nonzero(self.admissible))

    @property
    def all_infinite(self) -> bool:
        return not self.admissible.any()

    def as_float_array(self) -> np.ndarray:
        return np.where(self.admissible, self.finite_values, np.inf)

    def to_csv(self, path: str):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["source"] + [f"target_{j}" for j in range(self.shape[1])])
            for i in range(self.shape[0]):
                writer.writerow([i] + [format_float(float(self[i, j])) for j in range(self.shape[1])])

    @staticmethod
    def read_csv_values(path: str) -> Tuple[np.ndarray, np.ndarray]:
        """Return (finite_values, admissible) parsed from a CSV written by to_csv."""
        with open(path, newline="") as f:
            rows = list(csv.reader(f))[1:]
        entries = [[parse_ext(cell) for cell in row[1:]] for row in rows]
        admissible = np.array([[e.is_finite for e in row] for row in entries], dtype=bool)
        finite_values = np.array([[e.value for e in row] for row in entries], dtype=float)
        return finite_values, admissible


def assemble_cost_matrix(model: SpacetimeModel, xs: Sequence[Event], ys: Sequence[Event],
                         workers: int = 1) -> CostMatrix:
    if len(xs) == 0 or len(ys) == 0:
        raise ValueError("Cost matrix needs non-empty source and target lists")

    def row(x: Event):
        return [cost_c2(model, x, y) for y in ys]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(row, xs))
    else:
        rows = [row(x) for x in xs]
    admissible = np.array([[c.is_finite for c in r] for r in rows], dtype=bool)
    finite_values = np.array([[c.value for c in r] for r in rows], dtype=float)
    matrix = CostMatrix(model, tuple(xs), tuple(ys), finite_values, admissible)
    if matrix.all_infinite:
        logger.warning(f"All {admissible.size} cost entries are infinite: no source is causally before any target")
    else:
        logger.debug(f"Assembled {matrix.shape[0]}x{matrix.shape[1]} cost matrix with "
                     f"{matrix.infinite_count} infinite entries")
    return matrix
