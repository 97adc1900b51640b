import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .artifact_component import ArtifactComponent
from .errors import InvalidMeasureError, PartialMapError
from .spacetime import Event, MinkowskiSpacetime, SpacetimeModel

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-12
MARGINAL_TOLERANCE = 1e-10
PROFILES = ("slices", "marginal", "infeasible")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure(ArtifactComponent):
    """Finitely supported probability measure; repeated points are merged on construction."""
    points: Tuple[Event, ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        if len(self.points) != len(self.weights):
            raise InvalidMeasureError(f"{len(self.points)} points but {len(self.weights)} weights")
        if len(self.points) == 0:
            raise InvalidMeasureError("A probability measure needs at least one support point")
        merged: Dict[Event, float] = {}
        for point, weight in zip(self.points, self.weights):
            weight = float(weight)
            if not weight > 0.0:
                raise InvalidMeasureError(f"Weights must be positive, got {weight} at {point}")
            merged[point] = merged.get(point, 0.0) + weight
        if len(merged) < len(self.points):
            logger.warning(f"Merged {len(self.points) - len(merged)} repeated support points")
        total = math.fsum(merged.values())
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise InvalidMeasureError(f"Weights sum to {total!r}, expected 1")
        dimensions = {p.dimension for p in merged}
        if len(dimensions) != 1:
            raise InvalidMeasureError(f"Support points of mixed dimensions {sorted(dimensions)}")
        object.__setattr__(self, "points", tuple(merged.keys()))
        object.__setattr__(self, "weights", tuple(merged.values()))

    @classmethod
    def uniform(cls, points: Sequence[Event]) -> "DiscreteMeasure":
        return cls(tuple(points), tuple([1.0 / len(points)] * len(points)))

    @classmethod
    def dirac(cls, point: Event) -> "DiscreteMeasure":
        return cls((point,), (1.0,))

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def dimension(self) -> int:
        return self.points[0].dimension

    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def index_of(self, point: Event) -> int:
        return self.points.index(point)

    def to_dict(self) -> Dict[str, Any]:
        return {"points": [list(p.coords) for p in self.points], "weights": list(self.weights)}

    @classmethod
    def read_from_dict(cls, data: Dict[str, Any]) -> "DiscreteMeasure":
        return cls(tuple(Event(tuple(p)) for p in data["points"]), tuple(float(w) for w in data["weights"]))


def support_intersects(mu: DiscreteMeasure, nu: DiscreteMeasure) -> bool:
    return not set(mu.points).isdisjoint(nu.points)


@dataclass(frozen=True, eq=False)
class Coupling:
    source: DiscreteMeasure
    target: DiscreteMeasure
    plan: sparse.csr_matrix

    def __post_init__(self):
        plan = sparse.csr_matrix(self.plan, dtype=float)
        if plan.shape != (self.source.size, self.target.size):
            raise InvalidMeasureError(f"Plan shape {plan.shape} does not match ({self.source.size}, "
                                      f"{self.target.size})")
        if plan.nnz and plan.data.min() < -MARGINAL_TOLERANCE:
            raise InvalidMeasureError(f"Plan has negative mass {plan.data.min()!r}")
        plan.data = np.maximum(plan.data, 0.0)
        plan.eliminate_zeros()
        object.__setattr__(self, "plan", plan)
        rows, cols = marginals(self)
        row_error = float(np.max(np.abs(np.asarray(rows) - self.source.weight_array())))
        col_error = float(np.max(np.abs(np.asarray(cols) - self.target.weight_array())))
        if max(row_error, col_error) > MARGINAL_TOLERANCE:
            raise InvalidMeasureError(f"Plan marginals deviate from the measures by {max(row_error, col_error):.3e}")

    def dense(self) -> np.ndarray:
        return self.plan.toarray()

    def support(self, tolerance: float = 0.0) -> List[Tuple[int, int]]:
        """Support pairs in row-major order."""
        coo = self.plan.tocoo()
        pairs = [(int(i), int(j)) for i, j, m in zip(coo.row, coo.col, coo.data) if m > tolerance]
        return sorted(pairs)

    def triples(self, tolerance: float = 0.0) -> List[Tuple[int, int, float]]:
        dense = self.dense()
        return [(i, j, float(dense[i, j])) for i, j in self.support(tolerance)]

    def is_permutation_like(self, tolerance: float = MARGINAL_TOLERANCE) -> bool:
        dense = self.dense()
        return all(np.count_nonzero(row > tolerance) <= 1 for row in dense)


def marginals(coupling: Coupling) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    plan = coupling.plan
    rows = np.asarray(plan.sum(axis=1)).ravel()
    cols = np.asarray(plan.sum(axis=0)).ravel()
    return tuple(rows.tolist()), tuple(cols.tolist())


def product_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    return Coupling(mu, nu, sparse.csr_matrix(np.outer(mu.weight_array(), nu.weight_array())))


def pushforward(mu: DiscreteMeasure, assignment: Mapping[Event, Event]) -> DiscreteMeasure:
    """T_# mu; the masses of all preimages of a point are summed."""
    missing = [i for i, p in enumerate(mu.points) if p not in assignment]
    if missing:
        raise PartialMapError(missing)
    images: Dict[Event, float] = {}
    for point, weight in zip(mu.points, mu.weights):
        image = assignment[point]
        images[image] = images.get(image, 0.0) + weight
    return DiscreteMeasure(tuple(images.keys()), tuple(images.values()))


@dataclass(frozen=True, eq=False)
class Instance(ArtifactComponent):
    model: MinkowskiSpacetime
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    seed: Optional[int]
    profile: str

    def to_dict(self) -> Dict[str, Any]:
        return {"dimension": self.model.dimension, "tau": self.model.tau_label, "mu": self.mu.to_dict(),
                "nu": self.nu.to_dict(), "seed": self.seed, "profile": self.profile}

    @classmethod
    def read_from_dict(cls, data: Dict[str, Any]) -> "Instance":
        tau_label = data.get("tau", "2t")
        if not tau_label.endswith("t"):
            raise InvalidMeasureError(f"Unsupported time function {tau_label!r}; expected a*t")
        model = MinkowskiSpacetime(int(data["dimension"]) - 1, float(tau_label[:-1]))
        return cls(model, DiscreteMeasure.read_from_dict(data["mu"]), DiscreteMeasure.read_from_dict(data["nu"]),
                   data.get("seed"), data.get("profile", "custom-file"))

    def write(self, path: str):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def read(cls, path: str) -> "Instance":
        with open(path) as f:
            return cls.read_from_dict(json.load(f))


def _sample_ball(rng: np.random.Generator, count: int, dimension: int, radius: float) -> np.ndarray:
    directions = rng.normal(size=(count, dimension))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(0.0, 1.0, size=count) ** (1.0 / dimension)
    return directions * radii[:, None]


WEIGHT_KINDS = ("dyadic", "random-dyadic", "uniform")


def _weights(rng: np.random.Generator, count: int, kind: str) -> Tuple[float, ...]:
    """
    dyadic: count nearly equal multiples of 2^-E that sum to 1 exactly in binary floating point.
    random-dyadic: multinomial multiples of 2^-E, at least 2^-E each.
    uniform: 1/count, whose float sum may be off by an ulp.
    """
    if kind == "dyadic":
        exponent = 52 + int(math.ceil(math.log2(count)))
        units = 2 ** exponent
        share, extra = divmod(units, count)
        return tuple(math.ldexp(share + (1 if k < extra else 0), -exponent) for k in range(count))
    if kind == "random-dyadic":
        exponent = max(10, int(math.ceil(math.log2(count))) + 4)
        units = 2 ** exponent
        counts = 1 + rng.multinomial(units - count, np.full(count, 1.0 / count))
        return tuple(float(c) / units for c in counts)
    if kind == "uniform":
        return tuple([1.0 / count] * count)
    raise ValueError(f"Unknown weight kind {kind!r}; expected one of {WEIGHT_KINDS}")


def generate_instance(seed: int, n: int, sizes: Tuple[int, int], profile: str = "slices",
                      slab_time: float = 3.0, radius: float = 1.0, weights: str = "dyadic",
                      marginal_gap: Optional[float] = None) -> Tuple[MinkowskiSpacetime, DiscreteMeasure,
                                                                      DiscreteMeasure]:
    """
    Seeded instance on Minkowski R^{1+n} with tau = 2t.

    slices: mu on {t = 0, |x| < R}, nu on {t = T, |x| < R}; T > 2R puts every pair in I+.
    marginal: nu shifted forward by a gap <= R from a copy of the source points, so that
    some pairs are spacelike; sources 0 and 1 sit at opposite ends of the first axis.
    infeasible: nu on {t = -T}, entirely outside J+ of the sources.
    """
    m_mu, m_nu = sizes
    if m_mu < 1 or m_nu < 1:
        raise ValueError(f"Sizes must be at least 1, got {sizes}")
    if profile not in PROFILES:
        raise ValueError(f"Unknown profile {profile!r}; expected one of {PROFILES}")
    rng = np.random.default_rng(seed)
    model = MinkowskiSpacetime(n)
    sources = _sample_ball(rng, m_mu, n, radius)
    if profile == "slices":
        if slab_time <= 2.0 * radius:
            raise ValueError(f"Slab time {slab_time} must exceed twice the radius {radius}")
        targets = np.column_stack((np.full(m_nu, slab_time), _sample_ball(rng, m_nu, n, radius)))
    elif profile == "marginal":
        gap = radius if marginal_gap is None else marginal_gap
        if m_mu >= 2:
            sources[0] = 0.0
            sources[1] = 0.0
            sources[0, 0] = -0.9 * radius
            sources[1, 0] = 0.9 * radius
        anchors = sources[np.arange(m_nu) % m_mu]
        jitter = _sample_ball(rng, m_nu, n, 0.25 * gap)
        targets = np.column_stack((np.full(m_nu, gap), anchors + jitter))
    else:
        targets = np.column_stack((np.full(m_nu, -slab_time), _sample_ball(rng, m_nu, n, radius)))
    source_events = [Event((0.0,) + tuple(p)) for p in sources]
    target_events = [Event(tuple(p)) for p in targets]
    mu = DiscreteMeasure(tuple(source_events), _weights(rng, m_mu, weights))
    nu = DiscreteMeasure(tuple(target_events), _weights(rng, m_nu, weights))
    logger.debug(f"Generated {profile} instance (seed {seed}, n = {n}, sizes {sizes})")
    return model, mu, nu
