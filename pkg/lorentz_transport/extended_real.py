"""
Extended reals and the sum conventions used with infinite costs.

The c2-transform, the c2-convexification and the potential gap psi(y) - phi(x) each
resolve an undefined infinite sum in a different direction. Every rule is a separate
total function here so that no caller ever relies on IEEE saturation.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Union


class Kind(Enum):
    MINUS_INF = -1
    FINITE = 0
    PLUS_INF = 1


@dataclass(frozen=True, eq=False)
class ExtReal:
    kind: Kind
    value: float = 0.0

    def __post_init__(self):
        if self.kind is Kind.FINITE:
            if not math.isfinite(self.value):
                raise ValueError(f"Finite extended real needs a finite value, got {self.value}")
        elif self.value != 0.0:
            object.__setattr__(self, "value", 0.0)

    @classmethod
    def finite(cls, value: float) -> "ExtReal":
        return cls(Kind.FINITE, float(value))

    @classmethod
    def plus_inf(cls) -> "ExtReal":
        return cls(Kind.PLUS_INF)

    @classmethod
    def minus_inf(cls) -> "ExtReal":
        return cls(Kind.MINUS_INF)

    @classmethod
    def from_float(cls, value: float) -> "ExtReal":
        if value == math.inf:
            return cls.plus_inf()
        if value == -math.inf:
            return cls.minus_inf()
        return cls.finite(value)

    @property
    def is_finite(self) -> bool:
        return self.kind is Kind.FINITE

    @property
    def is_plus_inf(self) -> bool:
        return self.kind is Kind.PLUS_INF

    @property
    def is_minus_inf(self) -> bool:
        return self.kind is Kind.MINUS_INF

    def __float__(self) -> float:
        if self.kind is Kind.PLUS_INF:
            return math.inf
        if self.kind is Kind.MINUS_INF:
            return -math.inf
        return self.value

    def __neg__(self) -> "ExtReal":
        if self.kind is Kind.FINITE:
            return ExtReal.finite(-self.value)
        return ExtReal(Kind(-self.kind.value))

    def _key(self):
        return self.kind.value, self.value

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = ExtReal.from_float(float(other))
        if not isinstance(other, ExtReal):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(float(self))

    def __lt__(self, other: "ExtReal") -> bool:
        return self._key() < _coerce(other)._key()

    def __le__(self, other: "ExtReal") -> bool:
        return self._key() <= _coerce(other)._key()

    def __gt__(self, other: "ExtReal") -> bool:
        return self._key() > _coerce(other)._key()

    def __ge__(self, other: "ExtReal") -> bool:
        return self._key() >= _coerce(other)._key()

    def shifted(self, amount: float) -> "ExtReal":
        if self.kind is Kind.FINITE:
            return ExtReal.finite(self.value + amount)
        return self

    def __str__(self):
        if self.kind is Kind.PLUS_INF:
            return "+inf"
        if self.kind is Kind.MINUS_INF:
            return "-inf"
        return repr(self.value)

    __repr__ = __str__


Number = Union[ExtReal, float, int]

PLUS_INF = ExtReal.plus_inf()
MINUS_INF = ExtReal.minus_inf()
ZERO = ExtReal.finite(0.0)


def _coerce(a: Number) -> ExtReal:
    if isinstance(a, ExtReal):
        return a
    return ExtReal.from_float(float(a))


def _finite_sum(a: ExtReal, b: ExtReal) -> ExtReal:
    return ExtReal.finite(a.value + b.value)


def add_transform(cost: Number, phi: Number) -> ExtReal:
    """c + phi inside the c2-transform infimum; +inf + (-inf) = +inf."""
    cost, phi = _coerce(cost), _coerce(phi)
    if cost.is_plus_inf or phi.is_plus_inf:
        return PLUS_INF
    if cost.is_minus_inf or phi.is_minus_inf:
        return MINUS_INF
    return _finite_sum(cost, phi)


def sub_convexify(psi: Number, cost: Number) -> ExtReal:
    """psi - c inside the c2-convexification supremum; inf - inf = -inf."""
    psi, cost = _coerce(psi), _coerce(cost)
    if psi.is_minus_inf or cost.is_plus_inf:
        return MINUS_INF
    if psi.is_plus_inf or cost.is_minus_inf:
        return PLUS_INF
    return ExtReal.finite(psi.value - cost.value)


def potential_gap(psi: Number, phi: Number) -> ExtReal:
    """psi(y) - phi(x); two infinite operands give -inf whatever their signs."""
    psi, phi = _coerce(psi), _coerce(phi)
    if not psi.is_finite and not phi.is_finite:
        return MINUS_INF
    if psi.is_plus_inf or phi.is_minus_inf:
        return PLUS_INF
    if psi.is_minus_inf or phi.is_plus_inf:
        return MINUS_INF
    return ExtReal.finite(psi.value - phi.value)


def psi_minus_cost(psi: Number, cost: Number) -> ExtReal:
    """psi(y) - c(x, y); psi = +inf against c = +inf gives -inf."""
    return sub_convexify(psi, cost)


def cost_minus_phi(cost: Number, phi: Number) -> ExtReal:
    """c(x, y) - phi(x); c = +inf against phi = +inf gives +inf."""
    cost, phi = _coerce(cost), _coerce(phi)
    if cost.is_plus_inf:
        return PLUS_INF
    if cost.is_minus_inf:
        return MINUS_INF
    if phi.is_plus_inf:
        return MINUS_INF
    if phi.is_minus_inf:
        return PLUS_INF
    return ExtReal.finite(cost.value - phi.value)


def ext_max(values: Iterable[ExtReal]) -> ExtReal:
    """Supremum of a finite family; the empty supremum is -inf."""
    result = MINUS_INF
    for v in values:
        if v > result:
            result = v
    return result


def ext_min(values: Iterable[ExtReal]) -> ExtReal:
    """Infimum of a finite family; the empty infimum is +inf."""
    result = PLUS_INF
    for v in values:
        if v < result:
            result = v
    return result


def le_with_tolerance(a: ExtReal, b: ExtReal, tol: float) -> bool:
    if a.is_finite and b.is_finite:
        return a.value <= b.value + tol
    return a <= b
