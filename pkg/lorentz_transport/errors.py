from typing import Any, Optional, Sequence, Tuple


class LorentzTransportError(Exception):
    pass


class DimensionMismatchError(LorentzTransportError):
    def __init__(self, expected: int, actual: int, what: str = "vector"):
        super().__init__(f"Expected {what} of dimension {expected}, got {actual}.")
        self.expected = expected
        self.actual = actual


class InvalidMeasureError(LorentzTransportError):
    pass


class ConfigError(LorentzTransportError):
    pass


class NotCausallyRelatedError(LorentzTransportError):
    def __init__(self, message: str, x: Optional[Any] = None, y: Optional[Any] = None):
        super().__init__(message)
        self.x = x
        self.y = y


class NotChronologicalError(LorentzTransportError):
    def __init__(self, x: Any, y: Any, causal_class: Any):
        super().__init__(f"Pair ({x}, {y}) is {causal_class.name}; the derivative of c2 exists only on I+.")
        self.x = x
        self.y = y
        self.causal_class = causal_class


class NullOrSpacelikeVelocityError(LorentzTransportError):
    def __init__(self, velocity: Any, g_norm: float):
        super().__init__(f"Velocity {velocity} is not strictly timelike (|v|_g = {g_norm:.3e}).")
        self.velocity = velocity
        self.g_norm = g_norm


class FlowDomainExceededError(LorentzTransportError):
    pass


class PartialMapError(LorentzTransportError):
    def __init__(self, missing: Sequence[int]):
        super().__init__(f"Assignment undefined on support points {list(missing)}.")
        self.missing = tuple(missing)


class MonotonicityViolatedError(LorentzTransportError):
    def __init__(self, cycle: Sequence[int], gain: float):
        super().__init__(
            f"Support is not c2-cyclically monotone: cycle through support pairs {list(cycle)} gains {gain:.6g}.")
        self.cycle = tuple(cycle)
        self.gain = gain


class AnchorNotInSupportError(LorentzTransportError):
    def __init__(self, anchor: Tuple[int, int]):
        super().__init__(f"Anchor pair {anchor} is not a support pair.")
        self.anchor = anchor


class NonIntegrablePotentialError(LorentzTransportError):
    def __init__(self, side: str, indices: Sequence[int]):
        super().__init__(f"Potential on the {side} side is infinite at mass-carrying points {list(indices)}.")
        self.side = side
        self.indices = tuple(indices)


class NonFiniteNeighborhoodError(LorentzTransportError):
    pass


class NoTimelikeSolutionError(LorentzTransportError):
    def __init__(self, covector: Any, reason: str):
        super().__init__(f"No strictly timelike velocity with dL2/dv = {covector}: {reason}.")
        self.covector = covector
        self.reason = reason


class AmbiguousArgmaxError(LorentzTransportError):
    def __init__(self, source_index: int, targets: Sequence[int]):
        super().__init__(f"Argmax at source point {source_index} is tied between targets {list(targets)}.")
        self.source_index = source_index
        self.targets = tuple(targets)


class RegionLeavesDomainError(LorentzTransportError):
    def __init__(self, nodes: int, total: int):
        super().__init__(f"{nodes} of {total} grid nodes have a non-finite extended potential.")
        self.nodes = nodes
        self.total = total
