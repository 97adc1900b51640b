from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Tuple

from .artifact_component import ArtifactComponent

# Named results a check instantiates; every failure points at one of them.
REFERENCES = {
    "optimal-coupling": "an optimal coupling exists and charges only causally related pairs",
    "cyclical-monotonicity": "optimal couplings are concentrated on c2-cyclically monotone sets",
    "kantorovich-duality": "the optimal cost equals the dual value of a pi-solution",
    "pi-solution": "psi - phi <= c2 everywhere, with equality on the optimal support",
    "pi-solution-finiteness": "a pi-solution is real-valued where the measures carry mass",
    "chain-construction": "the chain supremum over a monotone support is finite and anchored",
    "transport-map": "the optimal coupling is induced by a map",
    "twist-condition": "dc2/dx (x, .) is injective on the chronological future of x",
    "local-semiconvexity": "the extended potential is locally semiconvex",
    "near-optimal-compactness": "near-optimal targets of a compact source set stay in a compact set",
    "light-cone-gap": "the extended potential is not attained near the light cone",
}


class CheckFailure(NamedTuple):
    module: str
    property: str
    indices: Tuple[int, ...]
    message: str
    reference: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"module": self.module, "property": self.property, "indices": list(self.indices),
                "message": self.message, "reference": self.reference}


@dataclass
class CheckReport(ArtifactComponent):
    """
    Outcome of one verification. Failures are violated conclusions, hypothesis flags are
    violated preconditions, findings are observations that contradict only an almost-everywhere
    statement and are surfaced without failing the check.
    """
    name: str
    failures: List[CheckFailure] = field(default_factory=list)
    hypothesis_flags: List[str] = field(default_factory=list)
    findings: List[str] = field(default_factory=list)
    values: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def flagged(self) -> bool:
        return bool(self.hypothesis_flags)

    def fail(self, module: str, prop: str, indices, message: str, reference: str):
        if reference not in REFERENCES:
            raise ValueError(f"Unknown reference {reference!r}; expected one of {sorted(REFERENCES)}")
        self.failures.append(CheckFailure(module, prop, tuple(int(i) for i in indices), message, reference))

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "failures": [f.to_dict() for f in self.failures],
                "hypothesis_flags": list(self.hypothesis_flags), "findings": list(self.findings),
                "values": dict(self.values)}

    @classmethod
    def read_from_dict(cls, data: Dict[str, Any]) -> "CheckReport":
        failures = [CheckFailure(f["module"], f["property"], tuple(f["indices"]), f["message"], f.get("reference", ""))
                    for f in data.get("failures", [])]
        return cls(data["name"], failures, list(data.get("hypothesis_flags", [])), list(data.get("findings", [])),
                   dict(data.get("values", {})))
