from abc import ABC, abstractmethod
from typing import Any, Dict


class ArtifactComponent(ABC):
    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        pass

    @classmethod
    @abstractmethod
    def read_from_dict(cls, data: Dict[str, Any]) -> "ArtifactComponent":
        pass
