from typing import Tuple

Coords = Tuple[float, ...]
IndexPair = Tuple[int, int]
Triple = Tuple[int, int, float]
