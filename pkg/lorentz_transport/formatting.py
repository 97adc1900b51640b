import math
from typing import Union

from .extended_real import ExtReal

FLOAT_FORMAT = ".17g"


def format_float(value: float) -> str:
    if value == math.inf:
        return "inf"
    if value == -math.inf:
        return "-inf"
    return format(value, FLOAT_FORMAT)


def format_ext(value: ExtReal) -> str:
    if value.is_plus_inf:
        return "+inf"
    if value.is_minus_inf:
        return "-inf"
    return format(value.value, FLOAT_FORMAT)


def ext_to_json(value: ExtReal) -> Union[float, str]:
    if value.is_finite:
        return value.value
    return "+inf" if value.is_plus_inf else "-inf"


def parse_ext(text: Union[str, float, int]) -> ExtReal:
    if isinstance(text, (float, int)):
        return ExtReal.from_float(float(text))
    text = text.strip()
    if text in ("inf", "+inf"):
        return ExtReal.plus_inf()
    if text == "-inf":
        return ExtReal.minus_inf()
    return ExtReal.finite(float(text))
