"""Inclusive scan through the Ladner-Fischer and Kogge-Stone circuits."""

from __future__ import annotations

import numpy as np

from ..errors import SizeError, ValidationError
from .problem import is_pow2


def _levels(n: int) -> int:
    return n.bit_length() - 1


def scan_ladner_fischer(values) -> np.ndarray:
    x = np.array(values, copy=True)
    n = len(x)
    if not is_pow2(n):
        raise SizeError(f"scan length must be a power of two, got {n}")
    idx = np.arange(n)
    for level in range(_levels(n)):
        half = 1 << level
        # upper half of each 2*half block takes the last value of its lower half
        upper = idx[(idx & half) != 0]
        x[upper] += x[(upper & ~(half - 1)) - 1]
    return x


def scan_kogge_stone(values) -> np.ndarray:
    x = np.array(values, copy=True)
    n = len(x)
    if not is_pow2(n):
        raise SizeError(f"scan length must be a power of two, got {n}")
    for level in range(_levels(n)):
        d = 1 << level
        shifted = x[:-d].copy()
        x[d:] += shifted
    return x


def scan_inclusive(values, pattern: str = "LF") -> np.ndarray:
    pattern = pattern.upper()
    if pattern == "LF":
        return scan_ladner_fischer(values)
    if pattern == "KS":
        return scan_kogge_stone(values)
    raise ValidationError(f"unknown scan pattern {pattern!r}")
