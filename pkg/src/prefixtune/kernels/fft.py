"""Mixed-radix Stockham FFT (self-sorting, no bit reversal)."""

from __future__ import annotations

from functools import lru_cache
from math import prod
from typing import Sequence

import numpy as np

from ..errors import PlanError, SizeError, ValidationError
from .problem import is_pow2

FFT_RADICES = (2, 4, 8, 16)


@lru_cache(maxsize=None)
def _dft_matrix(radix: int) -> np.ndarray:
    k = np.arange(radix)
    return np.exp(-2j * np.pi * np.outer(k, k) / radix)


def default_plan(n: int, radix: int = 4) -> list[int]:
    """Radix `radix` stages, with a smaller first stage when `radix` does not divide n evenly."""
    plan = []
    remaining = n
    while remaining > 1:
        r = radix
        while remaining % r:
            r //= 2
        plan.append(r)
        remaining //= r
    return plan[::-1]


def fft_transform(signal, direction: str = "forward", radix_plan: Sequence[int] | None = None,
                  dtype=np.complex64) -> np.ndarray:
    x = np.asarray(signal).astype(dtype)
    n = len(x)
    if not is_pow2(n):
        raise SizeError(f"FFT length must be a power of two, got {n}")
    if direction not in ("forward", "inverse"):
        raise ValidationError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    plan = list(radix_plan) if radix_plan is not None else default_plan(n)
    if any(r not in FFT_RADICES for r in plan):
        raise PlanError(f"radices must be drawn from {FFT_RADICES}, got {plan}")
    if prod(plan) != n:
        raise PlanError(f"radix plan {plan} multiplies to {prod(plan)}, expected {n}")

    if direction == "inverse":
        x = np.conj(x)
    span = 1  # product of the radices already applied
    for radix in plan:
        cols = n // radix
        j = np.arange(cols)
        k = j % span
        # v[r, j] = x[j + r*cols] scaled by the stage twiddle
        v = x.reshape(radix, cols)
        tw = np.exp(-2j * np.pi * np.outer(np.arange(radix), k) / (span * radix)).astype(dtype)
        v = _dft_matrix(radix).astype(dtype) @ (v * tw)
        out = np.empty_like(x)
        dest = (j // span) * span * radix + k
        out[dest[None, :] + span * np.arange(radix)[:, None]] = v
        x = out
        span *= radix
    if direction == "inverse":
        x = np.conj(x) / n
    return x
