"""Problem instances and step-count arithmetic for the prefix circuits."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import SizeError, UnsupportedRadixError, ValidationError

ALGORITHMS = ("scan_lf", "scan_ks", "ts_cr", "ts_pcr", "ts_wm", "ts_lf", "fft")

# radices each pattern can be built with
RADICES = {
    "scan_lf": (2,),
    "scan_ks": (2,),
    "ts_cr": (2,),
    "ts_pcr": (2,),
    "ts_lf": (2,),
    "ts_wm": (2, 4, 8),
    "fft": (2, 4, 8, 16),
}


def is_pow2(n: int) -> bool:
    return isinstance(n, int) and n > 0 and n & (n - 1) == 0


def log2i(n: int) -> int:
    if not is_pow2(n):
        raise SizeError(f"{n} is not a power of two")
    return n.bit_length() - 1


def family(algorithm: str) -> str:
    """'ts', 'scan' or 'fft'."""
    if algorithm not in ALGORITHMS:
        raise ValidationError(f"unknown algorithm {algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
    return algorithm.split("_")[0]


@dataclass(frozen=True)
class ProblemInstance:
    algorithm: str
    n_size: int
    batches: int = 1
    radix: int = 2

    def __post_init__(self) -> None:
        family(self.algorithm)
        if not is_pow2(self.n_size) or self.n_size < 2:
            raise SizeError(f"problem size must be a power of two >= 2, got {self.n_size}")
        if self.batches < 1:
            raise ValidationError("batches must be >= 1")
        if self.radix not in RADICES[self.algorithm]:
            raise UnsupportedRadixError(
                f"radix {self.radix} is not supported by {self.algorithm} "
                f"(allowed: {RADICES[self.algorithm]})")

    @property
    def n_bits(self) -> int:
        return log2i(self.n_size)


def stages(bits: int, radix: int) -> int:
    """Radix-`radix` stages needed to cover 2**bits elements (mixed radix when uneven)."""
    return math.ceil(bits / log2i(radix))


def steps_count(instance: ProblemInstance) -> int:
    n = instance.n_bits
    if instance.algorithm == "ts_cr":
        # forward reduction plus back substitution share the middle level
        return 2 * n - 1
    return stages(n, instance.radix)
