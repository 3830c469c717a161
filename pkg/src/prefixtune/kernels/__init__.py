"""CPU reference implementations of the prefix circuits and their oracles."""

from .fft import default_plan, fft_transform
from .oracles import oracle_dft, oracle_prefix, oracle_thomas
from .problem import ALGORITHMS, RADICES, ProblemInstance, family, is_pow2, log2i, steps_count
from .scan import scan_inclusive, scan_kogge_stone, scan_ladner_fischer
from .tridiag import TridiagonalSystem, solve_tridiagonal

__all__ = [
    "ALGORITHMS", "RADICES", "ProblemInstance", "TridiagonalSystem",
    "default_plan", "family", "fft_transform", "is_pow2", "log2i",
    "oracle_dft", "oracle_prefix", "oracle_thomas",
    "scan_inclusive", "scan_kogge_stone", "scan_ladner_fischer",
    "solve_tridiagonal", "steps_count",
]
