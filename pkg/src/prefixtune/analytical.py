"""Occupancy-driven tuning guideline: picks a configuration without running anything.

The guideline, applied to the valid space of one (algorithm, N):

1. Both maxima: full warp occupancy and the maximum number of blocks per SM.
2. Otherwise the most blocks per SM among configurations keeping warp
   occupancy in [60%, 100%].
3. Otherwise the highest warp occupancy, preferring larger P.
4. When the pattern allows a larger radix, take it even at the cost of blocks.

Three premises narrow the pool before the rules run.  Warp shuffles replace
shared-memory exchanges whenever a shuffle configuration reaches the 60% band.
A radix-capable pattern moves one radix step up from binary (r=4) provided
that step still keeps 25% occupancy.  Extra elements per thread are only
taken when they cost registers the SM can spare at full occupancy, unless no
such configuration is left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .arch import ArchDescriptor, OccupancyReport
from .errors import NoFeasibleConfigError, SizeError
from .kernels.problem import RADICES, family, is_pow2, log2i
from .space import (
    SIZE_RANGE,
    KernelConfig,
    MultiKernelPlan,
    config_occupancy,
    enumerate_space,
    estimate_registers,
    large_fft_max_s,
    radix_bits,
)

BOTH_MAX = "both_max"
BLOCKS_IN_BAND = "blocks_with_60pct_floor"
MAX_OCCUPANCY = "max_occupancy_tiebreak_P"
RADIX_PROMOTION = "radix_promotion"

OCCUPANCY_BAND = 0.60
PROMOTION_FLOOR = 0.25
LARGE_FFT_RADIX = 8


@dataclass(frozen=True)
class GuidelineTrace:
    chosen: KernelConfig
    rule_fired: str
    occupancy: OccupancyReport
    rejected_alternatives: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "chosen": self.chosen.to_dict(),
            "rule_fired": self.rule_fired,
            "occupancy": self.occupancy.to_dict(),
            "rejected_alternatives": [
                {"config": c.to_dict(), "reason": reason} for c, reason in self.rejected_alternatives
            ],
        }


def _tiebreak(c: KernelConfig) -> tuple:
    return (not c.shuffle, -c.radix, -c.p_per_thread, c.l_threads, c.s_elems)


class _Guideline:
    def __init__(self, algorithm: str, arch: ArchDescriptor):
        self.algorithm = algorithm
        self.arch = arch
        self.rejected: list[tuple[KernelConfig, str]] = []

    def occ(self, c: KernelConfig) -> OccupancyReport:
        return config_occupancy(self.algorithm, c, self.arch)

    def reject(self, configs: Iterable[KernelConfig], reason: str) -> None:
        self.rejected.extend((c, reason) for c in configs)

    def lean_registers(self, pool: list[KernelConfig]) -> list[KernelConfig]:
        budget = self.arch.registers_per_sm // (self.arch.max_warps_per_sm * self.arch.warp_size)
        lean = [c for c in pool if estimate_registers(self.algorithm, c.p_per_thread) <= budget]
        return lean or pool

    def rules(self, pool: list[KernelConfig]) -> tuple[KernelConfig, str]:
        """Rules 1-3 on `pool`; returns the pick and the rule that decided it."""
        arch = self.arch
        both = [c for c in pool
                if self.occ(c).active_warps == arch.max_warps_per_sm
                and self.occ(c).active_blocks == arch.max_blocks_per_sm]
        if both:
            return min(both, key=_tiebreak), BOTH_MAX
        band = [c for c in pool if self.occ(c).warp_occupancy >= OCCUPANCY_BAND]
        if band:
            best = min(band, key=lambda c: (-self.occ(c).active_blocks,
                                            -self.occ(c).warp_occupancy, _tiebreak(c)))
            return best, BLOCKS_IN_BAND
        best = min(pool, key=lambda c: (-self.occ(c).warp_occupancy, -c.p_per_thread, _tiebreak(c)))
        return best, MAX_OCCUPANCY

    def select(self, pool: list[KernelConfig]) -> tuple[KernelConfig, str]:
        lean = self.lean_registers(pool)
        if len(lean) < len(pool):
            self.reject([c for c in pool if c not in lean], "register use would cost occupancy")
        return self.rules(lean)


def tune_analytical(algorithm: str, n: int, arch: ArchDescriptor,
                    candidates: Sequence[KernelConfig] | None = None) -> GuidelineTrace:
    """Apply the guideline to every valid configuration of (algorithm, n)."""
    fam = family(algorithm)
    lo, hi = SIZE_RANGE[fam]
    if not is_pow2(n) or not lo <= n <= hi:
        raise SizeError(f"N={n} is outside the single-kernel range {lo}..{hi} for {algorithm}")
    pool = list(candidates) if candidates is not None else list(enumerate_space(algorithm, n, arch))
    if not pool:
        raise NoFeasibleConfigError(f"no valid configuration for {algorithm} N={n}")

    g = _Guideline(algorithm, arch)

    shuffled = [c for c in pool if c.shuffle]
    if (shuffled and len(shuffled) < len(pool)
            and any(g.occ(c).warp_occupancy >= OCCUPANCY_BAND for c in shuffled)):
        g.reject([c for c in pool if not c.shuffle], "shared-memory exchange where a shuffle suffices")
        pool = shuffled

    radices = RADICES[algorithm]
    if len(radices) > 1:
        target = 2 * min(radices)
        promoted = [c for c in pool if c.radix == target
                    and g.occ(c).warp_occupancy >= PROMOTION_FLOOR and g.occ(c).active_blocks >= 1]
        if promoted:
            base, _ = _Guideline(algorithm, arch).select(pool)
            g.reject([c for c in pool if c.radix != target], f"radix promoted to {target}")
            chosen, rule = g.select(promoted)
            if chosen.radix != base.radix:
                rule = RADIX_PROMOTION
            return _trace(g, chosen, rule)

    chosen, rule = g.select(pool)
    return _trace(g, chosen, rule)


def _trace(g: _Guideline, chosen: KernelConfig, rule: str) -> GuidelineTrace:
    rejected = [(c, r) for c, r in g.rejected if c != chosen]
    return GuidelineTrace(chosen, rule, g.occ(chosen), tuple(rejected))


def plan_large_fft(n: int, arch: ArchDescriptor, radix: int = LARGE_FFT_RADIX) -> MultiKernelPlan:
    """Multi-kernel FFT plan using the fewest launches at the largest shared-memory tile.

    Each kernel covers the whole radix stages that fit in its tile, so the
    kernel count is ceil(log2 N / bits per kernel).
    """
    if not is_pow2(n) or n < 2:
        raise SizeError(f"N={n} must be a power of two")
    if n <= SIZE_RANGE["fft"][1]:
        trace = tune_analytical("fft", max(n, SIZE_RANGE["fft"][0]), arch)
        return MultiKernelPlan((trace.chosen,))

    s = large_fft_max_s(arch)
    bits = log2i(n)
    per_kernel = radix_bits(s, radix)
    m = math.ceil(bits / per_kernel)
    config = KernelConfig(s, radix, s // radix, radix, False)
    return MultiKernelPlan((config,) * m)
