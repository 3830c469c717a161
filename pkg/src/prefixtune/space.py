"""Tuning parameter spaces: which (S, P, L, r, shuffle) tuples each kernel accepts."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Iterator, Union

import numpy as np

from .arch import ArchDescriptor, KernelResourceUsage, OccupancyReport, check_usage, compute_occupancy
from .errors import SizeError, ValidationError
from .kernels.problem import RADICES, family, is_pow2, log2i

# elements per thread the kernels are compiled for
P_VALUES = {"ts": (2, 4, 8), "scan": (2, 4, 8, 16, 32), "fft": (2, 4, 8, 16)}

REGISTERS = {
    "ts": {2: 32, 4: 40, 8: 64},
    "scan": {2: 32, 4: 32, 8: 40, 16: 40, 32: 40},
    "fft": {2: 32, 4: 40, 8: 48, 16: 64},
}

SIZE_RANGE = {"ts": (8, 1024), "scan": (8, 4096), "fft": (8, 4096)}
LARGE_FFT_RANGE = (8192, 8388608)

# shared slots one scan problem needs for its per-warp partials
SCAN_SLOTS_PER_PROBLEM = 32
# above this many bytes the FFT kernel swaps real and imaginary halves through shared memory
FFT_MULTIPLEX_BYTES = 16384


def element_bytes(algorithm: str) -> int:
    if algorithm == "ts_lf":
        return 32  # two equations of four floats
    return {"ts": 16, "scan": 4, "fft": 8}[family(algorithm)]


def estimate_registers(algorithm: str, p: int) -> int:
    table = REGISTERS[family(algorithm)]
    if p not in table:
        raise ValidationError(f"P={p} is not available for {algorithm} (allowed: {sorted(table)})")
    return table[p]


@dataclass(frozen=True, order=True)
class KernelConfig:
    s_elems: int
    p_per_thread: int
    l_threads: int
    radix: int = 2
    shuffle: bool = False

    @property
    def spl(self) -> tuple[int, int, int]:
        return (self.s_elems, self.p_per_thread, self.l_threads)

    def sort_key(self) -> tuple:
        return (self.radix, self.p_per_thread, self.l_threads, self.s_elems, self.shuffle)

    def to_dict(self) -> dict[str, Any]:
        return {"S": self.s_elems, "P": self.p_per_thread, "L": self.l_threads,
                "r": self.radix, "shuffle": self.shuffle}

    @classmethod
    def from_dict(cls, doc: dict) -> "KernelConfig":
        return cls(int(doc["S"]), int(doc["P"]), int(doc["L"]), int(doc.get("r", 2)),
                   bool(doc.get("shuffle", False)))

    def __str__(self) -> str:
        sh = ", shuffle" if self.shuffle else ""
        return f"({self.s_elems},{self.p_per_thread},{self.l_threads}) r={self.radix}{sh}"


@dataclass(frozen=True)
class MultiKernelPlan:
    """Sequence of kernel launches for an FFT too large for one block's shared memory."""

    kernel_configs: tuple[KernelConfig, ...]

    @property
    def kernel_count(self) -> int:
        return len(self.kernel_configs)

    @property
    def s_exponent(self) -> int:
        return log2i(self.kernel_configs[0].s_elems)

    def sort_key(self) -> tuple:
        return (self.kernel_count,) + tuple(k.sort_key() for k in self.kernel_configs)

    def to_dict(self) -> dict[str, Any]:
        return {"kernel_count": self.kernel_count,
                "kernels": [k.to_dict() for k in self.kernel_configs]}

    @classmethod
    def from_dict(cls, doc: dict) -> "MultiKernelPlan":
        return cls(tuple(KernelConfig.from_dict(k) for k in doc["kernels"]))

    def __str__(self) -> str:
        return " + ".join(str(k) for k in self.kernel_configs)


Candidate = Union[KernelConfig, MultiKernelPlan]


def radix_bits(s_elems: int, radix: int) -> int:
    """Bits of the problem one kernel resolves: whole radix stages that fit in S."""
    rb = log2i(radix)
    return (log2i(s_elems) // rb) * rb


def shared_bytes(algorithm: str, config: KernelConfig) -> int:
    if config.s_elems == 0:
        return 0
    raw = config.s_elems * element_bytes(algorithm)
    if family(algorithm) == "fft" and raw > FFT_MULTIPLEX_BYTES:
        return raw // 2
    return raw


def resource_usage(algorithm: str, config: KernelConfig) -> KernelResourceUsage:
    return KernelResourceUsage(
        threads_per_block=config.l_threads,
        registers_per_thread=estimate_registers(algorithm, config.p_per_thread),
        shared_mem_per_block=shared_bytes(algorithm, config),
    )


@lru_cache(maxsize=65536)
def config_occupancy(algorithm: str, config: KernelConfig, arch: ArchDescriptor) -> OccupancyReport:
    return compute_occupancy(arch, resource_usage(algorithm, config))


def check_size(algorithm: str, n: int) -> None:
    lo, hi = SIZE_RANGE[family(algorithm)]
    if family(algorithm) == "fft":
        hi = LARGE_FFT_RANGE[1]
    if not is_pow2(n) or not lo <= n <= hi:
        raise SizeError(f"N={n} is outside the supported power-of-two range {lo}..{hi} for {algorithm}")


def is_large(algorithm: str, n: int) -> bool:
    return family(algorithm) == "fft" and n > SIZE_RANGE["fft"][1]


def validate(config: KernelConfig, algorithm: str, n: int, arch: ArchDescriptor) -> str | None:
    """Reason `config` cannot run (algorithm, n) on `arch`, or None when it can."""
    fam = family(algorithm)
    lo, hi = SIZE_RANGE[fam]
    if not is_pow2(n) or n < lo:
        return f"N={n} is not a supported size for {algorithm}"
    if n > hi:
        return f"N={n} exceeds shared capacity of a single kernel (max {hi})"

    s, p, l, r = config.s_elems, config.p_per_thread, config.l_threads, config.radix
    if not (is_pow2(l) and arch.warp_size <= l <= arch.max_threads_per_block):
        return f"L={l} must be a power of two in [{arch.warp_size}, {arch.max_threads_per_block}]"
    if p not in P_VALUES[fam]:
        return f"P={p} not in {P_VALUES[fam]} for {algorithm}"
    if p > n:
        return f"P={p} exceeds the problem size"
    if s < 0 or (s and not is_pow2(s)):
        return f"S={s} must be zero or a power of two"

    if algorithm in ("ts_cr", "ts_pcr", "ts_lf", "scan_lf", "scan_ks"):
        if r != 2:
            return f"radix fixed at 2 for {algorithm.split('_')[1].upper()}"
    elif r not in RADICES[algorithm]:
        return f"radix {r} not in {RADICES[algorithm]} for {algorithm}"
    elif r != p:
        return f"radix must equal P for {algorithm} (one node operator per thread)"

    work = p * l
    if fam == "scan":
        if not config.shuffle:
            return "scan kernels always use shuffle"
        if work < n or work % n:
            return f"P*L={work} must hold a whole number of problems of size {n}"
        if s != SCAN_SLOTS_PER_PROBLEM * (work // n):
            return f"S must be {SCAN_SLOTS_PER_PROBLEM} slots per packed problem"
    elif config.shuffle:
        if fam == "fft":
            return "shuffle is not available for FFT"
        if n // p > arch.warp_size:
            return f"shuffle needs N/P <= {arch.warp_size}"
        if s != 0:
            return "shuffle requires S=0"
    else:
        if s != work:
            return "S must equal P*L without shuffle"
        if s < n or s % n:
            return f"S={s} must hold a whole number of problems of size {n}"

    smem = shared_bytes(algorithm, config)
    if smem > arch.max_shared_mem_per_block:
        return f"S needs {smem} bytes, over the {arch.max_shared_mem_per_block}-byte block budget"
    usage = resource_usage(algorithm, config)
    problem = check_usage(arch, usage)
    if problem:
        return problem
    if compute_occupancy(arch, usage).active_blocks < 1:
        return "no block fits on an SM"
    return None


def is_valid(config: Candidate, algorithm: str, n: int, arch: ArchDescriptor) -> tuple[bool, str]:
    if isinstance(config, MultiKernelPlan):
        reason = validate_plan(config, n, arch)
    else:
        reason = validate(config, algorithm, n, arch)
    return reason is None, reason or "ok"


# -- large FFT ----------------------------------------------------------------

def large_fft_max_s(arch: ArchDescriptor) -> int:
    """Largest power-of-two S whose complex data fits without real/imaginary multiplexing."""
    budget = min(FFT_MULTIPLEX_BYTES, arch.max_shared_mem_per_block)
    return 1 << (budget // element_bytes("fft")).bit_length() - 1


LARGE_FFT_MIN_S = 1024


def validate_plan(plan: MultiKernelPlan, n: int, arch: ArchDescriptor) -> str | None:
    if not is_pow2(n) or not LARGE_FFT_RANGE[0] <= n <= LARGE_FFT_RANGE[1]:
        return f"N={n} is outside the multi-kernel FFT range {LARGE_FFT_RANGE}"
    if plan.kernel_count < 2:
        return "a multi-kernel plan needs at least two kernels"
    s_max = large_fft_max_s(arch)
    bits = log2i(n)
    covered = 0
    for i, k in enumerate(plan.kernel_configs):
        if covered >= bits:
            return f"kernel {i} is redundant"
        if k.shuffle:
            return "shuffle is not available for FFT"
        if k.p_per_thread not in P_VALUES["fft"] or k.radix != k.p_per_thread:
            return f"kernel {i}: radix must equal P in {P_VALUES['fft']}"
        if not (is_pow2(k.l_threads) and arch.warp_size <= k.l_threads <= arch.max_threads_per_block):
            return f"kernel {i}: L={k.l_threads} out of range"
        if k.s_elems != k.p_per_thread * k.l_threads:
            return f"kernel {i}: S must equal P*L"
        if not LARGE_FFT_MIN_S <= k.s_elems <= s_max:
            return f"kernel {i}: S={k.s_elems} outside [{LARGE_FFT_MIN_S}, {s_max}]"
        if radix_bits(k.s_elems, k.radix) == 0:
            return f"kernel {i}: S too small for radix {k.radix}"
        usage = resource_usage("fft", k)
        problem = check_usage(arch, usage)
        if problem:
            return f"kernel {i}: {problem}"
        covered += radix_bits(k.s_elems, k.radix)
    if covered < bits:
        return f"plan covers {covered} of {bits} bits"
    return None


def _large_fft_kernels(arch: ArchDescriptor) -> list[KernelConfig]:
    out = []
    s_max = large_fft_max_s(arch)
    for p in P_VALUES["fft"]:
        l = arch.warp_size
        while l <= arch.max_threads_per_block:
            k = KernelConfig(p * l, p, l, p, False)
            if LARGE_FFT_MIN_S <= k.s_elems <= s_max and check_usage(arch, resource_usage("fft", k)) is None:
                out.append(k)
            l *= 2
    return sorted(out, key=KernelConfig.sort_key)


def _enumerate_plans(n: int, arch: ArchDescriptor) -> list[MultiKernelPlan]:
    bits = log2i(n)
    kernels = _large_fft_kernels(arch)
    plans: list[MultiKernelPlan] = []

    def extend(prefix: tuple[KernelConfig, ...], covered: int) -> None:
        for k in kernels:
            c = covered + radix_bits(k.s_elems, k.radix)
            seq = prefix + (k,)
            if c >= bits:
                if len(seq) >= 2:
                    plans.append(MultiKernelPlan(seq))
            else:
                extend(seq, c)

    extend((), 0)
    # only plans that use the fewest kernels any plan needs, plus one spare kernel
    fewest = min(p.kernel_count for p in plans)
    plans = [p for p in plans if p.kernel_count <= fewest + 1]
    return sorted(plans, key=MultiKernelPlan.sort_key)


# -- enumeration --------------------------------------------------------------

@dataclass(frozen=True)
class SearchSpace:
    algorithm: str
    n_size: int
    candidates: tuple
    element_bytes: int
    arch: ArchDescriptor

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self) -> Iterator[Candidate]:
        return iter(self.candidates)

    @property
    def multi_kernel(self) -> bool:
        return bool(self.candidates) and isinstance(self.candidates[0], MultiKernelPlan)


def candidate_grid(algorithm: str, n: int, arch: ArchDescriptor) -> Iterator[KernelConfig]:
    """Every syntactically possible tuple; the validity predicate filters it."""
    fam = family(algorithm)
    ls = [1 << e for e in range(log2i(arch.warp_size), log2i(arch.max_threads_per_block) + 1)]
    for r, p, l in itertools.product(RADICES[algorithm], P_VALUES[fam], ls):
        work = p * l
        s_options = {0, work}
        if fam == "scan" and work % n == 0:
            s_options.add(SCAN_SLOTS_PER_PROBLEM * (work // n))
        for s, shuffle in itertools.product(sorted(s_options), (False, True)):
            yield KernelConfig(s, p, l, r, shuffle)


def enumerate_space(algorithm: str, n: int, arch: ArchDescriptor) -> SearchSpace:
    check_size(algorithm, n)
    if is_large(algorithm, n):
        cands: tuple = tuple(_enumerate_plans(n, arch))
    else:
        valid = {c for c in candidate_grid(algorithm, n, arch) if validate(c, algorithm, n, arch) is None}
        cands = tuple(sorted(valid, key=KernelConfig.sort_key))
    return SearchSpace(algorithm, n, cands, element_bytes(algorithm), arch)


def encode(candidate: Candidate, max_kernels: int = 3, algorithm: str | None = None,
           arch: ArchDescriptor | None = None) -> np.ndarray:
    """Numeric feature vector of a candidate for the surrogate model.

    With `algorithm` and `arch` given, the static warp occupancy and log2 of
    active blocks the occupancy model predicts are appended (averaged over
    kernels for a plan).  They need no measurement and let the surrogate
    separate configurations whose raw parameters sit close together.
    """
    kernels = candidate.kernel_configs if isinstance(candidate, MultiKernelPlan) else (candidate,)
    if isinstance(candidate, KernelConfig):
        feats = [math.log2(candidate.s_elems + 1), math.log2(candidate.p_per_thread),
                 math.log2(candidate.l_threads), math.log2(candidate.radix), float(candidate.shuffle)]
    else:
        feats = [float(candidate.kernel_count)]
        for i in range(max_kernels):
            if i < candidate.kernel_count:
                k = candidate.kernel_configs[i]
                feats += [math.log2(k.s_elems), math.log2(k.p_per_thread), math.log2(k.l_threads)]
            else:
                feats += [0.0, 0.0, 0.0]
    if arch is not None and algorithm is not None:
        alg = "fft" if isinstance(candidate, MultiKernelPlan) else algorithm
        reports = [config_occupancy(alg, k, arch) for k in kernels]
        feats += [float(np.mean([r.warp_occupancy for r in reports])),
                  float(np.mean([math.log2(r.active_blocks) for r in reports]))]
    return np.array(feats)


def candidate_from_dict(doc: dict) -> Candidate:
    if "kernels" in doc:
        return MultiKernelPlan.from_dict(doc)
    return KernelConfig.from_dict(doc)
