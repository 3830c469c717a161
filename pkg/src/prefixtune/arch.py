"""GPU architecture descriptors and the per-SM occupancy calculator."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Union

from .errors import ValidationError

LIMITS = ("warps", "blocks", "registers", "shared_memory", "threads")


@dataclass(frozen=True)
class ArchDescriptor:
    name: str
    sm_count: int
    warp_size: int
    max_warps_per_sm: int
    max_blocks_per_sm: int
    registers_per_sm: int
    max_registers_per_block: int
    register_alloc_granularity: int
    sm_subpartitions: int
    shared_mem_per_sm: int
    max_shared_mem_per_block: int
    shared_mem_alloc_granularity: int
    max_threads_per_block: int

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "name":
                if not isinstance(value, str) or not value:
                    raise ValidationError("field 'name' must be a non-empty string")
                continue
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationError(f"field '{f.name}' must be an integer, got {value!r}")
            if value <= 0:
                raise ValidationError(f"field '{f.name}' must be positive, got {value}")
        if self.max_warps_per_sm * self.warp_size < self.max_threads_per_block:
            raise ValidationError(
                "max_warps_per_sm * warp_size must be >= max_threads_per_block"
            )
        if self.max_registers_per_block > self.registers_per_sm:
            raise ValidationError("max_registers_per_block exceeds registers_per_sm")
        if self.max_shared_mem_per_block > self.shared_mem_per_sm:
            raise ValidationError("max_shared_mem_per_block exceeds shared_mem_per_sm")
        if self.registers_per_sm % self.sm_subpartitions:
            raise ValidationError("registers_per_sm must be divisible by sm_subpartitions")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ArchDescriptor":
        names = [f.name for f in dataclasses.fields(cls)]
        unknown = sorted(set(doc) - set(names))
        if unknown:
            raise ValidationError(f"unknown field(s) in architecture descriptor: {', '.join(unknown)}")
        missing = [n for n in names if n not in doc]
        if missing:
            raise ValidationError(f"missing field(s) in architecture descriptor: {', '.join(missing)}")
        return cls(**{n: doc[n] for n in names})


@dataclass(frozen=True)
class KernelResourceUsage:
    threads_per_block: int
    registers_per_thread: int
    shared_mem_per_block: int = 0

    def __post_init__(self) -> None:
        if self.threads_per_block <= 0:
            raise ValidationError("threads_per_block must be positive")
        if self.registers_per_thread < 0 or self.shared_mem_per_block < 0:
            raise ValidationError("resource usage must be non-negative")


@dataclass(frozen=True)
class OccupancyReport:
    active_blocks: int
    active_warps: int
    warp_occupancy: float
    limiting_resource: str

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _round_up(value: int, granularity: int) -> int:
    return -(-value // granularity) * granularity


def check_usage(arch: ArchDescriptor, usage: KernelResourceUsage) -> str | None:
    """Return a message naming the first per-block limit `usage` exceeds, or None."""
    if usage.threads_per_block > arch.max_threads_per_block:
        return (f"threads_per_block {usage.threads_per_block} exceeds "
                f"max_threads_per_block {arch.max_threads_per_block}")
    regs = usage.registers_per_thread * usage.threads_per_block
    if regs > arch.max_registers_per_block:
        return f"registers per block {regs} exceeds max_registers_per_block {arch.max_registers_per_block}"
    if usage.shared_mem_per_block > arch.max_shared_mem_per_block:
        return (f"shared_mem_per_block {usage.shared_mem_per_block} exceeds "
                f"max_shared_mem_per_block {arch.max_shared_mem_per_block}")
    return None


def compute_occupancy(arch: ArchDescriptor, usage: KernelResourceUsage) -> OccupancyReport:
    """Active blocks and warps per SM for a kernel with the given resource usage.

    Registers are allocated per warp, rounded up to the allocation granularity,
    inside each of ``arch.sm_subpartitions`` equal slices of the register file.
    A kernel without shared memory is not limited by it.
    """
    problem = check_usage(arch, usage)
    if problem:
        raise ValidationError(problem)

    warps_per_block = math.ceil(usage.threads_per_block / arch.warp_size)
    limits = [
        ("blocks", arch.max_blocks_per_sm),
        ("warps", arch.max_warps_per_sm // warps_per_block),
    ]
    if usage.registers_per_thread > 0:
        per_warp = _round_up(usage.registers_per_thread * arch.warp_size,
                             arch.register_alloc_granularity)
        slice_regs = arch.registers_per_sm // arch.sm_subpartitions
        warps_by_regs = arch.sm_subpartitions * (slice_regs // per_warp)
        limits.append(("registers", warps_by_regs // warps_per_block))
    if usage.shared_mem_per_block > 0:
        smem = _round_up(usage.shared_mem_per_block, arch.shared_mem_alloc_granularity)
        limits.append(("shared_memory", arch.shared_mem_per_sm // smem))

    # min() keeps the first minimum, so ties resolve in the order listed above
    limiting, blocks = min(limits, key=lambda item: item[1])
    warps = blocks * warps_per_block
    return OccupancyReport(
        active_blocks=blocks,
        active_warps=warps,
        warp_occupancy=warps / arch.max_warps_per_sm,
        limiting_resource=limiting,
    )


def load_arch(source: Union[str, Path, Mapping[str, Any]]) -> ArchDescriptor:
    """Load a descriptor from a JSON file, a JSON string, a mapping, or a bundled name."""
    if isinstance(source, Mapping):
        return ArchDescriptor.from_dict(source)
    text = str(source)
    path = Path(text)
    if text.lstrip().startswith("{"):
        raw = text
    elif path.is_file():
        raw = path.read_text()
    else:
        stem = path.name[:-5] if path.name.endswith(".json") else path.name
        bundled = resources.files("prefixtune") / "data" / f"{stem}.json"
        if not bundled.is_file():
            raise ValidationError(f"architecture descriptor not found: {text}")
        raw = bundled.read_text()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"architecture descriptor is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("architecture descriptor must be a JSON object")
    return ArchDescriptor.from_dict(doc)


def dump_arch(arch: ArchDescriptor) -> str:
    return json.dumps(arch.to_dict(), indent=2) + "\n"


def gm20b() -> ArchDescriptor:
    """The Jetson TX1 GPU (Maxwell GM20B) limits."""
    return load_arch("gm20b")
