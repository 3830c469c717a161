"""Objective functions: map a candidate configuration to an execution time."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import shlex
import signal
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence, Union

from .arch import ArchDescriptor
from .errors import ValidationError
from .kernels.problem import ProblemInstance, log2i, steps_count
from .space import Candidate, KernelConfig, MultiKernelPlan, config_occupancy, is_valid, radix_bits

log = logging.getLogger(__name__)

OK, INVALID, TIMEOUT = "ok", "invalid", "timeout"

TOTAL_ELEMENTS = 2 ** 26


@dataclass(frozen=True)
class Measurement:
    time: Optional[float]
    status: str = OK
    detail: str = ""


class Backend(Protocol):
    name: str
    unit: str
    default_penalty: float
    concurrency_safe: bool

    def evaluate(self, candidate: Candidate, algorithm: str, n: int) -> Measurement: ...


# -- simulated cost model -----------------------------------------------------

@dataclass(frozen=True)
class SimConstants:
    c0: float = 1.0
    c1: float = 0.25
    c2: float = 1.0
    c3: float = 50.0
    occupancy_floor: float = 0.05
    comm_shuffle: float = 0.25
    comm_shared: float = 1.0
    total_elements: int = TOTAL_ELEMENTS

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "SimConstants":
        doc = json.loads(Path(path).read_text())
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ValidationError(f"unknown sim constant(s): {', '.join(unknown)}")
        return cls(**doc)


def batches_for(n: int, total_elements: int = TOTAL_ELEMENTS) -> int:
    return max(1, total_elements // n)


def _kernel_time(algorithm: str, k: KernelConfig, elements: int, steps: int,
                 arch: ArchDescriptor, const: SimConstants) -> float:
    occ = config_occupancy(algorithm, k, arch)
    total_blocks = math.ceil(elements / (k.p_per_thread * k.l_threads))
    waves = math.ceil(total_blocks / (occ.active_blocks * arch.sm_count))
    comm = const.comm_shuffle if k.shuffle else const.comm_shared
    work = const.c0 + const.c1 * k.p_per_thread + const.c2 * comm
    return waves * steps * work / max(occ.warp_occupancy, const.occupancy_floor)


def sim_cost(candidate: Candidate, instance: ProblemInstance, arch: ArchDescriptor,
             constants: SimConstants = SimConstants()) -> float:
    """Deterministic time-like cost rewarding occupancy, fewer steps, shuffles and fewer launches."""
    elements = instance.batches * instance.n_size
    if isinstance(candidate, KernelConfig):
        steps_instance = dataclasses.replace(instance, radix=candidate.radix)
        return _kernel_time(instance.algorithm, candidate, elements, steps_count(steps_instance),
                            arch, constants)
    total = 0.0
    remaining = instance.n_bits
    for k in candidate.kernel_configs:
        bits = min(radix_bits(k.s_elems, k.radix), remaining)
        remaining -= bits
        steps = math.ceil(bits / log2i(k.radix))
        total += _kernel_time("fft", k, elements, steps, arch, constants)
    return total + constants.c3 * (candidate.kernel_count - 1)


@dataclass
class SimBackend:
    arch: ArchDescriptor
    constants: SimConstants = field(default_factory=SimConstants)
    name: str = "sim"
    unit: str = "units"
    default_penalty: float = 60e6
    concurrency_safe: bool = True

    def evaluate(self, candidate: Candidate, algorithm: str, n: int) -> Measurement:
        ok, reason = is_valid(candidate, algorithm, n, self.arch)
        if not ok:
            return Measurement(None, INVALID, reason)
        inst = ProblemInstance(algorithm, n, batches_for(n, self.constants.total_elements))
        return Measurement(sim_cost(candidate, inst, self.arch, self.constants))


# -- measurement tables -------------------------------------------------------

TABLE_HEADER = ["algorithm", "N", "S", "P", "L", "r", "shuffle", "time_us"]


def table_key(candidate: Candidate, algorithm: str, n: int) -> tuple:
    kernels = candidate.kernel_configs if isinstance(candidate, MultiKernelPlan) else (candidate,)

    def join(attr):
        return ":".join(str(getattr(k, attr)) for k in kernels)

    shuffle = ":".join(str(int(k.shuffle)) for k in kernels)
    return (algorithm, str(n), join("s_elems"), join("p_per_thread"), join("l_threads"),
            join("radix"), shuffle)


@dataclass
class MeasurementTable:
    rows: dict = field(default_factory=dict)
    provenance: str = ""

    def add(self, candidate: Candidate, algorithm: str, n: int, time_us: float) -> None:
        key = table_key(candidate, algorithm, n)
        if key in self.rows:
            raise ValidationError(f"duplicate measurement key {key}")
        if not time_us > 0:
            raise ValidationError(f"measurement times must be positive, got {time_us}")
        self.rows[key] = float(time_us)

    def lookup(self, candidate: Candidate, algorithm: str, n: int) -> Optional[float]:
        return self.rows.get(table_key(candidate, algorithm, n))

    def dumps(self) -> str:
        buf = io.StringIO()
        if self.provenance:
            buf.write(f"# {self.provenance}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TABLE_HEADER)
        for key in sorted(self.rows):
            writer.writerow(list(key) + [repr(self.rows[key])])
        return buf.getvalue()

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "MeasurementTable":
        lines = text.splitlines()
        provenance = []
        while lines and lines[0].startswith("#"):
            provenance.append(lines.pop(0)[1:].strip())
        reader = csv.reader(lines)
        header = next(reader, None)
        if header != TABLE_HEADER:
            raise ValidationError(f"measurement table header must be {','.join(TABLE_HEADER)}")
        table = cls(provenance="\n".join(provenance))
        for lineno, row in enumerate(reader, start=2 + len(provenance)):
            if not row:
                continue
            if len(row) != len(TABLE_HEADER):
                raise ValidationError(f"line {lineno}: expected {len(TABLE_HEADER)} columns")
            key = tuple(c.strip() for c in row[:7])
            if key in table.rows:
                raise ValidationError(f"line {lineno}: duplicate key {key}")
            try:
                t = float(row[7])
            except ValueError as exc:
                raise ValidationError(f"line {lineno}: bad time {row[7]!r}") from exc
            if not t > 0:
                raise ValidationError(f"line {lineno}: time must be positive")
            table.rows[key] = t
        return table

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MeasurementTable":
        return cls.loads(Path(path).read_text())


def table_lookup(table: MeasurementTable, candidate: Candidate, algorithm: str, n: int) -> Measurement:
    t = table.lookup(candidate, algorithm, n)
    if t is None:
        return Measurement(None, INVALID, "no measurement for this key")
    return Measurement(t)


@dataclass
class TableBackend:
    table: MeasurementTable
    name: str = "table"
    unit: str = "us"
    default_penalty: float = 60e6
    concurrency_safe: bool = True

    def evaluate(self, candidate: Candidate, algorithm: str, n: int) -> Measurement:
        return table_lookup(self.table, candidate, algorithm, n)


def dump_table(backend: Backend, spaces, provenance: str = "") -> MeasurementTable:
    """Tabulate every candidate of `spaces` through `backend` (ok results only)."""
    table = MeasurementTable(provenance=provenance)
    for space in spaces:
        for cand in space:
            m = backend.evaluate(cand, space.algorithm, space.n_size)
            if m.status == OK:
                table.add(cand, space.algorithm, space.n_size, m.time)
    return table


# -- external command ---------------------------------------------------------

DEFAULT_TEMPLATE = ("{ALGO}", "{N}", "{S}", "{P}", "{L}", "{R}", "{SHUFFLE}")


@dataclass(frozen=True)
class CommandSpec:
    executable: str
    arguments: tuple = DEFAULT_TEMPLATE
    timeout: float = 60.0
    concurrency_safe: bool = False

    def __post_init__(self) -> None:
        if not self.timeout > 0:
            raise ValidationError("timeout must be positive")
        if isinstance(self.arguments, str):
            object.__setattr__(self, "arguments", tuple(shlex.split(self.arguments)))

    def argv(self, candidate: Candidate, algorithm: str, n: int) -> list[str]:
        _, _, s, p, l, r, shuffle = table_key(candidate, algorithm, n)
        values = {"ALGO": algorithm, "N": str(n), "S": s, "P": p, "L": l, "R": r, "SHUFFLE": shuffle}
        return [self.executable] + [a.format(**values) for a in self.arguments]


_serial = threading.Lock()


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def external_evaluate(spec: CommandSpec, candidate: Candidate, algorithm: str, n: int) -> Measurement:
    """Run the command; its stdout must be one decimal number, the time in microseconds."""
    argv = spec.argv(candidate, algorithm, n)
    lock = threading.Lock() if spec.concurrency_safe else _serial
    with lock:
        try:
            proc = subprocess.Popen(argv, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                    text=True, start_new_session=True)
        except OSError as exc:
            return Measurement(None, INVALID, f"spawn failed: {exc}")
        try:
            out, err = proc.communicate(timeout=spec.timeout)
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            proc.communicate()
            return Measurement(None, TIMEOUT, f"exceeded {spec.timeout} s")
    if proc.returncode != 0:
        return Measurement(None, INVALID, f"exit status {proc.returncode}: {err.strip()[:200]}")
    lines = [ln for ln in out.splitlines() if ln.strip()]
    if len(lines) != 1:
        return Measurement(None, INVALID, "expected exactly one line of output")
    try:
        t = float(lines[0].strip())
    except ValueError:
        return Measurement(None, INVALID, f"malformed output {lines[0]!r}")
    if not (t > 0 and math.isfinite(t)):
        return Measurement(None, INVALID, f"non-positive time {t}")
    return Measurement(t)


@dataclass
class CommandBackend:
    spec: CommandSpec
    name: str = "cmd"
    unit: str = "us"
    default_penalty: float = 60e6

    @property
    def concurrency_safe(self) -> bool:
        return self.spec.concurrency_safe

    def evaluate(self, candidate: Candidate, algorithm: str, n: int) -> Measurement:
        return external_evaluate(self.spec, candidate, algorithm, n)


def make_backend(selector: str, arch: ArchDescriptor, timeout: float = 60.0,
                 arguments: Sequence[str] | str | None = None) -> Backend:
    """Build a backend from `sim`, `sim:<constants.json>`, `table:<path>` or `cmd:<path>`."""
    kind, _, arg = selector.partition(":")
    if kind == "sim":
        return SimBackend(arch, SimConstants.from_file(arg) if arg else SimConstants())
    if kind == "table" and arg:
        return TableBackend(MeasurementTable.load(arg))
    if kind == "cmd" and arg:
        spec = CommandSpec(arg, tuple(arguments) if arguments is not None else DEFAULT_TEMPLATE, timeout)
        return CommandBackend(spec)
    raise ValidationError(f"unknown backend selector {selector!r}; use sim, table:<path> or cmd:<path>")
