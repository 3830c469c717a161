"""Exhaustive oracle, efficiency and portability (harmonic-mean) metrics, comparison reports."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .analytical import plan_large_fft, tune_analytical
from .arch import ArchDescriptor
from .backends import OK, Backend, Measurement
from .bayes import SPACE_EXHAUSTED, Evaluation, TuningRun, tune_bo
from .errors import EvaluationFailedError, ValidationError
from .kernels.problem import family
from .space import Candidate, SearchSpace, enumerate_space, is_large

METHODS = ("analytical", "bo", "exhaustive")

THROUGHPUT_UNITS = {"ts": "MRows/s", "scan": "MData/s", "fft": "GFlops/s"}


def efficiency(achieved_time: float, best_time: float) -> float:
    if not (achieved_time > 0 and best_time > 0):
        raise ValidationError("times must be positive")
    if best_time > achieved_time * (1 + 1e-12):
        raise ValidationError(f"best time {best_time} exceeds achieved time {achieved_time}")
    return min(1.0, best_time / achieved_time)


def phi(efficiencies: Sequence[float]) -> float:
    """Harmonic mean of per-size efficiencies."""
    values = list(efficiencies)
    if not values:
        raise ValidationError("phi needs at least one efficiency")
    if any(not 0 < e <= 1 for e in values):
        raise ValidationError("efficiencies must lie in (0, 1]")
    return len(values) / math.fsum(1.0 / e for e in values)


def throughput(algorithm: str, n: int, batches: int, time_s: float) -> float:
    """MRows/s (tridiagonal), MData/s (scan) or GFlops/s (FFT) for `batches` problems in `time_s`."""
    if not time_s > 0:
        raise ValidationError("time must be positive")
    if family(algorithm) == "fft":
        return 5 * n * math.log2(n) * batches * 1e-9 / time_s
    return n * batches * 1e-6 / time_s


def throughput_unit(algorithm: str) -> str:
    return THROUGHPUT_UNITS[family(algorithm)]


# -- exhaustive oracle -----------------------------------------------------------

def exhaustive_search(space: SearchSpace, backend: Backend,
                      workers: int = 1) -> tuple[Candidate, dict[Candidate, Measurement]]:
    """Evaluate every candidate once; return the fastest and the full map."""
    cands = list(space)

    def one(c):
        return backend.evaluate(c, space.algorithm, space.n_size)

    if workers > 1 and backend.concurrency_safe:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, cands))
    else:
        results = [one(c) for c in cands]
    evaluations = dict(zip(cands, results))
    ok = [(m.time, c.sort_key(), c) for c, m in evaluations.items() if m.status == OK]
    if not ok:
        raise EvaluationFailedError(f"no candidate of {space.algorithm} N={space.n_size} ran successfully")
    return min(ok, key=lambda t: (t[0], t[1]))[2], evaluations


def exhaustive_run(space: SearchSpace, backend: Backend, workers: int = 1) -> TuningRun:
    _, evaluations = exhaustive_search(space, backend, workers)
    history = tuple(
        Evaluation(c, m.time, m.status) if m.status == OK
        else Evaluation(c, backend.default_penalty, m.status, m.detail)
        for c, m in evaluations.items()
    )
    return TuningRun(space.algorithm, space.n_size, history, SPACE_EXHAUSTED, None, "exhaustive",
                     getattr(backend, "unit", "units"))


def analytical_run(algorithm: str, n: int, arch: ArchDescriptor, backend: Backend) -> TuningRun:
    """The guideline's pick, timed once through `backend`."""
    if is_large(algorithm, n):
        chosen: Candidate = plan_large_fft(n, arch)
        extra: dict = {}
    else:
        trace = tune_analytical(algorithm, n, arch)
        chosen, extra = trace.chosen, {"rule_fired": trace.rule_fired}
    m = backend.evaluate(chosen, algorithm, n)
    e = Evaluation(chosen, m.time, OK) if m.status == OK else \
        Evaluation(chosen, backend.default_penalty, m.status, m.detail)
    return TuningRun(algorithm, n, (e,), "guideline", None, "analytical",
                     getattr(backend, "unit", "units"), extra)


# -- reports ----------------------------------------------------------------------

@dataclass(frozen=True)
class PortabilityScore:
    method: str
    algorithm: str
    per_size: Mapping[int, float]
    phi: float
    size_set: tuple[int, ...]


def _achieved(run: TuningRun) -> float:
    best = run.best
    return best.time if best is not None else min(e.time for e in run.history)


@dataclass
class CompareReport:
    algorithm: str
    sizes: tuple[int, ...]
    methods: list[dict] = field(default_factory=list)
    unit: str = "units"

    def scores(self) -> dict[str, PortabilityScore]:
        return {m["method"]: PortabilityScore(m["method"], self.algorithm,
                                              {s["N"]: s["efficiency"] for s in m["sizes"]},
                                              m["phi"], self.sizes)
                for m in self.methods}

    def to_dict(self) -> dict[str, Any]:
        return {"algorithm": self.algorithm, "sizes": list(self.sizes), "unit": self.unit,
                "methods": self.methods}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        head = ["method"] + [f"N={n}" for n in self.sizes] + ["Phi", "evals"]
        rows = [head]
        for m in self.methods:
            rows.append([m["method"]] + [f"{s['efficiency']:.4f}" for s in m["sizes"]]
                        + [f"{m['phi']:.4f}", str(m["evaluations_used"])])
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        lines = [f"{self.algorithm}: efficiency per size (best {self.unit} / achieved)"]
        for r in rows:
            lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                   for i, (c, w) in enumerate(zip(r, widths))))
        return "\n".join(lines) + "\n"


def compare_report(runs: Mapping[str, Mapping[int, TuningRun]], oracle: Mapping[int, float],
                   sizes: Sequence[int], algorithm: str = "", unit: str = "units") -> CompareReport:
    """Per-size efficiency against `oracle` (best time per N) and Phi for every method."""
    sizes = tuple(sizes)
    report = CompareReport(algorithm, sizes, unit=unit)
    for method, by_size in runs.items():
        entries = []
        for n in sizes:
            run = by_size[n]
            achieved = _achieved(run)
            chosen = run.best.config if run.best is not None else run.history[0].config
            entries.append({"N": n, "best_time": achieved, "chosen_config": chosen.to_dict(),
                            "efficiency": efficiency(achieved, oracle[n])})
        report.methods.append({
            "method": method,
            "algorithm": algorithm,
            "sizes": entries,
            "phi": phi([e["efficiency"] for e in entries]),
            "evaluations_used": sum(by_size[n].evaluations_used for n in sizes),
        })
    return report


def run_comparison(algorithm: str, sizes: Sequence[int], backend: Backend, arch: ArchDescriptor,
                   seed: int = 0, budget: int = 40, window: int = 5,
                   methods: Sequence[str] = METHODS, workers: int = 1) -> CompareReport:
    """Analytical, BO and exhaustive tuning over `sizes`, scored against the exhaustive oracle."""
    unknown = sorted(set(methods) - set(METHODS))
    if unknown:
        raise ValidationError(f"unknown method(s): {', '.join(unknown)}")
    runs: dict[str, dict[int, TuningRun]] = {m: {} for m in methods}
    oracle: dict[int, float] = {}
    for n in sizes:
        space = enumerate_space(algorithm, n, arch)
        exhaustive = exhaustive_run(space, backend, workers)
        oracle[n] = exhaustive.best.time
        if "analytical" in runs:
            runs["analytical"][n] = analytical_run(algorithm, n, arch, backend)
        if "bo" in runs:
            runs["bo"][n] = tune_bo(space, backend, budget, window, seed, workers)
        if "exhaustive" in runs:
            runs["exhaustive"][n] = exhaustive
    return compare_report(runs, oracle, sizes, algorithm, getattr(backend, "unit", "units"))
