"""Occupancy-guided and Bayesian autotuning of GPU prefix-operation kernels (scan, tridiagonal, FFT)."""

__version__ = "0.1.0"

from .analytical import GuidelineTrace, plan_large_fft, tune_analytical
from .arch import ArchDescriptor, KernelResourceUsage, OccupancyReport, compute_occupancy, gm20b, load_arch
from .backends import CommandSpec, MeasurementTable, SimBackend, TableBackend, external_evaluate, make_backend, sim_cost
from .bayes import Evaluation, SurrogateModel, TuningRun, expected_improvement, fit_surrogate, tune_bo
from .metrics import compare_report, efficiency, exhaustive_search, phi, run_comparison, throughput
from .space import KernelConfig, MultiKernelPlan, SearchSpace, enumerate_space, estimate_registers, is_valid

__all__ = [
    "ArchDescriptor", "CommandSpec", "Evaluation", "GuidelineTrace", "KernelConfig",
    "KernelResourceUsage", "MeasurementTable", "MultiKernelPlan", "OccupancyReport",
    "SearchSpace", "SimBackend", "SurrogateModel", "TableBackend", "TuningRun",
    "compare_report", "compute_occupancy", "efficiency", "enumerate_space", "estimate_registers",
    "exhaustive_search", "expected_improvement", "external_evaluate", "fit_surrogate", "gm20b",
    "is_valid", "load_arch", "make_backend", "phi", "plan_large_fft", "run_comparison",
    "sim_cost", "throughput", "tune_analytical", "tune_bo",
]
