"""End-to-end acceptance checks; each prints one PASS/FAIL line and asserts."""

import subprocess
import sys
import time

import numpy as np
import pytest

from prefixtune.analytical import plan_large_fft, tune_analytical
from prefixtune.arch import KernelResourceUsage, compute_occupancy
from prefixtune.backends import INVALID, OK, TIMEOUT, CommandSpec, dump_table, external_evaluate, make_backend
from prefixtune.bayes import WINDOW_STALLED, ei_closed_form, fit_surrogate, tune_bo
from prefixtune.kernels import (
    TridiagonalSystem, default_plan, fft_transform, oracle_dft, oracle_prefix, oracle_thomas,
    scan_inclusive, solve_tridiagonal,
)
from prefixtune.metrics import exhaustive_search, run_comparison
from prefixtune.backends import Measurement
from prefixtune.space import KernelConfig, enumerate_space


def report(capsys, number, ok, detail, started):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({time.monotonic() - started:.1f} s) {detail}")


# -- 1. occupancy table

OCCUPANCY_ROWS = [
    ((1, 64, 2048), (50, 32)), ((2, 40, 0), (75, 24)), ((2, 32, 2048), (100, 32)),
    ((4, 32, 4096), (100, 16)), ((4, 40, 5120), (75, 12)), ((8, 32, 8192), (100, 8)),
    ((8, 40, 10240), (75, 6)), ((16, 32, 16384), (100, 4)), ((32, 32, 32768), (100, 2)),
]
PINNED_ROW = ((2, 40, 2560), (75, 24))


def test_criterion_1_occupancy_table(capsys, arch):
    start = time.monotonic()
    bad = []
    for (warps, regs, smem), want in OCCUPANCY_ROWS + [PINNED_ROW]:
        rep = compute_occupancy(arch, KernelResourceUsage(32 * warps, regs, smem))
        got = (round(100 * rep.warp_occupancy), rep.active_blocks)
        if got != want:
            bad.append(((warps, regs, smem), got, want))
    elapsed = time.monotonic() - start
    ok = not bad and elapsed < 1
    report(capsys, 1, ok, f"10 rows, mismatches {bad}", start)
    assert ok


# -- 2. guideline golden set

def golden(alg, n):
    if alg in ("ts_cr", "ts_pcr", "ts_lf"):
        return {8: (0, 2, 64), 16: (0, 2, 64), 32: (0, 2, 64), 64: (0, 2, 64), 128: (0, 4, 64)}.get(
            n, (n, 2, n // 2))
    if alg == "ts_wm":
        return (0, 4, 64) if n <= 128 else (n, 4, n // 4)
    if alg.startswith("scan"):
        return (8192 // n, 4, 64) if n <= 256 else (32, 4, n // 4)
    return (256, 4, 64) if n <= 256 else (n, 4, n // 4)


GOLDEN_CASES = [(alg, 2 ** e) for alg, hi in [("ts_cr", 10), ("ts_pcr", 10), ("ts_lf", 10),
                                              ("ts_wm", 10), ("scan_lf", 12), ("scan_ks", 12),
                                              ("fft", 12)]
                for e in range(3, hi + 1)]


def test_criterion_2_guideline_golden_set(capsys, arch):
    start = time.monotonic()
    misses = []
    for alg, n in GOLDEN_CASES:
        got = tune_analytical(alg, n, arch).chosen.spl
        if got != golden(alg, n):
            misses.append(f"{alg} N={n}: got {got}, want {golden(alg, n)}")
    elapsed = time.monotonic() - start
    ok = not misses and elapsed < 5
    report(capsys, 2, ok, f"{len(GOLDEN_CASES) - len(misses)}/{len(GOLDEN_CASES)} cells; misses: "
           + ("; ".join(misses) or "none"), start)
    assert ok, misses


# -- 3. large FFT kernel counts

def test_criterion_3_large_fft_counts(capsys, arch):
    start = time.monotonic()
    counts = {2 ** e: plan_large_fft(2 ** e, arch).kernel_count for e in range(13, 24)}
    want = {n: 2 if n <= 262144 else 3 for n in counts}
    ok = counts == want and time.monotonic() - start < 1
    report(capsys, 3, ok, f"counts {sorted(set(counts.items()))}", start)
    assert ok


# -- 4. kernel correctness

def dominant(rng, n):
    lower, upper = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    lower[0] = upper[-1] = 0.0
    diag = (np.abs(lower) + np.abs(upper) + rng.uniform(0.5, 2, n)) * rng.choice([-1, 1], n)
    return TridiagonalSystem(lower, diag, upper, rng.uniform(-10, 10, n))


SOLVERS = [("CR", 2), ("PCR", 2), ("LF", 2), ("WM", 4)]


def test_criterion_4_kernel_correctness(capsys):
    start = time.monotonic()
    rng = np.random.default_rng(4)
    failures = []
    for trial in range(100):
        x = rng.integers(-10 ** 6, 10 ** 6, 2 ** int(rng.integers(0, 13)))
        expect = oracle_prefix(x.tolist())
        for pattern in ("LF", "KS"):
            if scan_inclusive(x, pattern).tolist() != expect:
                failures.append(f"scan {pattern} trial {trial}")
    for trial in range(50):
        system = dominant(rng, 2 ** int(rng.integers(1, 11)))
        ref = oracle_thomas(system)
        results = [solve_tridiagonal(system, a, r) for a, r in SOLVERS]
        scale = np.abs(ref).max()
        for (a, r), x in zip(SOLVERS, results):
            if system.residual(x) > 1e-6 or np.abs(x - ref).max() > 1e-6 * scale:
                failures.append(f"{a} r={r} trial {trial}")
        for i in range(len(results)):
            for j in range(i + 1, len(results)):
                if np.abs(results[i] - results[j]).max() > 1e-6 * scale:
                    failures.append(f"pairwise {SOLVERS[i]} {SOLVERS[j]} trial {trial}")
    for n in (8, 256, 4096):
        x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)).astype(np.complex64)
        ref = oracle_dft(x)
        plans = [default_plan(n, r) for r in (2, 4, 8, 16)] + [[2] + default_plan(n // 2, 8)]
        for plan in plans:
            spectrum = fft_transform(x, "forward", plan)
            if np.abs(spectrum - ref).max() > 1e-3:
                failures.append(f"fft N={n} plan {plan}")
            if np.abs(fft_transform(spectrum, "inverse", plan) - x).max() > 1e-4:
                failures.append(f"fft round trip N={n} plan {plan}")
    ok = not failures and time.monotonic() - start < 60
    report(capsys, 4, ok, f"failures: {failures[:5] or 'none'}", start)
    assert ok


# -- 5. BO against the exhaustive oracle

BO_CASES = [("ts_wm", 1024), ("scan_lf", 512), ("fft", 256), ("fft", 524288)]


def test_criterion_5_bo_vs_exhaustive(capsys, arch, sim):
    start = time.monotonic()
    hits = {}
    for alg, n in BO_CASES:
        space = enumerate_space(alg, n, arch)
        best, evals = exhaustive_search(space, sim)
        optimum = evals[best].time
        hits[(alg, n)] = sum(tune_bo(space, sim, budget=40, window=5, seed=s).best.time <= 1.05 * optimum
                             for s in range(20))
    ok = all(h >= 18 for h in hits.values()) and time.monotonic() - start < 180
    report(capsys, 5, ok, "seeds within 5%: " + ", ".join(f"{a} N={n} {h}/20" for (a, n), h in hits.items()),
           start)
    assert ok


# -- 6. portability scores

PHI_SIZES = {"ts_cr": 10, "ts_pcr": 10, "ts_lf": 10, "ts_wm": 10, "scan_lf": 12, "scan_ks": 12, "fft": 12}


def test_criterion_6_phi(capsys, arch, sim):
    start = time.monotonic()
    rows, problems = [], []
    for alg, hi in PHI_SIZES.items():
        scores = run_comparison(alg, [2 ** e for e in range(3, hi + 1)], sim, arch, seed=0).scores()
        ex, bo, an = (scores[m].phi for m in ("exhaustive", "bo", "analytical"))
        rows.append(f"{alg} ex={ex:.3f} bo={bo:.3f} an={an:.3f}")
        if ex != 1.0:
            problems.append(f"{alg} exhaustive {ex}")
        if bo < 0.95:
            problems.append(f"{alg} bo {bo:.3f}")
        if an < 0.75:
            problems.append(f"{alg} analytical {an:.3f}")
    ok = not problems and time.monotonic() - start < 120
    report(capsys, 6, ok, "; ".join(rows) + f"; below bound: {problems or 'none'}", start)
    assert ok, problems


# -- 7. BO unit properties

class Scripted:
    name, unit, default_penalty, concurrency_safe = "scripted", "units", 60e6, False

    def __init__(self, values):
        self.values, self.calls = values, 0

    def evaluate(self, candidate, algorithm, n):
        self.calls += 1
        return Measurement(self.values[self.calls - 1])


def test_criterion_7_bo_units(capsys, arch):
    start = time.monotonic()
    rng = np.random.default_rng(7)
    half = rng.standard_normal(5 * 10 ** 5)
    z = np.concatenate([half, -half])
    triples = rng.uniform([-1, 0.1, -1], [1, 1, 1], (10, 3))
    mc_err = max(abs(ei_closed_form([mu], [s], b)[0] - np.maximum(b - (mu + s * z), 0).mean())
                 for mu, s, b in triples)
    sigma0 = (ei_closed_form([1.0], [0.0], 3.0)[0] == 2.0 and ei_closed_form([3.0], [0.0], 1.0)[0] == 0.0)
    x = rng.uniform(0, 1, (12, 3))
    y = np.sin(3 * x).sum(axis=1) + 2
    model = fit_surrogate(x, y)
    interp_err = np.abs(model.predict(x)[0] - y).max()
    space = enumerate_space("scan_lf", 64, arch)
    run = tune_bo(space, Scripted([5.0, 5.0, 5.0, 4.0, 3.0] + [9.0] * 100), budget=40, window=5, seed=0)
    stop_ok = run.stop_reason == WINDOW_STALLED and run.evaluations_used == 10
    ok = mc_err <= 1e-3 and sigma0 and interp_err <= 1e-6 and stop_ok and time.monotonic() - start < 30
    report(capsys, 7, ok, f"EI max err {mc_err:.2e}, interpolation err {interp_err:.2e}, "
           f"stopped after {run.evaluations_used}", start)
    assert ok


# -- 8. determinism

def test_criterion_8_compare_is_deterministic(capsys):
    start = time.monotonic()
    argv = [sys.executable, "-m", "prefixtune.cli", "compare", "--algo", "ts_wm", "--sizes", "64..1024",
            "--backend", "sim", "--seed", "7"]
    first, second = (subprocess.run(argv, capture_output=True, check=True).stdout for _ in range(2))
    ok = first == second and len(first) > 0 and time.monotonic() - start < 60
    report(capsys, 8, ok, f"{len(first)} bytes, identical={first == second}", start)
    assert ok


# -- 9. backend protocol

def stub(tmp_path, name, body):
    path = tmp_path / name
    path.write_text("#!/bin/sh\n" + body + "\n")
    path.chmod(0o755)
    return str(path)


def test_criterion_9_backend_protocol(capsys, tmp_path, arch, sim):
    start = time.monotonic()
    cfg = KernelConfig(0, 2, 64, 2, True)
    value = external_evaluate(CommandSpec(stub(tmp_path, "v.sh", "echo 123.5")), cfg, "ts_cr", 64)
    fail = external_evaluate(CommandSpec(stub(tmp_path, "f.sh", "exit 3")), cfg, "ts_cr", 64)
    slow = external_evaluate(CommandSpec(stub(tmp_path, "s.sh", "sleep 60"), timeout=2), cfg, "ts_cr", 64)
    statuses = ((value.status, value.time), fail.status, slow.status)
    path = tmp_path / "sim.csv"
    spaces = [enumerate_space("ts_wm", 1024, arch), enumerate_space("fft", 524288, arch)]
    dump_table(sim, spaces).save(path)
    table = make_backend(f"table:{path}", arch)
    same = all(tune_bo(s, sim, seed=seed).to_dict()["history"] == tune_bo(s, table, seed=seed).to_dict()["history"]
               for s in spaces for seed in range(3))
    ok = statuses == ((OK, 123.5), INVALID, TIMEOUT) and same and time.monotonic() - start < 90
    report(capsys, 9, ok, f"stub statuses {statuses}, table round trip identical={same}", start)
    assert ok
