"""Command-line interface: `prefixtune <command> [options]`."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analytical import plan_large_fft, tune_analytical
from .arch import KernelResourceUsage, compute_occupancy, load_arch
from .backends import make_backend
from .bayes import tune_bo
from .errors import BackendError, NoFeasibleConfigError, PrefixTuneError, ValidationError
from .kernels import (
    TridiagonalSystem, default_plan, fft_transform, oracle_dft, oracle_prefix, oracle_thomas,
    scan_inclusive, solve_tridiagonal,
)
from .kernels.problem import ALGORITHMS, is_pow2
from .metrics import METHODS, analytical_run, exhaustive_search, run_comparison
from .space import enumerate_space, is_large

log = logging.getLogger("prefixtune")

EXIT_OK, EXIT_FAILED, EXIT_VALIDATION, EXIT_NO_FEASIBLE, EXIT_BACKEND = 0, 1, 2, 3, 4

DEFAULT_ARCH = "gm20b"


def parse_sizes(text: str) -> list[int]:
    """`64..1024` (powers of two, inclusive), `64,128,256` or a single size."""
    text = text.strip()
    if ".." in text:
        lo_s, _, hi_s = text.partition("..")
        lo, hi = int(lo_s), int(hi_s)
        if not (is_pow2(lo) and is_pow2(hi)) or lo > hi:
            raise ValidationError(f"size range {text!r} needs power-of-two bounds with lo <= hi")
        out, n = [], lo
        while n <= hi:
            out.append(n)
            n *= 2
        return out
    sizes = [int(s) for s in text.split(",") if s.strip()]
    if not sizes:
        raise ValidationError("empty size list")
    return sizes


def _write(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _arch(args):
    return load_arch(args.arch or os.environ.get("PREFIXTUNE_ARCH") or DEFAULT_ARCH)


def _backend(args, arch):
    return make_backend(args.backend, arch, timeout=args.timeout,
                        arguments=args.cmd_args.split() if args.cmd_args else None)


# -- commands ---------------------------------------------------------------------

def cmd_tune(args) -> int:
    arch = _arch(args)
    if args.method == "analytical":
        if is_large(args.algo, args.n):
            plan = plan_large_fft(args.n, arch)
            doc = {"algorithm": args.algo, "N": args.n, "method": "analytical", "plan": plan.to_dict()}
        else:
            trace = tune_analytical(args.algo, args.n, arch)
            doc = {"algorithm": args.algo, "N": args.n, "method": "analytical", **trace.to_dict()}
        if args.backend_given:
            run = analytical_run(args.algo, args.n, arch, _backend(args, arch))
            doc["evaluation"] = run.history[0].to_dict()
        _write(args, _dump(doc))
        return EXIT_OK

    backend = _backend(args, arch)
    space = enumerate_space(args.algo, args.n, arch)
    if args.method == "bo":
        run = tune_bo(space, backend, args.budget, args.window, args.seed, args.workers)
        if run.best is None:
            log.error("every evaluation failed; nothing to report")
            return EXIT_BACKEND
        _write(args, run.to_json())
        return EXIT_OK
    return _exhaustive(args, space, backend)


def _exhaustive(args, space, backend) -> int:
    if len(space) == 0:
        raise NoFeasibleConfigError(f"empty search space for {space.algorithm} N={space.n_size}")
    best, evaluations = exhaustive_search(space, backend, args.workers)
    doc = {
        "algorithm": space.algorithm,
        "N": space.n_size,
        "method": "exhaustive",
        "unit": getattr(backend, "unit", "units"),
        "best": {"config": best.to_dict(), "time": evaluations[best].time},
        "evaluations": [{"config": c.to_dict(), "time": m.time, "status": m.status,
                         **({"detail": m.detail} if m.detail else {})}
                        for c, m in evaluations.items()],
    }
    _write(args, _dump(doc))
    return EXIT_OK


def cmd_exhaustive(args) -> int:
    arch = _arch(args)
    return _exhaustive(args, enumerate_space(args.algo, args.n, arch), _backend(args, arch))


def cmd_compare(args) -> int:
    arch = _arch(args)
    report = run_comparison(args.algo, parse_sizes(args.sizes), _backend(args, arch), arch,
                            args.seed, args.budget, args.window, args.methods, args.workers)
    _write(args, report.to_text() if args.format == "text" else report.to_json())
    return EXIT_OK


def cmd_occupancy(args) -> int:
    arch = _arch(args)
    rep = compute_occupancy(arch, KernelResourceUsage(args.threads, args.regs, args.smem))
    if args.json:
        _write(args, _dump(rep.to_dict()))
    else:
        _write(args, f"warp occupancy {rep.warp_occupancy:.0%}, {rep.active_blocks} blocks, "
                     f"{rep.active_warps} warps per SM (limited by {rep.limiting_resource})\n")
    return EXIT_OK


def _dominant_system(rng, n):
    lower = rng.uniform(-1, 1, n)
    upper = rng.uniform(-1, 1, n)
    lower[0] = upper[-1] = 0.0
    diag = np.abs(lower) + np.abs(upper) + rng.uniform(1, 2, n)
    return TridiagonalSystem(lower, diag, upper, rng.uniform(-1, 1, n))


def verify_kernels(seed: int = 0, trials: int = 3) -> list[tuple[str, bool, str]]:
    """Check every kernel against its oracle; returns (property, passed, detail) rows."""
    rng = np.random.default_rng(seed)
    rows = []
    for pattern in ("LF", "KS"):
        worst = 0
        for n in (8, 64, 1024, 4096):
            for _ in range(trials):
                x = rng.integers(-1000, 1000, n)
                worst = max(worst, int(np.abs(scan_inclusive(x, pattern) - np.array(oracle_prefix(x))).max()))
        rows.append((f"scan {pattern} equals sequential prefix", worst == 0, f"max diff {worst}"))
    for alg, radix in (("CR", 2), ("PCR", 2), ("LF", 2), ("WM", 2), ("WM", 4), ("WM", 8)):
        worst = 0.0
        for n in (8, 64, 1024):
            for _ in range(trials):
                system = _dominant_system(rng, n)
                x = solve_tridiagonal(system, alg, radix)
                ref = oracle_thomas(system)
                worst = max(worst, float(np.abs(x - ref).max() / (np.abs(ref).max() + 1e-300)))
        rows.append((f"tridiagonal {alg} r={radix} matches Thomas", worst <= 1e-6, f"rel err {worst:.2e}"))
    for n in (8, 256, 4096):
        mixed = [2] + default_plan(n // 2, 8)
        for plan_n in [default_plan(n, r) for r in (2, 4, 8, 16)] + [mixed]:
            x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)).astype(np.complex64)
            err = float(np.abs(fft_transform(x, "forward", plan_n) - oracle_dft(x)).max())
            back = float(np.abs(fft_transform(fft_transform(x, "forward", plan_n), "inverse", plan_n) - x).max())
            ok = err <= 1e-3 and back <= 1e-4
            rows.append((f"fft N={n} plan {plan_n} matches DFT", ok, f"err {err:.1e}, round trip {back:.1e}"))
    return rows


def cmd_kernels_verify(args) -> int:
    rows = verify_kernels(args.seed, args.trials)
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})" for name, ok, detail in rows]
    _write(args, "\n".join(lines) + "\n")
    return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_FAILED


# -- parser -----------------------------------------------------------------------

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefixtune",
                                     description="Occupancy-guided and Bayesian tuning of prefix-operation kernels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--arch", help="architecture descriptor (JSON path or bundled name; "
                                       "default $PREFIXTUNE_ARCH or gm20b)")
    common.add_argument("--out", help="write the report here instead of stdout")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--algo", required=True, choices=ALGORITHMS)
    search.add_argument("--backend", default=None,
                        help="sim, sim:<constants.json>, table:<csv> or cmd:<executable> (default sim)")
    search.add_argument("--cmd-args", default=None,
                        help="argument template for cmd backends, e.g. '{ALGO} {N} {S} {P} {L} {R} {SHUFFLE}'")
    search.add_argument("--timeout", type=_positive_float, default=60.0,
                        help="seconds before an external evaluation is killed")
    search.add_argument("--seed", type=int, default=0)
    search.add_argument("--budget", type=_positive_int, default=40)
    search.add_argument("--window", type=_positive_int, default=5)
    search.add_argument("--workers", type=_positive_int, default=1,
                        help="parallel evaluations where the backend allows it")

    p = sub.add_parser("tune", parents=[common, search], help="tune one problem size")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("exhaustive", parents=[common, search], help="evaluate the whole space")
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_exhaustive)

    p = sub.add_parser("compare", parents=[common, search],
                       help="analytical vs BO vs exhaustive over a size set")
    p.add_argument("--sizes", required=True, help="e.g. 64..1024 or 64,256")
    p.add_argument("--methods", nargs="+", default=list(METHODS), choices=METHODS)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("occupancy", parents=[common], help="occupancy for one resource usage")
    p.add_argument("--threads", type=_positive_int, required=True)
    p.add_argument("--regs", type=int, required=True)
    p.add_argument("--smem", type=int, default=0, help="shared memory per block in bytes")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_occupancy)

    p = sub.add_parser("kernels-verify", parents=[common], help="check kernels against their oracles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=_positive_int, default=3)
    p.set_defaults(func=cmd_kernels_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "backend"):
        args.backend_given = args.backend is not None
        args.backend = args.backend or "sim"
    try:
        return args.func(args)
    except NoFeasibleConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND if isinstance(exc, BackendError) else EXIT_NO_FEASIBLE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except PrefixTuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
