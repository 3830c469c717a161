import dataclasses
import json
import os
import stat
import time

import pytest

from prefixtune.backends import (
    INVALID, OK, TIMEOUT, CommandBackend, CommandSpec, MeasurementTable, SimBackend, SimConstants,
    TableBackend, dump_table, external_evaluate, make_backend, sim_cost, table_lookup,
)
from prefixtune.bayes import tune_bo
from prefixtune.errors import ValidationError
from prefixtune.kernels.problem import ProblemInstance
from prefixtune.metrics import exhaustive_search
from prefixtune.space import KernelConfig, MultiKernelPlan, enumerate_space

CFG = KernelConfig(0, 2, 64, 2, True)


def script(tmp_path, name, body):
    path = tmp_path / name
    path.write_text("#!/bin/sh\n" + body + "\n")
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


# -- simulated cost

def test_shuffle_strictly_cheaper(arch):
    inst = ProblemInstance("ts_cr", 32, 2 ** 21)
    plain = dataclasses.replace(CFG, shuffle=False, s_elems=128)
    assert sim_cost(CFG, inst, arch) < sim_cost(plain, inst, arch)


def test_extra_kernel_costs_launch_overhead(arch):
    k = KernelConfig(2048, 8, 256, 8)
    inst = ProblemInstance("fft", 2 ** 13, 2 ** 13)
    one = sim_cost(MultiKernelPlan((k,)), inst, arch)
    two = sim_cost(MultiKernelPlan((k, k)), inst, arch)
    # the second kernel covers the remaining 4 bits in 2 radix-8 steps instead of 3
    per_step = (two - one - SimConstants().c3)
    assert per_step > 0
    same = sim_cost(MultiKernelPlan((k, k)), ProblemInstance("fft", 2 ** 18, 2 ** 8), arch)
    half = sim_cost(MultiKernelPlan((k,)), ProblemInstance("fft", 2 ** 9, 2 ** 17), arch)
    assert same == pytest.approx(2 * half + SimConstants().c3)


def test_sim_cost_by_hand(arch):
    # fft N=256, (256,4,64): 24 blocks, 75%; 2^18 blocks over 48 slots -> 5462 waves; 4 steps
    inst = ProblemInstance("fft", 256, 2 ** 18)
    expected = 5462 * 4 * (1 + 0.25 * 4 + 1.0) / 0.75
    assert sim_cost(KernelConfig(256, 4, 64, 4), inst, arch) == pytest.approx(expected)


def test_sim_backend_invalid_and_positive(arch, sim):
    assert sim.evaluate(KernelConfig(0, 2, 64, 4, True), "ts_cr", 64).status == INVALID
    for c in enumerate_space("fft", 256, arch):
        m = sim.evaluate(c, "fft", 256)
        assert m.status == OK and m.time > 0


def test_sim_optimum_equals_brute_force(arch, sim):
    space = enumerate_space("fft", 256, arch)
    best, evals = exhaustive_search(space, sim)
    assert evals[best].time == min(sim.evaluate(c, "fft", 256).time for c in space)


def test_sim_constants_file(tmp_path, arch):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"c3": 10.0}))
    assert make_backend(f"sim:{path}", arch).constants.c3 == 10.0
    path.write_text(json.dumps({"c9": 1.0}))
    with pytest.raises(ValidationError):
        make_backend(f"sim:{path}", arch)


# -- measurement tables

def test_table_lookup_hit_and_miss():
    table = MeasurementTable(provenance="hand-written")
    table.add(CFG, "ts_cr", 64, 12.5)
    assert table_lookup(table, CFG, "ts_cr", 64).time == 12.5
    assert table_lookup(table, CFG, "ts_cr", 128).status == INVALID
    with pytest.raises(ValidationError):
        table.add(CFG, "ts_cr", 64, 1.0)


def test_table_text_format():
    table = MeasurementTable(provenance="bench")
    table.add(CFG, "ts_cr", 64, 12.5)
    text = table.dumps()
    assert text.splitlines()[:2] == ["# bench", "algorithm,N,S,P,L,r,shuffle,time_us"]
    assert MeasurementTable.loads(text).rows == table.rows


@pytest.mark.parametrize("body,needle", [
    ("a,b\n", "header"),
    ("algorithm,N,S,P,L,r,shuffle,time_us\nts_cr,64,0,2,64,2,1,1\nts_cr,64,0,2,64,2,1,2\n", "duplicate"),
    ("algorithm,N,S,P,L,r,shuffle,time_us\nts_cr,64,0,2,64,2,1,-1\n", "positive"),
    ("algorithm,N,S,P,L,r,shuffle,time_us\nts_cr,64,0,2,64,2,1,abc\n", "bad time"),
])
def test_table_load_errors(body, needle):
    with pytest.raises(ValidationError, match=needle):
        MeasurementTable.loads(body)


def test_table_round_trip_preserves_tuning(tmp_path, arch, sim):
    spaces = [enumerate_space("ts_wm", 1024, arch), enumerate_space("fft", 8192, arch)]
    path = tmp_path / "sim.csv"
    dump_table(sim, spaces, provenance="sim dump").save(path)
    table = make_backend(f"table:{path}", arch)
    assert isinstance(table, TableBackend)
    for space in spaces:
        for seed in (0, 1):
            assert tune_bo(space, sim, seed=seed).history == tune_bo(space, table, seed=seed).history


# -- external commands

def test_command_value(tmp_path):
    spec = CommandSpec(script(tmp_path, "ok.sh", 'echo 123.5'))
    m = external_evaluate(spec, CFG, "ts_cr", 64)
    assert (m.status, m.time) == (OK, 123.5)


def test_command_receives_placeholders(tmp_path):
    exe = script(tmp_path, "args.sh", 'echo "$@" > "$(dirname "$0")/args.txt"; echo 1')
    external_evaluate(CommandSpec(exe), CFG, "ts_cr", 64)
    assert (tmp_path / "args.txt").read_text().split() == ["ts_cr", "64", "0", "2", "64", "2", "1"]
    spec = CommandSpec(exe, "--n={N} --algo {ALGO}")
    external_evaluate(spec, CFG, "ts_cr", 64)
    assert (tmp_path / "args.txt").read_text().split() == ["--n=64", "--algo", "ts_cr"]


def test_command_nonzero_exit(tmp_path):
    m = external_evaluate(CommandSpec(script(tmp_path, "bad.sh", "echo oops >&2; exit 3")), CFG, "ts_cr", 64)
    assert m.status == INVALID and "3" in m.detail


@pytest.mark.parametrize("output", ["", "abc", "1\\n2", "-4", "nan"])
def test_command_malformed_output(tmp_path, output):
    m = external_evaluate(CommandSpec(script(tmp_path, "m.sh", f'printf "{output}\\n"')), CFG, "ts_cr", 64)
    assert m.status == INVALID


def test_command_missing_executable(tmp_path):
    m = external_evaluate(CommandSpec(str(tmp_path / "nope")), CFG, "ts_cr", 64)
    assert m.status == INVALID and "spawn" in m.detail


def _alive(pid):
    """True if pid is running; an unreaped zombie counts as dead."""
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    try:
        with open(f"/proc/{pid}/status") as fh:
            return "\tZ" not in next(line for line in fh if line.startswith("State:"))
    except FileNotFoundError:
        return False


def test_command_timeout_kills_child(tmp_path):
    exe = script(tmp_path, "slow.sh", 'sleep 30 & echo $! > "$(dirname "$0")/pid"; wait')
    start = time.monotonic()
    m = external_evaluate(CommandSpec(exe, timeout=2), CFG, "ts_cr", 64)
    elapsed = time.monotonic() - start
    assert m.status == TIMEOUT
    assert elapsed < 3.0
    pid = int((tmp_path / "pid").read_text())
    time.sleep(0.2)
    assert not _alive(pid)


def test_command_spec_validation():
    with pytest.raises(ValidationError):
        CommandSpec("x", timeout=0)


def test_make_backend_selectors(tmp_path, arch):
    assert isinstance(make_backend("sim", arch), SimBackend)
    cmd = make_backend("cmd:/bin/true", arch, timeout=5)
    assert isinstance(cmd, CommandBackend) and cmd.spec.timeout == 5
    assert not cmd.concurrency_safe
    for bad in ("gpu", "table:", "cmd:"):
        with pytest.raises(ValidationError):
            make_backend(bad, arch)
