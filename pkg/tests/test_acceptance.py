"""End-to-end agreement between the static analysis, the transformer and the oracle."""

from collections import deque

import pytest

from pmfence.analysis import CallingContext, Mode, Site
from pmfence.interproc import run_interprocedural
from pmfence.ir import Opcode, emit_program, parse_program
from pmfence.oracle import Machine, VerdictKind, check_robustness
from pmfence.oracle.explore import threads_of
from pmfence.transform import transform_program
from programs import read_program
from programs.generator import generate_heap_program, generate_program

SWEEP = range(200)

# Seeds whose repairs once fenced before an existing flushopt
FENCE_ORDER_SEEDS = [0, 18, 20, 44, 79, 89, 92, 109, 133, 139, 144, 163, 166]

HEAP_SWEEP = range(100)

GENERATORS = {"flat": generate_program, "heap": generate_heap_program}


class TestGoldenPrograms:
    """Analyze, repair and simulate each golden program."""

    @pytest.mark.parametrize(
        "name, violations",
        [
            ("two_stores", 2),
            ("flush_after_both", 1),
            ("stack_push", 2),
            ("atomic_handoff", 2),
        ],
    )
    def test_analysis_and_oracle_agree(self, name, violations):
        """Test that each golden program is flagged and the oracle finds it not robust."""
        program = parse_program(read_program(name))

        results = run_interprocedural(program, Mode.OPT)

        assert len(results.violations) == violations
        assert check_robustness(program).kind is VerdictKind.NOT_ROBUST

    @pytest.mark.parametrize("name", ["two_stores", "flush_after_both", "stack_push", "atomic_handoff"])
    def test_repaired_output_round_trips(self, name):
        """Test that the printed repair parses back to a robust program."""
        repaired = transform_program(parse_program(read_program(name)), Mode.OPT).program

        reparsed = parse_program(emit_program(repaired))

        assert reparsed == repaired
        assert run_interprocedural(reparsed, Mode.OPT).violations == []
        assert check_robustness(reparsed).robust


class TestSoundnessSweep:
    """Random programs: no reported violation must mean robust, and repair must always succeed."""

    @pytest.mark.parametrize("seed", SWEEP)
    def test_clean_analysis_implies_robust(self, seed):
        """Test that a program the analysis accepts passes the oracle."""
        program = parse_program(generate_program(seed))
        verdict = check_robustness(program)
        assert verdict.kind is not VerdictKind.RACY

        results = run_interprocedural(program, Mode.OPT)

        if not results.violations:
            assert verdict.robust, f"seed {seed}: analysis accepted a non-robust program"

    @pytest.mark.parametrize("seed", SWEEP)
    def test_opt_repair_is_robust(self, seed):
        """Test that the opt-mode repair analyzes clean and passes the oracle."""
        repaired = transform_program(parse_program(generate_program(seed)), Mode.OPT)

        assert run_interprocedural(repaired.program, Mode.OPT).violations == []
        assert check_robustness(repaired.program).robust

    @pytest.mark.parametrize("mode", [Mode.BASE, Mode.FLIT])
    @pytest.mark.parametrize("seed", range(0, 200, 4))
    def test_other_modes_repair(self, seed, mode):
        """Test base and FliT repairs on a subset of the sweep."""
        repaired = transform_program(parse_program(generate_program(seed)), mode)

        assert check_robustness(repaired.program).robust

    @pytest.mark.parametrize("seed", range(0, 200, 10))
    def test_opt_inserts_no_more_than_base(self, seed):
        """Test that guided repair never costs more instructions than base insertion."""
        program = parse_program(generate_program(seed))

        opt = transform_program(program, Mode.OPT)
        base = transform_program(program, Mode.BASE)

        assert len(opt.inserted) <= len(base.inserted)


class TestRepairRegressions:
    """Repairs that keep an existing flushopt must still fence after it."""

    @pytest.mark.parametrize("mode", [Mode.BASE, Mode.OPT])
    @pytest.mark.parametrize("seed", FENCE_ORDER_SEEDS)
    def test_repair_is_clean_robust_and_durable(self, seed, mode):
        """Test that the repaired program analyzes clean, passes the oracle and persists everything by exit."""
        repaired = transform_program(parse_program(generate_program(seed)), mode)

        assert run_interprocedural(repaired.program, mode).violations == []
        verdict = check_robustness(repaired.program)
        assert verdict.robust
        assert verdict.durable


def _reachable(machine: Machine) -> set[int]:
    """Start addresses of the PM objects reachable from the roots in the machine's memory."""
    seen = set(machine.roots.values())
    queue = deque(seen)
    while queue:
        obj = machine.allocation_at(queue.popleft())
        decl = machine.program.struct(obj.struct)
        for element in range(obj.count):
            for f in decl.fields:
                if not f.type.is_pointer:
                    continue
                value = machine.memory.get(obj.address + element * decl.size + f.offset, 0)
                target = machine.allocation_at(value)
                if target is not None and target.pm and target.address not in seen:
                    seen.add(target.address)
                    queue.append(target.address)
    return seen


class TestHeapSweep:
    """Random programs over fresh PM nodes, arrays, memcpy, ptradd and atomic updates."""

    @pytest.mark.parametrize("seed", HEAP_SWEEP)
    def test_clean_analysis_implies_robust(self, seed):
        """Test that a heap program the analysis accepts passes the oracle."""
        program = parse_program(generate_heap_program(seed))

        results = run_interprocedural(program, Mode.OPT)

        if not results.violations:
            assert check_robustness(program).robust, f"seed {seed}: analysis accepted a non-robust program"

    @pytest.mark.parametrize("seed", HEAP_SWEEP)
    def test_opt_repair_is_robust_and_durable(self, seed):
        """Test that the repaired heap program analyzes clean, passes the oracle and persists everything by exit."""
        repaired = transform_program(parse_program(generate_heap_program(seed)), Mode.OPT)

        assert run_interprocedural(repaired.program, Mode.OPT).violations == []
        verdict = check_robustness(repaired.program)
        assert verdict.robust
        assert verdict.durable

    @pytest.mark.parametrize("seed", HEAP_SWEEP)
    def test_reachable_locals_are_escaped(self, seed):
        """Test that every local pointing at an object reachable from a root is Escaped at that point."""
        program = parse_program(generate_heap_program(seed))
        results = run_interprocedural(program, Mode.OPT)
        machine = Machine(program, threads_of(program, program.harness), bound=500)
        keys = [("main", CallingContext(()))]

        while not machine.finished:
            frame = machine.threads[0].frames[-1]
            site = Site(frame.function.name, frame.block, frame.index)
            analysis = results.analyses[keys[-1]]
            state = analysis.states_before[site]
            reachable = _reachable(machine)
            for name, value in frame.locals.items():
                obj = machine.allocation_at(value)
                if obj is not None and obj.address in reachable:
                    assert name in state.escaped, f"seed {seed}: '{name}' is reachable before {site}"

            instr = frame.instruction
            machine.step(0)
            if instr.op is Opcode.CALL:
                keys.append(analysis.call_contexts[site])
            elif instr.op is Opcode.RET:
                keys.pop()


class TestRepairIdempotence:
    """Repairing a repaired program changes nothing."""

    @pytest.mark.parametrize(
        "kind, seed", [("flat", seed) for seed in range(0, 200, 8)] + [("heap", seed) for seed in range(0, 100, 4)]
    )
    def test_second_opt_pass_inserts_nothing(self, kind, seed):
        """Test that running opt repair on its own output inserts zero instructions."""
        once = transform_program(parse_program(GENERATORS[kind](seed)), Mode.OPT)

        twice = transform_program(once.program, Mode.OPT)

        assert twice.inserted == []
        assert twice.program == once.program


class TestDurability:
    """Single-threaded programs are fully persisted at exit once repaired."""

    @pytest.mark.parametrize("seed", range(0, 200, 2))
    def test_single_threaded_repair_is_durable(self, seed):
        """Test that the end-of-program crash image equals the final memory after opt repair."""
        program = parse_program(generate_program(seed))
        if program.harness is not None:
            pytest.skip("two-thread program")

        repaired = transform_program(program, Mode.OPT)

        assert check_robustness(repaired.program).durable
