"""Tests for the bounded interleaving explorer, crash images and robustness verdicts."""

import pytest

from pmfence.analysis import Mode
from pmfence.errors import BoundExceededError, ExecutionFault
from pmfence.ir import parse_program
from pmfence.oracle import (
    VerdictKind,
    canonical_state,
    check_robustness,
    crash_images,
    durable_at_exit,
    enumerate_traces,
    final_images,
    find_race,
    root_words,
    strict_prefix_states,
)
from pmfence.transform import transform_program
from programs import read_program

WORDS = """\
struct Word { v: int @0 } size 64
pmroot x: Word
pmroot y: Word
"""


def _single(body: str) -> str:
    lines = "\n".join(f"    {line}" for line in body.strip().splitlines())
    return WORDS + "\nfunc main() {\nentry:\n" + lines + "\n    ret\n}\n"


def _threads(first: str, second: str) -> str:
    def fn(name: str, body: str) -> str:
        lines = "\n".join(f"    {line}" for line in body.strip().splitlines())
        return f"\nfunc {name}() {{\nentry:\n{lines}\n    ret\n}}\n"

    return WORDS + fn("t1", first) + fn("t2", second) + "\nharness {\n    thread t1()\n    thread t2()\n}\n"


def _only_trace(text: str):
    program = parse_program(text)
    traces = enumerate_traces(program)
    assert len(traces) == 1
    return program, traces[0]


class TestEnumerateTraces:
    """Tests for enumerate_traces."""

    def test_single_thread_has_one_trace(self, two_stores):
        """Test that a single-threaded program has exactly one interleaving."""
        traces = enumerate_traces(two_stores)

        assert len(traces) == 1
        assert not traces[0].deadlocked
        final = canonical_state(dict(traces[0].final_memory), traces[0].objects, two_stores)
        assert root_words(final) == {"x": (1,), "y": (1,)}

    def test_two_threads_two_shared_steps_each(self, atomic_handoff):
        """Test that two threads with two shared accesses each interleave six ways."""
        traces = enumerate_traces(atomic_handoff)

        assert len(traces) == 6
        assert len({t.schedule for t in traces}) == 6

    def test_observer_sees_every_trace(self, atomic_handoff):
        """Test that the observer callback fires once per trace."""
        seen = []

        traces = enumerate_traces(atomic_handoff, observer=seen.append)

        assert seen == traces

    def test_bound_exceeded(self):
        """Test that a thread running past the bound raises."""
        text = WORDS + "\nfunc main() {\nentry:\n    br loop\nloop:\n    store x.v, 1\n    br loop\n}\n"

        with pytest.raises(BoundExceededError):
            enumerate_traces(parse_program(text), bound=5)

    def test_bound_counts_every_thread(self):
        """Test that the bound limits the steps of all threads together."""
        program = parse_program(_threads("store x.v, 1\nflush x.v", "store y.v, 1\nflush y.v"))

        assert len(enumerate_traces(program, bound=6)) == 6
        with pytest.raises(BoundExceededError):
            enumerate_traces(program, bound=5)

    def test_invalid_access_faults(self):
        """Test that dereferencing a null pointer is an execution fault."""
        text = (
            "struct Link { next: ptr Link @0 } size 64\n"
            "func main() {\nentry:\n    n = malloc Link\n    p = load n.next\n    q = load p.next\n    ret\n}\n"
        )

        with pytest.raises(ExecutionFault):
            enumerate_traces(parse_program(text))

    def test_deadlock_is_recorded(self):
        """Test that a lock never released leaves the other thread blocked."""
        program = parse_program(_threads("lock m", "lock m"))

        traces = enumerate_traces(program)

        assert len(traces) == 2
        assert all(t.deadlocked for t in traces)


class TestCrashImages:
    """Tests for crash images under the persistent-buffer model."""

    def test_unflushed_lines_are_independent(self, two_stores):
        """Test that two unflushed stores on two lines give four final images."""
        trace = enumerate_traces(two_stores)[0]

        finals = final_images(trace)

        assert len(finals) == 4
        assert len(list(crash_images(trace))) == 7

    def test_flush_pins_the_line(self):
        """Test that a completed flush forces its line's stores into every later image."""
        program, trace = _only_trace(_single("store x.v, 1\nflush x.v\nstore y.v, 1"))

        finals = final_images(trace)

        assert len(finals) == 2
        assert all(img.prefixes[0][1] == 1 for img in finals)

    def test_flushopt_needs_a_fence(self):
        """Test that flushopt constrains nothing until the same thread fences."""
        _, unfenced = _only_trace(_single("store x.v, 1\nflushopt x.v"))
        _, fenced = _only_trace(_single("store x.v, 1\nflushopt x.v\nfence"))

        assert len(final_images(unfenced)) == 2
        assert len(final_images(fenced)) == 1

    def test_flush_before_any_store_is_ignored(self):
        """Test that flushing an untouched line does not pin later stores."""
        _, trace = _only_trace(_single("flush x.v\nstore x.v, 1"))

        assert len(final_images(trace)) == 2

    def test_empty_trace(self):
        """Test that a program without stores has the single empty image."""
        _, trace = _only_trace(_single("i = 0"))

        images = list(crash_images(trace))

        assert len(images) == 1
        assert images[0].prefixes == ()
        assert images[0].memory == ()

    def test_format_lines(self, two_stores):
        """Test the printed per-line prefixes use byte addresses."""
        trace = enumerate_traces(two_stores)[0]
        image = final_images(trace)[-1]

        assert image.format_lines(trace.lineattr) == ["0x1000: 1", "0x1040: 1"]


class TestCanonicalState:
    """Tests for canonical_state and strict prefix states."""

    def test_pointers_renamed(self, stack_push):
        """Test that the pushed node is named by discovery order, not by address."""
        trace = enumerate_traces(stack_push)[0]

        state = canonical_state(dict(trace.final_memory), trace.objects, stack_push)

        assert state == (("s", "Stack", (("obj", 1, 0),)), ("#1", "Node", (7, 0)))

    def test_allocation_addresses_do_not_matter(self, stack_push):
        """Test that an extra allocation before the node gives the same canonical state."""
        text = read_program("stack_push").replace("    n = pmalloc Node\n", "    d = pmalloc Node\n    n = pmalloc Node\n")
        shifted = parse_program(text)
        a = enumerate_traces(stack_push)[0]
        b = enumerate_traces(shifted)[0]

        assert canonical_state(dict(a.final_memory), a.objects, stack_push) == canonical_state(
            dict(b.final_memory), b.objects, shifted
        )

    def test_strict_prefix_states(self, two_stores):
        """Test that the strict states are the prefixes of the store order."""
        states = strict_prefix_states(enumerate_traces(two_stores), two_stores)

        assert sorted(tuple(sorted(root_words(s).items())) for s in states) == [
            (("x", (0,)), ("y", (0,))),
            (("x", (1,)), ("y", (0,))),
            (("x", (1,)), ("y", (1,))),
        ]


class TestRaces:
    """Tests for find_race."""

    def test_unsynchronized_accesses_race(self):
        """Test that a plain store and a plain load in two threads race."""
        program = parse_program(_threads("store x.v, 1", "r = load x.v"))

        races = [find_race(t) for t in enumerate_traces(program)]

        assert all(r is not None for r in races)
        assert races[0].address == 0x1000
        assert "data race" in races[0].describe()[0]

    def test_lock_orders_accesses(self):
        """Test that the same accesses under one lock do not race."""
        program = parse_program(_threads("lock m\nstore x.v, 1\nunlock m", "lock m\nr = load x.v\nunlock m"))

        assert all(find_race(t) is None for t in enumerate_traces(program))

    def test_atomics_do_not_race(self, atomic_handoff):
        """Test that atomic accesses never race with each other."""
        assert all(find_race(t) is None for t in enumerate_traces(atomic_handoff))

    def test_racy_verdict(self):
        """Test that a racy program gets no robustness verdict."""
        verdict = check_robustness(parse_program(_threads("store x.v, 1", "r = load x.v")))

        assert verdict.kind is VerdictKind.RACY
        assert verdict.race is not None
        assert verdict.counterexample is None


class TestDurableAtExit:
    """Tests for durable_at_exit."""

    def test_unflushed_is_not_durable(self, two_stores):
        """Test that unflushed stores may be lost at exit."""
        trace = enumerate_traces(two_stores)[0]

        assert not durable_at_exit(trace, two_stores)

    def test_flushed_is_durable(self):
        """Test that flushing both lines makes the final state durable."""
        program, trace = _only_trace(_single("store x.v, 1\nstore y.v, 1\nflush x.v\nflush y.v"))

        assert durable_at_exit(trace, program)


class TestCheckRobustness:
    """Tests for check_robustness verdicts."""

    def test_two_stores_counterexample(self, two_stores):
        """Test that y may persist without x."""
        verdict = check_robustness(two_stores)

        assert verdict.kind is VerdictKind.NOT_ROBUST
        assert verdict.traces == 1
        ce = verdict.counterexample
        assert root_words(ce.state) == {"x": (0,), "y": (1,)}
        assert ce.crash_point >= 2
        assert "persisted prefix per line:" in ce.describe()
        assert verdict.durable is False

    def test_flush_between_is_robust(self):
        """Test that flushing the first store before the second is robust and durable."""
        verdict = check_robustness(parse_program(_single("store x.v, 1\nflush x.v\nstore y.v, 1\nflush y.v")))

        assert verdict.robust
        assert verdict.durable is True

    def test_flush_after_both_not_robust(self, flush_after_both):
        """Test that flushing only after both stores is not robust."""
        assert check_robustness(flush_after_both).kind is VerdictKind.NOT_ROBUST

    def test_stack_push_not_robust(self, stack_push):
        """Test that the published node may be lost while the top pointer persists."""
        verdict = check_robustness(stack_push)

        assert verdict.kind is VerdictKind.NOT_ROBUST
        assert verdict.counterexample.state[0][2] == (("obj", 1, 0),)

    def test_atomic_handoff_not_robust(self, atomic_handoff):
        """Test that the reader's copy may persist before the writer's value."""
        verdict = check_robustness(atomic_handoff)

        assert verdict.kind is VerdictKind.NOT_ROBUST
        assert verdict.traces == 6

    @pytest.mark.parametrize("mode", [Mode.BASE, Mode.OPT, Mode.FLIT])
    @pytest.mark.parametrize("name", ["two_stores", "flush_after_both", "stack_push", "atomic_handoff"])
    def test_transformed_golden_programs_are_robust(self, name, mode):
        """Test that every transformed golden program passes the oracle."""
        program = transform_program(parse_program(read_program(name)), mode).program

        assert check_robustness(program).robust

    def test_bound_override(self, two_stores):
        """Test that an explicit bound too small for the program raises."""
        with pytest.raises(BoundExceededError):
            check_robustness(two_stores, bound=1)
