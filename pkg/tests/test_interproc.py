"""Tests for the whole-program context-sensitive analysis."""

import itertools

import pytest

from pmfence.analysis import AbstractLocation, CallingContext, EscapeState, Mode, PersistState, Site
from pmfence.config import AnalysisConfig
from pmfence.interproc import SummaryTable, run_interprocedural
from pmfence.analysis import SummarizedResult, TOP, analyze_function
from pmfence.ir import parse_program
from pmfence.violations import ViolationKind
from pmfence.pointsto import compute_pm_set
from programs.generator import generate_heap_program, generate_program

ESC, CAP = EscapeState.ESCAPED, EscapeState.CAPTURED
DIRTY, CLWB, CLEAN = PersistState.DIRTY, PersistState.CLWB, PersistState.CLEAN

PUBLISH = """\
struct Node { data: int @0, next: ptr Node @8 } size 64
pmroot r: Node

func publish(p: ptr Node) {
entry:
    store p.data, 1
    store r.next, p
    ret
}

func main() {
entry:
    n = pmalloc Node
    call publish(n)
    flush r.next
    flush n.data
    ret
}
"""

RECURSIVE = """\
struct Node { data: int @0, next: ptr Node @8 } size 64
pmroot r: Node

func f(p: ptr Node, k: int) {
entry:
    store p.data, k
    brcond k, again, done
again:
    call g(p, 0)
    br done
done:
    ret
}

func g(p: ptr Node, k: int) {
entry:
    call f(p, k)
    ret
}

func main() {
entry:
    call f(r, 1)
    flush r.data
    ret
}
"""

TWO_CONTEXTS = """\
struct Node { data: int @0, next: ptr Node @8 } size 64
pmroot r: Node

func keep(p: ptr Node) {
entry:
    flush p.data
    ret
}

func main() {
entry:
    n = pmalloc Node
    call keep(n)
    store n.data, 1
    call keep(n)
    store r.next, n
    flush r.next
    ret
}
"""


RELEASE_CHAIN = """\
struct Node {{ data: int @0, next: ptr Node @8 }} size 64
pmroot r: Node

func inner() {{
entry:
    {release}
    ret
}}

func middle(p: ptr Node) {{
entry:
    call inner()
    ret
}}

func outer(p: ptr Node) {{
entry:
    call middle(p)
    ret
}}

func quiet(p: ptr Node) {{
entry:
    store p.data, 1
    flush p.data
    ret
}}

func main() {{
entry:
    call outer(r)
    call quiet(r)
    ret
}}
"""

_VALUES = [(esc, ps) for esc in EscapeState for ps in PersistState]

def _kinds_at(results) -> set[tuple[ViolationKind, str]]:
    return {(v.kind, str(v.site)) for v in results.violations}


class TestSummaryTable:
    """Tests for the summary table."""

    def test_write_reports_changes(self):
        """Test that writes only report a change when the stored result drops."""
        table = SummaryTable()
        ctx = CallingContext.top(1)
        high = SummarizedResult((TOP,))
        low = SummarizedResult(((ESC, DIRTY),))

        assert table.write("f", ctx, high)
        assert not table.write("f", ctx, high)
        assert table.write("f", ctx, low)
        assert not table.write("f", ctx, high)
        assert table.lookup("f", ctx) == low


class TestRunInterprocedural:
    """Tests for run_interprocedural."""

    def test_single_function(self, flush_after_both):
        """Test that a call-free main is analyzed under exactly one context."""
        results = run_interprocedural(flush_after_both, Mode.OPT)

        assert results.contexts_analyzed == 1
        assert list(results.summaries) == [("main", CallingContext(()))]

    def test_callee_summary(self):
        """Test that a callee which stores to and publishes its parameter summarizes it <esc, dirty>."""
        program = parse_program(PUBLISH)

        results = run_interprocedural(program, Mode.OPT)

        ctx = CallingContext(((CAP, CLEAN),))
        assert results.summaries[("publish", ctx)].params == ((ESC, DIRTY),)
        main = results.analyses_of("main")[0]
        after_call = main.states_after[Site("main", "entry", 1)]
        assert "n" in after_call.escaped
        assert after_call.persist_of(AbstractLocation("n", 0)) is DIRTY

    def test_recursion_terminates(self):
        """Test that mutual recursion reaches a fixpoint."""
        program = parse_program(RECURSIVE)

        results = run_interprocedural(program, Mode.OPT)

        assert {fn for fn, _ in results.summaries} == {"f", "g", "main"}
        assert results.iterations > 0

    def test_one_analysis_per_context(self):
        """Test that a function called in two different states is analyzed under both."""
        program = parse_program(TWO_CONTEXTS)

        results = run_interprocedural(program, Mode.OPT)

        contexts = {ctx for fn, ctx in results.analyses if fn == "keep"}
        assert CallingContext(((CAP, CLEAN),)) in contexts
        assert CallingContext(((CAP, DIRTY),)) in contexts

    def test_harness_context_for_root_arguments(self, stack_push):
        """Test that a thread given a pmroot starts with it <esc, clean>."""
        results = run_interprocedural(stack_push, Mode.OPT)

        contexts = {ctx for fn, ctx in results.analyses if fn == "push"}
        assert CallingContext(((ESC, CLEAN), TOP)) in contexts

    def test_lineattr_override(self, two_stores):
        """Test that a config lineattr is applied to the analyzed program."""
        results = run_interprocedural(two_stores, config=AnalysisConfig(lineattr=128))

        assert results.program.lineattr == 128

    def test_stats(self, two_stores):
        """Test the summary statistics reported alongside violations."""
        stats = run_interprocedural(two_stores, Mode.OPT).stats()

        assert stats == {"functions": 1, "contextsAnalyzed": 1, "iterations": 1}


class TestGoldenPrograms:
    """Violations reported on the golden programs."""

    def test_two_stores(self, two_stores):
        """Test the two-root program: a double dirty escape and unflushed roots at exit."""
        results = run_interprocedural(two_stores, Mode.OPT)

        assert _kinds_at(results) == {
            (ViolationKind.DOUBLE_DIRTY_ESCAPED, "main:entry.1"),
            (ViolationKind.EXIT_UNFLUSHED, "main:entry.2"),
        }

    def test_flush_after_both(self, flush_after_both):
        """Test that storing both roots before flushing reports one violation with both locations."""
        results = run_interprocedural(flush_after_both, Mode.OPT)

        assert len(results.violations) == 1
        v = results.violations[0]
        assert v.kind is ViolationKind.DOUBLE_DIRTY_ESCAPED
        assert str(v.site) == "main:entry.1"
        assert v.locations == (AbstractLocation("x", 0), AbstractLocation("y", 0))

    def test_stack_push(self, stack_push):
        """Test push: the commit store is a double dirty escape and the node is left unflushed."""
        results = run_interprocedural(stack_push, Mode.OPT)

        assert _kinds_at(results) == {
            (ViolationKind.DOUBLE_DIRTY_ESCAPED, "push:entry.4"),
            (ViolationKind.EXIT_UNFLUSHED, "push:entry.6"),
        }
        exit_v = next(v for v in results.violations if v.kind is ViolationKind.EXIT_UNFLUSHED)
        assert exit_v.locations == (AbstractLocation("n", 0), AbstractLocation("n", 8))

    def test_atomic_handoff_modes(self, atomic_handoff):
        """Test that the reader's store is flagged in opt mode but not in flit mode."""
        opt = run_interprocedural(atomic_handoff, Mode.OPT)
        flit = run_interprocedural(atomic_handoff, Mode.FLIT)

        opt_dde = [v for v in opt.violations if v.kind is ViolationKind.DOUBLE_DIRTY_ESCAPED]
        assert [str(v.site) for v in opt_dde] == ["reader:entry.1"]
        assert opt_dde[0].load_induced
        assert not [v for v in flit.violations if v.kind is ViolationKind.DOUBLE_DIRTY_ESCAPED]

    @pytest.mark.parametrize("seed", range(30))
    def test_random_programs_converge(self, seed):
        """Test that every generated program reaches a fixpoint with sorted, unique violations."""
        results = run_interprocedural(parse_program(generate_program(seed)), Mode.OPT)

        keys = [v.key for v in results.violations]
        assert len(keys) == len(set(keys))
        assert [v.site for v in results.violations] == sorted(v.site for v in results.violations)


def _contexts(program, fn, pm) -> list[CallingContext]:
    """Every context of `fn`: all six values for PM parameters, TOP for the rest."""
    choices = [_VALUES if pm.is_pm_name(fn.name, p.name) else [TOP] for p in fn.params]
    return [CallingContext(tuple(values)) for values in itertools.product(*choices)]


class TestSummaryProperties:
    """Summaries are monotone in their context, agree with inlining and carry releases up the call chain."""

    @pytest.mark.parametrize(
        "text", [PUBLISH, TWO_CONTEXTS] + [generate_heap_program(seed) for seed in range(20)],
        ids=["publish", "two_contexts"] + [f"heap{seed}" for seed in range(20)],
    )
    def test_context_monotonicity(self, text):
        """Test that a higher calling context never yields a lower summary."""
        program = parse_program(text)
        pm = compute_pm_set(program)
        table = SummaryTable()
        table.results = dict(run_interprocedural(program, Mode.OPT).summaries)
        for fn in program.functions:
            if not fn.params:
                continue
            summaries = {
                ctx: analyze_function(fn, ctx, table, Mode.OPT, program, pm).summary
                for ctx in _contexts(program, fn, pm)
            }
            for high, low in itertools.permutations(summaries, 2):
                if low.leq(high):
                    assert summaries[low].leq(summaries[high]), f"{fn.name}: {low} <= {high}"

    @pytest.mark.parametrize("seed", range(60))
    def test_summaries_do_not_hide_inlined_violations(self, seed):
        """Test that whenever the inlined program has a violation, the program with calls has one too."""
        summarized = run_interprocedural(parse_program(generate_heap_program(seed)), Mode.OPT)
        inlined = run_interprocedural(parse_program(generate_heap_program(seed, inline=True)), Mode.OPT)

        if inlined.violations:
            assert summarized.violations, f"seed {seed}: calls hid {_kinds_at(inlined)}"

    @pytest.mark.parametrize("release", ["lock m\n    unlock m", "f = malloc Node\n    store_release f.data, 1"])
    def test_performs_release_reaches_every_caller(self, release):
        """Test that a release deep in the call chain marks every summary on the way up, and nothing else."""
        results = run_interprocedural(parse_program(RELEASE_CHAIN.format(release=release)), Mode.OPT)

        for (fn, _), summary in results.summaries.items():
            assert summary.performs_release is (fn != "quiet"), fn
