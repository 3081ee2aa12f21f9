"""Forward dataflow fixpoint over one function under one calling context."""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from pmfence.errors import AnalysisBudgetError
from pmfence.ir.cfg import CFG, build_cfg
from pmfence.ir.model import Function, Opcode, Program
from pmfence.pointsto import PmClassification, compute_pm_set

from .context import TOP, CallingContext, SummarizedResult, context_at_call
from .env import FunctionEnv
from .lattice import Mode
from .state import AnalysisState, Site, ENTRY_INDEX
from .summaries import Key, SummaryTable, resolve_callsite
from .transfer import entry_state, lowest_of, transfer

logger = logging.getLogger(__name__)

# Maps (callee, context) to the callee's result as currently known
CallResolver = Callable[[str, CallingContext], SummarizedResult]


@dataclass
class FunctionAnalysis:
    function: str
    context: CallingContext
    block_in: dict[str, AnalysisState] = field(default_factory=dict)
    states_before: dict[Site, AnalysisState] = field(default_factory=dict)
    states_after: dict[Site, AnalysisState] = field(default_factory=dict)
    # State at each reachable `ret`, keyed by the ret's site
    exit_states: dict[Site, AnalysisState] = field(default_factory=dict)
    violations: list = field(default_factory=list)
    summary: Optional[SummarizedResult] = None
    call_contexts: dict[Site, tuple[str, CallingContext]] = field(default_factory=dict)
    # (callee, context) pairs the summary table could not answer exactly
    requested: list[Key] = field(default_factory=list)
    iterations: int = 0

    @property
    def exit_state(self) -> Optional[AnalysisState]:
        """Meet over all return points; None if no return is reachable."""
        states = list(self.exit_states.values())
        if not states:
            return None
        out = states[0]
        for s in states[1:]:
            out = out.meet(s)
        return out


def iteration_budget(env: FunctionEnv) -> int:
    """Upper bound on block visits: blocks times the height of the state lattice."""
    fn = env.function
    instrs = [i for b in fn.blocks for i in b.instructions]
    def_sites = sum(1 for i in instrs if i.dest is not None)
    names = len(env.program.roots) + len(fn.params) + 2 * def_sites
    offsets = len({f.offset for s in env.program.structs for f in s.fields}) + 1
    sites = len(instrs) + 1
    locations = names * offsets + names * names
    height = locations * (2 + sites) + names + names * names + 2
    return len(fn.blocks) * (height + 1)


def _summarize(env: FunctionEnv, analysis: FunctionAnalysis, releases: bool) -> SummarizedResult:
    fn = env.function
    arity = len(fn.params)
    if not analysis.exit_states:
        return SummarizedResult.optimistic(arity)

    result: Optional[SummarizedResult] = None
    for site, state in analysis.exit_states.items():
        ret_instr = fn.block(site.block).instructions[site.index]
        ret_value = ret_instr.args[0] if ret_instr.args else None
        params = []
        for prm in fn.params:
            if env.is_pm(prm.name):
                params.append((state.escape_of(prm.name), lowest_of(state, prm.name)))
            else:
                params.append(TOP)
        ret = TOP
        pairs: set[tuple[int, int]] = set()
        if env.is_pm(ret_value):
            ret = (state.escape_of(ret_value), lowest_of(state, ret_value))
            for i, prm in enumerate(fn.params):
                if ret_value in state.aliases(prm.name):
                    pairs.add((i, arity))
        for i, p in enumerate(fn.params):
            for j in range(i + 1, arity):
                if fn.params[j].name in state.aliases(p.name):
                    pairs.add((i, j))
        current = SummarizedResult(
            params=tuple(params),
            ret=ret,
            alias_pairs=frozenset(pairs),
            mark_dirty_escape=state.dirty_escape,
            performs_release=releases,
        )
        result = current if result is None else result.meet(current)
    return result


def solve_function(env: FunctionEnv, context: CallingContext, resolve: CallResolver) -> FunctionAnalysis:
    """Run the fixpoint for `env.function` under `context`, then record states and violations.

    Raises:
        AnalysisBudgetError: If block visits exceed the lattice-height budget
    """
    # Imported here: violations depends on the analysis package
    from pmfence.violations import check_exit, check_instruction

    fn = env.function
    cfg: CFG = build_cfg(fn)
    entry_label = cfg.entry
    entry = entry_state(env, context.params, Site(fn.name, entry_label, ENTRY_INDEX))
    analysis = FunctionAnalysis(fn.name, context)

    def call_result(site: Site, before: AnalysisState, instr) -> SummarizedResult:
        callee_ctx = context_at_call(env, before, instr)
        analysis.call_contexts[site] = (instr.target, callee_ctx)
        return resolve(instr.target, callee_ctx)

    def run_block(label: str, state: AnalysisState, record: bool) -> AnalysisState:
        for index, instr in enumerate(cfg.block(label).instructions):
            site = Site(fn.name, label, index)
            result = call_result(site, state, instr) if instr.op is Opcode.CALL else None
            after = transfer(env, instr, site, state, result)
            if record:
                analysis.states_before[site] = state
                analysis.states_after[site] = after
                analysis.violations.extend(check_instruction(env, site, instr, state, after, context, result))
                if instr.op is Opcode.RET:
                    analysis.exit_states[site] = state
                    ret_value = instr.args[0] if instr.args and isinstance(instr.args[0], str) else None
                    analysis.violations.extend(check_exit(env, site, state, context, ret_value))
            state = after
        return state

    block_out: dict[str, AnalysisState] = {}
    worklist = deque(label for label in cfg.rpo if label not in cfg.unreachable)
    queued = set(worklist)
    budget = iteration_budget(env)

    while worklist:
        label = worklist.popleft()
        queued.discard(label)
        analysis.iterations += 1
        if analysis.iterations > budget:
            raise AnalysisBudgetError(
                f"Fixpoint for {fn.name} {context} exceeded {budget} block visits"
            )

        incoming = [block_out[p] for p in cfg.predecessors(label) if p in block_out]
        if label == entry_label:
            incoming.append(entry)
        if not incoming:
            continue
        state = incoming[0]
        for other in incoming[1:]:
            state = state.meet(other)
        analysis.block_in[label] = state

        out = run_block(label, state, record=False)
        if block_out.get(label) != out:
            block_out[label] = out
            for succ in cfg.successors(label):
                if succ not in queued:
                    worklist.append(succ)
                    queued.add(succ)

    # Final pass over the fixpoint records per-point states and violations
    analysis.call_contexts.clear()
    for label in cfg.rpo:
        if label in analysis.block_in:
            run_block(label, analysis.block_in[label], record=True)

    releases = any(
        instr.op is Opcode.UNLOCK or (instr.op is Opcode.STORE_RELEASE and not env.is_pm(instr.base))
        for b in fn.blocks
        for instr in b.instructions
    )
    releases = releases or any(
        resolve(callee, ctx).performs_release for callee, ctx in analysis.call_contexts.values()
    )
    analysis.summary = _summarize(env, analysis, releases)
    logger.debug(
        "Analyzed %s %s: %d block visit(s), %d violation(s)",
        fn.name, context, analysis.iterations, len(analysis.violations),
    )
    return analysis


def analyze_function(
    f: Function,
    ctx: CallingContext,
    summaries: SummaryTable,
    m: Mode,
    program: Program,
    pm: Optional[PmClassification] = None,
) -> FunctionAnalysis:
    """Analyze `f` under `ctx`, reading callee results from `summaries` without changing it.

    Calls the table cannot answer exactly use the meet of higher contexts or
    the optimistic result, and are listed in `requested`.
    """
    env = FunctionEnv(program, f, pm or compute_pm_set(program), m)
    requested: list[Key] = []

    def resolve(callee: str, callee_ctx: CallingContext) -> SummarizedResult:
        result, pushes = resolve_callsite(summaries, callee, callee_ctx)
        requested.extend(p for p in pushes if p not in requested)
        return result

    analysis = solve_function(env, ctx, resolve)
    analysis.requested = requested
    return analysis
