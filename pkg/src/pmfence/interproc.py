"""Whole-program analysis over (function, calling context) pairs.

Every function is first analyzed at the all-<Captured, Clean> context; call
sites ask the summary table for a callee result and push the pairs they
need. Results only ever move down the lattice, so the worklist drains.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from pmfence.analysis.context import TOP, CallingContext, SummarizedResult
from pmfence.analysis.env import FunctionEnv
from pmfence.analysis.intraproc import FunctionAnalysis, solve_function
from pmfence.analysis.lattice import EscapeState, Mode, PersistState
from pmfence.analysis.state import AnalysisState, Site
from pmfence.analysis.summaries import Key, SummaryTable, resolve_callsite
from pmfence.config import AnalysisConfig
from pmfence.errors import AnalysisBudgetError
from pmfence.ir.model import Program
from pmfence.pointsto import PmClassification, compute_pm_set
from pmfence.violations import Violation

logger = logging.getLogger(__name__)

# Harness arguments that name a pmroot are published and clean at thread start
_ROOT_ARG = (EscapeState.ESCAPED, PersistState.CLEAN)


@dataclass
class AnalysisResults:
    program: Program
    pm: PmClassification
    mode: Mode
    analyses: dict[Key, FunctionAnalysis] = field(default_factory=dict)
    summaries: dict[Key, SummarizedResult] = field(default_factory=dict)
    violations: list[Violation] = field(default_factory=list)
    iterations: int = 0

    @property
    def contexts_analyzed(self) -> int:
        return len(self.analyses)

    def analyses_of(self, function: str) -> list[FunctionAnalysis]:
        return [a for (fn, _), a in sorted(self.analyses.items()) if fn == function]

    def states_before(self, site: Site) -> list[AnalysisState]:
        """States before `site` under every analyzed context of its function."""
        return [a.states_before[site] for a in self.analyses_of(site.function) if site in a.states_before]

    def stats(self) -> dict[str, int]:
        return {
            "functions": len(self.program.functions),
            "contextsAnalyzed": self.contexts_analyzed,
            "iterations": self.iterations,
        }


def merge_violations(found: Iterable[Violation]) -> list[Violation]:
    """One violation per (kind, site), in site order."""
    merged: dict[tuple, Violation] = {}
    for v in found:
        old = merged.get(v.key)
        merged[v.key] = v if old is None else old.merged(v)
    return sorted(merged.values(), key=lambda v: (v.site, v.kind.value))


def harness_contexts(program: Program, pm: PmClassification) -> list[Key]:
    """Contexts of the threads the harness starts; root arguments are <Escaped, Clean>."""
    keys: list[Key] = []
    for thread in program.entry_threads():
        if not thread.args:
            continue
        fn = program.function(thread.function)
        params = []
        for prm, arg in zip(fn.params, thread.args):
            if isinstance(arg, str) and pm.is_pm_name(fn.name, prm.name):
                params.append(_ROOT_ARG)
            else:
                params.append(TOP)
        keys.append((fn.name, CallingContext(tuple(params))))
    return keys


def _pop_budget(program: Program, pm: PmClassification, max_context_params: int) -> int:
    # contexts per function times how often its callees' results can drop
    keys = 0
    height = 1
    for fn in program.functions:
        n_pm = sum(1 for p in fn.params if pm.is_pm_name(fn.name, p.name))
        keys += 6 ** min(n_pm, max_context_params) + 1
        arity = len(fn.params) + 1
        height = max(height, 3 * arity + arity * arity + 3)
    keys += len(program.entry_threads())
    return keys * (1 + keys * height)


def run_interprocedural(
    program: Program,
    mode: Optional[Mode] = None,
    config: Optional[AnalysisConfig] = None,
    pm: Optional[PmClassification] = None,
) -> AnalysisResults:
    """Analyze every function under every calling context the program needs.

    Raises:
        AnalysisBudgetError: If the worklist exceeds its termination budget
    """
    config = config or AnalysisConfig()
    mode = mode or config.mode
    if config.lineattr is not None:
        program = program.with_lineattr(config.lineattr)
    pm = pm or compute_pm_set(program, config.allocators)

    envs = {
        fn.name: FunctionEnv(program, fn, pm, mode, max_context_params=config.max_context_params)
        for fn in program.functions
    }
    table = SummaryTable()
    results = AnalysisResults(program, pm, mode)

    worklist: deque[Key] = deque()
    queued: set[Key] = set()

    def push(key: Key) -> None:
        if key not in queued:
            worklist.append(key)
            queued.add(key)

    for fn in program.functions:
        push((fn.name, CallingContext.top(len(fn.params))))
    for key in harness_contexts(program, pm):
        push(key)

    budget = _pop_budget(program, pm, config.max_context_params)
    while worklist:
        key = worklist.popleft()
        queued.discard(key)
        results.iterations += 1
        if results.iterations > budget:
            raise AnalysisBudgetError(f"Interprocedural worklist exceeded {budget} pops")
        fn_name, context = key

        def resolve(callee: str, callee_ctx: CallingContext, caller: Key = key) -> SummarizedResult:
            result, pushes = resolve_callsite(table, callee, callee_ctx)
            table.add_caller((callee, callee_ctx), caller)
            for other in table.contexts_of(callee):
                if callee_ctx.leq(other):
                    table.add_caller((callee, other), caller)
            for p in pushes:
                push(p)
            return result

        analysis = solve_function(envs[fn_name], context, resolve)
        results.analyses[key] = analysis
        if table.write(fn_name, context, analysis.summary):
            logger.debug("Summary of %s %s lowered", fn_name, context)
            for caller in sorted(table.callers[key]):
                push(caller)

    results.summaries = dict(table.results)
    results.violations = merge_violations(v for a in results.analyses.values() for v in a.violations)
    logger.info(
        "Analyzed %d function(s) in %d context(s), %d iteration(s): %d violation(s)",
        len(program.functions), results.contexts_analyzed, results.iterations, len(results.violations),
    )
    return results
