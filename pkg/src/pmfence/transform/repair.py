"""Analysis-guided flush and fence insertion, and the FliT rewrite.

Flushes go where dirtiness starts: right after the store or dirtying load
named in a violation's provenance. Fences go right before the instruction
that reports the violation, so every flushopt issued earlier is settled
by the time a second dirty location would become visible.
"""

import logging
from typing import Optional

from pmfence.analysis.env import FunctionEnv, base_name
from pmfence.analysis.lattice import Mode, PersistState
from pmfence.analysis.state import ArraySlot, Site
from pmfence.interproc import AnalysisResults
from pmfence.ir.model import Instruction, Opcode, Program
from pmfence.violations import Violation, ViolationKind

from .base import insert_base
from .rewrite import FENCE, InsertionPlan, flushopt_for, settle_point

logger = logging.getLogger(__name__)

_DIRTYING = frozenset(
    {
        Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.STOREIDX,
        Opcode.RMW, Opcode.CAS, Opcode.MEMCPY, Opcode.LOAD_ATOMIC,
    }
)
_ATOMIC_STORES = frozenset({Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.RMW, Opcode.CAS})


def _origin(v: Violation) -> str:
    return f"{v.kind.value} at {v.site}"


class _FlushPlanner:
    def __init__(self, results: AnalysisResults):
        self.results = results
        self.program = results.program
        self.plan = InsertionPlan()
        self.envs = {
            fn.name: FunctionEnv(self.program, fn, results.pm, results.mode) for fn in self.program.functions
        }
        self.seen: set[Site] = set()

    def flush_site(self, site: Site, origin: str) -> None:
        if site in self.seen:
            return
        self.seen.add(site)
        env = self.envs[site.function]
        if site.is_entry:
            self._flush_entry(env, origin)
            return
        instr = env.instruction_at(site)
        if instr.op is Opcode.CALL:
            self._flush_callee(site, origin)
        elif instr.op in _DIRTYING and not instr.relax and env.is_pm(instr.base):
            self.plan.after(site, flushopt_for(instr), origin)

    def _flush_entry(self, env: FunctionEnv, origin: str) -> None:
        # dirtiness handed in by a caller is flushed before the body runs
        fn = env.function
        first = Site(fn.name, fn.entry.label, 0)
        for prm in fn.params:
            if not env.is_pm(prm.name):
                continue
            decl = env.struct_of(prm.name)
            seen_offsets: set[int] = set()
            for f in decl.fields:
                key = env.key_offset(f.offset)
                if key in seen_offsets:
                    continue
                seen_offsets.add(key)
                self.plan.before(first, Instruction(Opcode.FLUSHOPT, base=prm.name, field=f.name), origin)

    def _flush_callee(self, site: Site, origin: str) -> None:
        """Follow a call's dirtiness into the callee sites that produced it."""
        for analysis in self.results.analyses_of(site.function):
            key = analysis.call_contexts.get(site)
            callee = self.results.analyses.get(key) if key is not None else None
            if callee is None:
                continue
            fn = self.program.function(callee.function)
            for ret_site, state in callee.exit_states.items():
                ret = fn.block(ret_site.block).instructions[ret_site.index]
                interface = set(fn.param_names)
                if ret.args and isinstance(ret.args[0], str):
                    interface.add(ret.args[0])
                names = set()
                for name in interface:
                    names |= state.aliases(name)
                for loc in state.non_clean():
                    ref = loc.array if isinstance(loc, ArraySlot) else loc.ref
                    if ref in names or base_name(ref) in interface:
                        for s in state.sites_of(loc):
                            self.flush_site(s, origin)


# Instructions a load's flush may be deferred across
_QUIET = frozenset(
    {
        Opcode.ASSIGN, Opcode.LOAD, Opcode.LOAD_ATOMIC, Opcode.LOADIDX, Opcode.ADDROF, Opcode.PTRADD,
        Opcode.FLUSH, Opcode.FLUSHOPT, Opcode.FLUSHRANGE, Opcode.FENCE, Opcode.FLIT_HELP,
    }
)


def _deferred_flush(program: Program, v: Violation, site: Site) -> Optional[Instruction]:
    """The flushopt for the atomic load at `site` if it can wait until just before `v.site`."""
    if not v.load_induced or site.is_entry:
        return None
    if (site.function, site.block) != (v.site.function, v.site.block) or site.index >= v.site.index:
        return None
    instrs = program.function(site.function).block(site.block).instructions
    load = instrs[site.index]
    if load.op is not Opcode.LOAD_ATOMIC:
        return None
    for instr in instrs[site.index + 1: v.site.index]:
        if instr.op not in _QUIET or instr.dest == load.base:
            return None
    return flushopt_for(load)


def insert_flushes(program: Program, results: AnalysisResults, mode: Optional[Mode] = None) -> Program:
    """Add the flushes that every reported violation needs.

    In base mode this is plain base insertion and `results` only supplies
    the PM classification.
    """
    mode = mode or results.mode
    if mode is Mode.BASE:
        rewritten, _ = insert_base(program, results.pm)
        return rewritten
    planner = _FlushPlanner(results)
    deferred = []
    for v in results.violations:
        for site in sorted(v.provenance):
            flush = _deferred_flush(program, v, site)
            if flush is None:
                planner.flush_site(site, _origin(v))
            else:
                deferred.append((site, v, flush))
    # load-induced: flush right before the store that needs it
    for site, v, flush in deferred:
        if site not in planner.seen:
            planner.plan.before(v.site, flush, _origin(v))
    rewritten, count = planner.plan.apply(program)
    logger.debug("Inserted %d flush(es) for %d violation(s)", count, len(results.violations))
    return rewritten


def insert_fences(program: Program, results: AnalysisResults) -> Program:
    """Fences before violating instructions; at exits only once those are gone."""
    plan = InsertionPlan()
    at_instructions = [v for v in results.violations if not v.is_exit]
    if at_instructions:
        for v in at_instructions:
            if v.kind is ViolationKind.POINTER_ARITHMETIC:
                block = program.function(v.site.function).block(v.site.block)
                pos = settle_point(block, v.site.index)
                plan.before(Site(v.site.function, v.site.block, pos), FENCE, _origin(v))
            else:
                plan.before(v.site, FENCE, _origin(v))
    else:
        for v in results.violations:
            plan.before(v.site, FENCE, _origin(v))
        for analysis in results.analyses.values():
            for ret_site, state in analysis.exit_states.items():
                if any(ps is PersistState.CLWB for ps in state.non_clean().values()):
                    plan.before(ret_site, FENCE, f"Clwb at exit {ret_site}")
    rewritten, count = plan.apply(program)
    logger.debug("Inserted %d fence(s)", count)
    return rewritten


def _same_access(a: Instruction, b: Instruction) -> bool:
    return a.base == b.base and a.field == b.field and a.index == b.index


def _flit_access(op: Opcode, instr: Instruction) -> Instruction:
    return Instruction(op, base=instr.base, field=instr.field, index=instr.index)


def apply_flit(program: Program, results: AnalysisResults) -> Program:
    """Bracket atomic PM stores with FliT counters and let atomic loads help pending flushes."""
    plan = InsertionPlan()
    for fn in program.functions:
        env = FunctionEnv(program, fn, results.pm, Mode.FLIT)
        for block in fn.blocks:
            instrs = block.instructions
            for index, instr in enumerate(instrs):
                if instr.relax or not env.is_pm(instr.base) or instr.field is None:
                    continue
                site = Site(fn.name, block.label, index)
                origin = f"flit: {instr.op.value} at {site}"
                prev = instrs[index - 1] if index > 0 else None
                nxt = instrs[index + 1] if index + 1 < len(instrs) else None
                if instr.op in _ATOMIC_STORES:
                    if prev is not None and prev.op is Opcode.FLIT_INC and _same_access(prev, instr):
                        continue
                    plan.before(site, _flit_access(Opcode.FLIT_INC, instr), origin)
                    plan.after(site, flushopt_for(instr), origin)
                    plan.after(site, FENCE, origin)
                    plan.after(site, _flit_access(Opcode.FLIT_DEC, instr), origin)
                elif instr.op is Opcode.LOAD_ATOMIC:
                    if nxt is not None and nxt.op is Opcode.FLIT_HELP and _same_access(nxt, instr):
                        continue
                    plan.after(site, _flit_access(Opcode.FLIT_HELP, instr), origin)
    rewritten, count = plan.apply(program)
    logger.debug("FliT rewrite added %d instruction(s)", count)
    return rewritten

