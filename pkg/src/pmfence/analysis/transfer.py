"""Transfer functions for the escape and persistency analyses.

Every instruction is applied in three steps:

1. stored PM values (and their aliases) escape,
2. persistency effects on the accessed locations,
3. the destination is killed and redefined.

Locations are affected before the destination is redefined so that
`y = load y.next` reads through the old `y`.
"""

import logging
from typing import Optional

from pmfence.ir.model import Instruction, Opcode

from .context import SummarizedResult, expand_summary
from .env import FunctionEnv, ghost_name
from .lattice import EscapeState, Mode, PersistState
from .state import AnalysisState, ArraySlot, Location, Site, StateBuilder

logger = logging.getLogger(__name__)

_STORES = frozenset({Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE})
_VALUE_STORES = frozenset({Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.STOREIDX})


def touches_pm(env: FunctionEnv, instr: Instruction) -> bool:
    """False when every operand is non-PM; such instructions only kill their destination."""
    if instr.op is Opcode.FENCE:
        return True
    names = [instr.base, instr.dest, *instr.args]
    return any(env.is_pm(n) for n in names)


# -- step 1: escaping stored values -------------------------------------------

def _escape_operands(env: FunctionEnv, instr: Instruction, b: StateBuilder) -> None:
    op = instr.op
    if op in _VALUE_STORES or op is Opcode.RMW:
        value = instr.args[0]
    elif op is Opcode.CAS:
        value = instr.args[1]
    else:
        return
    if env.is_pm(value):
        b.escape(value)


# -- step 2: persistency --------------------------------------------------------

def _dirty(env: FunctionEnv, b: StateBuilder, loc: Optional[Location], site: Site, store: bool) -> None:
    if loc is None:
        return
    b.set_persist(loc, PersistState.DIRTY, frozenset({site}))
    if store and (isinstance(loc, ArraySlot) or loc.ref in b.escaped):
        b.dirty_escape = True


def _flushopt(b: StateBuilder, loc: Optional[Location]) -> None:
    if loc is not None and b.persist_of(loc) is PersistState.DIRTY:
        b.set_persist(loc, PersistState.CLWB)


def _fence(b: StateBuilder) -> None:
    for loc in [l for l, ps in b.pmap.items() if ps is PersistState.CLWB]:
        b.set_persist(loc, PersistState.CLEAN)
    for slot in [s for s, ps in b.arraypmap.items() if ps is PersistState.CLWB]:
        b.set_persist(slot, PersistState.CLEAN)


def _atomic_load_dirties(env: FunctionEnv, instr: Instruction) -> bool:
    return env.mode is not Mode.FLIT and not instr.relax


def _persist_fields(env: FunctionEnv, instr: Instruction, site: Site, b: StateBuilder) -> None:
    op = instr.op
    if op in (Opcode.STOREIDX, Opcode.LOADIDX) or instr.index is not None:
        return
    if not env.is_pm(instr.base):
        return
    if op in _STORES:
        if not instr.relax:
            _dirty(env, b, env.field_location(instr.base, instr.field), site, store=True)
    elif op is Opcode.LOAD_ATOMIC:
        if _atomic_load_dirties(env, instr):
            _dirty(env, b, env.field_location(instr.base, instr.field), site, store=False)
    elif op in (Opcode.RMW, Opcode.CAS):
        # fence, then the atomic load, then the atomic store
        _fence(b)
        loc = env.field_location(instr.base, instr.field)
        if _atomic_load_dirties(env, instr):
            _dirty(env, b, loc, site, store=False)
        _dirty(env, b, loc, site, store=True)
    elif op is Opcode.MEMCPY:
        for loc in env.covered_locations(instr.base, instr.args[1]):
            _dirty(env, b, loc, site, store=True)
    elif op is Opcode.FLUSH:
        loc = env.field_location(instr.base, instr.field)
        if loc is not None:
            b.set_persist(loc, PersistState.CLEAN)
    elif op is Opcode.FLUSHOPT:
        _flushopt(b, env.field_location(instr.base, instr.field))
    elif op is Opcode.FLUSHRANGE:
        for loc in env.covered_locations(instr.base, instr.args[0]):
            _flushopt(b, loc)


def _persist_array(env: FunctionEnv, instr: Instruction, site: Site, b: StateBuilder) -> None:
    if instr.index is None or not env.is_pm(instr.base):
        return
    slot = ArraySlot(instr.base, instr.index)
    if instr.op is Opcode.STOREIDX:
        if not instr.relax:
            _dirty(env, b, slot, site, store=True)
    elif instr.op is Opcode.FLUSH:
        b.set_persist(slot, PersistState.CLEAN)
    elif instr.op is Opcode.FLUSHOPT:
        _flushopt(b, slot)


# -- step 3: definitions --------------------------------------------------------

def _source_facts(b: StateBuilder, source: str) -> tuple[set[str], bool]:
    return b.aliases(source), source in b.escaped


def _define(env: FunctionEnv, instr: Instruction, site: Site, b: StateBuilder) -> None:
    dest = instr.dest
    if dest is None:
        return
    op = instr.op

    if op is Opcode.ASSIGN and instr.args[0] == dest:
        return

    source: Optional[str] = None
    if op is Opcode.ASSIGN and isinstance(instr.args[0], str):
        source = instr.args[0]
    elif op in (Opcode.ADDROF, Opcode.PTRADD):
        source = instr.base
    src_aliases, src_escaped = _source_facts(b, source) if source is not None else (set(), False)

    ghost = b.kill(dest, ghost_name(dest, site))
    if not env.is_pm(dest):
        return
    if dest in src_aliases:
        src_aliases = (src_aliases - {dest}) | ({ghost} if ghost else set())

    if source is not None and env.is_pm(source):
        for alias in src_aliases:
            b.add_alias(dest, alias)
        if src_escaped or op is Opcode.PTRADD:
            b.escaped.add(dest)
    elif op in (Opcode.LOAD, Opcode.LOAD_ATOMIC, Opcode.LOADIDX, Opcode.RMW, Opcode.CAS):
        b.escaped.add(dest)
    # pmalloc: fresh, Captured, no aliases, every field Clean


# -- public entry points ------------------------------------------------------

def transfer(
    env: FunctionEnv,
    instr: Instruction,
    site: Site,
    state: AnalysisState,
    call_result: Optional[SummarizedResult] = None,
) -> AnalysisState:
    """State after `instr`. Calls need the callee's summarized result."""
    b = StateBuilder(state)
    if instr.op is Opcode.CALL:
        result = call_result or SummarizedResult.optimistic(len(instr.args))
        return expand_summary(env, state, site, instr, result)

    if not touches_pm(env, instr):
        if instr.dest is not None:
            b.kill(instr.dest, ghost_name(instr.dest, site))
        return b.freeze()

    _escape_operands(env, instr, b)
    if instr.op is Opcode.FENCE:
        _fence(b)
    _persist_fields(env, instr, site, b)
    _persist_array(env, instr, site, b)
    _define(env, instr, site, b)
    return b.freeze()


def transfer_escape(env: FunctionEnv, instr: Instruction, site: Site, state: AnalysisState) -> AnalysisState:
    """Escape and aliasing effects only."""
    if instr.op is Opcode.CALL:
        return transfer(env, instr, site, state)
    b = StateBuilder(state)
    if not touches_pm(env, instr):
        return _kill_only(env, instr, site, b)
    _escape_operands(env, instr, b)
    _define(env, instr, site, b)
    return b.freeze()


def _kill_only(env: FunctionEnv, instr: Instruction, site: Site, b: StateBuilder) -> AnalysisState:
    if instr.dest is not None:
        b.kill(instr.dest, ghost_name(instr.dest, site))
    return b.freeze()


def transfer_persist(env: FunctionEnv, instr: Instruction, site: Site, state: AnalysisState) -> AnalysisState:
    """Persistency effects on struct fields only (fences also settle array slots)."""
    b = StateBuilder(state)
    if instr.op is Opcode.FENCE:
        _fence(b)
    elif touches_pm(env, instr):
        _persist_fields(env, instr, site, b)
    return b.freeze()


def transfer_array(env: FunctionEnv, instr: Instruction, site: Site, state: AnalysisState) -> AnalysisState:
    """Array-slot effects of loadidx/storeidx/flushes, and loss of index variables."""
    b = StateBuilder(state)
    _persist_array(env, instr, site, b)
    if instr.dest is not None:
        for slot in [s for s in b.arraypmap if instr.dest in (s.index, s.array)]:
            b.set_persist(slot, PersistState.CLEAN)
    return b.freeze()


def entry_state(env: FunctionEnv, context_params, site: Site) -> AnalysisState:
    """Initial state from a calling context: roots Escaped, parameter fields at the context's state."""
    b = StateBuilder(AnalysisState())
    b.escaped.update(env.program.root_names)
    sites = frozenset({site})
    for prm, (esc, ps) in zip(env.function.params, context_params):
        if not env.is_pm(prm.name):
            continue
        if esc is EscapeState.ESCAPED:
            b.escaped.add(prm.name)
        for loc in env.locations_for(prm.name):
            b.set_persist(loc, ps, sites)
    return b.freeze()


def lowest_of(state: AnalysisState, ref: str) -> PersistState:
    states = [ps for loc, ps in state.pmap if loc.ref == ref]
    states.extend(ps for slot, ps in state.arraypmap if slot.array == ref)
    return min(states, default=PersistState.CLEAN)

