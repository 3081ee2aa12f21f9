"""Robustness and durability violations.

check_instruction runs on every program point with the states before and
after the instruction; check_exit runs on the state at each return.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from pmfence.analysis.context import CallingContext, SummarizedResult
from pmfence.analysis.env import FunctionEnv, base_name
from pmfence.analysis.lattice import Mode
from pmfence.analysis.state import AbstractLocation, AnalysisState, ArraySlot, Location, Site
from pmfence.ir.model import Instruction, Opcode

logger = logging.getLogger(__name__)


class ViolationKind(str, Enum):
    EXIT_UNFLUSHED = "ExitUnflushed"
    DOUBLE_DIRTY_ESCAPED = "DoubleDirtyEscaped"
    RELEASE_WHILE_DIRTY = "ReleaseWhileDirty"
    CALLSITE_DIRTY_ESCAPE = "CallsiteDirtyEscape"
    ARRAY_UNFLUSHED = "ArrayUnflushed"
    INDEX_LOST = "IndexLost"
    POINTER_ARITHMETIC = "PointerArithmetic"
    DURABILITY = "Durability"


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


EXIT_KINDS = frozenset({ViolationKind.EXIT_UNFLUSHED, ViolationKind.ARRAY_UNFLUSHED, ViolationKind.DURABILITY})


@dataclass(frozen=True)
class Violation:
    """One detected defect.

    `provenance` lists the sites whose unpersisted writes the repair has to
    flush; `load_induced` marks violations whose other dirty locations all
    come from atomic loads.
    """

    kind: ViolationKind
    site: Site
    locations: tuple[Location, ...]
    context: CallingContext
    severity: Severity = Severity.ERROR
    load_induced: bool = False
    provenance: frozenset[Site] = field(default=frozenset(), compare=False)

    @property
    def key(self) -> tuple[ViolationKind, Site]:
        return (self.kind, self.site)

    @property
    def is_exit(self) -> bool:
        return self.kind in EXIT_KINDS

    def merged(self, other: "Violation") -> "Violation":
        """Combine two reports with the same (kind, site)."""
        locations = tuple(sorted(set(self.locations) | set(other.locations), key=_location_key))
        return Violation(
            self.kind,
            self.site,
            locations,
            min(self.context, other.context),
            self.severity,
            self.load_induced and other.load_induced,
            self.provenance | other.provenance,
        )


def _location_key(loc: Location) -> tuple:
    if isinstance(loc, ArraySlot):
        return (1, loc.array, loc.index)
    return (0, loc.ref, loc.offset)


def _sorted(locs: Iterable[Location]) -> tuple[Location, ...]:
    return tuple(sorted(set(locs), key=_location_key))


def _sites(state: AnalysisState, locs: Iterable[Location], exclude: Optional[Site] = None) -> frozenset[Site]:
    prov = state.provenance_dict
    out: set[Site] = set()
    for loc in locs:
        out |= prov.get(loc, frozenset())
    out.discard(exclude)
    return frozenset(out)


_STORE_LIKE = frozenset(
    {
        Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.RMW, Opcode.CAS,
        Opcode.STOREIDX, Opcode.MEMCPY,
    }
)
_POINTER_ACCESSES = frozenset(
    {
        Opcode.LOAD, Opcode.LOAD_ATOMIC, Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE,
        Opcode.RMW, Opcode.CAS, Opcode.LOADIDX, Opcode.STOREIDX,
    }
)
_WINDOW_OPS = frozenset(
    {Opcode.FLUSH, Opcode.FLUSHOPT, Opcode.FLUSHRANGE, Opcode.FLIT_INC, Opcode.FLIT_DEC, Opcode.FLIT_HELP}
)


def targets_of(env: FunctionEnv, instr: Instruction) -> list[Location]:
    """Locations a store-like instruction writes."""
    if not env.is_pm(instr.base):
        return []
    if instr.op is Opcode.MEMCPY:
        return list(env.covered_locations(instr.base, instr.args[1]))
    loc = env.access_location(instr)
    return [loc] if loc is not None else []


def _is_load_induced(env: FunctionEnv, state: AnalysisState, others: Iterable[Location]) -> bool:
    others = list(others)
    if not others:
        return False
    prov = state.provenance_dict
    for loc in others:
        sites = prov.get(loc, frozenset())
        if not sites:
            return False
        for s in sites:
            instr = env.instruction_at(s)
            if instr is None or instr.op is not Opcode.LOAD_ATOMIC:
                return False
    return True


def needs_persist_guard(env: FunctionEnv, instr: Instruction) -> bool:
    """Accesses through ptradd pointers that write, or dirty on read, need flush+fence; others a fence."""
    if instr.op in _STORE_LIKE:
        return True
    return instr.op is Opcode.LOAD_ATOMIC and env.mode is not Mode.FLIT and not instr.relax


def pointer_access_guarded(env: FunctionEnv, block_instrs: tuple[Instruction, ...], index: int) -> bool:
    instr = block_instrs[index]
    wants_flush = needs_persist_guard(env, instr)
    flushed = False
    for nxt in block_instrs[index + 1:]:
        if nxt.op is Opcode.FENCE:
            return flushed or not wants_flush
        if nxt.op not in _WINDOW_OPS:
            return False
        same = nxt.base == instr.base and nxt.field == instr.field and nxt.index == instr.index
        if nxt.op is Opcode.FLUSH and same and wants_flush:
            return True
        if nxt.op is Opcode.FLUSHOPT and same:
            flushed = True
    return False


def check_instruction(
    env: FunctionEnv,
    site: Site,
    instr: Instruction,
    before: AnalysisState,
    after: AnalysisState,
    context: CallingContext,
    callee_result: Optional[SummarizedResult] = None,
) -> list[Violation]:
    """Violations caused by executing `instr` in state `before`."""
    found: list[Violation] = []
    op = instr.op
    e_before = before.escaped_non_clean()
    e_after = after.escaped_non_clean()

    if op in _STORE_LIKE:
        targets = targets_of(env, instr)
        newly = e_after - e_before
        contributes = bool(newly) or (not instr.relax and any(t in e_after for t in targets))
        others = e_after - set(targets)
        # a memcpy counts as one write to all of its fields
        if len(e_after) >= 2 and others and contributes:
            found.append(
                Violation(
                    ViolationKind.DOUBLE_DIRTY_ESCAPED,
                    site,
                    _sorted(e_after),
                    context,
                    load_induced=_is_load_induced(env, after, others),
                    provenance=_sites(after, e_after, exclude=site),
                )
            )

    if e_before and (op is Opcode.UNLOCK or (op is Opcode.STORE_RELEASE and not env.is_pm(instr.base))):
        found.append(
            Violation(
                ViolationKind.RELEASE_WHILE_DIRTY, site, _sorted(e_before), context,
                provenance=_sites(before, e_before),
            )
        )

    if op is Opcode.CALL and callee_result is not None:
        found.extend(_check_call(env, site, instr, before, after, context, callee_result))

    if instr.dest is not None:
        lost = [
            slot for slot, _ in before.arraypmap if instr.dest in (slot.index, base_name(slot.array))
        ]
        if lost:
            found.append(
                Violation(
                    ViolationKind.INDEX_LOST, site, _sorted(lost), context, provenance=_sites(before, lost)
                )
            )

    if op in _POINTER_ACCESSES and instr.base in env.ptradd_refs and env.is_pm(instr.base):
        block = env.function.block(site.block).instructions
        if not pointer_access_guarded(env, block, site.index):
            loc = env.access_location(instr)
            own = frozenset({site}) if needs_persist_guard(env, instr) else frozenset()
            found.append(
                Violation(
                    ViolationKind.POINTER_ARITHMETIC,
                    site,
                    _sorted([loc] if loc is not None else []),
                    context,
                    severity=Severity.WARNING,
                    provenance=own,
                )
            )
    return found


def _check_call(
    env: FunctionEnv,
    site: Site,
    instr: Instruction,
    before: AnalysisState,
    after: AnalysisState,
    context: CallingContext,
    result: SummarizedResult,
) -> list[Violation]:
    found: list[Violation] = []
    e_before = before.escaped_non_clean()

    passed: set[str] = set()
    for arg in instr.args:
        if env.is_pm(arg):
            passed |= before.aliases(arg)

    def ref_of(loc: Location) -> str:
        return loc.array if isinstance(loc, ArraySlot) else loc.ref

    hidden = [loc for loc in e_before if ref_of(loc) not in passed]
    if result.mark_dirty_escape and hidden:
        found.append(
            Violation(
                ViolationKind.CALLSITE_DIRTY_ESCAPE, site, _sorted(hidden), context,
                provenance=_sites(before, hidden),
            )
        )
    else:
        e_after = after.escaped_non_clean()
        if e_before and (e_after - e_before) and len(e_after) >= 2:
            found.append(
                Violation(
                    ViolationKind.CALLSITE_DIRTY_ESCAPE, site, _sorted(e_after), context,
                    provenance=_sites(before, e_before),
                )
            )

    if result.performs_release and e_before:
        found.append(
            Violation(
                ViolationKind.RELEASE_WHILE_DIRTY, site, _sorted(e_before), context,
                provenance=_sites(before, e_before),
            )
        )
    return found


def check_exit(
    env: FunctionEnv,
    site: Site,
    exit_state: AnalysisState,
    context: CallingContext,
    ret_value: Optional[str] = None,
) -> list[Violation]:
    """Violations visible at a return point.

    Escaped non-Clean locations of locals and roots are ExitUnflushed; those
    of parameters and the returned value travel in the summary instead,
    except in entry functions where no caller will see them (Durability).
    """
    found: list[Violation] = []
    params = set(env.function.param_names)
    interface = params | ({ret_value} if ret_value else set())

    unflushed: list[Location] = []
    undurable: list[Location] = []
    for loc in exit_state.escaped_non_clean():
        if isinstance(loc, ArraySlot):
            continue
        if loc.ref in interface:
            undurable.append(loc)
        else:
            unflushed.append(loc)
    if unflushed:
        found.append(
            Violation(
                ViolationKind.EXIT_UNFLUSHED, site, _sorted(unflushed), context,
                provenance=_sites(exit_state, unflushed),
            )
        )

    slots = [slot for slot, _ in exit_state.arraypmap]
    if slots:
        found.append(
            Violation(
                ViolationKind.ARRAY_UNFLUSHED, site, _sorted(slots), context, provenance=_sites(exit_state, slots)
            )
        )

    if env.is_entry and undurable:
        found.append(
            Violation(
                ViolationKind.DURABILITY, site, _sorted(undurable), context,
                provenance=_sites(exit_state, undurable),
            )
        )
    return found


def location_dict(loc: Location) -> dict:
    """JSON form of a location: fields as {ref, offset}, array slots as {ref, index}."""
    if isinstance(loc, AbstractLocation):
        return {"ref": loc.ref, "offset": loc.offset}
    return {"ref": loc.array, "index": loc.index}
