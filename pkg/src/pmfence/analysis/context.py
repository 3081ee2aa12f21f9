"""Calling contexts, summarized results and their translation at call sites.

A calling context keeps one (escape, persistency) pair per parameter; the
persistency of a struct parameter collapses to its lowest field state.
Expanding a result goes the other way and gives every field of an argument
the summarized state.
"""

from dataclasses import dataclass
from typing import Iterable, Sequence

from pmfence.ir.model import Instruction

from .env import FunctionEnv, ghost_name
from .lattice import EscapeState, PersistState, lowest
from .state import AnalysisState, Site, StateBuilder

AbstractValue = tuple[EscapeState, PersistState]

TOP: AbstractValue = (EscapeState.CAPTURED, PersistState.CLEAN)
BOTTOM: AbstractValue = (EscapeState.ESCAPED, PersistState.DIRTY)


def _meet_value(a: AbstractValue, b: AbstractValue) -> AbstractValue:
    return (min(a[0], b[0]), min(a[1], b[1]))


def _value_leq(a: AbstractValue, b: AbstractValue) -> bool:
    return a[0] <= b[0] and a[1] <= b[1]


def format_value(v: AbstractValue) -> str:
    return f"<{v[0].short}, {v[1].short}>"


@dataclass(frozen=True, order=True)
class CallingContext:
    params: tuple[AbstractValue, ...]

    @classmethod
    def top(cls, arity: int) -> "CallingContext":
        return cls((TOP,) * arity)

    @property
    def arity(self) -> int:
        return len(self.params)

    def meet(self, other: "CallingContext") -> "CallingContext":
        return CallingContext(tuple(_meet_value(a, b) for a, b in zip(self.params, other.params)))

    def leq(self, other: "CallingContext") -> bool:
        return len(self.params) == len(other.params) and all(
            _value_leq(a, b) for a, b in zip(self.params, other.params)
        )

    def __str__(self) -> str:
        return "(" + ", ".join(format_value(v) for v in self.params) + ")"


@dataclass(frozen=True)
class SummarizedResult:
    """Per-parameter and return states of a function under one context.

    `alias_pairs` holds may-alias position pairs; position `arity` is the
    return value.
    """

    params: tuple[AbstractValue, ...]
    ret: AbstractValue = TOP
    alias_pairs: frozenset[tuple[int, int]] = frozenset()
    mark_dirty_escape: bool = False
    performs_release: bool = False

    @classmethod
    def optimistic(cls, arity: int) -> "SummarizedResult":
        return cls((TOP,) * arity)

    def meet(self, other: "SummarizedResult") -> "SummarizedResult":
        return SummarizedResult(
            params=tuple(_meet_value(a, b) for a, b in zip(self.params, other.params)),
            ret=_meet_value(self.ret, other.ret),
            alias_pairs=self.alias_pairs | other.alias_pairs,
            mark_dirty_escape=self.mark_dirty_escape or other.mark_dirty_escape,
            performs_release=self.performs_release or other.performs_release,
        )

    def leq(self, other: "SummarizedResult") -> bool:
        return (
            all(_value_leq(a, b) for a, b in zip(self.params, other.params))
            and _value_leq(self.ret, other.ret)
            and other.alias_pairs <= self.alias_pairs
            and (self.mark_dirty_escape or not other.mark_dirty_escape)
            and (self.performs_release or not other.performs_release)
        )


def abstract_context(param_states: Iterable[tuple[EscapeState, Sequence[PersistState]]]) -> CallingContext:
    """Collapse per-field persistency to the lowest state of each parameter."""
    return CallingContext(tuple((esc, lowest(fields)) for esc, fields in param_states))


def _arg_field_states(state: AnalysisState, arg: str) -> list[PersistState]:
    # Absent entries are Clean, so only stored ones can lower the result
    refs = state.aliases(arg)
    out = [ps for loc, ps in state.pmap if loc.ref in refs]
    out.extend(ps for slot, ps in state.arraypmap if slot.array in refs)
    return out


def context_at_call(env: FunctionEnv, state: AnalysisState, instr: Instruction) -> CallingContext:
    """Calling context for `instr` (a call) given the caller state before it."""
    pm_args = [a for a in instr.args if env.is_pm(a)]
    if len(pm_args) > env.max_context_params:
        return CallingContext(tuple(BOTTOM if env.is_pm(a) else TOP for a in instr.args))
    states = []
    for arg in instr.args:
        if env.is_pm(arg):
            states.append((state.escape_of(arg), _arg_field_states(state, arg)))
        else:
            states.append((EscapeState.CAPTURED, []))
    return abstract_context(states)


def expand_arguments(
    env: FunctionEnv, b: StateBuilder, site: Site, instr: Instruction, result: SummarizedResult
) -> None:
    """Apply a callee result to the caller's arguments and their aliases."""
    sites = frozenset({site})
    per_arg: dict[str, AbstractValue] = {}
    for arg, value in zip(instr.args, result.params):
        if env.is_pm(arg):
            per_arg[arg] = _meet_value(per_arg.get(arg, TOP), value)

    for arg, (esc, ps) in per_arg.items():
        if esc is EscapeState.ESCAPED:
            b.escape(arg)
        for loc in env.locations_for(arg):
            b.set_persist(loc, ps, sites)
    for arg, (_, ps) in per_arg.items():
        for alias in b.aliases(arg) - {arg}:
            if alias in per_arg:
                continue
            for loc in env.locations_for(alias):
                b.weaken_persist(loc, ps, sites)
            for slot in [s for s in b.arraypmap if s.array == alias]:
                b.weaken_persist(slot, ps, sites)
        for slot in [s for s in b.arraypmap if s.array == arg]:
            b.weaken_persist(slot, ps, sites)
    b.dirty_escape = b.dirty_escape or result.mark_dirty_escape


def expand_return(
    env: FunctionEnv,
    b: StateBuilder,
    site: Site,
    instr: Instruction,
    result: SummarizedResult,
    arg_aliases: dict[int, set[str]],
) -> None:
    """Define the call's destination from the summarized return value.

    `arg_aliases` are the alias sets of PM arguments taken before the
    destination was killed.
    """
    dest = instr.dest
    if dest is None or not env.is_pm(dest):
        return
    esc, ps = result.ret
    if esc is EscapeState.ESCAPED:
        b.escaped.add(dest)
    for loc in env.locations_for(dest):
        b.set_persist(loc, ps, frozenset({site}))
    ret_pos = len(instr.args)
    for i, j in result.alias_pairs:
        if ret_pos not in (i, j):
            continue
        pos = j if i == ret_pos else i
        for alias in arg_aliases.get(pos, set()):
            if alias == dest:
                continue
            b.add_alias(dest, alias)
            if alias in b.escaped:
                b.escaped.add(dest)


def expand_summary(
    env: FunctionEnv, state: AnalysisState, site: Site, instr: Instruction, result: SummarizedResult,
) -> AnalysisState:
    """Caller state after `instr` given the callee's summarized result."""
    b = StateBuilder(state)
    expand_arguments(env, b, site, instr, result)
    arg_aliases = {i: b.aliases(a) for i, a in enumerate(instr.args) if env.is_pm(a)}
    if instr.dest is not None:
        g = b.kill(instr.dest, ghost_name(instr.dest, site))
        for aliases in arg_aliases.values():
            if instr.dest in aliases:
                aliases.discard(instr.dest)
                if g is not None:
                    aliases.add(g)
    expand_return(env, b, site, instr, result, arg_aliases)
    return b.freeze()
