"""Abstract state at one program point.

States are kept normalized so that structural equality is lattice
equality:

- only Escaped references are stored (absent means Captured; pmroots are
  seeded Escaped at function entry),
- aliasing is a set of unordered pairs, which makes it symmetric, and
  reflexivity is implicit,
- only non-Clean entries are stored in the persistency maps.

`provenance` records, for every non-Clean entry, the sites whose writes (or
conservatively dirtying loads) are still unpersisted. It does not take
part in the lattice order.
"""

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from .lattice import EscapeState, PersistState

# Site index used for dirtiness inherited from the calling context
ENTRY_INDEX = -1


@dataclass(frozen=True, order=True)
class Site:
    function: str
    block: str
    index: int

    @property
    def is_entry(self) -> bool:
        return self.index == ENTRY_INDEX

    def __str__(self) -> str:
        return f"{self.function}:{self.block}.{self.index}"


@dataclass(frozen=True, order=True)
class AbstractLocation:
    ref: str
    offset: int

    def __str__(self) -> str:
        return f"<{self.ref}, {self.offset}>"


@dataclass(frozen=True, order=True)
class ArraySlot:
    array: str
    index: str

    def __str__(self) -> str:
        return f"{self.array}[{self.index}]"


Location = Union[AbstractLocation, ArraySlot]


def _freeze(m: Mapping) -> tuple:
    return tuple(sorted(m.items()))


@dataclass(frozen=True)
class AnalysisState:
    escaped: frozenset[str] = frozenset()
    alias_pairs: frozenset[frozenset[str]] = frozenset()
    pmap: tuple[tuple[AbstractLocation, PersistState], ...] = ()
    arraypmap: tuple[tuple[ArraySlot, PersistState], ...] = ()
    provenance: tuple[tuple[Location, frozenset[Site]], ...] = field(default=())
    dirty_escape: bool = False

    @classmethod
    def build(
        cls,
        escaped: Iterable[str] = (),
        alias_pairs: Iterable[frozenset[str]] = (),
        pmap: Optional[Mapping[AbstractLocation, PersistState]] = None,
        arraypmap: Optional[Mapping[ArraySlot, PersistState]] = None,
        provenance: Optional[Mapping[Location, frozenset[Site]]] = None,
        dirty_escape: bool = False,
    ) -> "AnalysisState":
        pmap = {k: v for k, v in (pmap or {}).items() if v is not PersistState.CLEAN}
        arraypmap = {k: v for k, v in (arraypmap or {}).items() if v is not PersistState.CLEAN}
        live = set(pmap) | set(arraypmap)
        provenance = {k: frozenset(v) for k, v in (provenance or {}).items() if k in live and v}
        return cls(
            escaped=frozenset(escaped),
            alias_pairs=frozenset(p for p in alias_pairs if len(p) == 2),
            pmap=_freeze(pmap),
            arraypmap=_freeze(arraypmap),
            provenance=tuple(sorted(provenance.items(), key=lambda kv: (type(kv[0]).__name__, kv[0]))),
            dirty_escape=dirty_escape,
        )

    # Lookups -------------------------------------------------------------

    @property
    def pmap_dict(self) -> dict[AbstractLocation, PersistState]:
        return dict(self.pmap)

    @property
    def arraypmap_dict(self) -> dict[ArraySlot, PersistState]:
        return dict(self.arraypmap)

    @property
    def provenance_dict(self) -> dict[Location, frozenset[Site]]:
        return dict(self.provenance)

    def escape_of(self, ref: str) -> EscapeState:
        return EscapeState.ESCAPED if ref in self.escaped else EscapeState.CAPTURED

    def persist_of(self, loc: Location) -> PersistState:
        table = self.arraypmap_dict if isinstance(loc, ArraySlot) else self.pmap_dict
        return table.get(loc, PersistState.CLEAN)

    def aliases(self, ref: str) -> frozenset[str]:
        """May-aliases of `ref`, including `ref` itself."""
        out = {ref}
        for pair in self.alias_pairs:
            if ref in pair:
                out |= pair
        return frozenset(out)

    def non_clean(self) -> dict[Location, PersistState]:
        out: dict[Location, PersistState] = dict(self.pmap)
        out.update(self.arraypmap)
        return out

    def escaped_non_clean(self) -> frozenset[Location]:
        """Escaped locations that are not Clean. Array elements always count as escaped."""
        out: set[Location] = {loc for loc, _ in self.pmap if loc.ref in self.escaped}
        out.update(slot for slot, _ in self.arraypmap)
        return frozenset(out)

    def locations_of(self, ref: str) -> dict[AbstractLocation, PersistState]:
        return {loc: ps for loc, ps in self.pmap if loc.ref == ref}

    def sites_of(self, loc: Location) -> frozenset[Site]:
        return self.provenance_dict.get(loc, frozenset())

    # Lattice -------------------------------------------------------------

    def meet(self, other: "AnalysisState") -> "AnalysisState":
        pmap = self.pmap_dict
        for loc, ps in other.pmap:
            pmap[loc] = min(pmap.get(loc, PersistState.CLEAN), ps)
        arraypmap = self.arraypmap_dict
        for slot, ps in other.arraypmap:
            arraypmap[slot] = min(arraypmap.get(slot, PersistState.CLEAN), ps)
        provenance = self.provenance_dict
        for loc, sites in other.provenance:
            provenance[loc] = provenance.get(loc, frozenset()) | sites
        return AnalysisState.build(
            escaped=self.escaped | other.escaped,
            alias_pairs=self.alias_pairs | other.alias_pairs,
            pmap=pmap,
            arraypmap=arraypmap,
            provenance=provenance,
            dirty_escape=self.dirty_escape or other.dirty_escape,
        )

    def leq(self, other: "AnalysisState") -> bool:
        """True iff self ⊑ other (self is lower, i.e. more conservative)."""
        if not other.escaped <= self.escaped or not other.alias_pairs <= self.alias_pairs:
            return False
        if other.dirty_escape and not self.dirty_escape:
            return False
        mine, theirs = self.pmap_dict, other.pmap_dict
        if any(mine.get(loc, PersistState.CLEAN) > ps for loc, ps in theirs.items()):
            return False
        mine_a, theirs_a = self.arraypmap_dict, other.arraypmap_dict
        return not any(mine_a.get(s, PersistState.CLEAN) > ps for s, ps in theirs_a.items())

    def describe(self) -> str:
        parts = []
        for loc, ps in self.non_clean().items():
            esc = "esc" if isinstance(loc, ArraySlot) or loc.ref in self.escaped else "cap"
            parts.append(f"{loc}: {esc}/{ps.short}")
        return "{" + ", ".join(parts) + "}"


class StateBuilder:
    """Mutable scratch copy of an AnalysisState used inside transfer functions."""

    def __init__(self, state: AnalysisState):
        self.escaped = set(state.escaped)
        self.alias_pairs = set(state.alias_pairs)
        self.pmap = state.pmap_dict
        self.arraypmap = state.arraypmap_dict
        self.provenance = state.provenance_dict
        self.dirty_escape = state.dirty_escape

    def freeze(self) -> AnalysisState:
        return AnalysisState.build(
            self.escaped, self.alias_pairs, self.pmap, self.arraypmap, self.provenance, self.dirty_escape
        )

    def aliases(self, ref: str) -> set[str]:
        out = {ref}
        for pair in self.alias_pairs:
            if ref in pair:
                out |= pair
        return out

    def add_alias(self, a: str, b: str) -> None:
        if a != b:
            self.alias_pairs.add(frozenset((a, b)))

    def escape(self, ref: str) -> None:
        """Mark `ref` and its aliases Escaped; publishing a non-Clean object is a dirty escape."""
        newly = self.aliases(ref) - self.escaped
        if any(loc.ref in newly for loc in self.pmap):
            self.dirty_escape = True
        self.escaped |= newly

    def set_persist(self, loc: Location, ps: PersistState, sites: Optional[frozenset[Site]] = None) -> None:
        """Strong update; `sites` replaces the provenance of a non-Clean entry."""
        table = self.arraypmap if isinstance(loc, ArraySlot) else self.pmap
        if ps is PersistState.CLEAN:
            table.pop(loc, None)
            self.provenance.pop(loc, None)
            return
        table[loc] = ps
        if sites is not None:
            self.provenance[loc] = sites

    def weaken_persist(self, loc: Location, ps: PersistState, sites: frozenset[Site]) -> None:
        """Weak update: meet with the current value, union the provenance."""
        table = self.arraypmap if isinstance(loc, ArraySlot) else self.pmap
        current = table.get(loc, PersistState.CLEAN)
        merged = min(current, ps)
        if merged is PersistState.CLEAN:
            return
        table[loc] = merged
        if ps is not PersistState.CLEAN:
            self.provenance[loc] = self.provenance.get(loc, frozenset()) | sites

    def persist_of(self, loc: Location) -> PersistState:
        table = self.arraypmap if isinstance(loc, ArraySlot) else self.pmap
        return table.get(loc, PersistState.CLEAN)

    def kill(self, ref: str, ghost: str) -> Optional[str]:
        """Forget `ref` before it is redefined.

        Array slots of `ref`, or indexed by it, are dropped. Non-Clean field
        locations move to `ghost` together with the escape state and alias
        pairs, so unpersisted writes stay visible. Returns the ghost name if
        one was created.
        """
        for slot in [s for s in self.arraypmap if s.index == ref or s.array == ref]:
            del self.arraypmap[slot]
            self.provenance.pop(slot, None)

        moved = [loc for loc in self.pmap if loc.ref == ref]
        for loc in moved:
            ps = self.pmap.pop(loc)
            sites = self.provenance.pop(loc, frozenset())
            gloc = AbstractLocation(ghost, loc.offset)
            self.pmap[gloc] = min(self.pmap.get(gloc, PersistState.CLEAN), ps)
            self.provenance[gloc] = self.provenance.get(gloc, frozenset()) | sites

        partners = {other for pair in self.alias_pairs if ref in pair for other in pair if other != ref}
        if moved:
            if ref in self.escaped:
                self.escaped.add(ghost)
            for other in partners:
                self.add_alias(ghost, other)
        self.escaped.discard(ref)
        self.alias_pairs = {pair for pair in self.alias_pairs if ref not in pair}
        return ghost if moved else None
