"""Escape and persistency lattices.

Both are chains ordered by their integer value, so meet is `min` and the
top element is the largest member.
"""

from enum import Enum, IntEnum


class EscapeState(IntEnum):
    ESCAPED = 0
    CAPTURED = 1

    def meet(self, other: "EscapeState") -> "EscapeState":
        return min(self, other)

    @property
    def short(self) -> str:
        return "esc" if self is EscapeState.ESCAPED else "cap"


class PersistState(IntEnum):
    DIRTY = 0
    CLWB = 1
    CLEAN = 2

    def meet(self, other: "PersistState") -> "PersistState":
        return min(self, other)

    @property
    def short(self) -> str:
        return self.name.lower()


class Mode(str, Enum):
    BASE = "base"
    OPT = "opt"
    FLIT = "flit"


def meet(a, b):
    """Greatest lower bound of two values from the same lattice.

    Works for EscapeState, PersistState, and anything else exposing `meet`
    (AnalysisState, CallingContext, SummarizedResult).
    """
    if type(a) is not type(b):
        raise TypeError(f"Cannot meet {type(a).__name__} with {type(b).__name__}")
    return a.meet(b)


def lowest(states) -> PersistState:
    """Lowest persistency state among `states`; Clean when empty."""
    return min(states, default=PersistState.CLEAN)
