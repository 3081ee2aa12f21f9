"""Summary table shared by the worklist and single-function analyses."""

from collections import defaultdict
from typing import Optional

from .context import CallingContext, SummarizedResult

Key = tuple[str, CallingContext]


class SummaryTable:
    """Results per analyzed (function, context) plus reverse call edges."""

    def __init__(self) -> None:
        self.results: dict[Key, SummarizedResult] = {}
        self.callers: dict[Key, set[Key]] = defaultdict(set)

    def lookup(self, function: str, context: CallingContext) -> Optional[SummarizedResult]:
        return self.results.get((function, context))

    def contexts_of(self, function: str) -> list[CallingContext]:
        return sorted(ctx for fn, ctx in self.results if fn == function)

    def add_caller(self, callee: Key, caller: Key) -> None:
        self.callers[callee].add(caller)

    def write(self, function: str, context: CallingContext, result: SummarizedResult) -> bool:
        """Merge `result` into the table with meet; True if the stored result changed."""
        key = (function, context)
        old = self.results.get(key)
        merged = result if old is None else old.meet(result)
        if merged == old:
            return False
        self.results[key] = merged
        return True


def resolve_callsite(
    table: SummaryTable, function: str, context: CallingContext
) -> tuple[SummarizedResult, list[Key]]:
    """Result to use at a call of `function` under `context`, plus pairs to (re)analyze.

    An exact entry is used as is. Otherwise the meet of all analyzed higher
    contexts is used, or the optimistic result when there are none, and the
    pair is pushed.
    """
    exact = table.lookup(function, context)
    if exact is not None:
        return exact, []
    higher = [
        table.results[(function, other)]
        for other in table.contexts_of(function)
        if context.leq(other)
    ]
    if higher:
        result = higher[0]
        for other in higher[1:]:
            result = result.meet(other)
        return result, [(function, context)]
    return SummarizedResult.optimistic(context.arity), [(function, context)]
