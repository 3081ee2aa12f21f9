"""Crash images under the persistent-buffer model, and strict-persistency states.

Stores reach PM per cache line in store order, lines independently of each
other. A crash keeps, for every line, some prefix of its stores; the
prefix must cover what completed flushes and fenced flushopts demanded.
"""

import logging
from collections import defaultdict, deque
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

from pmfence.ir.model import Program

from .explore import ExecutionTrace
from .machine import Allocation, Event, EventKind

logger = logging.getLogger(__name__)

# A pointer word renamed to (object number, byte offset), or a raw integer
Word = Union[int, tuple[str, int, int]]
# (label, struct, words) per reachable object; label is the root name or "#n"
CanonicalState = tuple[tuple[str, str, tuple[Word, ...]], ...]


@dataclass(frozen=True)
class CrashImage:
    crash_point: int
    # (line, number of that line's stores persisted)
    prefixes: tuple[tuple[int, int], ...]
    memory: tuple[tuple[int, int], ...]

    def memory_dict(self) -> dict[int, int]:
        return dict(self.memory)

    def format_lines(self, lineattr: int) -> list[str]:
        return [f"{line * lineattr:#x}: {k}" for line, k in self.prefixes]


def _containing(objects: Sequence[Allocation], address: int):
    for obj in objects:
        if obj.contains(address):
            return obj
    return None


def canonical_state(memory: Mapping[int, int], objects: Sequence[Allocation], program: Program) -> CanonicalState:
    """The PM heap reachable from the roots, with pointers renamed by discovery order.

    Unreachable objects are left out, so captured data and the addresses an
    interleaving happened to allocate at do not distinguish two states.
    """
    ids: dict[int, int] = {}
    queue: deque[Allocation] = deque()
    for obj in objects:
        if obj.root is not None:
            ids[obj.address] = len(ids)
            queue.append(obj)

    out = []
    while queue:
        obj = queue.popleft()
        decl = program.struct(obj.struct)
        words: list[Word] = []
        for element in range(obj.count):
            for f in decl.fields:
                value = memory.get(obj.address + element * decl.size + f.offset, 0)
                if f.type.is_pointer and value != 0:
                    target = _containing(objects, value)
                    if target is not None and target.pm:
                        if target.address not in ids:
                            ids[target.address] = len(ids)
                            queue.append(target)
                        value = ("obj", ids[target.address], value - target.address)
                    else:
                        value = ("raw", value, 0)
                words.append(value)
        label = obj.root if obj.root is not None else f"#{ids[obj.address]}"
        out.append((label, obj.struct, tuple(words)))
    return tuple(out)


def root_words(state: CanonicalState) -> dict[str, tuple[Word, ...]]:
    return {label: words for label, _, words in state if not label.startswith("#")}


class _PersistTracker:
    """Per-line store lists plus the prefix each line is guaranteed to keep."""

    def __init__(self):
        self.line_stores: dict[int, list[tuple[int, int]]] = defaultdict(list)
        self.required: dict[int, int] = defaultdict(int)
        self.pending: dict[int, dict[int, int]] = defaultdict(dict)

    def apply(self, e: Event) -> None:
        if e.kind is EventKind.STORE and e.pm:
            self.line_stores[e.line].append((e.address, e.value))
        elif e.kind is EventKind.FLUSH and e.line in self.line_stores:
            self.required[e.line] = max(self.required[e.line], len(self.line_stores[e.line]))
        elif e.kind is EventKind.FLUSHOPT and e.line in self.line_stores:
            waiting = self.pending[e.thread]
            waiting[e.line] = max(waiting.get(e.line, 0), len(self.line_stores[e.line]))
        elif e.kind is EventKind.FENCE:
            for line, count in self.pending.pop(e.thread, {}).items():
                self.required[line] = max(self.required[line], count)

    def images(self, point: int, seen: Optional[set] = None) -> Iterator[CrashImage]:
        lines = sorted(self.line_stores)
        choices = [range(self.required[line], len(self.line_stores[line]) + 1) for line in lines]
        for combo in product(*choices):
            prefixes = tuple(zip(lines, combo))
            if seen is not None:
                if prefixes in seen:
                    continue
                seen.add(prefixes)
            memory: dict[int, int] = {}
            for line, k in prefixes:
                for address, value in self.line_stores[line][:k]:
                    memory[address] = value
            yield CrashImage(point, prefixes, tuple(sorted(memory.items())))


def crash_images(trace: ExecutionTrace) -> Iterator[CrashImage]:
    """Every distinct crash image of `trace`, each at the earliest crash point producing it."""
    tracker = _PersistTracker()
    seen: set[tuple] = set()
    yield from tracker.images(0, seen)
    for i, step in enumerate(trace.steps):
        for e in step.events:
            tracker.apply(e)
        yield from tracker.images(i + 1, seen)


def final_images(trace: ExecutionTrace) -> list[CrashImage]:
    """Crash images for a crash right after the last instruction."""
    tracker = _PersistTracker()
    for e in trace.events:
        tracker.apply(e)
    return list(tracker.images(len(trace.steps)))


def strict_prefix_states(traces: Iterable[ExecutionTrace], program: Program) -> set[CanonicalState]:
    """States after every prefix of every trace's global PM store order."""
    states: set[CanonicalState] = set()
    for trace in traces:
        memory: dict[int, int] = {}
        states.add(canonical_state(memory, trace.objects_at(0), program))
        for step_index, store in trace.pm_stores():
            memory[store.address] = store.value
            states.add(canonical_state(memory, trace.objects_at(step_index + 1), program))
    return states
