"""Robustness verdicts: compare every crash image against strict-persistency states."""

import logging
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from pmfence.ir.model import Harness, Program
from pmfence.ir.printer import format_instruction

from .crash import CanonicalState, CrashImage, canonical_state, crash_images, final_images, strict_prefix_states
from .explore import ExecutionTrace, enumerate_traces
from .machine import EventKind

logger = logging.getLogger(__name__)


class VerdictKind(str, Enum):
    ROBUST = "robust"
    NOT_ROBUST = "not-robust"
    RACY = "racy"


@dataclass(frozen=True)
class Race:
    trace: ExecutionTrace
    first: int
    second: int
    address: int

    def describe(self) -> list[str]:
        a, b = self.trace.steps[self.first], self.trace.steps[self.second]
        return [
            f"data race on {self.address:#x}:",
            f"  T{a.thread} {a.site}: {format_instruction(a.instruction)}",
            f"  T{b.thread} {b.site}: {format_instruction(b.instruction)}",
        ]


@dataclass(frozen=True)
class Counterexample:
    trace: ExecutionTrace
    crash_point: int
    image: CrashImage
    # Canonical form of the image; no strict prefix state equals it
    state: CanonicalState

    def describe(self) -> list[str]:
        lines = ["trace:"]
        lines += [f"  {row}" for row in self.trace.describe()]
        lines.append(f"crash after {self.crash_point} step(s)")
        lines.append("persisted prefix per line:")
        lines += [f"  {row}" for row in self.image.format_lines(self.trace.lineattr)]
        return lines


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    traces: int
    counterexample: Optional[Counterexample] = None
    race: Optional[Race] = None
    # Whether every trace leaves all reachable PM persisted at exit
    durable: Optional[bool] = None

    @property
    def robust(self) -> bool:
        return self.kind is VerdictKind.ROBUST


def _join(into: dict[int, int], other: dict[int, int]) -> None:
    for tid, c in other.items():
        if c > into.get(tid, 0):
            into[tid] = c


def find_race(trace: ExecutionTrace) -> Optional[Race]:
    """First pair of conflicting accesses not ordered by happens-before.

    Lock release/acquire and atomic store/load on the same address
    synchronize. Two atomic accesses never race.
    """
    clocks: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    lock_clocks: dict[str, dict[int, int]] = {}
    sync_clocks: dict[int, dict[int, int]] = defaultdict(dict)
    # address -> [(step index, thread, epoch, is_write, atomic)]
    accesses: dict[int, list[tuple[int, int, int, bool, bool]]] = defaultdict(list)

    for index, step in enumerate(trace.steps):
        for e in step.events:
            t = e.thread
            vc = clocks[t]
            vc[t] = max(vc[t], 1)
            if e.kind is EventKind.ACQUIRE and e.lock in lock_clocks:
                _join(vc, lock_clocks[e.lock])
            elif e.kind is EventKind.RELEASE:
                lock_clocks[e.lock] = dict(vc)
                vc[t] += 1
            elif e.kind in (EventKind.LOAD, EventKind.STORE):
                write = e.kind is EventKind.STORE
                if e.atomic and not write:
                    _join(vc, sync_clocks[e.address])
                for other_index, other_t, epoch, other_write, other_atomic in accesses[e.address]:
                    if other_t == t or not (write or other_write) or (e.atomic and other_atomic):
                        continue
                    if epoch > vc.get(other_t, 0):
                        return Race(trace, other_index, index, e.address)
                accesses[e.address].append((index, t, vc[t], write, e.atomic))
                if e.atomic and write:
                    _join(sync_clocks[e.address], vc)
                    vc[t] += 1
    return None


def durable_at_exit(trace: ExecutionTrace, program: Program) -> bool:
    """Every crash right at the end leaves the same reachable PM state as the final memory."""
    final = canonical_state(dict(trace.final_memory), trace.objects, program)
    return all(
        canonical_state(img.memory_dict(), trace.objects, program) == final for img in final_images(trace)
    )


def check_robustness(
    program: Program,
    harness: Optional[Harness] = None,
    bound: Optional[int] = None,
    lineattr: Optional[int] = None,
    flit_table_size: int = 1024,
) -> Verdict:
    """Explore all interleavings and judge the program against strict persistency.

    The counterexample, if any, comes from the shortest failing trace at its
    earliest failing crash point.

    Raises:
        BoundExceededError: If exploration cannot finish within `bound`
    """
    traces = enumerate_traces(program, harness, bound, lineattr, flit_table_size)
    for trace in traces:
        race = find_race(trace)
        if race is not None:
            logger.info("Program is racy; no robustness verdict")
            return Verdict(VerdictKind.RACY, len(traces), race=race)

    allowed = strict_prefix_states(traces, program)
    logger.debug("%d trace(s), %d strict prefix state(s)", len(traces), len(allowed))

    best: Optional[Counterexample] = None
    for trace in sorted(traces, key=len):
        if best is not None and len(trace) > len(best.trace):
            break
        for image in crash_images(trace):
            if best is not None and image.crash_point >= best.crash_point:
                break
            state = canonical_state(image.memory_dict(), trace.objects_at(image.crash_point), program)
            if state not in allowed:
                best = Counterexample(trace, image.crash_point, image, state)
                break

    durable = all(durable_at_exit(t, program) for t in traces)
    if best is not None:
        return Verdict(VerdictKind.NOT_ROBUST, len(traces), counterexample=best, durable=durable)
    return Verdict(VerdictKind.ROBUST, len(traces), durable=durable)
