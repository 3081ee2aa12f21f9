"""Bounded depth-first enumeration of sequentially consistent interleavings.

Scheduling points sit only before instructions that touch shared state;
thread-local instructions run eagerly after the step that precedes them.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

from pmfence.ir.model import Harness, Program, ThreadSpec
from pmfence.ir.printer import format_instruction

from .machine import Allocation, Event, EventKind, Machine, Step

logger = logging.getLogger(__name__)

DEFAULT_BOUND = 64


@dataclass(frozen=True)
class ExecutionTrace:
    steps: tuple[Step, ...]
    objects: tuple[Allocation, ...]
    final_memory: tuple[tuple[int, int], ...]
    lineattr: int
    # True when every remaining thread was blocked on a lock
    deadlocked: bool = False

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def schedule(self) -> tuple[int, ...]:
        return tuple(s.thread for s in self.steps)

    @property
    def events(self) -> list[Event]:
        return [e for s in self.steps for e in s.events]

    def objects_at(self, crash_point: int) -> list[Allocation]:
        """Roots and allocations that exist after `crash_point` steps."""
        return [a for a in self.objects if a.step < crash_point]

    def pm_stores(self) -> list[tuple[int, Event]]:
        """(step index, event) for every PM store, in global order."""
        return [
            (i, e) for i, s in enumerate(self.steps) for e in s.events if e.kind is EventKind.STORE and e.pm
        ]

    def describe(self) -> list[str]:
        return [f"{i:3d} T{s.thread} {s.site}: {format_instruction(s.instruction)}" for i, s in enumerate(self.steps)]


def threads_of(program: Program, harness: Optional[Harness]) -> tuple[ThreadSpec, ...]:
    if harness is not None:
        return harness.threads
    return program.entry_threads()


def _record(machine: Machine, steps: list[Step]) -> ExecutionTrace:
    return ExecutionTrace(
        steps=tuple(steps),
        objects=tuple(machine.allocations),
        final_memory=tuple(sorted(machine.memory.items())),
        lineattr=machine.lineattr,
        deadlocked=not machine.finished,
    )


def enumerate_traces(
    program: Program,
    harness: Optional[Harness] = None,
    bound: Optional[int] = None,
    lineattr: Optional[int] = None,
    flit_table_size: int = 1024,
    observer: Optional[Callable[[ExecutionTrace], None]] = None,
) -> list[ExecutionTrace]:
    """Every interleaving of the harness threads, in depth-first schedule order.

    Args:
        bound: Steps allowed across all threads; defaults to the harness bound, then DEFAULT_BOUND
        observer: Called with each trace as soon as it completes

    Raises:
        BoundExceededError: If the execution runs past `bound` steps
        ExecutionFault: On an invalid access
    """
    harness = harness or program.harness
    threads = threads_of(program, harness)
    if bound is None:
        bound = harness.bound if harness is not None and harness.bound else DEFAULT_BOUND

    traces: list[ExecutionTrace] = []
    seen: set[tuple] = set()
    root = Machine(program, threads, bound, lineattr, flit_table_size)
    prefix: list[Step] = []
    for t in range(len(threads)):
        prefix.extend(root.run_local(t))

    def visit(machine: Machine, steps: list[Step]) -> None:
        enabled = machine.enabled()
        if not enabled:
            trace = _record(machine, steps)
            key = tuple((s.thread, s.site) for s in trace.steps)
            if key in seen:
                return
            seen.add(key)
            if trace.deadlocked:
                logger.warning("Deadlock after %d step(s)", len(steps))
            traces.append(trace)
            if observer is not None:
                observer(trace)
            return
        for n, tid in enumerate(enabled):
            child = machine if n == len(enabled) - 1 else machine.clone()
            taken = [child.step(tid)]
            taken.extend(child.run_local(tid))
            visit(child, steps + taken)

    visit(root, prefix)
    logger.debug("Enumerated %d trace(s) of %d thread(s)", len(traces), len(threads))
    return traces
