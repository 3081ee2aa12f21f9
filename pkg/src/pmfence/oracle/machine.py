"""Sequentially consistent interpreter for .pmir programs.

Memory is a map from word address to integer. PM lives at PM_BASE and up,
volatile allocations at VOLATILE_BASE and up; every root and allocation
starts on a cache-line boundary. Each executed instruction yields the
memory events the persistency model and the race detector consume.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from pmfence.analysis.state import Site
from pmfence.errors import BoundExceededError, ExecutionFault
from pmfence.ir.model import WORD_SIZE, Function, Instruction, Opcode, Operand, Program, ThreadSpec, TypeRef, ptr
from pmfence.ir.types import local_types

logger = logging.getLogger(__name__)

PM_BASE = 0x1000
VOLATILE_BASE = 0x100000

# Instructions that only touch thread-local state; they never need a scheduling point
LOCAL_OPS = frozenset(
    {
        Opcode.ASSIGN, Opcode.PMALLOC, Opcode.MALLOC, Opcode.ADDROF, Opcode.PTRADD,
        Opcode.CALL, Opcode.BR, Opcode.BRCOND, Opcode.RET,
    }
)


class EventKind(str, Enum):
    LOAD = "load"
    STORE = "store"
    FLUSH = "flush"
    FLUSHOPT = "flushopt"
    FENCE = "fence"
    ACQUIRE = "acquire"
    RELEASE = "release"


@dataclass(frozen=True)
class Event:
    kind: EventKind
    thread: int
    address: Optional[int] = None
    value: Optional[int] = None
    line: Optional[int] = None
    atomic: bool = False
    pm: bool = False
    lock: Optional[str] = None


@dataclass(frozen=True)
class Allocation:
    address: int
    struct: str
    count: int
    size: int
    pm: bool
    # Global step at which the object came into existence; roots exist from the start
    step: int = -1
    root: Optional[str] = None

    def contains(self, address: int) -> bool:
        return self.address <= address < self.address + self.size


@dataclass(frozen=True)
class Step:
    thread: int
    site: Site
    instruction: Instruction
    events: tuple[Event, ...] = ()


@dataclass
class Frame:
    function: Function
    block: str
    index: int
    locals: dict[str, int] = field(default_factory=dict)
    ret_dest: Optional[str] = None

    def copy(self) -> "Frame":
        return Frame(self.function, self.block, self.index, dict(self.locals), self.ret_dest)

    @property
    def instruction(self) -> Instruction:
        return self.function.block(self.block).instructions[self.index]


@dataclass
class ThreadState:
    tid: int
    name: str
    frames: list[Frame]

    @property
    def done(self) -> bool:
        return not self.frames

    def copy(self) -> "ThreadState":
        return ThreadState(self.tid, self.name, [f.copy() for f in self.frames])


def _round_up(n: int, to: int) -> int:
    return -(-n // to) * to


class Machine:
    """One in-flight execution. `clone()` forks it at a scheduling point."""

    def __init__(
        self,
        program: Program,
        threads: tuple[ThreadSpec, ...],
        bound: int,
        lineattr: Optional[int] = None,
        flit_table_size: int = 1024,
    ):
        self.program = program
        self.bound = bound
        self.lineattr = lineattr or program.lineattr
        self.flit_table_size = flit_table_size
        self.memory: dict[int, int] = {}
        self.allocations: list[Allocation] = []
        self.locks: dict[str, int] = {}
        self.flit: dict[int, int] = {}
        self.clock = 0
        self._next_pm = PM_BASE
        self._next_volatile = VOLATILE_BASE
        self._types = {fn.name: local_types(program, fn) for fn in program.functions}
        self.roots: dict[str, int] = {}
        for r in program.roots:
            alloc = self._allocate(r.struct, 1, pm=True, root=r.name)
            self.roots[r.name] = alloc.address
        self.threads = [self._start(tid, spec) for tid, spec in enumerate(threads)]

    def clone(self) -> "Machine":
        other = object.__new__(Machine)
        other.__dict__.update(self.__dict__)
        other.memory = dict(self.memory)
        other.allocations = list(self.allocations)
        other.locks = dict(self.locks)
        other.flit = dict(self.flit)
        other.threads = [t.copy() for t in self.threads]
        return other

    # -- layout ------------------------------------------------------------

    def _allocate(self, struct: str, count: int, pm: bool, root: Optional[str] = None) -> Allocation:
        decl = self.program.struct(struct)
        size = decl.size * count
        if pm:
            address = self._next_pm
            self._next_pm = _round_up(address + size, self.lineattr)
            if self._next_pm >= VOLATILE_BASE:
                raise ExecutionFault("persistent pool exhausted")
        else:
            address = self._next_volatile
            self._next_volatile = _round_up(address + size, self.lineattr)
        alloc = Allocation(address, struct, count, size, pm, self.clock if root is None else -1, root)
        self.allocations.append(alloc)
        return alloc

    def allocation_at(self, address: int) -> Optional[Allocation]:
        for alloc in self.allocations:
            if alloc.contains(address):
                return alloc
        return None

    def is_pm(self, address: int) -> bool:
        return PM_BASE <= address < VOLATILE_BASE

    def line_of(self, address: int) -> int:
        return address // self.lineattr

    # -- threads -----------------------------------------------------------

    def _start(self, tid: int, spec: ThreadSpec) -> ThreadState:
        fn = self.program.function(spec.function)
        frame = Frame(fn, fn.entry.label, 0)
        for prm, arg in zip(fn.params, spec.args):
            frame.locals[prm.name] = self.roots[arg] if isinstance(arg, str) else arg
        return ThreadState(tid, spec.function, [frame])

    def next_instruction(self, tid: int) -> Optional[Instruction]:
        t = self.threads[tid]
        return None if t.done else t.frames[-1].instruction

    def enabled(self) -> list[int]:
        out = []
        for t in self.threads:
            instr = self.next_instruction(t.tid)
            if instr is None:
                continue
            if instr.op is Opcode.LOCK and self.locks.get(instr.target, t.tid) != t.tid:
                continue
            out.append(t.tid)
        return out

    @property
    def finished(self) -> bool:
        return all(t.done for t in self.threads)

    def run_local(self, tid: int) -> list[Step]:
        """Execute thread-local instructions of `tid` up to its next shared access."""
        steps = []
        while True:
            instr = self.next_instruction(tid)
            if instr is None or instr.op not in LOCAL_OPS:
                return steps
            steps.append(self.step(tid))

    # -- evaluation --------------------------------------------------------

    def _type_of(self, frame: Frame, name: str) -> Optional[TypeRef]:
        if name in self.roots and name not in frame.locals:
            return ptr(self.program.root(name).struct)
        for prm in frame.function.params:
            if prm.name == name:
                return prm.type
        return self._types[frame.function.name].get(name)

    def _value(self, frame: Frame, operand: Operand) -> int:
        if isinstance(operand, int):
            return operand
        if operand in frame.locals:
            return frame.locals[operand]
        if operand in self.roots:
            return self.roots[operand]
        raise ExecutionFault(f"{frame.function.name}: '{operand}' read before definition")

    def _checked(self, address: int, what: str) -> int:
        if self.allocation_at(address) is None:
            raise ExecutionFault(f"invalid access to {address:#x} ({what})")
        return address

    def _field_address(self, frame: Frame, instr: Instruction) -> int:
        base = self._value(frame, instr.base)
        t = self._type_of(frame, instr.base)
        if instr.index is not None:
            decl = self.program.struct(t.struct)
            address = base + self._value(frame, instr.index) * decl.size
        else:
            address = base + self.program.struct(t.struct).field_named(instr.field).offset
        return self._checked(address, str(instr.base))

    def _load(self, tid: int, address: int, atomic: bool, events: list[Event]) -> int:
        value = self.memory.get(address, 0)
        events.append(Event(EventKind.LOAD, tid, address, value, self.line_of(address), atomic, self.is_pm(address)))
        return value

    def _store(self, tid: int, address: int, value: int, atomic: bool, events: list[Event]) -> None:
        self.memory[address] = value
        events.append(Event(EventKind.STORE, tid, address, value, self.line_of(address), atomic, self.is_pm(address)))

    def _flushopt(self, tid: int, address: int, events: list[Event]) -> None:
        if self.is_pm(address):
            events.append(Event(EventKind.FLUSHOPT, tid, address, line=self.line_of(address), pm=True))

    def _flit_slot(self, address: int) -> int:
        return self.line_of(address) % self.flit_table_size

    # -- stepping ----------------------------------------------------------

    def step(self, tid: int) -> Step:
        thread = self.threads[tid]
        # the bound covers every step of every thread
        if self.clock >= self.bound:
            raise BoundExceededError(self.bound, thread.name)
        frame = thread.frames[-1]
        instr = frame.instruction
        site = Site(frame.function.name, frame.block, frame.index)
        events: list[Event] = []
        frame.index += 1
        self._execute(thread, frame, instr, events)
        self.clock += 1
        return Step(tid, site, instr, tuple(events))

    def _execute(self, thread: ThreadState, frame: Frame, instr: Instruction, events: list[Event]) -> None:
        tid = thread.tid
        op = instr.op
        atomic = op in (Opcode.LOAD_ATOMIC, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.RMW, Opcode.CAS)

        if op is Opcode.ASSIGN:
            frame.locals[instr.dest] = self._value(frame, instr.args[0])
        elif op in (Opcode.LOAD, Opcode.LOAD_ATOMIC, Opcode.LOADIDX):
            frame.locals[instr.dest] = self._load(tid, self._field_address(frame, instr), atomic, events)
        elif op in (Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.STOREIDX):
            address = self._field_address(frame, instr)
            self._store(tid, address, self._value(frame, instr.args[0]), atomic, events)
        elif op in (Opcode.RMW, Opcode.CAS):
            # locked instructions drain the thread's pending write-backs first
            events.append(Event(EventKind.FENCE, tid))
            address = self._field_address(frame, instr)
            old = self._load(tid, address, True, events)
            if op is Opcode.RMW:
                self._store(tid, address, old + self._value(frame, instr.args[0]), True, events)
            elif old == self._value(frame, instr.args[0]):
                self._store(tid, address, self._value(frame, instr.args[1]), True, events)
            frame.locals[instr.dest] = old
        elif op in (Opcode.PMALLOC, Opcode.MALLOC):
            alloc = self._allocate(instr.target, instr.count or 1, pm=op is Opcode.PMALLOC)
            frame.locals[instr.dest] = alloc.address
        elif op is Opcode.ADDROF:
            frame.locals[instr.dest] = self._field_address(frame, instr)
        elif op is Opcode.PTRADD:
            frame.locals[instr.dest] = self._value(frame, instr.base) + instr.args[0]
        elif op is Opcode.MEMCPY:
            dst = self._value(frame, instr.base)
            src = self._value(frame, instr.args[0])
            length = self._value(frame, instr.args[1])
            for off in range(0, length, WORD_SIZE):
                value = self._load(tid, self._checked(src + off, "memcpy source"), False, events)
                self._store(tid, self._checked(dst + off, "memcpy target"), value, False, events)
        elif op is Opcode.FLUSH:
            address = self._field_address(frame, instr)
            if self.is_pm(address):
                events.append(Event(EventKind.FLUSH, tid, address, line=self.line_of(address), pm=True))
        elif op is Opcode.FLUSHOPT:
            self._flushopt(tid, self._field_address(frame, instr), events)
        elif op is Opcode.FLUSHRANGE:
            start = self._value(frame, instr.base)
            length = self._value(frame, instr.args[0])
            for line in range(self.line_of(start), self.line_of(start + max(length, 1) - 1) + 1):
                self._flushopt(tid, line * self.lineattr, events)
        elif op is Opcode.FENCE:
            events.append(Event(EventKind.FENCE, tid))
        elif op is Opcode.LOCK:
            self.locks[instr.target] = tid
            events.append(Event(EventKind.ACQUIRE, tid, lock=instr.target))
        elif op is Opcode.UNLOCK:
            if self.locks.get(instr.target) != tid:
                raise ExecutionFault(f"thread {thread.name} unlocks '{instr.target}' it does not hold")
            del self.locks[instr.target]
            events.append(Event(EventKind.RELEASE, tid, lock=instr.target))
        elif op in (Opcode.FLIT_INC, Opcode.FLIT_DEC):
            slot = self._flit_slot(self._field_address(frame, instr))
            self.flit[slot] = self.flit.get(slot, 0) + (1 if op is Opcode.FLIT_INC else -1)
        elif op is Opcode.FLIT_HELP:
            address = self._field_address(frame, instr)
            if self.flit.get(self._flit_slot(address), 0) != 0:
                self._flushopt(tid, address, events)
                events.append(Event(EventKind.FENCE, tid))
        elif op is Opcode.CALL:
            callee = self.program.function(instr.target)
            args = [self._value(frame, a) for a in instr.args]
            new = Frame(callee, callee.entry.label, 0, ret_dest=instr.dest)
            new.locals.update({p.name: v for p, v in zip(callee.params, args)})
            thread.frames.append(new)
        elif op is Opcode.BR:
            frame.block, frame.index = instr.labels[0], 0
        elif op is Opcode.BRCOND:
            taken = self._value(frame, instr.args[0]) != 0
            frame.block, frame.index = instr.labels[0 if taken else 1], 0
        elif op is Opcode.RET:
            value = self._value(frame, instr.args[0]) if instr.args else None
            thread.frames.pop()
            if thread.frames and frame.ret_dest is not None:
                thread.frames[-1].locals[frame.ret_dest] = value
        else:
            raise ExecutionFault(f"cannot execute {op.value}")
