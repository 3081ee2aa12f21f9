"""Program model for the .pmir mini-IR.

All types are frozen dataclasses built from tuples, so a parsed Program can be
shared freely and compared structurally. Source positions ride along on
instructions but are excluded from equality.
"""

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

DEFAULT_LINEATTR = 64
WORD_SIZE = 8

# An operand is a variable/root name or an integer literal
Operand = Union[str, int]


class Opcode(str, Enum):
    ASSIGN = "assign"
    LOAD = "load"
    LOAD_ATOMIC = "load_atomic"
    STORE = "store"
    STORE_ATOMIC = "store_atomic"
    STORE_RELEASE = "store_release"
    RMW = "rmw"
    CAS = "cas"
    PMALLOC = "pmalloc"
    MALLOC = "malloc"
    ADDROF = "addrof"
    LOADIDX = "loadidx"
    STOREIDX = "storeidx"
    PTRADD = "ptradd"
    MEMCPY = "memcpy"
    FLUSH = "flush"
    FLUSHOPT = "flushopt"
    FLUSHRANGE = "flushrange"
    FENCE = "fence"
    LOCK = "lock"
    UNLOCK = "unlock"
    CALL = "call"
    BR = "br"
    BRCOND = "brcond"
    RET = "ret"
    FLIT_INC = "flit_inc"
    FLIT_DEC = "flit_dec"
    FLIT_HELP = "flit_help"


TERMINATORS = frozenset({Opcode.BR, Opcode.BRCOND, Opcode.RET})

# Instructions that may carry the relax annotation
RELAXABLE = frozenset({Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STOREIDX, Opcode.LOAD_ATOMIC})

# Instructions that write a PM word through a field access
FIELD_STORES = frozenset({Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.RMW, Opcode.CAS})

ATOMIC_ACCESSES = frozenset(
    {Opcode.LOAD_ATOMIC, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.RMW, Opcode.CAS}
)

# Instructions whose target is x.f or a[i]
ACCESS_OPS = frozenset(
    {
        Opcode.LOAD, Opcode.LOAD_ATOMIC, Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE,
        Opcode.RMW, Opcode.CAS, Opcode.ADDROF, Opcode.LOADIDX, Opcode.STOREIDX,
        Opcode.FLUSH, Opcode.FLUSHOPT, Opcode.FLIT_INC, Opcode.FLIT_DEC, Opcode.FLIT_HELP,
    }
)


@dataclass(frozen=True)
class SourcePos:
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class TypeRef:
    """`int`, `ptr Name`, or the opaque `addr` produced by addrof."""

    kind: str
    struct: Optional[str] = None

    @property
    def is_pointer(self) -> bool:
        return self.kind == "ptr"

    def __str__(self) -> str:
        return f"ptr {self.struct}" if self.kind == "ptr" else self.kind


INT = TypeRef("int")
ADDR = TypeRef("addr")


def ptr(struct: str) -> TypeRef:
    return TypeRef("ptr", struct)


@dataclass(frozen=True)
class StructField:
    name: str
    type: TypeRef
    offset: int
    atomic: bool = False


@dataclass(frozen=True)
class StructDecl:
    name: str
    fields: tuple[StructField, ...]
    size: int

    def field_named(self, name: str) -> Optional[StructField]:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    def field_at(self, offset: int) -> Optional[StructField]:
        for f in self.fields:
            if f.offset == offset:
                return f
        return None

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(f.offset for f in self.fields)


@dataclass(frozen=True)
class RootDecl:
    name: str
    struct: str


@dataclass(frozen=True)
class Param:
    name: str
    type: TypeRef


@dataclass(frozen=True)
class Instruction:
    """One IR instruction.

    Field usage by opcode:
        dest    defined variable (assign/load*/rmw/cas/*alloc/addrof/loadidx/ptradd/call)
        base    the reference in `x.f` / `a[i]`, the memcpy/flushrange/ptradd pointer
        field   field name of `x.f`
        index   index variable of `a[i]`
        args    value operands (store value, rmw delta, cas old/new, call args,
                ret value, ptradd constant, memcpy src+len, flushrange len, brcond cond)
        target  struct name (allocations), callee (call), lock name (lock/unlock)
        count   element count of an array allocation
        labels  branch targets
    """

    op: Opcode
    dest: Optional[str] = None
    base: Optional[str] = None
    field: Optional[str] = None
    index: Optional[str] = None
    args: tuple[Operand, ...] = ()
    target: Optional[str] = None
    count: Optional[int] = None
    labels: tuple[str, ...] = ()
    relax: bool = False
    pos: Optional[SourcePos] = dataclasses.field(default=None, compare=False, repr=False)
    # Set on instructions inserted by the transformer: what they repair
    origin: Optional[str] = dataclasses.field(default=None, compare=False, repr=False)

    @property
    def is_terminator(self) -> bool:
        return self.op in TERMINATORS

    @property
    def is_indexed(self) -> bool:
        return self.index is not None

    def names_used(self) -> tuple[str, ...]:
        """Variable names read by this instruction (excluding labels, struct, callee, lock)."""
        used: list[str] = []
        if self.base is not None:
            used.append(self.base)
        if self.index is not None:
            used.append(self.index)
        used.extend(a for a in self.args if isinstance(a, str))
        return tuple(used)


@dataclass(frozen=True)
class BasicBlock:
    label: str
    instructions: tuple[Instruction, ...]

    @property
    def terminator(self) -> Instruction:
        return self.instructions[-1]


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[Param, ...]
    return_type: Optional[TypeRef]
    blocks: tuple[BasicBlock, ...]

    @property
    def entry(self) -> BasicBlock:
        return self.blocks[0]

    def block(self, label: str) -> BasicBlock:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(f"Unknown block in {self.name}: {label}")

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)


@dataclass(frozen=True)
class ThreadSpec:
    function: str
    args: tuple[Operand, ...] = ()


@dataclass(frozen=True)
class Harness:
    threads: tuple[ThreadSpec, ...]
    bound: Optional[int] = None


@dataclass(frozen=True)
class Program:
    structs: tuple[StructDecl, ...] = ()
    roots: tuple[RootDecl, ...] = ()
    functions: tuple[Function, ...] = ()
    harness: Optional[Harness] = None
    lineattr: int = DEFAULT_LINEATTR
    aligned: bool = False

    def struct(self, name: str) -> StructDecl:
        for s in self.structs:
            if s.name == name:
                return s
        raise KeyError(f"Unknown struct: {name}")

    def root(self, name: str) -> Optional[RootDecl]:
        for r in self.roots:
            if r.name == name:
                return r
        return None

    @property
    def root_names(self) -> frozenset[str]:
        return frozenset(r.name for r in self.roots)

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(f"Unknown function: {name}")

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    def entry_threads(self) -> tuple[ThreadSpec, ...]:
        """Threads the program starts with: the harness, or a lone `main`."""
        if self.harness is not None:
            return self.harness.threads
        if self.has_function("main"):
            return (ThreadSpec("main"),)
        return ()

    @property
    def entry_functions(self) -> frozenset[str]:
        return frozenset(t.function for t in self.entry_threads())

    def replace_function(self, fn: Function) -> "Program":
        funcs = tuple(fn if f.name == fn.name else f for f in self.functions)
        return Program(
            structs=self.structs,
            roots=self.roots,
            functions=funcs,
            harness=self.harness,
            lineattr=self.lineattr,
            aligned=self.aligned,
        )

    def with_lineattr(self, lineattr: int) -> "Program":
        return Program(
            structs=self.structs,
            roots=self.roots,
            functions=self.functions,
            harness=self.harness,
            lineattr=lineattr,
            aligned=self.aligned,
        )
