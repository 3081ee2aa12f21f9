"""PM-pointer classification.

Flow-insensitive, inclusion-based propagation with one classification per
(struct, offset). Every value flow in the program becomes an edge of a
networkx DiGraph; the PM set is everything reachable from the seeds
(allocator results and pmroots). Over-approximation is allowed, missing a
PM reference is not.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import networkx as nx

from pmfence.errors import ConfigError, UnknownReferenceError
from pmfence.ir.model import Function, Instruction, Opcode, Program, TypeRef
from pmfence.ir.types import local_types

logger = logging.getLogger(__name__)

# Function scope used for pmroot references
ROOT_SCOPE = ""


@dataclass(frozen=True, order=True)
class Ref:
    function: str
    name: str

    def __str__(self) -> str:
        return self.name if self.function == ROOT_SCOPE else f"{self.function}:{self.name}"


@dataclass(frozen=True, order=True)
class FieldSlot:
    struct: str
    offset: int

    def __str__(self) -> str:
        return f"{self.struct}@{self.offset}"


@dataclass(frozen=True, order=True)
class ReturnSlot:
    function: str


Node = Union[Ref, FieldSlot, ReturnSlot]


@dataclass(frozen=True)
class PmClassification:
    pm_refs: frozenset[Ref]
    pm_fields: frozenset[FieldSlot]
    pm_roots: frozenset[str]
    known_refs: frozenset[Ref]
    known_fields: frozenset[FieldSlot]

    def ref_of(self, function: str, name: str) -> Ref:
        root = Ref(ROOT_SCOPE, name)
        if root in self.known_refs and Ref(function, name) not in self.known_refs:
            return root
        return Ref(function, name)

    def is_pm_name(self, function: str, name: Union[str, int, None]) -> bool:
        """Lenient lookup used by the analyses; literals and unknown names are not PM."""
        if not isinstance(name, str):
            return False
        return self.ref_of(function, name) in self.pm_refs


def is_pm(c: PmClassification, q: Union[Ref, FieldSlot]) -> bool:
    """True iff `q` is classified as PM.

    Raises:
        UnknownReferenceError: If `q` does not name a reference or field of the program
    """
    if isinstance(q, Ref):
        if q not in c.known_refs:
            raise UnknownReferenceError(f"Unknown reference: {q}")
        return q in c.pm_refs
    if isinstance(q, FieldSlot):
        if q not in c.known_fields:
            raise UnknownReferenceError(f"Unknown field: {q}")
        return q in c.pm_fields
    raise UnknownReferenceError(f"Not a reference or field: {q!r}")


class _FlowGraphBuilder:
    def __init__(self, program: Program, allocators: frozenset[str]):
        self.p = program
        self.allocators = allocators
        self.graph = nx.DiGraph()
        self.seeds: set[Node] = set()

    def ref(self, fn: Function, name: str) -> Ref:
        if name in self.p.root_names:
            return Ref(ROOT_SCOPE, name)
        return Ref(fn.name, name)

    def slot(self, t: Optional[TypeRef], offset: Optional[int]) -> Optional[FieldSlot]:
        if t is None or not t.is_pointer or offset is None:
            return None
        return FieldSlot(t.struct, offset)

    def edge(self, src: Optional[Node], dst: Optional[Node]) -> None:
        if src is not None and dst is not None:
            self.graph.add_edge(src, dst)

    def build(self) -> nx.DiGraph:
        for s in self.p.structs:
            for f in s.fields:
                self.graph.add_node(FieldSlot(s.name, f.offset))
        for r in self.p.roots:
            node = Ref(ROOT_SCOPE, r.name)
            self.graph.add_node(node)
            self.seeds.add(node)
        for fn in self.p.functions:
            self._function(fn)
        for t in self.p.entry_threads():
            fn = self.p.function(t.function)
            for prm, arg in zip(fn.params, t.args):
                if isinstance(arg, str):
                    self.edge(Ref(ROOT_SCOPE, arg), Ref(fn.name, prm.name))
        return self.graph

    def _function(self, fn: Function) -> None:
        types = local_types(self.p, fn)
        for prm in fn.params:
            self.graph.add_node(Ref(fn.name, prm.name))
        for block in fn.blocks:
            for instr in block.instructions:
                if instr.dest is not None:
                    self.graph.add_node(self.ref(fn, instr.dest))
                self._instruction(fn, instr, types)

    def _field_slot(self, instr: Instruction, types: dict[str, TypeRef]) -> Optional[FieldSlot]:
        base_type = types.get(instr.base)
        if base_type is None or not base_type.is_pointer:
            return None
        if instr.index is not None:
            return FieldSlot(base_type.struct, 0)
        f = self.p.struct(base_type.struct).field_named(instr.field)
        return FieldSlot(base_type.struct, f.offset) if f is not None else None

    def _instruction(self, fn: Function, instr: Instruction, types: dict[str, TypeRef]) -> None:
        op = instr.op
        dest = self.ref(fn, instr.dest) if instr.dest is not None else None

        def value(operand) -> Optional[Ref]:
            return self.ref(fn, operand) if isinstance(operand, str) else None

        if op is Opcode.ASSIGN:
            self.edge(value(instr.args[0]), dest)
        elif op in (Opcode.LOAD, Opcode.LOAD_ATOMIC, Opcode.LOADIDX):
            self.edge(self._field_slot(instr, types), dest)
        elif op in (Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.STOREIDX):
            self.edge(value(instr.args[0]), self._field_slot(instr, types))
        elif op in (Opcode.RMW, Opcode.CAS):
            slot = self._field_slot(instr, types)
            self.edge(slot, dest)
            self.edge(value(instr.args[-1]), slot)
        elif op in (Opcode.ADDROF, Opcode.PTRADD):
            self.edge(value(instr.base), dest)
        elif op is Opcode.PMALLOC:
            self.seeds.add(dest)
        elif op is Opcode.MEMCPY:
            self._memcpy(instr, types)
        elif op is Opcode.CALL:
            callee = self.p.function(instr.target)
            for prm, arg in zip(callee.params, instr.args):
                self.edge(value(arg), Ref(callee.name, prm.name))
            if dest is not None:
                self.edge(ReturnSlot(callee.name), dest)
                if callee.name in self.allocators:
                    self.seeds.add(dest)
        elif op is Opcode.RET and instr.args:
            self.edge(value(instr.args[0]), ReturnSlot(fn.name))

    def _memcpy(self, instr: Instruction, types: dict[str, TypeRef]) -> None:
        dst_t, src_t = types.get(instr.base), types.get(instr.args[0])
        if dst_t is None or src_t is None or not dst_t.is_pointer or not src_t.is_pointer:
            return
        dst = self.p.struct(dst_t.struct)
        src = self.p.struct(src_t.struct)
        for f in src.fields:
            if f.type.is_pointer and dst.field_at(f.offset) is not None:
                self.edge(FieldSlot(src.name, f.offset), FieldSlot(dst.name, f.offset))


def build_flow_graph(p: Program, allocators: Iterable[str]) -> tuple[nx.DiGraph, frozenset[Node]]:
    """The value-flow graph and its PM seeds."""
    builder = _FlowGraphBuilder(p, frozenset(allocators))
    graph = builder.build()
    return graph, frozenset(builder.seeds)


def compute_pm_set(p: Program, allocators: Iterable[str] = ("pmalloc",)) -> PmClassification:
    """Classify every reference and struct field of `p` as PM or not.

    Raises:
        ConfigError: If an allocator other than pmalloc is not a declared function
    """
    allocators = frozenset(allocators)
    if "pmalloc" not in allocators:
        raise ConfigError("allocators must include 'pmalloc'")
    unknown = sorted(a for a in allocators if a != "pmalloc" and not p.has_function(a))
    if unknown:
        raise ConfigError(f"Unknown allocator function(s): {', '.join(unknown)}")

    graph, seeds = build_flow_graph(p, allocators)
    reached: set[Node] = set(seeds)
    for seed in seeds:
        reached |= nx.descendants(graph, seed)

    known_refs = frozenset(n for n in graph.nodes if isinstance(n, Ref))
    known_fields = frozenset(n for n in graph.nodes if isinstance(n, FieldSlot))
    classification = PmClassification(
        pm_refs=frozenset(n for n in reached if isinstance(n, Ref)),
        pm_fields=frozenset(n for n in reached if isinstance(n, FieldSlot)),
        pm_roots=p.root_names,
        known_refs=known_refs,
        known_fields=known_fields,
    )
    logger.debug(
        "PM classification: %d/%d refs, %d/%d fields",
        len(classification.pm_refs), len(known_refs), len(classification.pm_fields), len(known_fields),
    )
    return classification
