"""Per-function facts the transfer functions need: types, PM-ness, layout."""

import logging
from functools import cached_property
from typing import Optional, Union

from pmfence.ir.model import Function, Instruction, Opcode, Program, StructDecl, TypeRef
from pmfence.ir.types import local_types
from pmfence.pointsto import PmClassification

from .lattice import Mode
from .state import AbstractLocation, ArraySlot, Location, Site

logger = logging.getLogger(__name__)

GHOST_MARK = "@"


def ghost_name(ref: str, site: Site) -> str:
    return f"{ref}{GHOST_MARK}{site.block}.{site.index}"


def base_name(ref: str) -> str:
    """The program variable a (possibly ghost) reference stands for."""
    return ref.split(GHOST_MARK, 1)[0]


def is_ghost(ref: str) -> bool:
    return GHOST_MARK in ref


class FunctionEnv:
    def __init__(
        self,
        program: Program,
        function: Function,
        pm: PmClassification,
        mode: Mode,
        lineattr: Optional[int] = None,
        max_context_params: int = 8,
    ):
        self.program = program
        self.function = function
        self.pm = pm
        self.mode = mode
        self.lineattr = lineattr or program.lineattr
        self.max_context_params = max_context_params
        self.types: dict[str, TypeRef] = local_types(program, function)

    @property
    def name(self) -> str:
        return self.function.name

    @property
    def is_entry(self) -> bool:
        return self.function.name in self.program.entry_functions

    def is_pm(self, name: Union[str, int, None]) -> bool:
        if not isinstance(name, str):
            return False
        return self.pm.is_pm_name(self.function.name, base_name(name))

    def type_of(self, ref: str) -> Optional[TypeRef]:
        return self.types.get(base_name(ref))

    def struct_of(self, ref: str) -> Optional[StructDecl]:
        t = self.type_of(ref)
        if t is None or not t.is_pointer:
            return None
        return self.program.struct(t.struct)

    def key_offset(self, offset: int) -> int:
        if self.program.aligned:
            return offset - offset % self.lineattr
        return offset

    def field_location(self, ref: str, field_name: str) -> Optional[AbstractLocation]:
        decl = self.struct_of(ref)
        f = decl.field_named(field_name) if decl is not None else None
        if f is None:
            return None
        return AbstractLocation(ref, self.key_offset(f.offset))

    def access_location(self, instr: Instruction) -> Optional[Location]:
        """The location named by an `x.f` or `a[i]` operand."""
        if instr.index is not None:
            return ArraySlot(instr.base, instr.index)
        return self.field_location(instr.base, instr.field)

    def locations_for(self, ref: str) -> list[AbstractLocation]:
        decl = self.struct_of(ref)
        if decl is None:
            return []
        offsets = sorted({self.key_offset(f.offset) for f in decl.fields})
        return [AbstractLocation(ref, off) for off in offsets]

    def covered_locations(self, ref: str, length: Union[str, int]) -> list[AbstractLocation]:
        """Fields of `ref` touched by a byte range starting at offset 0."""
        decl = self.struct_of(ref)
        if decl is None:
            return []
        if isinstance(length, int):
            offsets = {self.key_offset(f.offset) for f in decl.fields if f.offset < length}
        else:
            offsets = {self.key_offset(f.offset) for f in decl.fields}
        return [AbstractLocation(ref, off) for off in sorted(offsets)]

    def instruction_at(self, site: Site) -> Optional[Instruction]:
        if site.is_entry or site.function != self.function.name:
            return None
        return self.function.block(site.block).instructions[site.index]

    @cached_property
    def ptradd_refs(self) -> frozenset[str]:
        """Names holding a pointer computed by ptradd, directly or through copies."""
        derived: set[str] = set()
        instrs = [i for b in self.function.blocks for i in b.instructions]
        changed = True
        while changed:
            changed = False
            for instr in instrs:
                if instr.dest is None or instr.dest in derived:
                    continue
                if instr.op is Opcode.PTRADD or (
                    instr.op is Opcode.ASSIGN and isinstance(instr.args[0], str) and instr.args[0] in derived
                ):
                    derived.add(instr.dest)
                    changed = True
        return frozenset(derived)
