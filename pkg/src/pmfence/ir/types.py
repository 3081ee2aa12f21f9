"""Static types of function locals, propagated from their declared sources.

Every local gets its type from the instruction that defines it: allocations
give `ptr T`, loads give the field's declared type, calls give the callee's
return type and copies inherit the source's type. There is no inference
beyond that.
"""

from typing import Optional

from .diagnostics import Diagnostic, ParseError
from .model import ADDR, INT, Function, Instruction, Opcode, Program, TypeRef, ptr


def _operand_type(
    operand, params: dict[str, TypeRef], program: Program, types: dict[str, TypeRef]
) -> Optional[TypeRef]:
    if isinstance(operand, int):
        return INT
    if operand in params:
        return params[operand]
    if operand in types:
        return types[operand]
    root = program.root(operand)
    if root is not None:
        return ptr(root.struct)
    return None


def field_type(program: Program, base_type: Optional[TypeRef], field_name: str) -> Optional[TypeRef]:
    if base_type is None or not base_type.is_pointer:
        return None
    try:
        decl = program.struct(base_type.struct)
    except KeyError:
        return None
    f = decl.field_named(field_name)
    return f.type if f is not None else None


def _defined_type(
    instr: Instruction, program: Program, params: dict[str, TypeRef], types: dict[str, TypeRef]
) -> Optional[TypeRef]:
    op = instr.op
    lookup = lambda name: _operand_type(name, params, program, types)  # noqa: E731
    if op is Opcode.ASSIGN:
        return lookup(instr.args[0])
    if op in (Opcode.LOAD, Opcode.LOAD_ATOMIC, Opcode.RMW, Opcode.CAS):
        return field_type(program, lookup(instr.base), instr.field)
    if op in (Opcode.PMALLOC, Opcode.MALLOC):
        return ptr(instr.target)
    if op is Opcode.ADDROF:
        return ADDR
    if op is Opcode.LOADIDX:
        base_type = lookup(instr.base)
        if base_type is None or not base_type.is_pointer:
            return None
        try:
            first = program.struct(base_type.struct).field_at(0)
        except KeyError:
            return None
        return first.type if first is not None else INT
    if op is Opcode.PTRADD:
        return lookup(instr.base)
    if op is Opcode.CALL:
        if not program.has_function(instr.target):
            return None
        return program.function(instr.target).return_type
    return None


def resolve_local_types(program: Program, fn: Function) -> tuple[dict[str, TypeRef], list[Diagnostic]]:
    """Resolve local types for `fn`; returns (types, diagnostics)."""
    params = {p.name: p.type for p in fn.params}
    types: dict[str, TypeRef] = {}
    defs = [i for b in fn.blocks for i in b.instructions if i.dest is not None]
    diagnostics: list[Diagnostic] = []

    # Copies may appear before their source's definition in block order
    changed = True
    while changed:
        changed = False
        for instr in defs:
            if instr.dest in types:
                continue
            t = _defined_type(instr, program, params, types)
            if t is not None:
                types[instr.dest] = t
                changed = True

    for instr in defs:
        t = _defined_type(instr, program, params, types)
        pos = instr.pos
        line, col = (pos.line, pos.column) if pos else (0, 0)
        if t is None:
            if instr.dest not in types:
                diagnostics.append(Diagnostic(line, col, f"cannot determine type of '{instr.dest}'"))
            continue
        if types.get(instr.dest) != t:
            diagnostics.append(
                Diagnostic(line, col, f"conflicting types for '{instr.dest}': {types[instr.dest]} and {t}")
            )
    return types, diagnostics


def local_types(program: Program, fn: Function) -> dict[str, TypeRef]:
    """Types of params, roots referenced by name, and locals of `fn`."""
    types, diagnostics = resolve_local_types(program, fn)
    if diagnostics:
        raise ParseError(diagnostics)
    merged = {r.name: ptr(r.struct) for r in program.roots}
    merged.update({p.name: p.type for p in fn.params})
    merged.update(types)
    return merged
