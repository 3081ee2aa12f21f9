"""Canonical text form of a Program; re-parses to an equal Program."""

from .model import DEFAULT_LINEATTR, Function, Instruction, Opcode, Program, StructDecl

_INDENT = "  "


def _access(instr: Instruction) -> str:
    if instr.index is not None:
        return f"{instr.base}[{instr.index}]"
    return f"{instr.base}.{instr.field}"


def _args(instr: Instruction) -> str:
    return ", ".join(str(a) for a in instr.args)


def format_instruction(instr: Instruction) -> str:
    """Render one instruction as a single .pmir line, without indentation."""
    op = instr.op
    if op is Opcode.ASSIGN:
        text = f"{instr.dest} = {instr.args[0]}"
    elif op in (Opcode.LOAD, Opcode.LOAD_ATOMIC, Opcode.ADDROF, Opcode.LOADIDX):
        text = f"{instr.dest} = {op.value} {_access(instr)}"
    elif op in (Opcode.RMW, Opcode.CAS):
        text = f"{instr.dest} = {op.value} {_access(instr)}, {_args(instr)}"
    elif op in (Opcode.PMALLOC, Opcode.MALLOC):
        count = f"[{instr.count}]" if instr.count is not None else ""
        text = f"{instr.dest} = {op.value} {instr.target}{count}"
    elif op is Opcode.PTRADD:
        text = f"{instr.dest} = ptradd {instr.base}, {instr.args[0]}"
    elif op in (Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.STOREIDX):
        text = f"{op.value} {_access(instr)}, {instr.args[0]}"
    elif op in (Opcode.MEMCPY, Opcode.FLUSHRANGE):
        text = f"{op.value} {instr.base}, {_args(instr)}"
    elif op in (Opcode.FLUSH, Opcode.FLUSHOPT, Opcode.FLIT_INC, Opcode.FLIT_DEC, Opcode.FLIT_HELP):
        text = f"{op.value} {_access(instr)}"
    elif op in (Opcode.LOCK, Opcode.UNLOCK):
        text = f"{op.value} {instr.target}"
    elif op is Opcode.CALL:
        call = f"call {instr.target}({_args(instr)})"
        text = f"{instr.dest} = {call}" if instr.dest is not None else call
    elif op is Opcode.BR:
        text = f"br {instr.labels[0]}"
    elif op is Opcode.BRCOND:
        text = f"brcond {instr.args[0]}, {instr.labels[0]}, {instr.labels[1]}"
    elif op is Opcode.RET:
        text = f"ret {instr.args[0]}" if instr.args else "ret"
    else:
        text = op.value
    if instr.relax:
        text += " !relax"
    return text


def _struct(s: StructDecl) -> str:
    fields = ", ".join(
        f"{f.name}: {f.type} @{f.offset}" + (" atomic" if f.atomic else "") for f in s.fields
    )
    body = f" {fields} " if fields else " "
    return f"struct {s.name} {{{body}}} size {s.size}"


def _function(fn: Function) -> list[str]:
    params = ", ".join(f"{p.name}: {p.type}" for p in fn.params)
    ret = f" -> {fn.return_type}" if fn.return_type is not None else ""
    lines = [f"func {fn.name}({params}){ret} {{"]
    for block in fn.blocks:
        lines.append(f"{block.label}:")
        lines.extend(_INDENT + format_instruction(i) for i in block.instructions)
    lines.append("}")
    return lines


def emit_program(program: Program) -> bytes:
    """Canonical UTF-8 text for `program`; empty programs emit nothing."""
    sections: list[list[str]] = []

    header: list[str] = []
    if program.lineattr != DEFAULT_LINEATTR:
        header.append(f"lineattr {program.lineattr}")
    if program.aligned:
        header.append("aligned")
    if header:
        sections.append(header)
    if program.structs:
        sections.append([_struct(s) for s in program.structs])
    if program.roots:
        sections.append([f"pmroot {r.name}: {r.struct}" for r in program.roots])
    for fn in program.functions:
        sections.append(_function(fn))
    if program.harness is not None:
        h = program.harness
        bound = f" bound {h.bound}" if h.bound is not None else ""
        lines = [f"harness{bound} {{"]
        for t in h.threads:
            lines.append(f"{_INDENT}thread {t.function}({', '.join(str(a) for a in t.args)})")
        lines.append("}")
        sections.append(lines)

    if not sections:
        return b""
    text = "\n\n".join("\n".join(lines) for lines in sections) + "\n"
    return text.encode("utf-8")
