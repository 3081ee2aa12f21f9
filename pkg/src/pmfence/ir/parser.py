"""Parser and validator for the line-oriented .pmir format.

One declaration or instruction per line; `#` starts a comment. Parsing
collects every diagnostic it can before raising ParseError, and never
returns a partially built Program.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .diagnostics import Diagnostic, ParseError
from .model import (
    ACCESS_OPS,
    DEFAULT_LINEATTR,
    INT,
    RELAXABLE,
    WORD_SIZE,
    BasicBlock,
    Function,
    Harness,
    Instruction,
    Opcode,
    Operand,
    Param,
    Program,
    RootDecl,
    SourcePos,
    StructDecl,
    StructField,
    ThreadSpec,
    TypeRef,
    ptr,
)
from .types import field_type, resolve_local_types

logger = logging.getLogger(__name__)

_ID = r"[A-Za-z_][A-Za-z0-9_]*"
_INT = r"-?\d+"

_STRUCT_RE = re.compile(rf"^struct\s+({_ID})\s*\{{(.*)\}}\s*size\s+(\d+)$")
_FIELD_RE = re.compile(rf"^({_ID})\s*:\s*(int|ptr\s+{_ID})\s*@\s*(\d+)(\s+atomic)?$")
_ROOT_RE = re.compile(rf"^pmroot\s+({_ID})\s*:\s*({_ID})$")
_FUNC_RE = re.compile(rf"^func\s+({_ID})\s*\((.*)\)\s*(?:->\s*(int|ptr\s+{_ID}))?\s*\{{$")
_PARAM_RE = re.compile(rf"^({_ID})\s*:\s*(int|ptr\s+{_ID})$")
_HARNESS_RE = re.compile(r"^harness(?:\s+bound\s+(\d+))?\s*\{$")
_THREAD_RE = re.compile(rf"^thread\s+({_ID})\s*\((.*)\)$")
_LINEATTR_RE = re.compile(r"^lineattr\s+(\d+)$")
_LABEL_RE = re.compile(rf"^({_ID}):$")
_ASSIGN_RE = re.compile(rf"^({_ID})\s*=\s*(.+)$")
_FIELD_ACCESS_RE = re.compile(rf"^({_ID})\.({_ID})$")
_INDEX_ACCESS_RE = re.compile(rf"^({_ID})\[({_ID})\]$")
_ALLOC_RE = re.compile(rf"^({_ID})(?:\[(\d+)\])?$")
_CALL_RE = re.compile(rf"^call\s+({_ID})\s*\((.*)\)$")
_OPERAND_RE = re.compile(rf"^(?:{_ID}|{_INT})$")

_RELAX_SUFFIX = "!relax"


def _parse_type(text: str) -> TypeRef:
    text = text.strip()
    if text == "int":
        return INT
    return ptr(text.split()[1])


def _split_args(text: str) -> list[str]:
    text = text.strip()
    if not text:
        return []
    return [part.strip() for part in text.split(",")]


class _LineError(Exception):
    def __init__(self, message: str):
        self.message = message


def _operand(text: str) -> Operand:
    if not _OPERAND_RE.match(text):
        raise _LineError(f"invalid operand '{text}'")
    if re.match(rf"^{_INT}$", text):
        return int(text)
    return text


def _access(text: str) -> tuple[str, Optional[str], Optional[str]]:
    """Parse `x.f` or `a[i]` into (base, field, index)."""
    m = _FIELD_ACCESS_RE.match(text.strip())
    if m:
        return m.group(1), m.group(2), None
    m = _INDEX_ACCESS_RE.match(text.strip())
    if m:
        return m.group(1), None, m.group(2)
    raise _LineError(f"expected 'x.field' or 'a[i]', got '{text.strip()}'")


def _field_access(text: str) -> tuple[str, str]:
    base, fld, index = _access(text)
    if fld is None:
        raise _LineError(f"expected 'x.field', got '{text.strip()}'")
    return base, fld


def _index_access(text: str) -> tuple[str, str]:
    base, _, index = _access(text)
    if index is None:
        raise _LineError(f"expected 'a[i]', got '{text.strip()}'")
    return base, index


def _expect_args(parts: list[str], n: int, what: str) -> list[str]:
    if len(parts) != n:
        raise _LineError(f"{what} expects {n} operand(s), got {len(parts)}")
    return parts


def _parse_rhs(dest: str, rhs: str) -> Instruction:
    word, _, rest = rhs.partition(" ")
    rest = rest.strip()
    if word in ("load", "load_atomic"):
        base, fld = _field_access(rest)
        op = Opcode.LOAD if word == "load" else Opcode.LOAD_ATOMIC
        return Instruction(op, dest=dest, base=base, field=fld)
    if word == "rmw":
        target, value = _expect_args(_split_args(rest), 2, "rmw")
        base, fld = _field_access(target)
        return Instruction(Opcode.RMW, dest=dest, base=base, field=fld, args=(_operand(value),))
    if word == "cas":
        target, old, new = _expect_args(_split_args(rest), 3, "cas")
        base, fld = _field_access(target)
        return Instruction(Opcode.CAS, dest=dest, base=base, field=fld, args=(_operand(old), _operand(new)))
    if word in ("pmalloc", "malloc"):
        m = _ALLOC_RE.match(rest)
        if not m:
            raise _LineError(f"expected 'Struct' or 'Struct[N]' after {word}")
        count = int(m.group(2)) if m.group(2) is not None else None
        op = Opcode.PMALLOC if word == "pmalloc" else Opcode.MALLOC
        return Instruction(op, dest=dest, target=m.group(1), count=count)
    if word == "addrof":
        base, fld = _field_access(rest)
        return Instruction(Opcode.ADDROF, dest=dest, base=base, field=fld)
    if word == "loadidx":
        base, index = _index_access(rest)
        return Instruction(Opcode.LOADIDX, dest=dest, base=base, index=index)
    if word == "ptradd":
        base, k = _expect_args(_split_args(rest), 2, "ptradd")
        k_val = _operand(k)
        if not isinstance(k_val, int):
            raise _LineError("ptradd offset must be an integer constant")
        return Instruction(Opcode.PTRADD, dest=dest, base=_operand_name(base), args=(k_val,))
    if word == "call":
        return _parse_call(rhs, dest)
    return Instruction(Opcode.ASSIGN, dest=dest, args=(_operand(rhs),))


def _operand_name(text: str) -> str:
    value = _operand(text.strip())
    if not isinstance(value, str):
        raise _LineError(f"expected a name, got '{text.strip()}'")
    return value


def _parse_call(text: str, dest: Optional[str]) -> Instruction:
    m = _CALL_RE.match(text)
    if not m:
        raise _LineError("expected 'call F(args)'")
    args = tuple(_operand(a) for a in _split_args(m.group(2)))
    return Instruction(Opcode.CALL, dest=dest, target=m.group(1), args=args)


def parse_instruction(text: str) -> Instruction:
    """Parse a single instruction line (comment and position already stripped)."""
    relax = False
    if text.endswith(_RELAX_SUFFIX):
        relax = True
        text = text[: -len(_RELAX_SUFFIX)].rstrip()

    m = _ASSIGN_RE.match(text)
    if m:
        instr = _parse_rhs(m.group(1), m.group(2).strip())
    else:
        instr = _parse_plain(text)

    if relax:
        if instr.op not in RELAXABLE:
            raise _LineError(f"'!relax' is only allowed on stores and atomic loads, not {instr.op.value}")
        instr = Instruction(
            instr.op, instr.dest, instr.base, instr.field, instr.index, instr.args,
            instr.target, instr.count, instr.labels, relax=True,
        )
    return instr


def _parse_plain(text: str) -> Instruction:
    word, _, rest = text.partition(" ")
    rest = rest.strip()
    if word in ("store", "store_atomic", "store_release"):
        target, value = _expect_args(_split_args(rest), 2, word)
        base, fld = _field_access(target)
        return Instruction(Opcode(word), base=base, field=fld, args=(_operand(value),))
    if word == "storeidx":
        target, value = _expect_args(_split_args(rest), 2, word)
        base, index = _index_access(target)
        return Instruction(Opcode.STOREIDX, base=base, index=index, args=(_operand(value),))
    if word == "memcpy":
        dst, src, length = _expect_args(_split_args(rest), 3, word)
        return Instruction(Opcode.MEMCPY, base=_operand_name(dst), args=(_operand_name(src), _operand(length)))
    if word == "flushrange":
        dst, length = _expect_args(_split_args(rest), 2, word)
        return Instruction(Opcode.FLUSHRANGE, base=_operand_name(dst), args=(_operand(length),))
    if word in ("flush", "flushopt", "flit_inc", "flit_dec", "flit_help"):
        base, fld, index = _access(rest)
        return Instruction(Opcode(word), base=base, field=fld, index=index)
    if word == "fence":
        if rest:
            raise _LineError("fence takes no operands")
        return Instruction(Opcode.FENCE)
    if word in ("lock", "unlock"):
        return Instruction(Opcode(word), target=_operand_name(rest))
    if word == "call":
        return _parse_call(text, None)
    if word == "br":
        return Instruction(Opcode.BR, labels=(_operand_name(rest),))
    if word == "brcond":
        cond, then_label, else_label = _expect_args(_split_args(rest), 3, word)
        return Instruction(
            Opcode.BRCOND, args=(_operand(cond),), labels=(_operand_name(then_label), _operand_name(else_label))
        )
    if word == "ret":
        return Instruction(Opcode.RET, args=(_operand(rest),) if rest else ())
    raise _LineError(f"unknown instruction '{word}'")


# ---------------------------------------------------------------------------
# Line-level parsing
# ---------------------------------------------------------------------------

@dataclass
class _FunctionBuilder:
    name: str
    params: tuple[Param, ...]
    return_type: Optional[TypeRef]
    pos: SourcePos
    blocks: list[BasicBlock] = field(default_factory=list)
    label: Optional[str] = None
    label_pos: Optional[SourcePos] = None
    current: list[Instruction] = field(default_factory=list)
    relax_depth: int = 0

    def close_block(self, diagnostics: list[Diagnostic], pos: SourcePos) -> None:
        if self.label is None:
            return
        if not self.current or not self.current[-1].is_terminator:
            p = self.label_pos or pos
            diagnostics.append(Diagnostic(p.line, p.column, f"block '{self.label}' is missing a terminator"))
        self.blocks.append(BasicBlock(self.label, tuple(self.current)))
        self.label = None
        self.current = []


class _Parser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.diagnostics: list[Diagnostic] = []
        self.structs: list[StructDecl] = []
        self.struct_pos: dict[str, SourcePos] = {}
        self.roots: list[RootDecl] = []
        self.root_pos: dict[str, SourcePos] = {}
        self.functions: list[Function] = []
        self.function_pos: dict[str, SourcePos] = {}
        self.harness: Optional[Harness] = None
        self.harness_pos: Optional[SourcePos] = None
        self.thread_pos: list[SourcePos] = []
        self.lineattr = DEFAULT_LINEATTR
        self.aligned = False

    def error(self, pos: SourcePos, message: str) -> None:
        self.diagnostics.append(Diagnostic(pos.line, pos.column, message))

    def parse(self) -> None:
        fn: Optional[_FunctionBuilder] = None
        in_harness = False
        threads: list[ThreadSpec] = []
        bound: Optional[int] = None

        for lineno, raw in enumerate(self.lines, start=1):
            code = raw.split("#", 1)[0]
            stripped = code.strip()
            if not stripped:
                continue
            pos = SourcePos(lineno, len(code) - len(code.lstrip()) + 1)

            if fn is not None:
                fn = self._function_line(fn, stripped, pos)
                continue
            if in_harness:
                if stripped == "}":
                    self.harness = Harness(tuple(threads), bound)
                    in_harness = False
                    continue
                m = _THREAD_RE.match(stripped)
                if not m:
                    self.error(pos, f"expected 'thread F(args)' in harness, got '{stripped}'")
                    continue
                try:
                    args = tuple(_operand(a) for a in _split_args(m.group(2)))
                except _LineError as e:
                    self.error(pos, e.message)
                    continue
                threads.append(ThreadSpec(m.group(1), args))
                self.thread_pos.append(pos)
                continue

            if stripped == "aligned":
                self.aligned = True
                continue
            m = _LINEATTR_RE.match(stripped)
            if m:
                self.lineattr = int(m.group(1))
                if self.lineattr < WORD_SIZE or self.lineattr & (self.lineattr - 1):
                    self.error(pos, f"lineattr must be a power of two >= {WORD_SIZE}")
                continue
            m = _STRUCT_RE.match(stripped)
            if m:
                self._struct(m, pos)
                continue
            m = _ROOT_RE.match(stripped)
            if m:
                if m.group(1) in self.root_pos:
                    self.error(pos, f"duplicate pmroot '{m.group(1)}'")
                self.root_pos[m.group(1)] = pos
                self.roots.append(RootDecl(m.group(1), m.group(2)))
                continue
            m = _FUNC_RE.match(stripped)
            if m:
                fn = self._function_header(m, pos)
                continue
            m = _HARNESS_RE.match(stripped)
            if m:
                if self.harness_pos is not None:
                    self.error(pos, "duplicate harness")
                self.harness_pos = pos
                bound = int(m.group(1)) if m.group(1) else None
                in_harness = True
                threads = []
                continue
            self.error(pos, f"unexpected line '{stripped}'")

        end = SourcePos(len(self.lines) + 1, 1)
        if fn is not None:
            self.error(fn.pos, f"function '{fn.name}' is missing its closing brace")
        if in_harness:
            self.error(self.harness_pos or end, "harness is missing its closing brace")

    def _struct(self, m: re.Match, pos: SourcePos) -> None:
        name, body, size = m.group(1), m.group(2), int(m.group(3))
        if name in self.struct_pos:
            self.error(pos, f"duplicate struct '{name}'")
        self.struct_pos[name] = pos
        fields: list[StructField] = []
        for part in _split_args(body):
            fm = _FIELD_RE.match(part)
            if not fm:
                self.error(pos, f"malformed field '{part}' in struct '{name}'")
                continue
            fields.append(StructField(fm.group(1), _parse_type(fm.group(2)), int(fm.group(3)), bool(fm.group(4))))
        self.structs.append(StructDecl(name, tuple(fields), size))

    def _function_header(self, m: re.Match, pos: SourcePos) -> _FunctionBuilder:
        name = m.group(1)
        if name in self.function_pos:
            self.error(pos, f"duplicate function '{name}'")
        self.function_pos[name] = pos
        params: list[Param] = []
        for part in _split_args(m.group(2)):
            pm = _PARAM_RE.match(part)
            if not pm:
                self.error(pos, f"malformed parameter '{part}' in function '{name}'")
                continue
            params.append(Param(pm.group(1), _parse_type(pm.group(2))))
        ret = _parse_type(m.group(3)) if m.group(3) else None
        return _FunctionBuilder(name, tuple(params), ret, pos)

    def _function_line(self, fn: _FunctionBuilder, text: str, pos: SourcePos) -> Optional[_FunctionBuilder]:
        if text == "}":
            if fn.relax_depth:
                fn.relax_depth -= 1
                return fn
            fn.close_block(self.diagnostics, pos)
            if not fn.blocks:
                self.error(fn.pos, f"function '{fn.name}' has no blocks")
            self.functions.append(Function(fn.name, fn.params, fn.return_type, tuple(fn.blocks)))
            return None
        if text == "relax {":
            fn.relax_depth += 1
            return fn
        m = _LABEL_RE.match(text)
        if m:
            if fn.label is not None:
                fn.close_block(self.diagnostics, pos)
            fn.label = m.group(1)
            fn.label_pos = pos
            return fn
        try:
            instr = parse_instruction(text)
        except _LineError as e:
            self.error(pos, e.message)
            return fn
        if fn.relax_depth and instr.op in RELAXABLE and not instr.relax:
            instr = Instruction(
                instr.op, instr.dest, instr.base, instr.field, instr.index, instr.args,
                instr.target, instr.count, instr.labels, relax=True,
            )
        instr = Instruction(
            instr.op, instr.dest, instr.base, instr.field, instr.index, instr.args,
            instr.target, instr.count, instr.labels, instr.relax, pos=pos,
        )
        if fn.label is None:
            if fn.blocks:
                self.error(pos, "instruction after terminator must start a new labeled block")
                return fn
            fn.label = "entry"
            fn.label_pos = pos
        elif fn.current and fn.current[-1].is_terminator:
            self.error(pos, "instruction after terminator must start a new labeled block")
            return fn
        fn.current.append(instr)
        return fn

    def program(self) -> Program:
        return Program(
            structs=tuple(self.structs),
            roots=tuple(self.roots),
            functions=tuple(self.functions),
            harness=self.harness,
            lineattr=self.lineattr,
            aligned=self.aligned,
        )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _pos_of(instr: Instruction, fallback: SourcePos) -> SourcePos:
    return instr.pos or fallback


class _Validator:
    def __init__(self, program: Program, parser: _Parser):
        self.p = program
        self.parser = parser
        self.diagnostics: list[Diagnostic] = []

    def error(self, pos: SourcePos, message: str) -> None:
        self.diagnostics.append(Diagnostic(pos.line, pos.column, message))

    def run(self) -> list[Diagnostic]:
        struct_names = {s.name for s in self.p.structs}
        for s in self.p.structs:
            self._check_struct(s, struct_names, self.parser.struct_pos.get(s.name, SourcePos(0, 0)))
        for r in self.p.roots:
            if r.struct not in struct_names:
                self.error(self.parser.root_pos[r.name], f"pmroot '{r.name}' has unknown struct '{r.struct}'")
        for fn in self.p.functions:
            self._check_function(fn, struct_names)
        self._check_entry()
        return self.diagnostics

    def _check_struct(self, s: StructDecl, struct_names: set[str], pos: SourcePos) -> None:
        seen: set[str] = set()
        last = -1
        for f in s.fields:
            if f.name in seen:
                self.error(pos, f"duplicate field '{f.name}' in struct '{s.name}'")
            seen.add(f.name)
            if f.offset <= last:
                self.error(pos, f"field offsets must be strictly increasing in struct '{s.name}'")
            if f.offset % WORD_SIZE:
                self.error(pos, f"field '{f.name}' offset must be a multiple of {WORD_SIZE}")
            if f.offset + WORD_SIZE > s.size:
                self.error(pos, f"field '{f.name}' does not fit in struct '{s.name}' of size {s.size}")
            if f.type.is_pointer and f.type.struct not in struct_names:
                self.error(pos, f"field '{f.name}' points to unknown struct '{f.type.struct}'")
            last = f.offset

    def _check_function(self, fn: Function, struct_names: set[str]) -> None:
        fpos = self.parser.function_pos.get(fn.name, SourcePos(0, 0))
        for prm in fn.params:
            if prm.type.is_pointer and prm.type.struct not in struct_names:
                self.error(fpos, f"parameter '{prm.name}' has unknown struct '{prm.type.struct}'")
            if prm.name in self.p.root_names:
                self.error(fpos, f"parameter '{prm.name}' shadows pmroot '{prm.name}'")
        if len(set(fn.param_names)) != len(fn.params):
            self.error(fpos, f"duplicate parameter names in function '{fn.name}'")
        if fn.return_type is not None and fn.return_type.is_pointer and fn.return_type.struct not in struct_names:
            self.error(fpos, f"function '{fn.name}' returns unknown struct '{fn.return_type.struct}'")

        labels = [b.label for b in fn.blocks]
        for label in {l for l in labels if labels.count(l) > 1}:
            self.error(fpos, f"duplicate block label '{label}' in function '{fn.name}'")

        params = set(fn.param_names)
        roots = self.p.root_names
        types, type_diags = resolve_local_types(self.p, fn)
        self.diagnostics.extend(type_diags)
        known = params | roots | set(types)
        all_types = {r.name: ptr(r.struct) for r in self.p.roots}
        all_types.update({p.name: p.type for p in fn.params})
        all_types.update(types)

        for block in fn.blocks:
            for idx, instr in enumerate(block.instructions):
                pos = _pos_of(instr, fpos)
                if instr.is_terminator and idx != len(block.instructions) - 1:
                    self.error(pos, f"terminator in the middle of block '{block.label}'")
                for label in instr.labels:
                    if label not in labels:
                        self.error(pos, f"branch to unknown block '{label}'")
                if instr.dest is not None:
                    if instr.dest in params:
                        self.error(pos, f"parameter '{instr.dest}' is read-only")
                    if instr.dest in roots:
                        self.error(pos, f"local '{instr.dest}' shadows pmroot '{instr.dest}'")
                    # a flush after the access must still name the accessed object
                    if instr.op in (Opcode.LOAD_ATOMIC, Opcode.RMW, Opcode.CAS) and instr.dest == instr.base:
                        self.error(pos, f"'{instr.dest}' cannot be both destination and base of {instr.op.value}")
                for name in instr.names_used():
                    if name not in known:
                        self.error(pos, f"unknown variable '{name}'")
                self._check_instruction(fn, instr, pos, all_types, struct_names)

    def _check_instruction(
        self, fn: Function, instr: Instruction, pos: SourcePos, types: dict[str, TypeRef], struct_names: set[str]
    ) -> None:
        op = instr.op
        if instr.relax and op not in RELAXABLE:
            self.error(pos, f"'!relax' is not allowed on {op.value}")
        if op in (Opcode.PMALLOC, Opcode.MALLOC) and instr.target not in struct_names:
            self.error(pos, f"unknown struct '{instr.target}'")
        if op in ACCESS_OPS and instr.base in types:
            base_type = types[instr.base]
            if not base_type.is_pointer:
                self.error(pos, f"'{instr.base}' is not a struct pointer")
            elif instr.field is not None and field_type(self.p, base_type, instr.field) is None:
                self.error(pos, f"struct '{base_type.struct}' has no field '{instr.field}'")
        if op in (Opcode.MEMCPY, Opcode.FLUSHRANGE, Opcode.PTRADD) and instr.base in types:
            if not types[instr.base].is_pointer:
                self.error(pos, f"'{instr.base}' is not a struct pointer")
        if op is Opcode.CALL:
            if not self.p.has_function(instr.target):
                self.error(pos, f"call to undeclared function '{instr.target}'")
                return
            callee = self.p.function(instr.target)
            if len(callee.params) != len(instr.args):
                self.error(pos, f"'{callee.name}' expects {len(callee.params)} argument(s), got {len(instr.args)}")
            if instr.dest is not None and callee.return_type is None:
                self.error(pos, f"'{callee.name}' does not return a value")
        if op is Opcode.RET and instr.args and fn.return_type is None:
            self.error(pos, f"function '{fn.name}' does not return a value")

    def _check_entry(self) -> None:
        h = self.p.harness
        if h is None:
            if not self.p.functions:
                return
            mains = [f for f in self.p.functions if f.name == "main"]
            if len(mains) != 1:
                self.error(SourcePos(1, 1), "a program without a harness needs exactly one function named 'main'")
            elif mains[0].params:
                pos = self.parser.function_pos.get("main", SourcePos(1, 1))
                self.error(pos, "'main' must not take parameters")
            return
        hpos = self.parser.harness_pos or SourcePos(1, 1)
        if not h.threads:
            self.error(hpos, "harness declares no threads")
        if len(h.threads) > 2:
            self.error(hpos, f"harness declares {len(h.threads)} threads; at most 2 are supported")
        if h.bound is not None and h.bound <= 0:
            self.error(hpos, "harness bound must be positive")
        for t, tpos in zip(h.threads, self.parser.thread_pos):
            if not self.p.has_function(t.function):
                self.error(tpos, f"thread entry '{t.function}' is not declared")
                continue
            fn = self.p.function(t.function)
            if len(fn.params) != len(t.args):
                self.error(tpos, f"'{fn.name}' expects {len(fn.params)} argument(s), got {len(t.args)}")
                continue
            for prm, arg in zip(fn.params, t.args):
                if prm.type.is_pointer:
                    root = self.p.root(arg) if isinstance(arg, str) else None
                    if root is None:
                        self.error(tpos, f"argument for '{prm.name}' must name a pmroot")
                    elif root.struct != prm.type.struct:
                        self.error(tpos, f"pmroot '{arg}' is a {root.struct}, expected {prm.type.struct}")
                elif not isinstance(arg, int):
                    self.error(tpos, f"argument for '{prm.name}' must be an integer")


def parse_program(text: Union[bytes, str]) -> Program:
    """Parse and validate .pmir text.

    Args:
        text: UTF-8 bytes or an already decoded string

    Returns:
        The validated Program

    Raises:
        ParseError: with every diagnostic found, each carrying a line/column
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            head = text[: e.start]
            line_start = head.rfind(b"\n") + 1
            column = len(head[line_start:].decode("utf-8", errors="replace")) + 1
            diag = Diagnostic(head.count(b"\n") + 1, column, "input is not valid UTF-8")
            raise ParseError([diag]) from e

    parser = _Parser(text)
    parser.parse()
    if parser.diagnostics:
        raise ParseError(parser.diagnostics)
    program = parser.program()
    diagnostics = _Validator(program, parser).run()
    if diagnostics:
        raise ParseError(diagnostics)
    logger.debug(
        "Parsed program: %d struct(s), %d root(s), %d function(s)",
        len(program.structs), len(program.roots), len(program.functions),
    )
    return program
