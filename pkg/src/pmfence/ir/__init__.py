"""The .pmir mini-IR: model, parser, printer and control-flow graphs."""

from .cfg import CFG, build_cfg
from .diagnostics import Diagnostic, ParseError
from .model import (
    ADDR,
    INT,
    BasicBlock,
    Function,
    Harness,
    Instruction,
    Opcode,
    Param,
    Program,
    RootDecl,
    StructDecl,
    StructField,
    ThreadSpec,
    TypeRef,
    ptr,
)
from .parser import parse_instruction, parse_program
from .printer import emit_program, format_instruction
from .types import local_types

__all__ = [
    "ADDR",
    "INT",
    "BasicBlock",
    "CFG",
    "Diagnostic",
    "Function",
    "Harness",
    "Instruction",
    "Opcode",
    "Param",
    "ParseError",
    "Program",
    "RootDecl",
    "StructDecl",
    "StructField",
    "ThreadSpec",
    "TypeRef",
    "build_cfg",
    "emit_program",
    "format_instruction",
    "local_types",
    "parse_instruction",
    "parse_program",
    "ptr",
]
