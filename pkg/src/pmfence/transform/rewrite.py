"""Planned insertions and their application to a Program.

Passes record what goes before or after which original instruction; the
plan is applied in one sweep so sites stay valid while planning.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Optional

from pmfence.analysis.state import Site
from pmfence.ir.model import BasicBlock, Function, Instruction, Opcode, Program

logger = logging.getLogger(__name__)

# Instructions that may sit between an access and the fence that settles it
_SETTLE_OPS = frozenset(
    {
        Opcode.FLUSH, Opcode.FLUSHOPT, Opcode.FLUSHRANGE, Opcode.FENCE,
        Opcode.FLIT_INC, Opcode.FLIT_DEC, Opcode.FLIT_HELP,
    }
)


def flushopt_for(instr: Instruction) -> Instruction:
    """The flushopt (or flushrange for memcpy) covering what `instr` accessed."""
    if instr.op is Opcode.MEMCPY:
        return Instruction(Opcode.FLUSHRANGE, base=instr.base, args=(instr.args[1],))
    return Instruction(Opcode.FLUSHOPT, base=instr.base, field=instr.field, index=instr.index)


FENCE = Instruction(Opcode.FENCE)

_FLUSHES = frozenset({Opcode.FLUSH, Opcode.FLUSHOPT, Opcode.FLUSHRANGE})


@dataclass(frozen=True)
class InsertedInstruction:
    """An instruction the transformer added, at its final position."""

    function: str
    block: str
    index: int
    instruction: Instruction

    @property
    def origin(self) -> str:
        return self.instruction.origin or ""

    @property
    def is_fence(self) -> bool:
        return self.instruction.op is Opcode.FENCE


class InsertionPlan:
    def __init__(self) -> None:
        self._before: dict[Site, list[Instruction]] = defaultdict(list)
        self._after: dict[Site, list[Instruction]] = defaultdict(list)

    def before(self, site: Site, instr: Instruction, origin: str) -> None:
        self._add(self._before[site], instr, origin)

    def after(self, site: Site, instr: Instruction, origin: str) -> None:
        self._add(self._after[site], instr, origin)

    @staticmethod
    def _add(slot: list[Instruction], instr: Instruction, origin: str) -> None:
        if instr not in slot:
            slot.append(replace(instr, origin=origin, pos=None))

    def __bool__(self) -> bool:
        return any(self._before.values()) or any(self._after.values())

    def apply(self, program: Program) -> tuple[Program, int]:
        """The rewritten program and how many instructions were actually inserted."""
        inserted = 0
        functions = []
        for fn in program.functions:
            blocks = []
            for block in fn.blocks:
                new_block, count = self._rewrite_block(fn, block)
                blocks.append(new_block)
                inserted += count
            functions.append(Function(fn.name, fn.params, fn.return_type, tuple(blocks)))
        rewritten = Program(
            structs=program.structs,
            roots=program.roots,
            functions=tuple(functions),
            harness=program.harness,
            lineattr=program.lineattr,
            aligned=program.aligned,
        )
        return rewritten, inserted

    def _rewrite_block(self, fn: Function, block: BasicBlock) -> tuple[BasicBlock, int]:
        original = block.instructions
        out: list[Instruction] = []
        added: list[bool] = []

        def emit(instr: Instruction, planned: tuple[Instruction, ...], rest: tuple[Instruction, ...]) -> None:
            upcoming = planned + rest
            if instr.op is Opcode.FENCE:
                if out and out[-1].op is Opcode.FENCE:
                    return
                if upcoming and upcoming[0].op is Opcode.FENCE:
                    return
            elif instr.op in _FLUSHES:
                # an existing flush right after the site counts only if the planned
                # tail is just flushes and fences, which then move past it
                tail_settles = all(p.op in _FLUSHES or p.op is Opcode.FENCE for p in planned)
                if (tail_settles and instr in _leading(rest, _FLUSHES)) or (out and out[-1] == instr):
                    return
            elif instr in _leading(upcoming, _SETTLE_OPS) or (out and out[-1] == instr):
                return
            out.append(instr)
            added.append(True)

        for index, instr in enumerate(original):
            site = Site(fn.name, block.label, index)
            before = tuple(self._before.get(site, ()))
            for k, ins in enumerate(before):
                emit(ins, before[k + 1:], original[index:])
            out.append(instr)
            added.append(False)
            after = tuple(self._after.get(site, ()))
            for k, ins in enumerate(after):
                emit(ins, after[k + 1:], original[index + 1:])
        instrs = _settle_fences(list(zip(out, added)))
        return BasicBlock(block.label, tuple(i for i, _ in instrs)), sum(new for _, new in instrs)


def _settle_fences(instrs: list[tuple[Instruction, bool]]) -> list[tuple[Instruction, bool]]:
    """Move each inserted fence past the flushes right after it, then drop inserted fences next to a fence.

    A flushopt that an insertion deduplicated against a later existing one
    would otherwise sit after the fence meant to complete it.
    """
    pos = 0
    while pos < len(instrs):
        instr, new = instrs[pos]
        if new and instr.op is Opcode.FENCE:
            end = pos + 1
            while end < len(instrs) and instrs[end][0].op in _FLUSHES:
                end += 1
            if end > pos + 1:
                instrs.insert(end - 1, instrs.pop(pos))
                pos = end - 1
        pos += 1
    kept: list[tuple[Instruction, bool]] = []
    for k, (instr, new) in enumerate(instrs):
        if new and instr.op is Opcode.FENCE:
            if kept and kept[-1][0].op is Opcode.FENCE:
                continue
            if k + 1 < len(instrs) and instrs[k + 1][0].op is Opcode.FENCE:
                continue
        kept.append((instr, new))
    return kept


def _leading(instrs: tuple[Instruction, ...], ops: frozenset[Opcode]) -> tuple[Instruction, ...]:
    run = []
    for instr in instrs:
        if instr.op not in ops:
            break
        run.append(instr)
    return tuple(run)


def settle_point(block: BasicBlock, index: int) -> int:
    """First position after `index` that is not part of its flush/fence window."""
    pos = index + 1
    while pos < len(block.instructions) - 1 and block.instructions[pos].op in _SETTLE_OPS - {Opcode.FENCE}:
        pos += 1
    return pos


def inserted_instructions(program: Program, exclude: Optional[set[int]] = None) -> list[InsertedInstruction]:
    """Instructions carrying an origin, in program order."""
    exclude = exclude or set()
    found = []
    for fn in program.functions:
        for block in fn.blocks:
            for index, instr in enumerate(block.instructions):
                if instr.origin is not None and id(instr) not in exclude:
                    found.append(InsertedInstruction(fn.name, block.label, index, instr))
    return found
