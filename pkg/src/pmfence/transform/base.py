"""Base insertion: persist every PM write (and dirtying load) right where it happens."""

import logging

from pmfence.analysis.env import FunctionEnv
from pmfence.analysis.lattice import Mode
from pmfence.analysis.state import Site
from pmfence.ir.model import Instruction, Opcode, Program
from pmfence.pointsto import PmClassification

from .rewrite import FENCE, InsertionPlan, flushopt_for

logger = logging.getLogger(__name__)

_PERSISTED = frozenset(
    {
        Opcode.STORE, Opcode.STORE_ATOMIC, Opcode.STORE_RELEASE, Opcode.STOREIDX,
        Opcode.RMW, Opcode.CAS, Opcode.MEMCPY,
    }
)


def base_repair(env: FunctionEnv, instr: Instruction) -> list[Instruction]:
    """Instructions that must follow `instr` under base insertion."""
    if instr.relax or not env.is_pm(instr.base):
        return []
    if instr.op in _PERSISTED:
        return [flushopt_for(instr), FENCE]
    if instr.op is Opcode.LOAD_ATOMIC and env.mode is not Mode.FLIT:
        return [flushopt_for(instr), FENCE]
    if instr.op in (Opcode.LOAD, Opcode.LOADIDX) and instr.base in env.ptradd_refs:
        return [FENCE]
    return []


def plan_base(program: Program, pm: PmClassification, mode: Mode = Mode.BASE) -> InsertionPlan:
    plan = InsertionPlan()
    for fn in program.functions:
        env = FunctionEnv(program, fn, pm, mode)
        for block in fn.blocks:
            instrs = block.instructions
            for index, instr in enumerate(instrs):
                repair = base_repair(env, instr)
                if not repair or list(instrs[index + 1: index + 1 + len(repair)]) == repair:
                    continue
                site = Site(fn.name, block.label, index)
                for ins in repair:
                    plan.after(site, ins, f"base: {instr.op.value} at {site}")
    return plan


def insert_base(program: Program, pm: PmClassification, mode: Mode = Mode.BASE) -> tuple[Program, int]:
    """Flushopt+fence after every PM store, rmw, cas, memcpy and (outside FliT) atomic load."""
    rewritten, count = plan_base(program, pm, mode).apply(program)
    logger.debug("Base insertion added %d instruction(s)", count)
    return rewritten, count
