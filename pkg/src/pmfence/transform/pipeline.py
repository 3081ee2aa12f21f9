"""The repair pipeline: analyze, flush, re-analyze, fence, until nothing is left."""

import logging
from dataclasses import dataclass, field
from typing import Optional

from pmfence.analysis.lattice import Mode
from pmfence.config import AnalysisConfig
from pmfence.interproc import run_interprocedural
from pmfence.ir.model import Opcode, Program
from pmfence.pointsto import compute_pm_set

from .base import insert_base
from .repair import apply_flit, insert_fences, insert_flushes
from .rewrite import InsertedInstruction, inserted_instructions

logger = logging.getLogger(__name__)


@dataclass
class TransformResult:
    program: Program
    mode: Mode
    inserted: list[InsertedInstruction] = field(default_factory=list)
    rounds: int = 0
    # True when analysis-guided repair gave up and base insertion was used
    fell_back: bool = False

    @property
    def flush_count(self) -> int:
        return sum(1 for i in self.inserted if i.instruction.op in (Opcode.FLUSHOPT, Opcode.FLUSHRANGE))

    @property
    def fence_count(self) -> int:
        return sum(1 for i in self.inserted if i.is_fence)


def _origins(program: Program) -> set[int]:
    return {id(i) for fn in program.functions for b in fn.blocks for i in b.instructions if i.origin is not None}


def _is_clean(program: Program, mode: Mode, config: AnalysisConfig) -> bool:
    return not run_interprocedural(program, mode, config).violations


def _repair_loop(program: Program, mode: Mode, config: AnalysisConfig) -> tuple[Optional[Program], int]:
    """Opt/Flit rounds; returns (None, rounds) if the loop stops making progress."""
    current = program
    for round_no in range(1, config.max_repair_rounds + 1):
        results = run_interprocedural(current, mode, config)
        if not results.violations:
            return current, round_no - 1
        flushed = insert_flushes(current, results, mode)
        results = run_interprocedural(flushed, mode, config)
        if not results.violations:
            return flushed, round_no
        fenced = insert_fences(flushed, results)
        if fenced == current:
            logger.warning("Repair round %d made no progress with %d violation(s) left", round_no,
                           len(results.violations))
            return None, round_no
        logger.debug("Repair round %d: %d violation(s) before fences", round_no, len(results.violations))
        current = fenced
    results = run_interprocedural(current, mode, config)
    if not results.violations:
        return current, config.max_repair_rounds
    logger.warning("Repair did not converge in %d round(s)", config.max_repair_rounds)
    return None, config.max_repair_rounds


def transform_program(
    program: Program, mode: Optional[Mode] = None, config: Optional[AnalysisConfig] = None
) -> TransformResult:
    """Insert the flushes and fences `program` needs to be robust under `mode`."""
    config = config or AnalysisConfig()
    mode = mode or config.mode
    if config.lineattr is not None:
        program = program.with_lineattr(config.lineattr)
    existing = _origins(program)
    pm = compute_pm_set(program, config.allocators)
    base_program, _ = insert_base(program, pm)

    if mode is Mode.BASE:
        rounds = 0
        if not _is_clean(base_program, mode, config):
            logger.warning("Base insertion left violations; repairing its output")
            fixed, rounds = _repair_loop(base_program, mode, config)
            base_program = fixed or base_program
        return TransformResult(base_program, mode, inserted_instructions(base_program, existing), rounds)

    start = program
    if mode is Mode.FLIT:
        start = apply_flit(program, run_interprocedural(program, mode, config, pm=pm))
        # keep the counters so atomic loads stay flush-free
        base_program, _ = insert_base(start, pm, Mode.FLIT)
    base_inserted = inserted_instructions(base_program, existing)
    repaired, rounds = _repair_loop(start, mode, config)

    if repaired is not None:
        inserted = inserted_instructions(repaired, existing)
        if mode is Mode.OPT and len(inserted) > len(base_inserted) and _is_clean(base_program, mode, config):
            logger.warning(
                "Guided repair inserted %d instruction(s), base needs %d; using base",
                len(inserted), len(base_inserted),
            )
            return TransformResult(base_program, mode, base_inserted, rounds, True)
        logger.info("Repaired in %d round(s), %d instruction(s) inserted", rounds, len(inserted))
        return TransformResult(repaired, mode, inserted, rounds)

    logger.warning("Falling back to base insertion for %s mode", mode.value)
    if not _is_clean(base_program, mode, config):
        logger.warning("Base insertion also leaves violations")
    return TransformResult(base_program, mode, base_inserted, rounds, True)
