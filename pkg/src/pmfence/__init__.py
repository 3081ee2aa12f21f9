"""pmfence: find and repair persistency-order bugs in .pmir programs."""

from pmfence.config import AnalysisConfig, load_config
from pmfence.errors import (
    AnalysisBudgetError,
    BoundExceededError,
    ConfigError,
    ExecutionFault,
    UnknownReferenceError,
)
from pmfence.interproc import AnalysisResults, run_interprocedural
from pmfence.ir import ParseError, Program, emit_program, parse_program
from pmfence.oracle import Verdict, check_robustness
from pmfence.report import write_report
from pmfence.transform import TransformResult, transform_program

__all__ = [
    "AnalysisBudgetError",
    "AnalysisConfig",
    "AnalysisResults",
    "BoundExceededError",
    "ConfigError",
    "ExecutionFault",
    "ParseError",
    "Program",
    "TransformResult",
    "UnknownReferenceError",
    "Verdict",
    "check_robustness",
    "emit_program",
    "load_config",
    "parse_program",
    "run_interprocedural",
    "transform_program",
    "write_report",
]
