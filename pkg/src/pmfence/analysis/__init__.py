"""Escape and persistency dataflow analyses."""

from .context import BOTTOM, TOP, CallingContext, SummarizedResult, abstract_context, expand_summary
from .env import FunctionEnv
from .intraproc import FunctionAnalysis, analyze_function, solve_function
from .lattice import EscapeState, Mode, PersistState, lowest, meet
from .state import AbstractLocation, AnalysisState, ArraySlot, Site
from .summaries import SummaryTable, resolve_callsite
from .transfer import entry_state, transfer, transfer_array, transfer_escape, transfer_persist

__all__ = [
    "BOTTOM",
    "TOP",
    "AbstractLocation",
    "AnalysisState",
    "ArraySlot",
    "CallingContext",
    "EscapeState",
    "FunctionAnalysis",
    "FunctionEnv",
    "Mode",
    "PersistState",
    "Site",
    "SummarizedResult",
    "SummaryTable",
    "abstract_context",
    "analyze_function",
    "entry_state",
    "expand_summary",
    "lowest",
    "meet",
    "resolve_callsite",
    "solve_function",
    "transfer",
    "transfer_array",
    "transfer_escape",
    "transfer_persist",
]
