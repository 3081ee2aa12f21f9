"""Bounded ground-truth simulator for the persistent-buffer model."""

from .crash import CanonicalState, CrashImage, canonical_state, crash_images, final_images, root_words, strict_prefix_states
from .explore import ExecutionTrace, enumerate_traces
from .machine import Event, EventKind, Machine
from .verdict import Counterexample, Race, Verdict, VerdictKind, check_robustness, durable_at_exit, find_race

__all__ = [
    "CanonicalState",
    "Counterexample",
    "CrashImage",
    "Event",
    "EventKind",
    "ExecutionTrace",
    "Machine",
    "Race",
    "Verdict",
    "VerdictKind",
    "canonical_state",
    "check_robustness",
    "crash_images",
    "durable_at_exit",
    "enumerate_traces",
    "final_images",
    "find_race",
    "root_words",
    "strict_prefix_states",
]
