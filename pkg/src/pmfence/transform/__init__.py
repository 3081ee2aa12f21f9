"""Flush and fence insertion."""

from .base import base_repair, insert_base
from .pipeline import TransformResult, transform_program
from .repair import apply_flit, insert_fences, insert_flushes
from .rewrite import InsertedInstruction, InsertionPlan

__all__ = [
    "InsertedInstruction",
    "InsertionPlan",
    "TransformResult",
    "apply_flit",
    "base_repair",
    "insert_base",
    "insert_fences",
    "insert_flushes",
    "transform_program",
]
