"""Shared fixtures for pmfence tests."""

import pytest

from pmfence.config import AnalysisConfig
from pmfence.ir.parser import parse_program
from programs import read_program


@pytest.fixture
def config():
    """Default analysis configuration."""
    return AnalysisConfig()


@pytest.fixture
def two_stores():
    return parse_program(read_program("two_stores"))


@pytest.fixture
def flush_after_both():
    return parse_program(read_program("flush_after_both"))


@pytest.fixture
def stack_push():
    return parse_program(read_program("stack_push"))


@pytest.fixture
def atomic_handoff():
    return parse_program(read_program("atomic_handoff"))


@pytest.fixture
def program_file(tmp_path):
    """Write a named golden program (or raw text) to a temporary .pmir file."""

    def _write(name_or_text: str, filename: str = "input.pmir"):
        text = read_program(name_or_text) if "\n" not in name_or_text else name_or_text
        path = tmp_path / filename
        path.write_text(text)
        return path

    return _write
