"""Golden .pmir programs and a seeded random program generator."""

from pathlib import Path

PROGRAMS_DIR = Path(__file__).parent


def read_program(name: str) -> str:
    return (PROGRAMS_DIR / f"{name}.pmir").read_text()
