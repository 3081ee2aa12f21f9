"""Exceptions shared across pmfence. ParseError lives with the IR parser."""


class ConfigError(ValueError):
    """Invalid configuration: unknown allocator, bad mode, malformed config file."""


class UnknownReferenceError(KeyError):
    """A points-to query named a reference or field the program does not have."""


class AnalysisBudgetError(RuntimeError):
    """A fixpoint exceeded its termination budget. Indicates an analysis bug."""


class BoundExceededError(RuntimeError):
    """Oracle exploration hit the step bound; no verdict is available."""

    def __init__(self, bound: int, thread: str):
        self.bound = bound
        self.thread = thread
        super().__init__(f"Exploration exceeded bound of {bound} steps (thread {thread})")


class ExecutionFault(RuntimeError):
    """The oracle executed an invalid access (null pointer, unknown address)."""
