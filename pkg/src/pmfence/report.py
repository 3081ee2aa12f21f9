"""Text and JSON reports for analyze, transform and simulate.

JSON goes through pydantic models so key order is fixed by field order and
the output is byte-identical across runs.
"""

import logging
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from pmfence.analysis.state import ArraySlot, Location
from pmfence.config import REPORT_VERSION
from pmfence.interproc import AnalysisResults
from pmfence.ir.printer import format_instruction
from pmfence.oracle.crash import root_words
from pmfence.oracle.verdict import Verdict
from pmfence.transform.pipeline import TransformResult
from pmfence.violations import Violation

logger = logging.getLogger(__name__)


class _Model(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)


class LocationModel(_Model):
    ref: str
    offset: Optional[int] = None
    # Set only for array slots
    index: Optional[str] = None


class ViolationModel(_Model):
    kind: str
    function: str
    block: str
    index: int
    locations: list[LocationModel]
    context: str
    severity: str


class SummaryStats(_Model):
    functions: int
    contexts_analyzed: int = Field(alias="contextsAnalyzed")
    iterations: int


class AnalysisReport(_Model):
    version: str
    mode: str
    violations: list[ViolationModel]
    summary_stats: SummaryStats = Field(alias="summaryStats")


class InsertionModel(_Model):
    function: str
    block: str
    index: int
    instruction: str
    origin: str


class TransformReport(_Model):
    version: str
    mode: str
    rounds: int
    fell_back: bool = Field(alias="fellBack")
    inserted: list[InsertionModel]


class StepModel(_Model):
    thread: int
    site: str
    instruction: str


class CounterexampleModel(_Model):
    trace: list[StepModel]
    crash_point: int = Field(alias="crashPoint")
    # "0x1000: 1" per PM line touched, as in the text report
    image: list[str]
    roots: dict[str, list[Union[int, list[Union[str, int]]]]]


class SimulateReport(_Model):
    version: str
    verdict: str
    traces: int
    counterexample: Optional[CounterexampleModel] = None
    race: Optional[list[str]] = None
    durable: Optional[bool] = None


def _location(loc: Location) -> LocationModel:
    if isinstance(loc, ArraySlot):
        return LocationModel(ref=loc.array, index=loc.index)
    return LocationModel(ref=loc.ref, offset=loc.offset)


def _violation(v: Violation) -> ViolationModel:
    return ViolationModel(
        kind=v.kind.value,
        function=v.site.function,
        block=v.site.block,
        index=v.site.index,
        locations=[_location(loc) for loc in v.locations],
        context=str(v.context),
        severity=v.severity.value,
    )


def analysis_report(results: AnalysisResults, version: str = REPORT_VERSION) -> AnalysisReport:
    stats = results.stats()
    return AnalysisReport(
        version=version,
        mode=results.mode.value,
        violations=[_violation(v) for v in results.violations],
        summary_stats=SummaryStats(**stats),
    )


def transform_report(result: TransformResult, version: str = REPORT_VERSION) -> TransformReport:
    return TransformReport(
        version=version,
        mode=result.mode.value,
        rounds=result.rounds,
        fell_back=result.fell_back,
        inserted=[
            InsertionModel(
                function=i.function,
                block=i.block,
                index=i.index,
                instruction=format_instruction(i.instruction),
                origin=i.origin,
            )
            for i in result.inserted
        ],
    )


def simulate_report(verdict: Verdict, version: str = REPORT_VERSION) -> SimulateReport:
    cex = None
    if verdict.counterexample is not None:
        c = verdict.counterexample
        cex = CounterexampleModel(
            trace=[
                StepModel(thread=s.thread, site=str(s.site), instruction=format_instruction(s.instruction))
                for s in c.trace.steps
            ],
            crash_point=c.crash_point,
            image=c.image.format_lines(c.trace.lineattr),
            roots={k: [list(w) if isinstance(w, tuple) else w for w in words] for k, words in root_words(c.state).items()},
        )
    return SimulateReport(
        version=version,
        verdict=verdict.kind.value,
        traces=verdict.traces,
        counterexample=cex,
        race=verdict.race.describe() if verdict.race is not None else None,
        durable=verdict.durable,
    )


def _to_json(model: BaseModel, exclude_none: bool = False) -> str:
    return model.model_dump_json(by_alias=True, indent=2, exclude_none=exclude_none) + "\n"


# -- text rendering ----------------------------------------------------------


def _analysis_text(report: AnalysisReport) -> str:
    lines = []
    for v in report.violations:
        locs = ", ".join(
            f"{loc.ref}[{loc.index}]" if loc.index is not None else f"<{loc.ref}, {loc.offset}>"
            for loc in v.locations
        )
        lines.append(f"{v.severity}: {v.function}:{v.block}.{v.index}: {v.kind} [{locs}] context {v.context}")
    s = report.summary_stats
    lines.append(
        f"{len(report.violations)} violation(s) in mode {report.mode}; "
        f"{s.functions} function(s), {s.contexts_analyzed} context(s), {s.iterations} iteration(s)"
    )
    return "\n".join(lines) + "\n"


def _transform_text(report: TransformReport) -> str:
    lines = [f"+ {i.function}:{i.block}.{i.index}: {i.instruction}    ; {i.origin}" for i in report.inserted]
    tail = f"{len(report.inserted)} instruction(s) inserted in mode {report.mode} after {report.rounds} round(s)"
    if report.fell_back:
        tail += " (fell back to base insertion)"
    lines.append(tail)
    return "\n".join(lines) + "\n"


def _simulate_text(verdict: Verdict) -> str:
    lines = [f"verdict: {verdict.kind.value} ({verdict.traces} trace(s))"]
    if verdict.counterexample is not None:
        lines += verdict.counterexample.describe()
    if verdict.race is not None:
        lines += verdict.race.describe()
    if verdict.durable is not None:
        lines.append(f"durable at exit: {'yes' if verdict.durable else 'no'}")
    return "\n".join(lines) + "\n"


def write_report(
    subject: Union[AnalysisResults, TransformResult, Verdict],
    fmt: str = "text",
    version: str = REPORT_VERSION,
) -> bytes:
    """Render `subject` as text or JSON.

    Raises:
        ValueError: If `fmt` is neither text nor json
    """
    if fmt not in ("text", "json"):
        raise ValueError(f"Unknown report format '{fmt}'")
    if isinstance(subject, AnalysisResults):
        report = analysis_report(subject, version)
        out = _to_json(report, exclude_none=True) if fmt == "json" else _analysis_text(report)
    elif isinstance(subject, TransformResult):
        report = transform_report(subject, version)
        out = _to_json(report) if fmt == "json" else _transform_text(report)
    elif isinstance(subject, Verdict):
        out = _to_json(simulate_report(subject, version)) if fmt == "json" else _simulate_text(subject)
    else:
        raise TypeError(f"Cannot report on {type(subject).__name__}")
    return out.encode()
