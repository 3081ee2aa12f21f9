"""Tests for the command-line entry point and report rendering."""

import json

import pytest

from pmfence.__main__ import run_cli
from pmfence.analysis import Mode
from pmfence.interproc import run_interprocedural
from pmfence.ir import parse_program
from pmfence.report import write_report

FLUSHED = """\
struct Word { v: int @0 } size 64
pmroot x: Word
pmroot y: Word

func main() {
entry:
    store x.v, 1
    flush x.v
    store y.v, 1
    flush y.v
    ret
}
"""

RACY = """\
struct Word { v: int @0 } size 64
pmroot x: Word

func t1() {
entry:
    store x.v, 1
    ret
}

func t2() {
entry:
    r = load x.v
    ret
}

harness {
    thread t1()
    thread t2()
}
"""


def _run(capsys, *argv):
    code = run_cli([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestExitCodes:
    """Tests for the exit status of each subcommand."""

    def test_analyze_with_violations(self, capsys, program_file):
        """Test that analyze exits 1 when it finds violations."""
        code, out, _ = _run(capsys, "analyze", program_file("two_stores"))

        assert code == 1
        assert "error: main:entry.1: DoubleDirtyEscaped [<x, 0>, <y, 0>]" in out

    def test_analyze_clean(self, capsys, program_file):
        """Test that analyze exits 0 on a robust program."""
        code, out, _ = _run(capsys, "analyze", program_file(FLUSHED))

        assert code == 0
        assert out.startswith("0 violation(s) in mode opt")

    def test_transform_exits_zero(self, capsys, program_file):
        """Test that transform succeeds even though the input had violations."""
        code, _, _ = _run(capsys, "transform", program_file("two_stores"))

        assert code == 0

    def test_simulate(self, capsys, program_file):
        """Test simulate: 1 when not robust, 0 when robust."""
        bad, out, _ = _run(capsys, "simulate", program_file("two_stores"))
        good, _, _ = _run(capsys, "simulate", program_file(FLUSHED, "flushed.pmir"))

        assert (bad, good) == (1, 0)
        assert out.startswith("verdict: not-robust (1 trace(s))")

    def test_simulate_after_repair(self, capsys, program_file):
        """Test that --repair simulates the transformed program."""
        code, out, _ = _run(capsys, "simulate", program_file("stack_push"), "--repair")

        assert code == 0
        assert out.startswith("verdict: robust")

    def test_racy_program(self, capsys, program_file):
        """Test that a racy program is reported as such and is not robust."""
        code, out, _ = _run(capsys, "simulate", program_file(RACY))

        assert code == 1
        assert out.startswith("verdict: racy")
        assert "data race on 0x1000:" in out

    @pytest.mark.parametrize(
        "argv",
        [
            ["analyze", "missing.pmir"],
            ["bogus", "x.pmir"],
            ["analyze"],
        ],
    )
    def test_usage_errors(self, capsys, argv):
        """Test that missing files and bad arguments exit 2."""
        code, _, _ = _run(capsys, *argv)

        assert code == 2

    def test_help(self, capsys):
        """Test that --help exits 0."""
        code, out, _ = _run(capsys, "--help")

        assert code == 0
        assert "analyze" in out

    def test_parse_error(self, capsys, program_file):
        """Test that a malformed program exits 2 with a diagnostic."""
        code, _, err = _run(capsys, "analyze", program_file("func main() {\n    bogus\n}\n"))

        assert code == 2
        assert err.startswith("Error:")

    def test_bad_mode(self, capsys, program_file):
        """Test that an unknown mode exits 2."""
        code, _, err = _run(capsys, "analyze", program_file("two_stores"), "--mode", "fast")

        assert code == 2
        assert "fast" in err

    def test_bound_exceeded(self, capsys, program_file):
        """Test that hitting the step bound exits 2."""
        code, _, err = _run(capsys, "simulate", program_file("two_stores"), "--bound", "1")

        assert code == 2
        assert "bound of 1" in err


class TestAnalyzeReport:
    """Tests for the analyze report."""

    def test_json_schema(self, capsys, program_file):
        """Test the JSON keys and the violation record."""
        _, out, _ = _run(capsys, "analyze", program_file("flush_after_both"), "--format", "json")

        report = json.loads(out)
        assert set(report) == {"version", "mode", "violations", "summaryStats"}
        assert report["version"] == "1"
        assert report["mode"] == "opt"
        assert report["summaryStats"] == {"functions": 1, "contextsAnalyzed": 1, "iterations": 1}
        (v,) = report["violations"]
        assert v["kind"] == "DoubleDirtyEscaped"
        assert (v["function"], v["block"], v["index"]) == ("main", "entry", 1)
        assert v["locations"] == [{"ref": "x", "offset": 0}, {"ref": "y", "offset": 0}]
        assert v["severity"] == "error"

    def test_output_is_deterministic(self, capsys, program_file):
        """Test that two runs produce byte-identical reports."""
        path = program_file("stack_push")

        _, first, _ = _run(capsys, "analyze", path, "--format", "json")
        _, second, _ = _run(capsys, "analyze", path, "--format", "json")

        assert first == second

    def test_empty_program(self, capsys, program_file):
        """Test that an empty file analyzes to no violations."""
        path = program_file("\n", "empty.pmir")

        code, out, _ = _run(capsys, "analyze", path, "--format", "json")

        assert code == 0
        assert json.loads(out)["violations"] == []

    def test_mode_from_config(self, capsys, program_file, tmp_path):
        """Test that --config sets the analysis mode."""
        config = tmp_path / "pmfence.json"
        config.write_text(json.dumps({"mode": "flit"}))

        _, out, _ = _run(capsys, "analyze", program_file("atomic_handoff"), "--format", "json", "--config", config)

        report = json.loads(out)
        assert report["mode"] == "flit"
        assert all(v["kind"] != "DoubleDirtyEscaped" for v in report["violations"])


class TestTransformOutput:
    """Tests for where transform writes the program and the diff."""

    def test_program_to_stdout(self, capsys, program_file):
        """Test that without --out the repaired program goes to stdout and parses."""
        _, out, _ = _run(capsys, "transform", program_file("flush_after_both"))

        program = parse_program(out)
        assert run_interprocedural(program, Mode.OPT).violations == []

    def test_out_file_and_diff(self, capsys, program_file, tmp_path):
        """Test that --out writes the program and --emit-diff lists insertions on stdout."""
        target = tmp_path / "fixed.pmir"

        code, out, _ = _run(capsys, "transform", program_file("flush_after_both"), "--out", target, "--emit-diff")

        assert code == 0
        assert run_interprocedural(parse_program(target.read_text()), Mode.OPT).violations == []
        assert "+ main:entry.1: flushopt x.v" in out
        assert "DoubleDirtyEscaped at main:entry.1" in out
        assert "2 instruction(s) inserted in mode opt" in out

    def test_diff_to_stderr_without_out(self, capsys, program_file):
        """Test that the diff goes to stderr when stdout carries the program."""
        _, out, err = _run(capsys, "transform", program_file("two_stores"), "--emit-diff", "--format", "json")

        parse_program(out)
        diff = json.loads(err)
        assert set(diff) == {"version", "mode", "rounds", "fellBack", "inserted"}
        assert diff["fellBack"] is False
        assert all(i["origin"] for i in diff["inserted"])

    def test_base_mode(self, capsys, program_file):
        """Test that --mode base persists every store."""
        _, out, _ = _run(capsys, "transform", program_file("two_stores"), "--mode", "base")

        assert out.count("flushopt") == 2
        assert out.count("fence") == 2


class TestSimulateReport:
    """Tests for the simulate report."""

    def test_json_counterexample(self, capsys, program_file):
        """Test the JSON verdict and counterexample for two unflushed stores."""
        _, out, _ = _run(capsys, "simulate", program_file("two_stores"), "--format", "json")

        report = json.loads(out)
        assert set(report) == {"version", "verdict", "traces", "counterexample", "race", "durable"}
        assert report["verdict"] == "not-robust"
        assert report["traces"] == 1
        ce = report["counterexample"]
        assert ce["roots"] == {"x": [0], "y": [1]}
        assert ce["crashPoint"] >= 2
        assert [s["instruction"] for s in ce["trace"][:2]] == ["store x.v, 1", "store y.v, 1"]

    def test_text_counterexample(self, capsys, program_file):
        """Test the text counterexample sections."""
        _, out, _ = _run(capsys, "simulate", program_file("two_stores"))

        assert "trace:" in out
        assert "persisted prefix per line:" in out
        assert "durable at exit: no" in out


class TestWriteReport:
    """Tests for write_report argument checking."""

    def test_unknown_format(self, two_stores):
        """Test that an unknown format raises ValueError."""
        with pytest.raises(ValueError):
            write_report(run_interprocedural(two_stores), "yaml")

    def test_unknown_subject(self):
        """Test that unsupported subjects raise TypeError."""
        with pytest.raises(TypeError):
            write_report(object())
