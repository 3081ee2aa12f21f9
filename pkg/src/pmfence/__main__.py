"""CLI entry point: `python -m pmfence {analyze,transform,simulate} FILE`"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional


def _parse_args(argv: list[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="python -m pmfence",
        description="Persistent-memory robustness checker and flush/fence inserter",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("file", type=Path, help=".pmir program")
    shared.add_argument(
        "--mode",
        default=None,
        help="Analysis mode: base, opt or flit (default: opt)",
    )
    shared.add_argument(
        "--pm-alloc",
        default=None,
        metavar="NAMES",
        help="Comma-separated functions returning PM pointers (pmalloc is always included)",
    )
    shared.add_argument("--format", choices=("text", "json"), default="text", help="Report format")
    shared.add_argument("--lineattr", type=int, default=None, metavar="BYTES", help="Override the cache-line size")
    shared.add_argument("--bound", type=int, default=None, metavar="STEPS", help="Oracle step bound across all threads")
    shared.add_argument("--config", type=Path, default=None, metavar="PATH", help="JSON config file")
    shared.add_argument("--debug", action="store_true", help="Enable debug logging")

    sub.add_parser("analyze", parents=[shared], help="Report robustness and durability violations")
    transform = sub.add_parser("transform", parents=[shared], help="Insert flushes and fences")
    transform.add_argument("--out", type=Path, default=None, metavar="PATH", help="Repaired program (default: stdout)")
    transform.add_argument(
        "--emit-diff",
        action="store_true",
        help="List every inserted instruction with the violation it repairs",
    )
    simulate = sub.add_parser("simulate", parents=[shared], help="Run the bounded crash-ordering oracle")
    simulate.add_argument("--repair", action="store_true", help="Transform under --mode before simulating")
    return parser.parse_args(argv)


def _write(data: bytes, stream) -> None:
    # captured streams in tests have no .buffer
    if hasattr(stream, "buffer"):
        stream.buffer.write(data)
    else:
        stream.write(data.decode())
    stream.flush()


def run_cli(argv: Optional[list[str]] = None) -> int:
    """Run one subcommand; returns the process exit code.

    analyze exits 1 when violations are found, simulate when the program is
    not robust. Bad input or configuration exits 2.
    """
    try:
        args = _parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2

    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    # Import here so logging is configured first
    from pmfence.config import load_config
    from pmfence.errors import BoundExceededError, ConfigError, ExecutionFault
    from pmfence.interproc import run_interprocedural
    from pmfence.ir.diagnostics import ParseError
    from pmfence.ir.parser import parse_program
    from pmfence.ir.printer import emit_program
    from pmfence.oracle.verdict import check_robustness
    from pmfence.report import write_report
    from pmfence.transform.pipeline import transform_program

    logger = logging.getLogger("pmfence")

    try:
        config = load_config(
            args.config,
            mode=args.mode,
            allocators=args.pm_alloc,
            lineattr=args.lineattr,
            bound=args.bound,
        )
        program = parse_program(args.file.read_bytes())
        if config.lineattr is not None:
            program = program.with_lineattr(config.lineattr)

        if args.command == "analyze":
            results = run_interprocedural(program, config=config)
            _write(write_report(results, args.format, config.report_version), sys.stdout)
            return 1 if results.violations else 0

        if args.command == "transform":
            result = transform_program(program, config=config)
            emitted = emit_program(result.program)
            diff_stream = sys.stdout
            if args.out is not None:
                args.out.write_bytes(emitted)
                logger.info("Wrote %s", args.out)
            else:
                _write(emitted, sys.stdout)
                diff_stream = sys.stderr
            if args.emit_diff:
                _write(write_report(result, args.format, config.report_version), diff_stream)
            return 0

        if args.repair:
            program = transform_program(program, config=config).program
        # --bound beats the harness bound, which beats the config file
        harness_bound = program.harness.bound if program.harness is not None else None
        verdict = check_robustness(
            program,
            bound=args.bound or harness_bound or config.bound,
            lineattr=config.lineattr,
            flit_table_size=config.flit_table_size,
        )
        _write(write_report(verdict, args.format, config.report_version), sys.stdout)
        return 0 if verdict.robust else 1

    except (ParseError, ConfigError, FileNotFoundError, BoundExceededError, ExecutionFault) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
