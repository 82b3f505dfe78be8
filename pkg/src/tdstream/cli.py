"""Command-line driver.

    tdstream --program rules.lars --stream events.txt --until 10

Reads the stream time-point by time-point and prints the facts derived at
each one as ``pred(args)@t`` lines, flushing after every time-point.
"""
from __future__ import annotations

import argparse
import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from . import ec as ec_mod
from . import lars as lars_mod
from .core import Program, accepts_input, validate
from .engine import StreamingGraph
from .errors import OutOfOrderInput, ParseError, StreamFormatError, UnknownPredicate, ValidationError
from .oracle import perfect_model
from .syntax import Fact, parse_stream_line, parse_tdl
from .terms import format_fact

log = logging.getLogger("tdstream")

DIALECTS = ("tdl", "lars", "ec")


def load_program(text: str, dialect: str) -> tuple[Program, object]:
    """Parse, translate if needed, and validate. Returns the program and the
    dialect-level source (the EC program, for diagnostics)."""
    if dialect == "tdl":
        return validate(parse_tdl(text)), None
    if dialect == "lars":
        return lars_mod.lars_to_td(lars_mod.parse_lars(text)), None
    src = ec_mod.parse_ec(text)
    return ec_mod.ec_to_td(src), src


def read_ticks(lines: Iterable[str], program: Program) -> Iterator[tuple[int, list[Fact]]]:
    """Group stream lines by time-point, yielding each group once the next
    time-point starts. Checks order, predicates and arities as it goes."""
    current, batch = None, []
    for n, line in enumerate(lines, 1):
        item = parse_stream_line(line, n)
        if item is None:
            continue
        t = item if isinstance(item, int) else item.time
        if current is not None and t < current:
            raise StreamFormatError(f"line {n}: time {t} after {current}; the stream must be ordered")
        if isinstance(item, Fact):
            arity = program.arities.get(item.pred)
            if arity is None or not accepts_input(item.pred):
                raise StreamFormatError(f"line {n}: {item.pred} does not occur in the program")
            if arity != len(item.args):
                raise StreamFormatError(f"line {n}: {item.pred} has arity {arity}, got {len(item.args)}")
        if current is not None and t > current:
            yield current, batch
            batch = []
        current = t
        if isinstance(item, Fact):
            batch.append(item)
    if current is not None:
        yield current, batch


def output_filter(selection: str | None, program: Program):
    if selection == "all":
        return program.intensional
    if selection:
        return frozenset(p.strip() for p in selection.split(",") if p.strip())
    return program.output_predicates


def _emit(out: TextIO, facts, t: int, keep) -> None:
    lines = sorted(format_fact(p, row, t) for p, row in facts if p in keep)
    if lines:
        out.write("".join(line + "\n" for line in lines))
    out.flush()


def _ticks_until(ticks, until: int | None) -> Iterator[tuple[int, list[Fact]]]:
    """Fill in empty time-points from 1 up to the last one needed."""
    t = 0
    for time, facts in ticks:
        if until is not None and time > until:
            break
        while t + 1 < time:
            t += 1
            yield t, []
        t = time
        yield t, facts
    if until is not None:
        while t < until:
            t += 1
            yield t, []


def run(args: argparse.Namespace, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    try:
        text = Path(args.program).read_text(encoding="utf-8")
    except OSError as e:
        log.error("cannot read program: %s", e)
        return 1
    dialect = args.dialect or Path(args.program).suffix.lstrip(".")
    if dialect not in DIALECTS:
        log.error("cannot infer the dialect of %s; use --dialect", args.program)
        return 1
    try:
        program, source = load_program(text, dialect)
    except (ParseError, ValidationError) as e:
        for v in getattr(e, "violations", [e]):
            log.error("%s: %s", args.program, v)
        return 1
    for note in program.diagnostics:
        log.info("%s", note)
    if args.emit_translated:
        if args.emit_translated == "-":
            out.write(program.to_text())
        else:
            Path(args.emit_translated).write_text(program.to_text(), encoding="utf-8")
    keep = output_filter(args.output, program)

    try:
        handle = sys.stdin if args.stream in (None, "-") else open(args.stream, encoding="utf-8")
    except OSError as e:
        log.error("cannot read stream: %s", e)
        return 2
    trace = open(args.trace_graph, "w", encoding="utf-8") if args.trace_graph else None
    try:
        ticks = _ticks_until(read_ticks(handle, program), args.until)
        if args.engine == "naive":
            items = list(ticks)
            horizon = items[-1][0] if items else 0
            model = perfect_model(program, [f for _, fs in items for f in fs], horizon)
            by_time = defaultdict(list)
            for p, row, t in model:
                by_time[t].append((p, row))
            for t in range(1, horizon + 1):
                _emit(out, by_time[t], t, keep)
            return 0
        g = StreamingGraph(program, forget=not args.no_forget, minimise=not args.no_minimise,
                           delta=not args.no_delta, prune=not args.no_prune)
        for t, facts in ticks:
            derived = g.step(facts, t)
            if trace:
                trace.write(g.to_dot())
                trace.flush()
            if source is not None:
                for msg in ec_mod.collisions(source, derived):
                    log.warning("t=%d: %s", t, msg)
            _emit(out, derived, t, keep)
            if g.do_forget:
                g.forget(t)
        return 0
    except (StreamFormatError, OutOfOrderInput, UnknownPredicate) as e:
        log.error("stream: %s", e)
        return 2
    finally:
        if handle is not sys.stdin:
            handle.close()
        if trace:
            trace.close()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tdstream", description="Incremental temporal Datalog over fact streams.")
    ap.add_argument("--program", required=True, help="rule file (.tdl, .lars or .ec)")
    ap.add_argument("--dialect", choices=DIALECTS, help="override the dialect inferred from the extension")
    ap.add_argument("--stream", default="-", help="stream file, or - for standard input")
    ap.add_argument("--until", type=int, help="last time-point to evaluate")
    ap.add_argument("--engine", choices=("stg", "naive"), default="stg")
    ap.add_argument("--output", help="comma-separated predicates to print, or 'all'")
    ap.add_argument("--no-forget", action="store_true")
    ap.add_argument("--no-minimise", action="store_true")
    ap.add_argument("--no-delta", action="store_true")
    ap.add_argument("--no-prune", action="store_true", help="keep nodes that stay empty")
    ap.add_argument("--emit-translated", metavar="PATH", help="write the compiled rules (- for stdout)")
    ap.add_argument("--trace-graph", metavar="PATH", help="write the graph in DOT after each time-point")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["run"]:
        argv = argv[1:]
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.until is not None and args.until < 1:
        ap.error("--until must be at least 1")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
