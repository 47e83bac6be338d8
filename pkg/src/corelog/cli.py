"""``corelog`` command line: convert, validate, stats and roundtrip-check.

Data goes to ``--output`` (or standard output for ``stats``); diagnostics
reports always go to standard error. Exit codes::

    0  success
    1  I/O, parse or decode failure
    2  error diagnostics (convert only with --strict) or round-trip mismatch
    3  warnings only, with --strict-warnings
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NoReturn, Sequence, TextIO

from corelog.diagnostics import Diagnostic, has_errors, render_structured, render_text, sort_diagnostics
from corelog.model import CoreLog, CoreLogError, EventClass, ObjectKind, canonicalize, first_difference
from corelog.ocel import BACKENDS, OcelDocument, OcelError, from_ocel, to_ocel
from corelog.parsers import MappingConfig, ParseError, ParserProfile, ProfileKind, parse
from corelog.streaming import SpillPolicy, StreamError, decode_record, open_session
from corelog.timestamps import format_timestamp
from corelog.validation import validate

EXIT_OK = 0
EXIT_IO = 1
EXIT_ERRORS = 2
EXIT_WARNINGS = 3

PARSER_FORMATS = {
    "datastream-trier": ProfileKind.DATASTREAM_TRIER,
    "datastream-tum": ProfileKind.DATASTREAM_TUM,
    "nice": ProfileKind.NICE,
    "cairo": ProfileKind.CAIRO,
    "custom": ProfileKind.CUSTOM,
}
OCEL_FORMATS = tuple(BACKENDS)
STREAM_FORMAT = "record-stream"
INPUT_FORMATS = (*PARSER_FORMATS, *OCEL_FORMATS, STREAM_FORMAT)
SEGMENT_DIR_ENV = "CORELOG_SEGMENT_DIR"
DEFAULT_SPILL_THRESHOLD = 10_000


class CliError(Exception):
    """Failure that maps to exit code 1."""


@dataclass
class CliConfig:
    command: str
    input: Path
    input_format: str
    output: Path | None = None
    output_format: str | None = None
    mapping: Path | None = None
    strict: bool = False
    strict_warnings: bool = False
    report_format: str = "text"
    spill_threshold: int = DEFAULT_SPILL_THRESHOLD
    top: int = 5

    def __post_init__(self) -> None:
        if self.command == "convert" and self.output is None:
            raise CliError("convert requires --output")
        if self.input_format == "custom" and self.mapping is None:
            raise CliError("--from custom requires --mapping")
        if self.spill_threshold < 1:
            raise CliError("--spill-threshold must be positive")

    @property
    def target_format(self) -> str:
        return self.output_format or "ocel-json"


@dataclass
class Loaded:
    log: CoreLog
    diagnostics: list[Diagnostic]
    counts: dict[str, int] = field(default_factory=dict)
    document: OcelDocument | None = None


# -- loading -------------------------------------------------------------------


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_mapping(path: Path) -> MappingConfig:
    try:
        return MappingConfig.from_json(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, ValueError, ParseError) as exc:
        raise CliError(f"mapping file {path}: {exc}") from None


def _load_stream(cfg: CliConfig) -> CoreLog:
    """Replay a JSON Lines record stream through a spilling session.

    The first line describes the data source as
    ``{"kind": "source", "source": {<descriptor>}}``; every following line
    is a record in the segment record layout.
    """
    lines = [ln for ln in _read_bytes(cfg.input).decode("utf-8").splitlines() if ln.strip()]
    if not lines:
        raise CliError(f"{cfg.input}: empty record stream")
    try:
        head = json.loads(lines[0])
    except ValueError as exc:
        raise CliError(f"{cfg.input}:1: {exc}") from None
    if not isinstance(head, dict) or head.get("kind") != "source" or not isinstance(head.get("source"), dict):
        raise CliError(f'{cfg.input}:1: first line must be {{"kind": "source", "source": {{...}}}}')
    descriptor = {str(k): str(v) for k, v in head["source"].items()}

    configured = os.environ.get(SEGMENT_DIR_ENV)
    with tempfile.TemporaryDirectory(prefix="corelog-") as scratch:
        directory = Path(configured) if configured else Path(scratch)
        try:
            session = open_session(SpillPolicy(directory, max_buffered_records=cfg.spill_threshold), descriptor)
        except (OSError, ValueError) as exc:
            raise CliError(f"segment directory {directory}: {exc}") from None
        for n, line in enumerate(lines[1:], start=2):
            try:
                record, embedded = decode_record(line.encode("utf-8"))
                links = [(rel.object_id, rel.qualifier) for rel in embedded if rel.object_id != session.source_id]
                session.ingest(record, links)
            except (KeyError, TypeError, ValueError, OcelError, CoreLogError, StreamError) as exc:
                raise CliError(f"{cfg.input}:{n}: {exc}") from None
        return session.finalize()


def load(cfg: CliConfig) -> Loaded:
    fmt = cfg.input_format
    if fmt in PARSER_FORMATS:
        kind = PARSER_FORMATS[fmt]
        profile = ParserProfile.custom(_load_mapping(cfg.mapping)) if kind is ProfileKind.CUSTOM else ParserProfile(kind)  # type: ignore[arg-type]
        try:
            report = parse(_read_bytes(cfg.input), profile)
        except (ParseError, UnicodeDecodeError) as exc:
            raise CliError(f"{cfg.input}: {exc}") from None
        return Loaded(report.log, list(report.diagnostics), dict(report.counts))
    if fmt in BACKENDS:
        document = read_document(cfg.input, fmt)
        try:
            log = from_ocel(document)
        except OcelError as exc:
            raise CliError(f"{cfg.input}: {exc}") from None
        return Loaded(log, sort_diagnostics([*log.notes, *validate(log)]), _log_counts(log), document)
    if fmt == STREAM_FORMAT:
        log = _load_stream(cfg)
        return Loaded(log, sort_diagnostics([*log.notes, *validate(log)]), _log_counts(log))
    raise CliError(f"unknown input format {fmt!r}")


def read_document(path: Path, fmt: str) -> OcelDocument:
    if not path.exists():
        raise CliError(f"cannot read {path}: no such file or directory")
    try:
        return BACKENDS[fmt].read(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (OcelError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from None


def write_document(doc: OcelDocument, path: Path, fmt: str) -> None:
    try:
        BACKENDS[fmt].write(doc, path)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}") from None


def _log_counts(log: CoreLog) -> dict[str, int]:
    return {"events": len(log.events), "objects": len(log.objects), "e2o": len(log.e2o), "o2o": len(log.o2o), "e2e": len(log.e2e)}


def _report(cfg: CliConfig, diagnostics: list[Diagnostic], counts: dict[str, int], err: TextIO) -> None:
    render = render_structured if cfg.report_format == "structured" else render_text
    err.write(render(diagnostics, counts))


def _verdict(cfg: CliConfig, diagnostics: list[Diagnostic], errors_fail: bool) -> int:
    if errors_fail and has_errors(diagnostics):
        return EXIT_ERRORS
    if cfg.strict_warnings and diagnostics and not has_errors(diagnostics):
        return EXIT_WARNINGS
    return EXIT_OK


# -- commands ------------------------------------------------------------------


def cmd_convert(cfg: CliConfig, out: TextIO, err: TextIO) -> int:
    loaded = load(cfg)
    _report(cfg, loaded.diagnostics, loaded.counts, err)
    code = _verdict(cfg, loaded.diagnostics, errors_fail=cfg.strict)
    if code == EXIT_ERRORS:
        return code
    if loaded.document is not None:
        # OCEL in, OCEL out: re-serialize the document untouched
        doc = loaded.document
    else:
        try:
            doc = to_ocel(loaded.log, check=False)
        except OcelError as exc:
            raise CliError(str(exc)) from None
    assert cfg.output is not None
    write_document(doc, cfg.output, cfg.target_format)
    return code


def cmd_validate(cfg: CliConfig, out: TextIO, err: TextIO) -> int:
    loaded = load(cfg)
    _report(cfg, loaded.diagnostics, {}, err)
    return _verdict(cfg, loaded.diagnostics, errors_fail=True)


def log_stats(log: CoreLog, top: int = 5) -> dict[str, Any]:
    """Summary counts of ``log``; every class appears, with zero if absent."""
    by_event = Counter(ev.event_class.value for ev in log.events.values())
    by_object = Counter(obj.object_class.name for obj in log.objects.values())
    object_classes = {kind.value: 0 for kind in ObjectKind if kind is not ObjectKind.OTHER}
    object_classes.update(by_object)
    stamps = [ev.timestamp for ev in log.events.values() if ev.timestamp is not None]
    types = Counter(ev.event_type for ev in log.events.values())
    ranked = sorted(types.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
    return {
        "events": len(log.events),
        "event_classes": {c.value: by_event.get(c.value, 0) for c in EventClass},
        "objects": len(log.objects),
        "object_classes": dict(sorted(object_classes.items())),
        "relations": {"e2o": len(log.e2o), "o2o": len(log.o2o), "e2e": len(log.e2e)},
        "span": {
            "first": format_timestamp(min(stamps)) if stamps else None,
            "last": format_timestamp(max(stamps)) if stamps else None,
        },
        "top_event_types": [{"event_type": t, "count": n} for t, n in ranked],
    }


def render_stats_text(stats: dict[str, Any]) -> str:
    lines = [f"events {stats['events']}"]
    lines += [f"  {name} {n}" for name, n in stats["event_classes"].items()]
    lines.append(f"objects {stats['objects']}")
    lines += [f"  {name} {n}" for name, n in stats["object_classes"].items()]
    lines += [f"{name} {n}" for name, n in stats["relations"].items()]
    span = stats["span"]
    lines.append(f"span {span['first'] or '-'} .. {span['last'] or '-'}")
    lines.append("top event types")
    lines += [f"  {row['count']} {row['event_type']}" for row in stats["top_event_types"]]
    return "".join(line + "\n" for line in lines)


def cmd_stats(cfg: CliConfig, out: TextIO, err: TextIO) -> int:
    loaded = load(cfg)
    stats = log_stats(loaded.log, cfg.top)
    if cfg.report_format == "structured":
        text = json.dumps(stats, sort_keys=True, indent=2) + "\n"
    else:
        text = render_stats_text(stats)
    if cfg.output is not None:
        try:
            cfg.output.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot write {cfg.output}: {exc.strerror or exc}") from None
    else:
        out.write(text)
    return EXIT_OK


def roundtrip(log: CoreLog, fmt: str) -> str | None:
    """Encode, write, read and decode ``log``; return the first divergent path or None."""
    expected = canonicalize(log)
    try:
        doc = to_ocel(expected, check=False)
    except OcelError as exc:
        return f"<encode>: {exc}"
    with tempfile.TemporaryDirectory(prefix="corelog-rt-") as scratch:
        target = Path(scratch) / ("log.json" if fmt == "ocel-json" else "bundle")
        write_document(doc, target, fmt)
        back = BACKENDS[fmt].read(target)
    try:
        decoded = from_ocel(back)
    except OcelError as exc:
        return f"<decode>: {exc}"
    return first_difference(expected, decoded)


def cmd_roundtrip_check(cfg: CliConfig, out: TextIO, err: TextIO) -> int:
    if cfg.input_format in BACKENDS:
        # a structurally broken CORE encoding is itself information loss
        document = read_document(cfg.input, cfg.input_format)
        try:
            log = from_ocel(document)
        except OcelError as exc:
            err.write(f"mismatch: {exc}\n")
            return EXIT_ERRORS
        loaded = Loaded(log, sort_diagnostics([*log.notes, *validate(log)]), _log_counts(log), document)
    else:
        loaded = load(cfg)
    _report(cfg, loaded.diagnostics, {}, err)
    formats = [cfg.output_format] if cfg.output_format else list(BACKENDS)
    for fmt in formats:
        where = roundtrip(loaded.log, fmt)
        if where is not None:
            err.write(f"mismatch via {fmt}: {where}\n")
            return EXIT_ERRORS
    return _verdict(cfg, loaded.diagnostics, errors_fail=False)


COMMANDS = {
    "convert": cmd_convert,
    "validate": cmd_validate,
    "stats": cmd_stats,
    "roundtrip-check": cmd_roundtrip_check,
}


# -- argument handling -----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # exit 2 is reserved for "errors found"; usage mistakes count as exit 1
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="corelog", description="Convert and check IoT-enhanced event logs.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "convert": "parse an input log and write it as OCEL 2.0",
        "validate": "report diagnostics for an input log",
        "stats": "print counts, time span and frequent event types",
        "roundtrip-check": "check that the OCEL encoding loses nothing",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--input", "-i", required=True, type=Path, help="input file (a directory for ocel-csv)")
        p.add_argument("--from", dest="input_format", required=True, choices=INPUT_FORMATS)
        p.add_argument("--mapping", type=Path, help="mapping JSON file for --from custom")
        p.add_argument("--report", dest="report_format", choices=("text", "structured"), default="text")
        p.add_argument("--strict-warnings", action="store_true", help="exit 3 when only warnings are reported")
        p.add_argument(
            "--spill-threshold",
            type=int,
            default=DEFAULT_SPILL_THRESHOLD,
            help=f"records buffered before a segment is written (record-stream input; segments go to ${SEGMENT_DIR_ENV} or a temporary directory)",
        )
        if name in ("convert", "stats"):
            p.add_argument("--output", "-o", type=Path, required=name == "convert")
        if name in ("convert", "roundtrip-check"):
            p.add_argument("--to", dest="output_format", choices=OCEL_FORMATS, default=None)
        if name == "convert":
            p.add_argument("--strict", action="store_true", help="exit 2 and write nothing when errors are found")
        if name == "stats":
            p.add_argument("--top", type=int, default=5, help="number of event types to list")
    return parser


def main(argv: Sequence[str] | None = None, *, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        cfg = CliConfig(
            command=args.command,
            input=args.input,
            input_format=args.input_format,
            output=getattr(args, "output", None),
            output_format=getattr(args, "output_format", None),
            mapping=args.mapping,
            strict=getattr(args, "strict", False),
            strict_warnings=args.strict_warnings,
            report_format=args.report_format,
            spill_threshold=args.spill_threshold,
            top=getattr(args, "top", 5),
        )
        return COMMANDS[cfg.command](cfg, out, err)
    except CliError as exc:
        err.write(f"corelog: error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
