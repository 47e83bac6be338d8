"""Mapping-driven parser for flat record files (CSV with header, or JSON Lines)."""

from __future__ import annotations

import csv
import io
import json
from typing import Any, Iterator

from corelog.model import CoreEvent, CoreObject, ObjectClass, Value
from corelog.ocel.csvio import decode_cell
from corelog.parsers.base import (
    SOURCE_QUALIFIER,
    LogBuilder,
    MalformedInput,
    MappingConfig,
    ParseReport,
    SchemaViolation,
    decode_utf8,
    timestamp_value,
)

RESOURCE_QUALIFIER = "resource"


def _csv_records(text: str) -> Iterator[tuple[int, dict[str, Value]]]:
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    try:
        header = next(reader)
    except StopIteration:
        return
    except csv.Error as exc:
        raise MalformedInput(str(exc), "line 1") from None
    if len(set(header)) != len(header) or "" in header:
        raise MalformedInput("header has empty or duplicate column names", "line 1")
    while True:
        try:
            row = next(reader)
        except StopIteration:
            return
        except csv.Error as exc:
            raise MalformedInput(str(exc), f"line {reader.line_num}") from None
        if not row:
            continue
        if len(row) != len(header):
            raise MalformedInput(f"expected {len(header)} fields, got {len(row)}", f"line {reader.line_num}")
        yield reader.line_num, {k: decode_cell(v) for k, v in zip(header, row) if v != ""}


def _jsonl_records(text: str) -> Iterator[tuple[int, dict[str, Value]]]:
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw: Any = json.loads(line)
        except ValueError as exc:
            raise MalformedInput(f"invalid JSON: {exc}", f"line {n}") from None
        if not isinstance(raw, dict):
            raise MalformedInput("each line must hold a JSON object", f"line {n}")
        record: dict[str, Value] = {}
        for key, value in raw.items():
            if value is None or isinstance(value, (str, int, float, bool)):
                record[key] = value
            else:
                record[key] = json.dumps(value, sort_keys=True, ensure_ascii=False)
        yield n, record


def _text(value: Value) -> str:
    return value if isinstance(value, str) else json.dumps(value)


def parse_custom(document: bytes, mapping: MappingConfig, dialect: str | None = None) -> ParseReport:
    """Parse CSV or JSON Lines records according to ``mapping``.

    ``dialect`` is "csv" or "jsonl"; when omitted a first non-blank
    character of "{" selects JSON Lines.
    """
    text = decode_utf8(document)
    if dialect is None:
        dialect = "jsonl" if text.lstrip().startswith("{") else "csv"
    if dialect == "csv":
        records = _csv_records(text)
    elif dialect == "jsonl":
        records = _jsonl_records(text)
    else:
        raise ValueError(f"unknown record dialect {dialect!r}")

    b = LogBuilder(document, f"custom/{dialect}")
    seen_any = False
    for line, record in records:
        seen_any = True
        fields = dict(record)
        rid = fields.pop(mapping.id_key, None) if mapping.id_key else None
        event_id = _text(rid) if rid not in (None, "") else f"r{line}"
        activity = fields.pop(mapping.activity_key, None)
        stamp = fields.pop(mapping.timestamp_key, None)
        resource = fields.pop(mapping.resource_key, None) if mapping.resource_key else None
        refs = [(key, fields.pop(key)) for key in mapping.object_keys if fields.get(key) not in (None, "")]
        for key in mapping.object_keys:
            fields.pop(key, None)

        if not isinstance(stamp, str) or not stamp:
            b.skip(event_id, f"record at line {line} has no usable {mapping.timestamp_key!r}")
            continue
        try:
            when, assumed = timestamp_value(stamp, f"line {line}")
        except SchemaViolation as exc:
            b.skip(event_id, str(exc))
            continue

        links = [(b.data_source(), mapping.qualifier_defaults.get("source", SOURCE_QUALIFIER))]
        if resource not in (None, ""):
            rid_text = _text(resource)
            b.ensure_object(CoreObject(rid_text, "Resource", ObjectClass.resource()))
            links.append((rid_text, mapping.qualifier_defaults.get("resource", RESOURCE_QUALIFIER)))
        for key, value in refs:
            oid = _text(value)
            b.ensure_object(CoreObject(oid, key, mapping.class_for(key)))
            links.append((oid, mapping.qualifier_for(key)))

        if activity not in (None, ""):
            ev = CoreEvent.process(event_id, when, _text(activity), **fields)
        elif any(k in fields for k in mapping.observation_attribute_keys):
            ev = CoreEvent.observation(event_id, when, **fields)
        else:
            b.skip(event_id, f"record at line {line} has no activity and no observation fields")
            continue
        if b.add_event(ev, links) and assumed:
            b.note("W002", "timestamp has no timezone", event_id)
    if not seen_any:
        b.note("W004", "document holds no records", "<log>")
    return b.report()
