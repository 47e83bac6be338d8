"""Relational CSV bundle: five RFC 4180 files with mandatory header rows.

Attribute cells hold JSON scalar literals (``206``, ``2.5``, ``true``,
``null``); any other text is a plain string. Strings that would read back as
a literal, and the empty string, are written JSON-quoted, so every value
keeps its type. An empty cell means the attribute is absent.

Object attribute values at the static time (1970-01-01) go into the
``ocel:attr:*`` columns of objects.csv; every other timestamped value goes
into object_attribute_changes.csv.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Iterator

from corelog._bulk import gc_paused
from corelog.model import Value
from corelog.ocel.document import (
    DecodeError,
    EventAttribute,
    ObjectAttribute,
    OcelDocument,
    OcelError,
    OcelEvent,
    OcelObject,
    Relationship,
    derive_types,
)
from corelog.timestamps import STATIC_TIME, TimestampError, as_utc, format_timestamp, parse_timestamp

ATTR_PREFIX = "ocel:attr:"
OBJECTS = "objects.csv"
EVENTS = "events.csv"
CHANGES = "object_attribute_changes.csv"
E2O = "e2o.csv"
O2O = "o2o.csv"
FILES = (OBJECTS, EVENTS, CHANGES, E2O, O2O)

OBJECT_HEADER = ["ocel:oid", "ocel:type"]
EVENT_HEADER = ["ocel:eid", "ocel:type", "ocel:timestamp"]
CHANGES_HEADER = ["ocel:oid", "name", "time", "value"]
E2O_HEADER = ["ocel:eid", "ocel:oid", "ocel:qualifier"]
O2O_HEADER = ["source", "target", "qualifier"]


def _is_literal(text: str) -> bool:
    try:
        json.loads(text)
    except ValueError:
        return False
    return True


def encode_cell(value: Value) -> str:
    if isinstance(value, str):
        if value == "" or _is_literal(value):
            return json.dumps(value, ensure_ascii=False)
        return value
    return json.dumps(value, allow_nan=False)


def decode_cell(text: str) -> Value:
    try:
        value = json.loads(text)
    except ValueError:
        return text
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    return text


def _attr_columns(names: set[str]) -> list[str]:
    return [ATTR_PREFIX + n for n in sorted(names)]


def _write(path: Path, header: list[str], rows: list[list[str]]) -> None:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_bytes(buf.getvalue().encode("utf-8"))


@gc_paused()
def write_relational(doc: OcelDocument, directory: str | os.PathLike) -> None:
    doc = doc.canonical()
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)

    static_names = {a.name for o in doc.objects for a in o.attributes if as_utc(a.time) == STATIC_TIME}
    event_names = {a.name for e in doc.events for a in e.attributes}
    for name in static_names | event_names:
        if not name:
            raise OcelError("attribute with an empty name cannot become a column")

    obj_cols = sorted(static_names)
    obj_rows, change_rows, o2o_rows = [], [], []
    for o in doc.objects:
        static = {}
        for a in o.attributes:
            if as_utc(a.time) == STATIC_TIME:
                static[a.name] = encode_cell(a.value)
            else:
                change_rows.append([o.id, a.name, format_timestamp(a.time), encode_cell(a.value)])
        obj_rows.append([o.id, o.type, *(static.get(c, "") for c in obj_cols)])
        o2o_rows.extend([o.id, r.object_id, r.qualifier] for r in o.relationships)

    ev_cols = sorted(event_names)
    ev_rows, e2o_rows = [], []
    for e in doc.events:
        values = {a.name: encode_cell(a.value) for a in e.attributes}
        ev_rows.append([e.id, e.type, format_timestamp(e.time), *(values.get(c, "") for c in ev_cols)])
        e2o_rows.extend([e.id, r.object_id, r.qualifier] for r in e.relationships)

    _write(out / OBJECTS, OBJECT_HEADER + _attr_columns(static_names), obj_rows)
    _write(out / EVENTS, EVENT_HEADER + _attr_columns(event_names), ev_rows)
    _write(out / CHANGES, CHANGES_HEADER, change_rows)
    _write(out / E2O, E2O_HEADER, e2o_rows)
    _write(out / O2O, O2O_HEADER, o2o_rows)


def _rows(directory: Path, name: str, fixed: list[str], extra_prefix: str | None = None) -> tuple[list[str], Iterator[tuple[int, list[str]]]]:
    path = directory / name
    if not path.is_file():
        raise DecodeError(f"{name}: missing from bundle {directory}")
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"{name}: invalid UTF-8 at byte offset {exc.start}") from None
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    try:
        header = next(reader)
    except StopIteration:
        raise DecodeError(f"{name}: missing header row") from None
    except csv.Error as exc:
        raise DecodeError(f"{name}: line 1: {exc}") from None
    if header[: len(fixed)] != fixed:
        raise DecodeError(f"{name}: header {header} does not start with {fixed}")
    rest = header[len(fixed):]
    if rest and (extra_prefix is None or not all(c.startswith(extra_prefix) for c in rest)):
        raise DecodeError(f"{name}: unexpected columns {rest}")
    if len(set(header)) != len(header):
        raise DecodeError(f"{name}: duplicate column names")

    def rows() -> Iterator[tuple[int, list[str]]]:
        while True:
            try:
                row = next(reader)
            except StopIteration:
                return
            except csv.Error as exc:
                raise DecodeError(f"{name}: line {reader.line_num}: {exc}") from None
            if len(row) != len(header):
                raise DecodeError(
                    f"{name}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            yield reader.line_num, row

    return header, rows()


def _time(text: str, where: str):
    try:
        return parse_timestamp(text)[0]
    except TimestampError as exc:
        raise DecodeError(f"{where}: {exc}") from None


@gc_paused()
def read_relational(directory: str | os.PathLike) -> OcelDocument:
    src = Path(directory)
    for name in FILES:
        if not (src / name).is_file():
            raise DecodeError(f"{name}: missing from bundle {src}")

    objects: dict[str, OcelObject] = {}
    header, rows = _rows(src, OBJECTS, OBJECT_HEADER, ATTR_PREFIX)
    names = [c[len(ATTR_PREFIX):] for c in header[2:]]
    for line, row in rows:
        oid, otype, *cells = row
        if oid in objects:
            raise DecodeError(f"{OBJECTS}: line {line}: duplicate object id {oid!r}")
        attrs = [ObjectAttribute(n, STATIC_TIME, decode_cell(c)) for n, c in zip(names, cells) if c != ""]
        objects[oid] = OcelObject(oid, otype, attrs)

    _, rows = _rows(src, CHANGES, CHANGES_HEADER)
    for line, (oid, name, time, cell) in rows:
        if oid not in objects:
            raise DecodeError(f"{CHANGES}: line {line}: unknown object {oid!r}")
        if cell == "":
            raise DecodeError(f"{CHANGES}: line {line}: empty value")
        objects[oid].attributes.append(ObjectAttribute(name, _time(time, f"{CHANGES}: line {line}"), decode_cell(cell)))

    _, rows = _rows(src, O2O, O2O_HEADER)
    for line, (source, target, qualifier) in rows:
        if source not in objects:
            raise DecodeError(f"{O2O}: line {line}: unknown object {source!r}")
        objects[source].relationships.append(Relationship(target, qualifier))

    events: dict[str, OcelEvent] = {}
    header, rows = _rows(src, EVENTS, EVENT_HEADER, ATTR_PREFIX)
    names = [c[len(ATTR_PREFIX):] for c in header[3:]]
    for line, row in rows:
        eid, etype, time, *cells = row
        if eid in events:
            raise DecodeError(f"{EVENTS}: line {line}: duplicate event id {eid!r}")
        attrs = [EventAttribute(n, decode_cell(c)) for n, c in zip(names, cells) if c != ""]
        events[eid] = OcelEvent(eid, etype, _time(time, f"{EVENTS}: line {line}"), attrs)

    _, rows = _rows(src, E2O, E2O_HEADER)
    for line, (eid, oid, qualifier) in rows:
        if eid not in events:
            raise DecodeError(f"{E2O}: line {line}: unknown event {eid!r}")
        events[eid].relationships.append(Relationship(oid, qualifier))

    objs, evs = list(objects.values()), list(events.values())
    return OcelDocument(derive_types(objs), derive_types(evs), objs, evs).canonical()
