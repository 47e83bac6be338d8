"""CAIRO trace-structured logs, as XES-like XML or as delimited text.

XML dialect::

    <log>
      <trace>
        <string key="concept:name" value="donation-17"/>
        <event>
          <date key="time:timestamp" value="..."/>
          <string key="concept:name" value="hand-rub"/>
          <string key="stream:source" value="wristband-3"/>
          <container key="ambiguity">
            <float key="weight" value="0.6"/>
          </container>
        </event>
      </trace>
    </log>

CSV dialect: a header row with at least ``trace`` and ``timestamp``; optional
``event_id`` and ``source`` columns; columns named ``ambiguity:<name>`` are
ambiguity annotations; every other column is an event attribute. Cells use
the same literal typing as the OCEL CSV bundle.

Each trace becomes a Business.CaseObject and each event an Observation
linked to it. An event naming a sensor (``stream:source`` / ``source``) is
attached to a Sensor object, otherwise to the synthesized information system.
Ambiguity annotations are kept under ``cairo:ambiguity:<name>`` and not
interpreted.
"""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET

from corelog.model import CoreEvent, CoreObject, ObjectClass, Value
from corelog.ocel.csvio import decode_cell
from corelog.parsers.base import (
    CASE_QUALIFIER,
    SOURCE_QUALIFIER,
    XES_NESTED,
    LogBuilder,
    MalformedInput,
    ParseReport,
    SchemaViolation,
    decode_utf8,
    load_xml,
    local_name,
    nested_json,
    timestamp_value,
    xes_scalar,
)

AMBIGUITY_PREFIX = "cairo:ambiguity:"
TIMESTAMP = "time:timestamp"
CONCEPT_NAME = "concept:name"
EVENT_ID = "id:id"
SENSOR_KEYS = ("stream:source", "source")


class _CairoBuilder:
    def __init__(self, document: bytes, dialect: str):
        self.b = LogBuilder(document, f"cairo/{dialect}")

    def trace(self, trace_id: str, attrs: dict[str, Value]) -> str:
        base, n = trace_id, 1
        while trace_id in self.b.log.objects:
            n += 1
            trace_id = f"{base}#{n}"
        case = CoreObject(trace_id, "Case", ObjectClass.case_object())
        for key, value in attrs.items():
            case.set_attribute(key, value)
        if trace_id != base:
            case.set_attribute(CONCEPT_NAME, base)
        self.b.add_object(case)
        return trace_id

    def event(self, case_id: str, event_id: str, when, attrs: dict[str, Value], sensor: Value) -> None:
        if sensor not in (None, ""):
            sid = self.b.ensure_object(CoreObject(str(sensor), "Sensor", ObjectClass.sensor()))
        else:
            sid = self.b.data_source()
        ev = CoreEvent.observation(event_id, when[0], **attrs)
        if self.b.add_event(ev, [(sid, SOURCE_QUALIFIER), (case_id, CASE_QUALIFIER)]):
            # CAIRO points are IoT events in the source; raw points land as Observations
            self.b.counts["reclassified_as_observation"] += 1
            if when[1]:
                self.b.note("W002", "timestamp has no timezone", event_id)


def _xml_event(elem: ET.Element, path: str) -> tuple[dict[str, Value], str | None, Value, str | None]:
    attrs: dict[str, Value] = {}
    time_text = event_id = None
    sensor: Value = None
    for i, child in enumerate(elem):
        tag = local_name(child.tag)
        cpath = f"{path}/{tag}[{i}]"
        key = child.get("key")
        if not key:
            raise SchemaViolation(cpath, "attribute element without key")
        if key == "ambiguity" and tag in XES_NESTED:
            for j, a in enumerate(child):
                akey = a.get("key")
                apath = f"{cpath}/{local_name(a.tag)}[{j}]"
                if not akey:
                    raise SchemaViolation(apath, "attribute element without key")
                value = nested_json(a, apath) if local_name(a.tag) in XES_NESTED else xes_scalar(a, apath)
                attrs[AMBIGUITY_PREFIX + akey] = value
        elif key.startswith("ambiguity:"):
            attrs[AMBIGUITY_PREFIX + key[len("ambiguity:"):]] = xes_scalar(child, cpath)
        elif key == TIMESTAMP:
            time_text = child.get("value")
        elif key == EVENT_ID:
            event_id = child.get("value")
        elif key in SENSOR_KEYS and sensor is None:
            sensor = xes_scalar(child, cpath)
        elif tag in XES_NESTED:
            attrs[key] = nested_json(child, cpath)
        else:
            attrs[key] = xes_scalar(child, cpath)
    return attrs, time_text, sensor, event_id


def _parse_xml(document: bytes) -> ParseReport:
    c = _CairoBuilder(document, "xml")
    root = load_xml(document)
    if local_name(root.tag) != "log":
        raise SchemaViolation("/log", f"root element is <{local_name(root.tag)}>")
    traces = [t for t in root if local_name(t.tag) == "trace"]
    if not traces:
        c.b.note("W004", "document contains no traces", "<log>")
    for t_index, trace in enumerate(traces):
        tpath = f"/log/trace[{t_index}]"
        attrs: dict[str, Value] = {}
        events = []
        for i, child in enumerate(trace):
            tag = local_name(child.tag)
            if tag == "event":
                events.append(child)
                continue
            key = child.get("key")
            if not key:
                raise SchemaViolation(f"{tpath}/{tag}[{i}]", "attribute element without key")
            attrs[key] = (nested_json if tag in XES_NESTED else xes_scalar)(child, f"{tpath}/{tag}[{i}]")
        name = attrs.pop(CONCEPT_NAME, None)
        case_id = c.trace(str(name) if name not in (None, "") else f"trace-{t_index}", attrs)
        if not events:
            c.b.note("W004", "trace has no events", case_id)
        for e_index, elem in enumerate(events):
            epath = f"{tpath}/event[{e_index}]"
            eattrs, time_text, sensor, event_id = _xml_event(elem, epath)
            event_id = event_id or f"{case_id}/e{e_index}"
            if time_text is None:
                c.b.skip(event_id, f"event has no {TIMESTAMP}")
                continue
            c.event(case_id, event_id, timestamp_value(time_text, f"{epath}/{TIMESTAMP}"), eattrs, sensor)
    return c.b.report()


def _parse_csv(document: bytes) -> ParseReport:
    c = _CairoBuilder(document, "csv")
    text = decode_utf8(document)
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    try:
        header = next(reader)
    except StopIteration:
        c.b.note("W004", "document is empty", "<log>")
        return c.b.report()
    except csv.Error as exc:
        raise MalformedInput(str(exc), "line 1") from None
    for needed in ("trace", "timestamp"):
        if needed not in header:
            raise MalformedInput(f"header lacks a {needed!r} column", "line 1")
    if len(set(header)) != len(header):
        raise MalformedInput("duplicate column names", "line 1")
    cases: dict[str, str] = {}
    counters: dict[str, int] = {}
    any_rows = False
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            raise MalformedInput(str(exc), f"line {reader.line_num}") from None
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(header):
            raise MalformedInput(f"expected {len(header)} fields, got {len(row)}", f"line {line}")
        any_rows = True
        record = dict(zip(header, row))
        trace = record.pop("trace")
        if not trace:
            raise MalformedInput("empty trace id", f"line {line}")
        if trace not in cases:
            cases[trace] = c.trace(trace, {})
        case_id = cases[trace]
        n = counters.get(case_id, 0)
        counters[case_id] = n + 1
        event_id = record.pop("event_id", "") or f"{case_id}/e{n}"
        sensor = record.pop("source", "")
        time_text = record.pop("timestamp")
        attrs: dict[str, Value] = {}
        for key, cell in record.items():
            if cell == "":
                continue
            if key.startswith("ambiguity:"):
                attrs[AMBIGUITY_PREFIX + key[len("ambiguity:"):]] = decode_cell(cell)
            else:
                attrs[key] = decode_cell(cell)
        if not time_text:
            c.b.skip(event_id, "row has no timestamp")
            continue
        try:
            when = timestamp_value(time_text, f"line {line}")
        except SchemaViolation as exc:
            raise MalformedInput(str(exc)) from None
        c.event(case_id, event_id, when, attrs, sensor)
    if not any_rows:
        c.b.note("W004", "document has no rows", "<log>")
    return c.b.report()


def parse_cairo(document: bytes, dialect: str | None = None) -> ParseReport:
    """Parse a CAIRO log. ``dialect`` is "xml" or "csv"; when omitted it is
    taken from the first non-blank character ("<" means XML)."""
    if dialect is None:
        head = decode_utf8(document).lstrip()
        dialect = "xml" if head.startswith("<") else "csv"
    if dialect == "xml":
        try:
            return _parse_xml(document)
        except SchemaViolation as exc:
            raise MalformedInput(str(exc).split(": ", 1)[-1], exc.path) from None
    if dialect == "csv":
        return _parse_csv(document)
    raise ValueError(f"unknown CAIRO dialect {dialect!r}")
