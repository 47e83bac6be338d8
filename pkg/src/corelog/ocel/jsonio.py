"""OCEL 2.0 JSON interchange.

Output is byte-deterministic: the document is canonicalized, object keys are
sorted, times are UTC ISO-8601 and attribute values keep their JSON type
(``206`` stays a number).
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import IO, Any, Union

from corelog._bulk import gc_paused
from corelog.diagnostics import Diagnostic
from corelog.ocel.document import (
    AttributeDecl,
    DecodeError,
    EventAttribute,
    ObjectAttribute,
    OcelDocument,
    OcelEvent,
    OcelObject,
    OcelType,
    Relationship,
)
from corelog.timestamps import TimestampError, format_timestamp, parse_timestamp

Sink = Union[str, os.PathLike, IO[bytes]]
Source = Union[str, os.PathLike, IO[bytes], bytes]

MEMBERS = ("objectTypes", "eventTypes", "objects", "events")
_RECORD_ENCODER = json.JSONEncoder(sort_keys=True, ensure_ascii=False, allow_nan=False)


def _types_to_json(types: list[OcelType]) -> list[dict]:
    return [
        {"name": t.name, "attributes": [{"name": a.name, "type": a.type} for a in t.attributes]}
        for t in types
    ]


def object_to_json(o: OcelObject) -> dict[str, Any]:
    return {
        "id": o.id,
        "type": o.type,
        "attributes": [
            {"name": a.name, "time": format_timestamp(a.time), "value": a.value} for a in o.attributes
        ],
        "relationships": [{"objectId": r.object_id, "qualifier": r.qualifier} for r in o.relationships],
    }


def event_to_json(e: OcelEvent) -> dict[str, Any]:
    return {
        "id": e.id,
        "type": e.type,
        "time": format_timestamp(e.time),
        "attributes": [{"name": a.name, "value": a.value} for a in e.attributes],
        "relationships": [{"objectId": r.object_id, "qualifier": r.qualifier} for r in e.relationships],
    }


def to_json_dict(doc: OcelDocument) -> dict[str, Any]:
    doc = doc.canonical()
    return {
        "objectTypes": _types_to_json(doc.object_types),
        "eventTypes": _types_to_json(doc.event_types),
        "objects": [object_to_json(o) for o in doc.objects],
        "events": [event_to_json(e) for e in doc.events],
    }


@gc_paused()
def dumps_json(doc: OcelDocument) -> bytes:
    """Canonical bytes: top-level members in key order, one compact
    record per line inside each array, keys sorted throughout."""
    data = to_json_dict(doc)
    parts = ["{"]
    for i, key in enumerate(sorted(data)):
        parts.append(f"  {json.dumps(key)}: [")
        items = data[key]
        for j, item in enumerate(items):
            line = _RECORD_ENCODER.encode(item)
            parts.append("    " + line + ("," if j + 1 < len(items) else ""))
        parts.append("  ]" + ("," if i + 1 < len(data) else ""))
    parts.append("}")
    return ("\n".join(parts) + "\n").encode("utf-8")


def write_json(doc: OcelDocument, sink: Sink) -> None:
    data = dumps_json(doc)
    if isinstance(sink, (str, os.PathLike)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)


class _Reader:
    def __init__(self) -> None:
        self.warnings: list[Diagnostic] = []

    def expect(self, value: Any, kind: type | tuple, path: str) -> Any:
        kinds = kind if isinstance(kind, tuple) else (kind,)
        # bool is an int subclass; JSON true must not pass as a number
        if not isinstance(value, kinds) or (isinstance(value, bool) and bool not in kinds):
            raise DecodeError(f"{path}: expected {_kind_name(kind)}, got {type(value).__name__}")
        return value

    def member(self, obj: dict, key: str, kind: type | tuple, path: str, default: Any = ...) -> Any:
        if key not in obj:
            if default is ...:
                raise DecodeError(f"{path}: missing member {key!r}")
            return default
        return self.expect(obj[key], kind, f"{path}.{key}")

    def time(self, obj: dict, path: str) -> Any:
        text = self.member(obj, "time", str, path)
        try:
            ts, assumed = parse_timestamp(text)
        except TimestampError as exc:
            raise DecodeError(f"{path}.time: {exc}") from None
        if assumed:
            self.warnings.append(Diagnostic("W002", f"{path}.time has no timezone", path))
        return ts

    def value(self, obj: dict, path: str) -> Any:
        if "value" not in obj:
            raise DecodeError(f"{path}: missing member 'value'")
        value = obj["value"]
        if value is not None and not isinstance(value, (str, int, float, bool)):
            raise DecodeError(f"{path}.value: expected a scalar, got {type(value).__name__}")
        return value

    def relationships(self, obj: dict, path: str) -> list[Relationship]:
        out = []
        for i, rel in enumerate(self.member(obj, "relationships", list, path, [])):
            rp = f"{path}.relationships[{i}]"
            self.expect(rel, dict, rp)
            out.append(Relationship(self.member(rel, "objectId", str, rp), self.member(rel, "qualifier", str, rp)))
        return out

    def types(self, items: list, path: str) -> list[OcelType]:
        out = []
        for i, t in enumerate(items):
            tp = f"{path}[{i}]"
            self.expect(t, dict, tp)
            decls = []
            for j, a in enumerate(self.member(t, "attributes", list, tp, [])):
                ap = f"{tp}.attributes[{j}]"
                self.expect(a, dict, ap)
                decls.append(AttributeDecl(self.member(a, "name", str, ap), self.member(a, "type", str, ap)))
            out.append(OcelType(self.member(t, "name", str, tp), decls))
        return out

    def object(self, o: Any, op: str) -> OcelObject:
        self.expect(o, dict, op)
        attrs = []
        for j, a in enumerate(self.member(o, "attributes", list, op, [])):
            ap = f"{op}.attributes[{j}]"
            self.expect(a, dict, ap)
            attrs.append(ObjectAttribute(self.member(a, "name", str, ap), self.time(a, ap), self.value(a, ap)))
        return OcelObject(self.member(o, "id", str, op), self.member(o, "type", str, op), attrs, self.relationships(o, op))

    def event(self, e: Any, ep: str) -> OcelEvent:
        self.expect(e, dict, ep)
        attrs = []
        for j, a in enumerate(self.member(e, "attributes", list, ep, [])):
            ap = f"{ep}.attributes[{j}]"
            self.expect(a, dict, ap)
            attrs.append(EventAttribute(self.member(a, "name", str, ap), self.value(a, ap)))
        return OcelEvent(
            self.member(e, "id", str, ep), self.member(e, "type", str, ep), self.time(e, ep), attrs, self.relationships(e, ep)
        )

    def document(self, raw: Any) -> OcelDocument:
        self.expect(raw, dict, "$")
        for key in sorted(set(raw) - set(MEMBERS)):
            self.warnings.append(Diagnostic("W007", f"unknown top-level member {key!r} ignored"))
        object_types = self.types(self.member(raw, "objectTypes", list, "$"), "$.objectTypes")
        event_types = self.types(self.member(raw, "eventTypes", list, "$"), "$.eventTypes")
        objects = [self.object(o, f"$.objects[{i}]") for i, o in enumerate(self.member(raw, "objects", list, "$"))]
        events = [self.event(e, f"$.events[{i}]") for i, e in enumerate(self.member(raw, "events", list, "$"))]
        return OcelDocument(object_types, event_types, objects, events, self.warnings).canonical()


def _kind_name(kind: type | tuple) -> str:
    names = {str: "string", int: "integer", float: "number", bool: "boolean", list: "array", dict: "object"}
    kinds = kind if isinstance(kind, tuple) else (kind,)
    return " or ".join(names.get(k, k.__name__) for k in kinds)


@gc_paused()
def loads_json(data: bytes) -> OcelDocument:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"invalid UTF-8 at byte offset {exc.start}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise DecodeError(f"malformed JSON at byte offset {offset}: {exc.msg}") from None
    return _Reader().document(raw)


def read_json(source: Source) -> OcelDocument:
    if isinstance(source, bytes):
        return loads_json(source)
    if isinstance(source, (str, os.PathLike)):
        return loads_json(Path(source).read_bytes())
    return loads_json(source.read())


def object_from_json(raw: Any, path: str = "$") -> OcelObject:
    return _Reader().object(raw, path)


def event_from_json(raw: Any, path: str = "$") -> OcelEvent:
    return _Reader().event(raw, path)
