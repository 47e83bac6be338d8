"""Bounded-memory ingestion with disk spill.

Records are buffered in memory and written out as numbered segment files
once a count or age threshold is crossed. A lookup table keeps the location
of every spilled event and object so that relationships arriving later can
still be resolved. Relationships whose endpoints have not been seen yet wait
in a pending set.

Segment layout::

    b"CORESEG1"
    repeat: <u32 little-endian length> <UTF-8 JSON record>
    <u32 0xFFFFFFFF> <u64 little-endian record count>

Event and object records reuse the OCEL JSON value layout.
"""

from __future__ import annotations

import json
import os
import struct
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Callable, Iterable, Union

from corelog._bulk import gc_paused
from corelog.diagnostics import Diagnostic
from corelog.model import (
    SELF_QUALIFIER,
    CoreEvent,
    CoreLog,
    CoreObject,
    DuplicateId,
    EventEventRel,
    EventObjectRel,
    LinkDirection,
    ObjectClass,
    ObjectObjectRel,
    canonicalize,
)
from corelog.ocel.document import EventAttribute, OcelError, OcelEvent, Relationship
from corelog.ocel.jsonio import event_to_json, object_from_json, object_to_json
from corelog.ocel.transform import decode_event, decode_object, encode_event, encode_object
from corelog.timestamps import TimestampError, as_utc, parse_timestamp

MAGIC = b"CORESEG1"
END_MARK = 0xFFFFFFFF
_LEN = struct.Struct("<I")
_COUNT = struct.Struct("<Q")
SOURCE_QUALIFIER = "source"
_ENCODER = json.JSONEncoder(sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)

Relation = Union[EventObjectRel, ObjectObjectRel, EventEventRel]
Record = Union[CoreEvent, CoreObject, EventObjectRel, ObjectObjectRel, EventEventRel]


class StreamError(Exception):
    pass


class IngestError(StreamError):
    pass


class MalformedRecord(IngestError):
    pass


class SessionClosed(StreamError):
    pass


class SpillError(StreamError):
    pass


class SegmentError(StreamError):
    def __init__(self, path: Path, sequence_number: int | None, detail: str):
        where = f"segment {sequence_number} ({path})" if sequence_number is not None else str(path)
        super().__init__(f"{where}: {detail}")
        self.path = path
        self.sequence_number = sequence_number


class FinalizeError(StreamError):
    pass


@dataclass(frozen=True)
class SpillPolicy:
    segment_directory: Path
    max_buffered_records: int | None = None
    max_buffer_age: timedelta | None = None

    def __post_init__(self) -> None:
        if self.max_buffered_records is None and self.max_buffer_age is None:
            raise ValueError("a spill policy needs a count or an age trigger")
        if self.max_buffered_records is not None and self.max_buffered_records <= 0:
            raise ValueError("max_buffered_records must be positive")
        if self.max_buffer_age is not None and self.max_buffer_age <= timedelta(0):
            raise ValueError("max_buffer_age must be positive")
        object.__setattr__(self, "segment_directory", Path(self.segment_directory))


@dataclass(frozen=True)
class Segment:
    sequence_number: int
    record_count: int
    min_timestamp: datetime | None
    max_timestamp: datetime | None
    path: Path


@dataclass
class LookupTable:
    """Location of every spilled event and object: id -> (segment, byte offset)."""

    events: dict[str, tuple[int, int]] = field(default_factory=dict)
    objects: dict[str, tuple[int, int]] = field(default_factory=dict)
    # relations filed under one endpoint that is still unknown
    waiting: dict[tuple[str, str], list[Relation]] = field(default_factory=dict)

    @property
    def pending(self) -> list[Relation]:
        return [rel for rels in self.waiting.values() for rel in rels]

    def table(self, namespace: str) -> dict[str, tuple[int, int]]:
        if namespace == "event":
            return self.events
        if namespace == "object":
            return self.objects
        raise ValueError(f"unknown namespace {namespace!r}")


# -- segment files -----------------------------------------------------------


def write_segment(path: Path, payloads: list[bytes]) -> list[int]:
    """Write ``payloads`` as one segment; returns each record's byte offset.

    The file appears under its final name only once it is complete.
    """
    offsets = []
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            pos = len(MAGIC)
            for payload in payloads:
                if len(payload) >= END_MARK:
                    raise SpillError(f"record of {len(payload)} bytes is too large for a segment")
                offsets.append(pos)
                fh.write(_LEN.pack(len(payload)))
                fh.write(payload)
                pos += _LEN.size + len(payload)
            fh.write(_LEN.pack(END_MARK))
            fh.write(_COUNT.pack(len(payloads)))
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return offsets


def read_segment(path: Path, sequence_number: int | None = None) -> list[tuple[int, bytes]]:
    """All (offset, payload) pairs of a segment. Torn or truncated files raise."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SegmentError(Path(path), sequence_number, f"unreadable: {exc}") from None
    if not data.startswith(MAGIC):
        raise SegmentError(Path(path), sequence_number, "bad magic bytes")
    records = []
    pos = len(MAGIC)
    while True:
        if pos + _LEN.size > len(data):
            raise SegmentError(Path(path), sequence_number, f"torn record header at byte {pos}")
        (length,) = _LEN.unpack_from(data, pos)
        if length == END_MARK:
            break
        start = pos + _LEN.size
        if start + length > len(data):
            raise SegmentError(Path(path), sequence_number, f"torn record at byte {pos}")
        records.append((pos, data[start : start + length]))
        pos = start + length
    trailer = pos + _LEN.size
    if trailer + _COUNT.size != len(data):
        raise SegmentError(Path(path), sequence_number, "missing or malformed count trailer")
    (count,) = _COUNT.unpack_from(data, trailer)
    if count != len(records):
        raise SegmentError(Path(path), sequence_number, f"trailer says {count} records, found {len(records)}")
    return records


def read_record_at(path: Path, offset: int) -> bytes:
    with open(path, "rb") as fh:
        fh.seek(offset)
        head = fh.read(_LEN.size)
        if len(head) != _LEN.size:
            raise SegmentError(Path(path), None, f"no record at byte {offset}")
        (length,) = _LEN.unpack(head)
        payload = fh.read(length)
        if length == END_MARK or len(payload) != length:
            raise SegmentError(Path(path), None, f"no record at byte {offset}")
        return payload


# -- record codec ------------------------------------------------------------


def encode_record(record: Record, links: Iterable[tuple[str, str]] = ()) -> bytes:
    if isinstance(record, CoreEvent):
        rels = [Relationship(oid, q) for oid, q in links]
        body: dict[str, Any] = {"kind": "event", "event": event_to_json(encode_event(record, rels))}
    elif isinstance(record, CoreObject):
        body = {"kind": "object", "object": object_to_json(encode_object(record))}
    elif isinstance(record, EventObjectRel):
        body = {"kind": "e2o", "event": record.event_id, "object": record.object_id, "qualifier": record.qualifier}
    elif isinstance(record, ObjectObjectRel):
        body = {"kind": "o2o", "source": record.source_id, "target": record.target_id, "qualifier": record.qualifier}
    elif isinstance(record, EventEventRel):
        body = {
            "kind": "e2e",
            "source": record.source_event_id,
            "target": record.target_event_id,
            "qualifier": record.qualifier,
        }
    else:
        raise MalformedRecord(f"cannot encode {type(record).__name__}")
    return _ENCODER.encode(body).encode("utf-8")


def decode_record(payload: bytes) -> tuple[Record, list[EventObjectRel]]:
    """Inverse of :func:`encode_record`. Embedded event links come back as e2o relations."""
    body = json.loads(payload.decode("utf-8"))
    kind = body["kind"]
    if kind == "event":
        raw = _event_body(body["event"])
        return decode_event(raw), [EventObjectRel(raw.id, r.object_id, r.qualifier) for r in raw.relationships]
    if kind == "object":
        return decode_object(object_from_json(body["object"])), []
    if kind == "e2o":
        return EventObjectRel(body["event"], body["object"], body["qualifier"]), []
    if kind == "o2o":
        return ObjectObjectRel(body["source"], body["target"], body["qualifier"]), []
    if kind == "e2e":
        return EventEventRel(body["source"], body["target"], body["qualifier"]), []
    raise ValueError(f"unknown record kind {kind!r}")


def _event_body(d: dict[str, Any]) -> OcelEvent:
    # segments are written by this module, so a lean decoder suffices;
    # structural surprises surface as KeyError/TypeError in finalize
    return OcelEvent(
        d["id"],
        d["type"],
        parse_timestamp(d["time"])[0],
        [EventAttribute(a["name"], a["value"]) for a in d["attributes"]],
        [Relationship(r["objectId"], r["qualifier"]) for r in d["relationships"]],
    )


# -- data source -------------------------------------------------------------

_SOURCE_CLASSES: dict[str, tuple[Callable[[], ObjectClass], str]] = {
    "sensor": (ObjectClass.sensor, "Sensor"),
    "information_system": (ObjectClass.information_system, "Information system"),
    "is": (ObjectClass.information_system, "Information system"),
    "link": (ObjectClass.link, "Link"),
}


def source_object(descriptor: dict[str, str]) -> CoreObject:
    """Data-source object described by ``descriptor``.

    Recognized keys: ``kind`` (sensor, information_system, link), ``name``,
    ``id``, ``type`` and ``direction`` for links. Other keys become static
    attributes.
    """
    desc = dict(descriptor)
    kind = desc.pop("kind", "information_system").strip().lower().replace("-", "_")
    if kind not in _SOURCE_CLASSES:
        raise ValueError(f"unknown data-source kind {kind!r}")
    make, default_type = _SOURCE_CLASSES[kind]
    direction = desc.pop("direction", None)
    if kind == "link":
        object_class = ObjectClass.link(LinkDirection(direction or LinkDirection.BOTTOM_UP.value))
    elif direction is not None:
        raise ValueError("only link data sources take a direction")
    else:
        object_class = make()
    name = desc.pop("name", "stream")
    oid = desc.pop("id", None) or f"ds:{name}"
    obj = CoreObject(oid, desc.pop("type", None) or default_type, object_class)
    obj.set_attribute("name", name)
    for key in sorted(desc):
        obj.set_attribute(key, desc[key])
    return obj


# -- session -----------------------------------------------------------------


class StreamSession:
    """One writer: drive a session from a single thread at a time."""

    def __init__(
        self,
        policy: SpillPolicy,
        source_descriptor: dict[str, str],
        *,
        clock: Callable[[], float] = time.monotonic,
    ):
        directory = policy.segment_directory
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StreamError(f"segment directory {directory} is not writable: {exc}") from None
        if not os.access(directory, os.W_OK | os.X_OK):
            raise StreamError(f"segment directory {directory} is not writable")
        self.policy = policy
        self.source = source_object(source_descriptor)
        self.segments: list[Segment] = []
        self.lookup = LookupTable()
        self.closed = False
        self._clock = clock
        self._buffer: list[tuple[Record, list[tuple[str, str]]]] = []
        self._buffer_events: set[str] = set()
        self._buffer_objects: set[str] = set()
        self._buffer_started: float | None = None

    @property
    def source_id(self) -> str:
        return self.source.object_id

    def __len__(self) -> int:
        return len(self._buffer)

    # -- queries --------------------------------------------------------

    def known(self, namespace: str, identifier: str) -> bool:
        if namespace == "event":
            return identifier in self._buffer_events or identifier in self.lookup.events
        return (
            identifier == self.source.object_id
            or identifier in self._buffer_objects
            or identifier in self.lookup.objects
        )

    def locate(self, identifier: str, namespace: str = "event") -> tuple[int, int] | None:
        return self.lookup.table(namespace).get(identifier)

    def fetch(self, identifier: str, namespace: str = "event") -> Record:
        """Read a spilled event or object back from its segment."""
        where = self.locate(identifier, namespace)
        if where is None:
            raise KeyError(identifier)
        seq, offset = where
        return decode_record(read_record_at(self.segments[seq].path, offset))[0]

    # -- ingest ---------------------------------------------------------

    def ingest(self, record: Record, links: Iterable[tuple[str, str | None]] = ()) -> None:
        """Buffer ``record``; spills before returning when a trigger fires.

        Events are linked to the session's data source automatically. Extra
        ``links`` are (object id, qualifier) pairs; a missing qualifier
        becomes the event type.
        """
        if self.closed:
            raise SessionClosed("session is finalized")
        if isinstance(record, CoreEvent):
            self._ingest_event(record, list(links))
        elif links:
            raise MalformedRecord("only events carry links")
        elif isinstance(record, CoreObject):
            if self.known("object", record.object_id):
                raise DuplicateId(record.object_id, "object")
            self._push(record, [])
            self._buffer_objects.add(record.object_id)
            self._release(("object", record.object_id))
        elif isinstance(record, (EventObjectRel, ObjectObjectRel, EventEventRel)):
            self._ingest_relation(record)
        else:
            raise MalformedRecord(f"unsupported record type {type(record).__name__}")
        self._maybe_spill()

    def _ingest_event(self, ev: CoreEvent, links: list[tuple[str, str | None]]) -> None:
        if ev.timestamp is None:
            raise MalformedRecord(f"event {ev.event_id} has no timestamp")
        problems = ev.class_rule_problems()
        if problems:
            raise MalformedRecord("; ".join(problems))
        if self.known("event", ev.event_id):
            raise DuplicateId(ev.event_id, "event")
        embedded = [(self.source.object_id, SOURCE_QUALIFIER)]
        deferred = []
        for object_id, qualifier in links:
            if not isinstance(object_id, str) or not object_id:
                raise MalformedRecord(f"event {ev.event_id}: bad link target {object_id!r}")
            pair = (object_id, qualifier or ev.event_type)
            if self.known("object", object_id):
                embedded.append(pair)
            else:
                deferred.append(EventObjectRel(ev.event_id, *pair))
        self._push(ev, embedded)
        self._buffer_events.add(ev.event_id)
        self._release(("event", ev.event_id))
        for rel in deferred:
            self._park(rel)

    def _ingest_relation(self, rel: Relation) -> None:
        if not all(isinstance(v, str) and v for v in _endpoints_raw(rel)):
            raise MalformedRecord(f"relation {rel} has an empty endpoint")
        if isinstance(rel, EventEventRel) and rel.source_event_id == rel.target_event_id:
            raise MalformedRecord(f"e2e self loop on {rel.source_event_id}")
        if isinstance(rel, ObjectObjectRel):
            if not rel.qualifier:
                raise MalformedRecord("object-object relations need a qualifier")
            if rel.source_id == rel.target_id and rel.qualifier != SELF_QUALIFIER:
                raise MalformedRecord(f"self relation on {rel.source_id} requires qualifier {SELF_QUALIFIER!r}")
        if isinstance(rel, EventObjectRel) and not rel.qualifier:
            raise MalformedRecord("e2o relation records need a qualifier")
        self._park(rel)

    def _park(self, rel: Relation) -> None:
        """Buffer ``rel`` if both endpoints are known, else file it as pending."""
        for end in _endpoints(rel):
            if not self.known(*end):
                self.lookup.waiting.setdefault(end, []).append(rel)
                return
        self._push(rel, [])

    def _push(self, record: Record, links: list[tuple[str, str]]) -> None:
        if not self._buffer:
            self._buffer_started = self._clock()
        self._buffer.append((record, links))

    def _release(self, endpoint: tuple[str, str]) -> None:
        for rel in self.lookup.waiting.pop(endpoint, []):
            self._park(rel)

    def _maybe_spill(self) -> None:
        if not self._buffer:
            return
        limit = self.policy.max_buffered_records
        if limit is not None and len(self._buffer) >= limit:
            self.spill()
            return
        age = self.policy.max_buffer_age
        if age is not None and self._buffer_started is not None:
            if self._clock() - self._buffer_started >= age.total_seconds():
                self.spill()

    # -- spill / finalize -----------------------------------------------

    def spill(self) -> Segment:
        if self.closed:
            raise SessionClosed("session is finalized")
        if not self._buffer:
            raise StreamError("spill called with an empty buffer")
        seq = len(self.segments)
        path = self.policy.segment_directory / f"segment-{seq}.coreseg"
        try:
            payloads = [encode_record(rec, links) for rec, links in self._buffer]
            offsets = write_segment(path, payloads)
        except (OSError, OcelError, ValueError) as exc:
            raise SpillError(f"could not write {path}: {exc}") from exc
        stamps = []
        for (rec, _), offset in zip(self._buffer, offsets):
            if isinstance(rec, CoreEvent):
                self.lookup.events[rec.event_id] = (seq, offset)
                stamps.append(as_utc(rec.timestamp))  # type: ignore[arg-type]
            elif isinstance(rec, CoreObject):
                self.lookup.objects[rec.object_id] = (seq, offset)
        segment = Segment(seq, len(payloads), min(stamps, default=None), max(stamps, default=None), path)
        self.segments.append(segment)
        self._buffer = []
        self._buffer_events = set()
        self._buffer_objects = set()
        self._buffer_started = None
        return segment

    @gc_paused()
    def finalize(self) -> CoreLog:
        """Spill the residue, merge every segment and close the session.

        Relations still pending become E005 notes on the returned log.
        """
        if self.closed:
            raise SessionClosed("session is already finalized")
        if self._buffer:
            self.spill()
        log = CoreLog()
        log.objects[self.source.object_id] = self.source
        for segment in self.segments:
            try:
                records = read_segment(segment.path, segment.sequence_number)
                decoded = [decode_record(payload) for _, payload in records]
            except SegmentError as exc:
                raise FinalizeError(str(exc)) from exc
            except (ValueError, KeyError, TypeError, TimestampError, OcelError) as exc:
                raise FinalizeError(
                    f"segment {segment.sequence_number} ({segment.path}): undecodable record: {exc}"
                ) from exc
            for rec, embedded in decoded:
                if isinstance(rec, CoreEvent):
                    log.events[rec.event_id] = rec
                    log.e2o.update(embedded)
                elif isinstance(rec, CoreObject):
                    log.objects[rec.object_id] = rec
                elif isinstance(rec, EventObjectRel):
                    log.e2o.add(rec)
                elif isinstance(rec, ObjectObjectRel):
                    log.o2o.add(rec)
                else:
                    log.e2e.add(rec)
        for rel in self.lookup.pending:
            missing = [i for ns, i in _endpoints(rel) if not self.known(ns, i)]
            log.notes.append(Diagnostic("E005", f"pending relation {_describe(rel)} never resolved", missing[0]))
        self.closed = True
        return canonicalize(log)


def _endpoints_raw(rel: Relation) -> tuple[str, str]:
    if isinstance(rel, EventObjectRel):
        return rel.event_id, rel.object_id
    if isinstance(rel, ObjectObjectRel):
        return rel.source_id, rel.target_id
    return rel.source_event_id, rel.target_event_id


def _endpoints(rel: Relation) -> tuple[tuple[str, str], tuple[str, str]]:
    a, b = _endpoints_raw(rel)
    if isinstance(rel, EventObjectRel):
        return ("event", a), ("object", b)
    if isinstance(rel, ObjectObjectRel):
        return ("object", a), ("object", b)
    return ("event", a), ("event", b)


def _describe(rel: Relation) -> str:
    a, b = _endpoints_raw(rel)
    kind = {EventObjectRel: "e2o", ObjectObjectRel: "o2o", EventEventRel: "e2e"}[type(rel)]
    return f"{kind} {a} -> {b} ({rel.qualifier})"


def open_session(
    policy: SpillPolicy,
    source_descriptor: dict[str, str],
    *,
    clock: Callable[[], float] = time.monotonic,
) -> StreamSession:
    return StreamSession(policy, source_descriptor, clock=clock)
