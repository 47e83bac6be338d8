"""XES logs carrying the DataStream extension.

Recognized structure (keys are XES attribute keys)::

    <log>
      <extension prefix="stream" .../>
      <trace>
        <string key="concept:name" value="case-1"/>
        <list key="stream:datacontext"> ... </list>       shared by the trace
        <event>
          <string key="concept:name" value="Start Production"/>
          <list key="stream:datastream">
            <list key="stream:point"> ... </list>
            <list key="stream:multipoint"> common attrs + points </list>
          </list>
          <list key="stream:datacontext"> ... </list>     shared by this event
        </event>
      </trace>
    </log>

An ``<event>`` with ``concept:name`` becomes a ProcessEvent; one without is
a plain carrier whose other attributes are copied onto its points. Every
point becomes an Observation; under the Trier profile a point carrying
``concept:name`` becomes a ProcessEvent instead. Observations are linked to
the process events of their event by e2e edges (Observation -> ProcessEvent).

Datacontext scalars (prefix stripped) are copied onto every event in scope,
and datacontext points become Observations linked to every process event in
scope.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime

from corelog.model import CoreEvent, CoreObject, ObjectClass, Value
from corelog.parsers.base import (
    CASE_QUALIFIER,
    SOURCE_QUALIFIER,
    XES_NESTED,
    XES_SCALARS,
    LogBuilder,
    MissingExtension,
    ParseReport,
    ParserProfile,
    ProfileKind,
    SchemaViolation,
    load_xml,
    local_name,
    nested_json,
    timestamp_value,
    xes_scalar,
)

STREAM = "stream:"
CONCEPT_NAME = "concept:name"
TIMESTAMP = "time:timestamp"
RESOURCE = "org:resource"
EVENT_ID = "id:id"
POINT_TIME = "stream:timestamp"
DEVICE_NAME = "stream:name"
DEVICE_SOURCE = "stream:source"
DATASTREAM = "stream:datastream"
DATACONTEXT = "stream:datacontext"
POINT = "stream:point"
MULTIPOINT = "stream:multipoint"
RESOURCE_QUALIFIER = "resource"
DEVICE_QUALIFIER = "device"


@dataclass
class _Point:
    path: str
    attrs: dict[str, Value]
    time: datetime | None = None
    assumed_utc: bool = False


@dataclass
class _Scope:
    """What an ``<event>`` or a trace-level datacontext contributes."""

    attrs: dict[str, Value] = field(default_factory=dict)
    points: list[_Point] = field(default_factory=list)
    stream_attrs: dict[str, Value] = field(default_factory=dict)
    context: dict[str, Value] = field(default_factory=dict)
    context_points: list[_Point] = field(default_factory=list)


def _stripped(key: str) -> str:
    return key[len(STREAM):] if key.startswith(STREAM) else key


def _scalar_or_text(child: ET.Element, path: str) -> Value:
    if local_name(child.tag) in XES_NESTED:
        return nested_json(child, path)
    return xes_scalar(child, path)


def _read_point(elem: ET.Element, path: str, inherited: dict[str, Value]) -> _Point:
    point = _Point(path, dict(inherited))
    for i, child in enumerate(elem):
        key = child.get("key")
        cpath = f"{path}/{local_name(child.tag)}[{i}]"
        if key is None:
            raise SchemaViolation(cpath, "attribute element without key")
        if key == POINT_TIME:
            if local_name(child.tag) != "date":
                raise SchemaViolation(cpath, f"{POINT_TIME} must be a <date>")
            point.time, point.assumed_utc = timestamp_value(child.get("value", ""), cpath)
            continue
        point.attrs[key] = _scalar_or_text(child, cpath)
    return point


def _read_points(container: ET.Element, path: str) -> tuple[dict[str, Value], list[_Point]]:
    """Scalars and points of a datastream/datacontext/multipoint list."""
    scalars: dict[str, Value] = {}
    common_time: tuple[datetime, bool] | None = None
    points: list[_Point] = []
    pending: list[tuple[ET.Element, str, bool]] = []
    for i, child in enumerate(container):
        key = child.get("key")
        cpath = f"{path}/{local_name(child.tag)}[{i}]"
        if key is None:
            raise SchemaViolation(cpath, "attribute element without key")
        if key in (POINT, MULTIPOINT):
            if local_name(child.tag) not in XES_NESTED:
                raise SchemaViolation(cpath, f"{key} must be a <list>")
            pending.append((child, cpath, key == MULTIPOINT))
        elif key == POINT_TIME and local_name(child.tag) == "date":
            common_time = timestamp_value(child.get("value", ""), cpath)
        else:
            scalars[key] = _scalar_or_text(child, cpath)
    for child, cpath, multi in pending:
        if multi:
            inner_scalars, inner_points = _read_points(child, cpath)
            for p in inner_points:
                p.attrs = {**inner_scalars, **p.attrs}
            points.extend(inner_points)
        else:
            points.append(_read_point(child, cpath, {}))
    if common_time is not None:
        for p in points:
            if p.time is None:
                p.time, p.assumed_utc = common_time
    return scalars, points


def _read_scope(elem: ET.Element, path: str) -> _Scope:
    scope = _Scope()
    for i, child in enumerate(elem):
        key = child.get("key")
        cpath = f"{path}/{local_name(child.tag)}[{i}]"
        if local_name(child.tag) in ("event", "trace"):
            continue
        if key is None:
            raise SchemaViolation(cpath, "attribute element without key")
        if key == DATASTREAM:
            scalars, points = _read_points(child, cpath)
            scope.stream_attrs.update(scalars)
            scope.points.extend(points)
        elif key == DATACONTEXT:
            scalars, points = _read_points(child, cpath)
            scope.context.update({_stripped(k): v for k, v in scalars.items()})
            scope.context_points.extend(points)
        elif key in (POINT, MULTIPOINT):
            raise SchemaViolation(cpath, f"{key} outside a datastream")
        elif key == TIMESTAMP:
            if local_name(child.tag) != "date":
                raise SchemaViolation(cpath, f"{TIMESTAMP} must be a <date>")
            scope.attrs[key] = child.get("value", "")
        else:
            scope.attrs[key] = _scalar_or_text(child, cpath)
    return scope


class _DataStreamParser:
    def __init__(self, document: bytes, profile: ParserProfile):
        self.profile = profile.kind
        self.b = LogBuilder(document, f"xes-datastream/{self.profile.value}")
        self.root = load_xml(document)

    @property
    def trier(self) -> bool:
        return self.profile is ProfileKind.DATASTREAM_TRIER

    def run(self) -> ParseReport:
        root = self.root
        if local_name(root.tag) != "log":
            raise SchemaViolation("/log", f"root element is <{local_name(root.tag)}>")
        traces = [c for c in root if local_name(c.tag) == "trace"]
        has_events = any(local_name(e.tag) == "event" for t in traces for e in t)
        declared = {e.get("prefix") for e in root if local_name(e.tag) == "extension"}
        if has_events and "stream" not in declared:
            raise MissingExtension("log has events but declares no extension with prefix 'stream'")
        if not traces or not has_events:
            self.b.note("W004", "document contains no events", "<log>")
        for i, child in enumerate(root):
            tag = local_name(child.tag)
            if tag in XES_SCALARS or tag in XES_NESTED:
                key = child.get("key")
                if not key:
                    raise SchemaViolation(f"/log/{tag}[{i}]", "attribute element without key")
                self.b.log.metadata[key] = _scalar_or_text(child, f"/log/{tag}[{i}]")
        for t_index, trace in enumerate(traces):
            self.trace(trace, f"/log/trace[{t_index}]", t_index)
        return self.b.report()

    def trace(self, trace: ET.Element, path: str, index: int) -> None:
        scope = _read_scope(trace, path)
        case_id = scope.attrs.pop(CONCEPT_NAME, None)
        case_id = str(case_id) if case_id not in (None, "") else f"trace-{index}"
        case = CoreObject(case_id, "Case", ObjectClass.case_object())
        for key, value in scope.attrs.items():
            case.set_attribute(key, value)
        if case_id in self.b.log.objects:
            # repeated trace name: keep the traces apart, remember the name
            case.set_attribute(CONCEPT_NAME, case_id)
            case_id = f"{case_id}#{index}"
            case = CoreObject(case_id, case.object_type, case.object_class, case.attributes)
        self.b.add_object(case)

        events = [e for e in trace if local_name(e.tag) == "event"]
        if not events:
            self.b.note("W004", "trace has no events", case_id)
        process_ids: list[str] = []
        for e_index, elem in enumerate(events):
            process_ids.extend(self.event(elem, f"{path}/event[{e_index}]", e_index, case_id, scope.context))
        # trace-level datacontext points feed every process event of the trace
        for n, point in enumerate(scope.context_points):
            self.observation(point, f"{case_id}/context/p{n}", case_id, scope.context, None, process_ids)

    def event(
        self, elem: ET.Element, path: str, index: int, case_id: str, inherited: dict[str, Value]
    ) -> list[str]:
        scope = _read_scope(elem, path)
        attrs = {**inherited, **scope.context}
        own = dict(scope.attrs)
        event_id = str(own.pop(EVENT_ID, None) or f"{case_id}/e{index}")
        time_text = own.pop(TIMESTAMP, None)
        event_time: tuple[datetime, bool] | None = None
        if time_text is not None:
            event_time = timestamp_value(str(time_text), f"{path}/@{TIMESTAMP}")

        process_ids: list[str] = []
        if CONCEPT_NAME in own:
            activity = str(own.pop(CONCEPT_NAME))
            resource = own.pop(RESOURCE, None)
            if event_time is None:
                self.b.skip(event_id, f"process event {activity!r} has no {TIMESTAMP}")
            elif self.process_event(event_id, activity, event_time, {**attrs, **own}, resource, case_id):
                process_ids.append(event_id)
            carried: dict[str, Value] = attrs
        else:
            # carrier event: its own attributes travel with its points
            carried = {**attrs, **own}
            if not scope.points and not scope.context_points:
                # nothing would carry these attributes; the record is dropped
                self.b.skip(event_id, "event has neither concept:name nor stream points")

        carried = {**carried, **scope.stream_attrs}
        observations = []
        for n, point in enumerate(scope.points):
            point_id = f"{event_id}/p{n}"
            if self.trier and CONCEPT_NAME in point.attrs:
                pattrs = {_stripped(k): v for k, v in point.attrs.items()}
                activity = str(pattrs.pop(CONCEPT_NAME))
                resource = pattrs.pop(RESOURCE, None)
                when = (point.time, point.assumed_utc) if point.time else event_time
                if when is None:
                    self.b.skip(point_id, "stream point has no timestamp")
                elif self.process_event(point_id, activity, when, {**carried, **pattrs}, resource, case_id):
                    process_ids.append(point_id)
            else:
                observations.append((point_id, point))
        for point_id, point in observations:
            self.observation(point, point_id, case_id, carried, event_time, process_ids)
        for n, point in enumerate(scope.context_points):
            self.observation(point, f"{event_id}/context/p{n}", case_id, carried, event_time, process_ids)
        return process_ids

    def process_event(
        self,
        event_id: str,
        activity: str,
        when: tuple[datetime, bool],
        attrs: dict[str, Value],
        resource: Value,
        case_id: str,
    ) -> bool:
        links = [(self.b.data_source(), SOURCE_QUALIFIER), (case_id, CASE_QUALIFIER)]
        if resource not in (None, ""):
            rid = self.b.ensure_object(CoreObject(str(resource), "Resource", ObjectClass.resource()))
            links.append((rid, RESOURCE_QUALIFIER))
        ev = CoreEvent.process(event_id, when[0], activity, **attrs)
        if not self.b.add_event(ev, links):
            return False
        if when[1]:
            self.b.note("W002", f"{TIMESTAMP} has no timezone", event_id)
        return True

    def observation(
        self,
        point: _Point,
        point_id: str,
        case_id: str,
        carried: dict[str, Value],
        fallback: tuple[datetime, bool] | None,
        process_ids: list[str],
    ) -> None:
        when = (point.time, point.assumed_utc) if point.time is not None else fallback
        if when is None:
            self.b.skip(point_id, "stream point has no timestamp")
            return
        attrs = dict(carried)
        links = [(self.b.data_source(), SOURCE_QUALIFIER), (case_id, CASE_QUALIFIER)]
        own = dict(point.attrs)
        if not self.trier:
            name, source = own.pop(DEVICE_NAME, None), own.pop(DEVICE_SOURCE, None)
            if name not in (None, "") or source not in (None, ""):
                links.append((self.device(name, source), DEVICE_QUALIFIER))
        attrs.update({_stripped(k): v for k, v in own.items()})
        if not self.b.add_event(CoreEvent.observation(point_id, when[0], **attrs), links):
            return
        if when[1]:
            self.b.note("W002", f"{POINT_TIME} has no timezone", point_id)
        for pid in process_ids:
            self.b.add_e2e(point_id, pid)

    def device(self, name: Value, source: Value) -> str:
        parts = [str(v) for v in (source, name) if v not in (None, "")]
        device = CoreObject("/".join(parts), "IoT-Device", ObjectClass.machine())
        if name not in (None, ""):
            device.set_attribute("name", name)
        if source not in (None, ""):
            device.set_attribute("source", source)
        return self.b.ensure_object(device)


def parse_datastream(document: bytes, profile: ParserProfile | None = None) -> ParseReport:
    """Parse a DataStream XES document under the Trier (default) or TUM profile."""
    profile = profile or ParserProfile.trier()
    if profile.kind not in (ProfileKind.DATASTREAM_TRIER, ProfileKind.DATASTREAM_TUM):
        raise ValueError(f"parse_datastream does not handle the {profile.kind.value} profile")
    return _DataStreamParser(document, profile).run()
