"""CoreLog <-> OcelDocument.

Encoding runs in three phases: objects (class stored in ``core:object_class``),
events (class in ``core:event_class``), then relationships. e2o and o2o map
onto native OCEL relationships. OCEL has no event-to-event relation, so each
e2e edge becomes a ``core:e2e_link`` object that the source event reaches
with qualifier ``core:e2e:source`` and the target event with
``core:e2e:target``. Log metadata lives on the ``core:log_metadata`` object.
"""

from __future__ import annotations

from corelog._bulk import gc_paused
from corelog.diagnostics import Diagnostic, has_errors
from corelog.model import (
    CoreEvent,
    CoreLog,
    CoreObject,
    EventClass,
    EventEventRel,
    EventObjectRel,
    ObjectClass,
    ObjectObjectRel,
    Value,
    canonicalize,
)
from corelog.ocel.document import (
    DecodeError,
    EventAttribute,
    ObjectAttribute,
    OcelDocument,
    OcelError,
    OcelEvent,
    OcelObject,
    Relationship,
    with_derived_types,
)
from corelog.timestamps import STATIC_TIME, as_utc
from corelog.validation import validate

RESERVED_PREFIX = "core:"
EVENT_CLASS_KEY = "core:event_class"
ACTIVITY_KEY = "core:activity"
OBJECT_CLASS_KEY = "core:object_class"
LINK_DIRECTION_KEY = "core:link_direction"
QUALIFIER_KEY = "core:qualifier"
E2E_LINK_TYPE = "core:e2e_link"
E2E_SOURCE = "core:e2e:source"
E2E_TARGET = "core:e2e:target"
METADATA_ID = "core:log_metadata"
METADATA_TYPE = "core:log_metadata"


class ReservedKeyCollision(OcelError):
    def __init__(self, key: str, where: str):
        super().__init__(f"{where}: {key!r} collides with the reserved 'core:' namespace")
        self.key = key


class InvalidLog(OcelError):
    def __init__(self, diagnostics: list[Diagnostic]):
        errors = [d for d in diagnostics if d.is_error]
        super().__init__(f"log has {len(errors)} error diagnostics, first: {errors[0]}")
        self.diagnostics = diagnostics


def e2e_link_id(rel: EventEventRel) -> str:
    return f"e2e:{rel.source_event_id}:{rel.target_event_id}"


def _check_user_key(key: str, where: str) -> None:
    if key.startswith(RESERVED_PREFIX):
        raise ReservedKeyCollision(key, where)


@gc_paused()
def to_ocel(log: CoreLog, *, check: bool = True) -> OcelDocument:
    """Encode ``log``. With ``check`` (the default) a log carrying error
    diagnostics is refused with :class:`InvalidLog`."""
    if check:
        diags = validate(log)
        if has_errors(diags):
            raise InvalidLog(diags)

    link_ids: dict[str, EventEventRel] = {}
    for rel in sorted(log.e2e):
        base = lid = e2e_link_id(rel)
        n = 1
        # parallel edges (same pair, other qualifier) or ids containing ':'
        while lid in link_ids:
            n += 1
            lid = f"{base}#{n}"
        link_ids[lid] = rel
    for key in log.metadata:
        _check_user_key(key, "metadata")

    # phase 1: objects
    o2o_by_source: dict[str, list[Relationship]] = {}
    for rel in log.o2o:
        o2o_by_source.setdefault(rel.source_id, []).append(Relationship(rel.target_id, rel.qualifier))
    objects = []
    for obj in log.objects.values():
        if obj.object_id == METADATA_ID or obj.object_id in link_ids:
            raise ReservedKeyCollision(obj.object_id, "object id")
        if obj.object_type in (E2E_LINK_TYPE, METADATA_TYPE):
            raise ReservedKeyCollision(obj.object_type, f"object {obj.object_id} type")
        objects.append(encode_object(obj, o2o_by_source.get(obj.object_id, [])))

    # phase 2: events
    e2o_by_event: dict[str, list[Relationship]] = {}
    for rel in log.e2o:
        qualifier = rel.qualifier
        if not qualifier:
            ev = log.events.get(rel.event_id)
            qualifier = ev.event_type if ev is not None else ""
        e2o_by_event.setdefault(rel.event_id, []).append(Relationship(rel.object_id, qualifier))
    # phase 3: e2e edges as link objects
    for lid, rel in link_ids.items():
        objects.append(OcelObject(lid, E2E_LINK_TYPE, [ObjectAttribute(QUALIFIER_KEY, STATIC_TIME, rel.qualifier)]))
        e2o_by_event.setdefault(rel.source_event_id, []).append(Relationship(lid, E2E_SOURCE))
        e2o_by_event.setdefault(rel.target_event_id, []).append(Relationship(lid, E2E_TARGET))

    events = [encode_event(ev, e2o_by_event.get(ev.event_id, [])) for ev in log.events.values()]

    meta_attrs = [ObjectAttribute(k, STATIC_TIME, v) for k, v in log.metadata.items()]
    objects.append(OcelObject(METADATA_ID, METADATA_TYPE, meta_attrs))
    return with_derived_types(objects, events)


def encode_object(obj: CoreObject, relationships: list[Relationship] | None = None) -> OcelObject:
    attrs = [ObjectAttribute(OBJECT_CLASS_KEY, STATIC_TIME, obj.object_class.name)]
    if obj.object_class.direction is not None:
        attrs.append(ObjectAttribute(LINK_DIRECTION_KEY, STATIC_TIME, obj.object_class.direction.value))
    for name, entries in obj.attributes.items():
        _check_user_key(name, f"object {obj.object_id}")
        attrs.extend(ObjectAttribute(name, as_utc(ts), v) for ts, v in entries)
    return OcelObject(obj.object_id, obj.object_type, attrs, list(relationships or []))


def encode_event(ev: CoreEvent, relationships: list[Relationship] | None = None) -> OcelEvent:
    if ev.timestamp is None:
        raise OcelError(f"event {ev.event_id} has no timestamp")
    attrs = [EventAttribute(EVENT_CLASS_KEY, ev.event_class.value)]
    if ev.activity is not None:
        attrs.append(EventAttribute(ACTIVITY_KEY, ev.activity))
    for name, value in ev.attributes.items():
        _check_user_key(name, f"event {ev.event_id}")
        attrs.append(EventAttribute(name, value))
    return OcelEvent(ev.event_id, ev.event_type, as_utc(ev.timestamp), attrs, list(relationships or []))


def _single(attrs: list, key: str, where: str) -> Value:
    values = [a.value for a in attrs if a.name == key]
    if len(values) > 1 and len(set(map(repr, values))) > 1:
        raise DecodeError(f"{where}: conflicting values for {key}")
    return values[-1] if values else None


@gc_paused()
def from_ocel(doc: OcelDocument) -> CoreLog:
    """Decode ``doc`` back into a canonical CoreLog.

    Records without ``core:`` class attributes (plain OCEL input) default to
    Business.CaseObject / ProcessEvent, each flagged with W006 in ``notes``.
    Builder rules are not enforced here so hand-edited files can reach
    validation; structural defects raise :class:`DecodeError`.
    """
    notes: list[Diagnostic] = list(doc.warnings)
    by_id: dict[str, OcelObject] = {}
    for i, obj in enumerate(doc.objects):
        if obj.id in by_id:
            raise DecodeError(f"objects[{i}]: duplicate object id {obj.id!r}")
        by_id[obj.id] = obj
    event_ids: set[str] = set()
    for i, ev in enumerate(doc.events):
        if ev.id in event_ids:
            raise DecodeError(f"events[{i}]: duplicate event id {ev.id!r}")
        event_ids.add(ev.id)

    metadata: dict[str, Value] = {}
    meta = by_id.pop(METADATA_ID, None)
    if meta is not None:
        if meta.relationships:
            raise DecodeError(f"{METADATA_ID} must not carry relationships")
        for attr in sorted(meta.attributes, key=lambda a: as_utc(a.time)):
            metadata[attr.name] = attr.value

    links: dict[str, Value] = {}
    for oid, obj in list(by_id.items()):
        if obj.type == E2E_LINK_TYPE:
            qualifier = _single(obj.attributes, QUALIFIER_KEY, f"link {oid}")
            if not isinstance(qualifier, str) or not qualifier:
                raise DecodeError(f"link {oid}: missing {QUALIFIER_KEY}")
            if obj.relationships:
                raise DecodeError(f"link {oid}: link objects carry no relationships")
            links[oid] = qualifier
            del by_id[oid]

    log = CoreLog(metadata=metadata)
    for oid, obj in by_id.items():
        log.objects[oid] = decode_object(obj, notes)
    for oid, obj in by_id.items():
        for rel in obj.relationships:
            if rel.object_id not in by_id:
                raise DecodeError(f"object {oid}: relationship to unknown object {rel.object_id!r}")
            log.o2o.add(ObjectObjectRel(oid, rel.object_id, rel.qualifier))

    ends: dict[str, dict[str, list[str]]] = {lid: {E2E_SOURCE: [], E2E_TARGET: []} for lid in links}
    for ev in doc.events:
        log.events[ev.id] = decode_event(ev, notes)
        for rel in ev.relationships:
            if rel.object_id in links:
                if rel.qualifier not in (E2E_SOURCE, E2E_TARGET):
                    raise DecodeError(f"event {ev.id}: untagged relationship to link {rel.object_id}")
                ends[rel.object_id][rel.qualifier].append(ev.id)
            elif rel.object_id in by_id:
                if rel.qualifier in (E2E_SOURCE, E2E_TARGET):
                    raise DecodeError(f"event {ev.id}: {rel.qualifier} row points at non-link {rel.object_id}")
                log.e2o.add(EventObjectRel(ev.id, rel.object_id, rel.qualifier))
            else:
                raise DecodeError(f"event {ev.id}: relationship to unknown object {rel.object_id!r}")
    for lid, tagged in ends.items():
        src, dst = tagged[E2E_SOURCE], tagged[E2E_TARGET]
        if len(src) != 1 or len(dst) != 1:
            raise DecodeError(
                f"link {lid}: expected one source and one target row, got {len(src)} and {len(dst)}"
            )
        log.e2e.add(EventEventRel(src[0], dst[0], links[lid]))  # type: ignore[arg-type]

    log.notes = notes
    return canonicalize(log)


def decode_object(obj: OcelObject, notes: list[Diagnostic] | None = None) -> CoreObject:
    where = f"object {obj.id}"
    cls_text = _single(obj.attributes, OBJECT_CLASS_KEY, where)
    direction = _single(obj.attributes, LINK_DIRECTION_KEY, where)
    if cls_text is None:
        object_class = ObjectClass.case_object()
        if notes is not None:
            notes.append(Diagnostic("W006", "no core:object_class, defaulted to Business.CaseObject", obj.id))
    else:
        try:
            object_class = ObjectClass.parse(str(cls_text), direction)  # type: ignore[arg-type]
        except ValueError as exc:
            raise DecodeError(f"{where}: {exc}") from None
    history: dict[str, list] = {}
    for attr in obj.attributes:
        if attr.name in (OBJECT_CLASS_KEY, LINK_DIRECTION_KEY):
            continue
        history.setdefault(attr.name, []).append((attr.time, attr.value))
    try:
        return CoreObject(obj.id, obj.type, object_class, history)
    except (TypeError, ValueError) as exc:
        raise DecodeError(f"{where}: {exc}") from None


def decode_event(ev: OcelEvent, notes: list[Diagnostic] | None = None) -> CoreEvent:
    where = f"event {ev.id}"
    cls_value = _single(ev.attributes, EVENT_CLASS_KEY, where)
    activity = _single(ev.attributes, ACTIVITY_KEY, where)
    if cls_value is None:
        event_class = EventClass.PROCESS_EVENT
        if activity is None:
            activity = ev.type
        if notes is not None:
            notes.append(Diagnostic("W006", "no core:event_class, defaulted to ProcessEvent", ev.id))
    else:
        try:
            event_class = EventClass(cls_value)
        except ValueError:
            raise DecodeError(f"{where}: unknown event class {cls_value!r}") from None
    if activity is not None and not isinstance(activity, str):
        raise DecodeError(f"{where}: {ACTIVITY_KEY} must be text")
    attrs = {a.name: a.value for a in ev.attributes if a.name not in (EVENT_CLASS_KEY, ACTIVITY_KEY)}
    try:
        return CoreEvent(ev.id, ev.time, event_class, ev.type, activity, attrs)
    except (TypeError, ValueError) as exc:
        raise DecodeError(f"{where}: {exc}") from None
