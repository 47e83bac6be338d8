"""Domain types of the CORE metamodel and the builder operations on a log.

A :class:`CoreLog` holds typed objects and timestamped events plus three
relationship sets (event-object, object-object, event-event). Builder
methods enforce identifier uniqueness, referential integrity, event-class
typing and e2e acyclicity at insertion time; the data-source / business
object cardinality rule is only checked by :mod:`corelog.validation`, so a
log can be built up incrementally.
"""

from __future__ import annotations

import dataclasses
import enum
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, Union

from corelog._bulk import gc_paused
from corelog.diagnostics import Diagnostic
from corelog.timestamps import STATIC_TIME, as_utc

Value = Union[str, int, float, bool, None]

OBSERVED = "observed"
DERIVED_FROM = "derived-from"
DERIVED_BY = "derived-by"
SELF_QUALIFIER = "self"


class CoreLogError(Exception):
    """Base class for builder failures."""


class DuplicateId(CoreLogError):
    def __init__(self, identifier: str, namespace: str = "object"):
        super().__init__(f"duplicate {namespace} id {identifier!r}")
        self.identifier = identifier
        self.namespace = namespace


class DanglingObjectRef(CoreLogError):
    def __init__(self, object_id: str):
        super().__init__(f"unknown object {object_id!r}")
        self.object_id = object_id


class DanglingEventRef(CoreLogError):
    def __init__(self, event_id: str):
        super().__init__(f"unknown event {event_id!r}")
        self.event_id = event_id


class ClassRuleViolation(CoreLogError):
    pass


class CycleDetected(CoreLogError):
    pass


class RelationError(CoreLogError):
    pass


_CONTROL = re.compile(r"[\x00-\x1f\x7f-\x9f]")


def check_identifier(value: object, what: str = "identifier") -> str:
    if not isinstance(value, str) or not value:
        raise ValueError(f"{what} must be a non-empty string, got {value!r}")
    if _CONTROL.search(value):
        raise ValueError(f"{what} {value!r} contains control characters")
    return value


def check_value(value: object, where: str = "attribute") -> Value:
    if value is None or isinstance(value, (str, int, float, bool)):
        return value  # type: ignore[return-value]
    raise TypeError(f"{where}: unsupported attribute value type {type(value).__name__}")


def tagged(value: Value) -> tuple[str, Value]:
    """Tag-preserving comparison key; keeps ``True`` apart from ``1``."""
    return (type(value).__name__, value)


class LinkDirection(str, enum.Enum):
    BOTTOM_UP = "BottomUp"
    TOP_DOWN = "TopDown"


class ObjectKind(str, enum.Enum):
    SENSOR = "DataSource.Sensor"
    INFORMATION_SYSTEM = "DataSource.InformationSystem"
    LINK = "DataSource.Link"
    CASE_OBJECT = "Business.CaseObject"
    CONTEXT_OBJECT = "Business.ContextObject"
    ACTIVITY = "General.Activity"
    SUBPROCESS = "General.Subprocess"
    RESOURCE = "General.Resource"
    MACHINE = "General.Machine"
    OTHER = "General.Other"

    @property
    def category(self) -> str:
        return self.value.split(".", 1)[0]


@dataclass(frozen=True, order=True)
class ObjectClass:
    """One variant of the object taxonomy.

    ``direction`` is required for links and forbidden otherwise; ``label``
    likewise for ``General.Other``.
    """

    kind: ObjectKind
    direction: LinkDirection | None = None
    label: str | None = None

    def __post_init__(self) -> None:
        if (self.kind is ObjectKind.LINK) != (self.direction is not None):
            raise ValueError("a Link class carries exactly one direction; other classes none")
        if self.kind is ObjectKind.OTHER:
            if not self.label or ")" in self.label:
                raise ValueError(f"General.Other needs a label without ')', got {self.label!r}")
        elif self.label is not None:
            raise ValueError(f"{self.kind.value} takes no label")

    @classmethod
    def sensor(cls) -> ObjectClass:
        return cls(ObjectKind.SENSOR)

    @classmethod
    def information_system(cls) -> ObjectClass:
        return cls(ObjectKind.INFORMATION_SYSTEM)

    @classmethod
    def link(cls, direction: LinkDirection | str = LinkDirection.BOTTOM_UP) -> ObjectClass:
        return cls(ObjectKind.LINK, direction=LinkDirection(direction))

    @classmethod
    def case_object(cls) -> ObjectClass:
        return cls(ObjectKind.CASE_OBJECT)

    @classmethod
    def context_object(cls) -> ObjectClass:
        return cls(ObjectKind.CONTEXT_OBJECT)

    @classmethod
    def activity(cls) -> ObjectClass:
        return cls(ObjectKind.ACTIVITY)

    @classmethod
    def subprocess(cls) -> ObjectClass:
        return cls(ObjectKind.SUBPROCESS)

    @classmethod
    def resource(cls) -> ObjectClass:
        return cls(ObjectKind.RESOURCE)

    @classmethod
    def machine(cls) -> ObjectClass:
        return cls(ObjectKind.MACHINE)

    @classmethod
    def other(cls, label: str) -> ObjectClass:
        return cls(ObjectKind.OTHER, label=label)

    @property
    def is_data_source(self) -> bool:
        return self.kind.category == "DataSource"

    @property
    def is_business(self) -> bool:
        return self.kind.category == "Business"

    @property
    def name(self) -> str:
        """Class name without the link direction, e.g. ``DataSource.Link``."""
        if self.kind is ObjectKind.OTHER:
            return f"General.Other({self.label})"
        return self.kind.value

    def __str__(self) -> str:
        if self.direction is not None:
            return f"{self.kind.value}({self.direction.value})"
        return self.name

    @classmethod
    def parse(cls, text: str, direction: str | LinkDirection | None = None) -> ObjectClass:
        """Parse ``str(cls)`` output; a link direction may also come separately."""
        text = text.strip()
        arg = None
        if text.endswith(")") and "(" in text:
            text, arg = text[:-1].split("(", 1)
        try:
            kind = ObjectKind(text)
        except ValueError:
            raise ValueError(f"unknown object class {text!r}") from None
        if kind is ObjectKind.OTHER:
            return cls.other(arg or "")
        if kind is ObjectKind.LINK:
            chosen = arg or direction
            if chosen is None:
                raise ValueError("DataSource.Link needs a direction")
            try:
                return cls.link(chosen)
            except ValueError:
                raise ValueError(f"unknown link direction {chosen!r}") from None
        if arg is not None:
            raise ValueError(f"{kind.value} takes no argument")
        return cls(kind)


class EventClass(str, enum.Enum):
    PROCESS_EVENT = "process_event"
    IOT_EVENT = "iot_event"
    OBSERVATION = "observation"


@dataclass
class CoreObject:
    object_id: str
    object_type: str
    object_class: ObjectClass
    attributes: dict[str, list[tuple[datetime, Value]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        check_identifier(self.object_id, "object_id")
        history = {}
        for name, entries in self.attributes.items():
            ordered = sorted(
                ((ts, check_value(v, f"{self.object_id}.{name}")) for ts, v in entries),
                key=lambda e: as_utc(e[0]),
            )
            stamps = [as_utc(ts) for ts, _ in ordered]
            if len(set(stamps)) != len(stamps):
                raise ValueError(f"object {self.object_id}: two values for {name!r} at one timestamp")
            history[name] = ordered
        self.attributes = history

    def set_attribute(self, name: str, value: Value, time: datetime = STATIC_TIME) -> None:
        """Record ``value`` at ``time``, replacing any value already at that instant."""
        check_value(value, f"{self.object_id}.{name}")
        entries = [e for e in self.attributes.get(name, []) if as_utc(e[0]) != as_utc(time)]
        entries.append((time, value))
        entries.sort(key=lambda e: as_utc(e[0]))
        self.attributes[name] = entries

    def value_at(self, name: str, time: datetime | None = None) -> Value:
        """Latest value of ``name`` at or before ``time`` (latest overall if None)."""
        entries = self.attributes.get(name, [])
        if time is not None:
            entries = [e for e in entries if as_utc(e[0]) <= as_utc(time)]
        if not entries:
            raise KeyError(name)
        return entries[-1][1]


@dataclass
class CoreEvent:
    event_id: str
    timestamp: datetime | None
    event_class: EventClass
    event_type: str
    activity: str | None = None
    attributes: dict[str, Value] = field(default_factory=dict)

    def __post_init__(self) -> None:
        check_identifier(self.event_id, "event_id")
        self.event_class = EventClass(self.event_class)
        for name, value in self.attributes.items():
            check_value(value, f"{self.event_id}.{name}")

    @classmethod
    def observation(cls, event_id: str, timestamp: datetime | None, **attributes: Value) -> CoreEvent:
        return cls(event_id, timestamp, EventClass.OBSERVATION, OBSERVED, None, dict(attributes))

    @classmethod
    def process(
        cls, event_id: str, timestamp: datetime | None, activity: str, **attributes: Value
    ) -> CoreEvent:
        return cls(event_id, timestamp, EventClass.PROCESS_EVENT, activity, activity, dict(attributes))

    @classmethod
    def iot(cls, event_id: str, timestamp: datetime | None, label: str, **attributes: Value) -> CoreEvent:
        return cls(event_id, timestamp, EventClass.IOT_EVENT, label, None, dict(attributes))

    def class_rule_problems(self) -> list[str]:
        problems = []
        if self.event_class is EventClass.OBSERVATION:
            if self.event_type != OBSERVED:
                problems.append(f"observation {self.event_id} has event_type {self.event_type!r}")
        elif self.event_class is EventClass.PROCESS_EVENT:
            if not self.activity:
                problems.append(f"process event {self.event_id} has no activity")
            elif self.event_type != self.activity:
                problems.append(
                    f"process event {self.event_id}: event_type {self.event_type!r}"
                    f" differs from activity {self.activity!r}"
                )
        elif not self.event_type:
            problems.append(f"IoT event {self.event_id} has an empty event_type")
        return problems


@dataclass(frozen=True, order=True)
class EventObjectRel:
    event_id: str
    object_id: str
    qualifier: str


@dataclass(frozen=True, order=True)
class ObjectObjectRel:
    source_id: str
    target_id: str
    qualifier: str


@dataclass(frozen=True, order=True)
class EventEventRel:
    source_event_id: str
    target_event_id: str
    qualifier: str = DERIVED_FROM


@dataclass(eq=False)
class CoreLog:
    """Root container. Equality is semantic: order-insensitive, tag-aware.

    ``notes`` carries diagnostics recorded while the log was built (lenient
    duplicate skips, import defaults); it is not part of the log's identity.
    """

    objects: dict[str, CoreObject] = field(default_factory=dict)
    events: dict[str, CoreEvent] = field(default_factory=dict)
    e2o: set[EventObjectRel] = field(default_factory=set)
    o2o: set[ObjectObjectRel] = field(default_factory=set)
    e2e: set[EventEventRel] = field(default_factory=set)
    metadata: dict[str, Value] = field(default_factory=dict)
    notes: list[Diagnostic] = field(default_factory=list)

    _succ: dict[str, set[str]] = field(default_factory=dict, init=False, repr=False)
    _succ_edges: int = field(default=-1, init=False, repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoreLog):
            return NotImplemented
        return canonical_key(self) == canonical_key(other)

    __hash__ = None  # type: ignore[assignment]

    # -- insertion ---------------------------------------------------------

    def add_object(self, obj: CoreObject, *, strict: bool = True) -> Diagnostic | None:
        """Insert ``obj``. A duplicate id raises in strict mode and is skipped
        (returning and recording a W003 note) otherwise."""
        if obj.object_id in self.objects:
            return self._duplicate(obj.object_id, "object", strict)
        self.objects[obj.object_id] = obj
        return None

    def add_event(
        self,
        ev: CoreEvent,
        links: Iterable[tuple[str, str | None]] = (),
        *,
        strict: bool = True,
    ) -> Diagnostic | None:
        """Insert ``ev`` with its event-object links.

        A missing qualifier falls back to the event's type. Nothing is
        inserted if any check fails.
        """
        links = list(links)
        if ev.event_id in self.events:
            return self._duplicate(ev.event_id, "event", strict)
        if ev.timestamp is None:
            raise ClassRuleViolation(f"event {ev.event_id} has no timestamp")
        problems = ev.class_rule_problems()
        if problems:
            raise ClassRuleViolation("; ".join(problems))
        for object_id, _ in links:
            if object_id not in self.objects:
                raise DanglingObjectRef(object_id)
        self.events[ev.event_id] = ev
        for object_id, qualifier in links:
            self.e2o.add(EventObjectRel(ev.event_id, object_id, qualifier or ev.event_type))
        return None

    def add_o2o(self, rel: ObjectObjectRel) -> None:
        for object_id in (rel.source_id, rel.target_id):
            if object_id not in self.objects:
                raise DanglingObjectRef(object_id)
        if not rel.qualifier:
            raise RelationError("object-object relations need a qualifier")
        if rel.source_id == rel.target_id and rel.qualifier != SELF_QUALIFIER:
            raise RelationError(
                f"self relation on {rel.source_id} requires qualifier {SELF_QUALIFIER!r}"
            )
        self.o2o.add(rel)

    def add_e2e(self, rel: EventEventRel) -> None:
        for event_id in (rel.source_event_id, rel.target_event_id):
            if event_id not in self.events:
                raise DanglingEventRef(event_id)
        if rel in self.e2e:
            return
        succ = self._successors()
        if rel.source_event_id == rel.target_event_id or rel.source_event_id in _reachable(
            succ, rel.target_event_id
        ):
            raise CycleDetected(
                f"{rel.source_event_id} -> {rel.target_event_id} would close a cycle"
            )
        self.e2e.add(rel)
        succ.setdefault(rel.source_event_id, set()).add(rel.target_event_id)
        self._succ_edges = len(self.e2e)

    def derive_event(
        self,
        link_obj: CoreObject,
        sources: Iterable[str],
        new_event: CoreEvent,
        business_links: Iterable[tuple[str, str | None]] = (),
    ) -> str:
        """Insert ``new_event`` as derived from ``sources`` through ``link_obj``.

        The new event gets exactly one data-source link (to ``link_obj``) plus
        ``business_links``, and one ``derived-from`` edge from every source.
        An unset timestamp becomes the latest source timestamp.
        """
        sources = list(dict.fromkeys(sources))
        business_links = list(business_links)
        link_class = link_obj.object_class
        if link_class.kind is not ObjectKind.LINK:
            raise ClassRuleViolation(f"{link_obj.object_id} is {link_class}, not a Link")
        if not sources:
            raise ClassRuleViolation("derive_event needs at least one source event")
        for event_id in sources:
            if event_id not in self.events:
                raise DanglingEventRef(event_id)
        source_classes = {self.events[s].event_class for s in sources}
        if link_class.direction is LinkDirection.BOTTOM_UP:
            allowed_new = {EventClass.IOT_EVENT, EventClass.PROCESS_EVENT}
            allowed_src = {EventClass.IOT_EVENT, EventClass.OBSERVATION}
        else:
            allowed_new = {EventClass.IOT_EVENT, EventClass.OBSERVATION}
            allowed_src = {EventClass.PROCESS_EVENT}
        if new_event.event_class not in allowed_new or not source_classes <= allowed_src:
            raise ClassRuleViolation(
                f"{link_class.direction.value} link cannot derive {new_event.event_class.value}"
                f" from {sorted(c.value for c in source_classes)}"
            )
        existing = self.objects.get(link_obj.object_id)
        if existing is not None and existing != link_obj:
            raise DuplicateId(link_obj.object_id)
        for object_id, _ in business_links:
            if object_id not in self.objects:
                raise DanglingObjectRef(object_id)
        if new_event.timestamp is None:
            latest = max((self.events[s].timestamp for s in sources), key=as_utc)  # type: ignore[arg-type]
            new_event = dataclasses.replace(new_event, timestamp=latest)

        added_link = existing is None
        if added_link:
            self.add_object(link_obj)
        try:
            self.add_event(new_event, [(link_obj.object_id, DERIVED_BY), *business_links])
        except CoreLogError:
            if added_link:
                del self.objects[link_obj.object_id]
            raise
        for event_id in sources:
            # the new event has no outgoing edges, so no cycle is possible
            self.e2e.add(EventEventRel(event_id, new_event.event_id, DERIVED_FROM))
        self._succ_edges = -1
        return new_event.event_id

    def _duplicate(self, identifier: str, namespace: str, strict: bool) -> Diagnostic:
        if strict:
            raise DuplicateId(identifier, namespace)
        note = Diagnostic("W003", f"duplicate {namespace} id skipped", identifier)
        self.notes.append(note)
        return note

    # -- queries -----------------------------------------------------------

    def _successors(self) -> dict[str, set[str]]:
        if self._succ_edges != len(self.e2e):
            self._succ = {}
            for rel in self.e2e:
                self._succ.setdefault(rel.source_event_id, set()).add(rel.target_event_id)
            self._succ_edges = len(self.e2e)
        return self._succ

    def objects_of(self, event_id: str) -> list[EventObjectRel]:
        return sorted(r for r in self.e2o if r.event_id == event_id)

    def lineage(self, event_id: str) -> set[str]:
        """All events ``event_id`` was transitively derived from."""
        if event_id not in self.events:
            raise DanglingEventRef(event_id)
        pred: dict[str, set[str]] = {}
        for rel in self.e2e:
            pred.setdefault(rel.target_event_id, set()).add(rel.source_event_id)
        return _reachable(pred, event_id) - {event_id}

    def derived(self, event_id: str) -> set[str]:
        """All events transitively derived from ``event_id``."""
        if event_id not in self.events:
            raise DanglingEventRef(event_id)
        return _reachable(self._successors(), event_id) - {event_id}


def _reachable(adj: Mapping[str, set[str]], start: str) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adj.get(stack.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def new_log(metadata: Mapping[str, Value] | None = None) -> CoreLog:
    meta = {}
    for key, value in (metadata or {}).items():
        meta[check_identifier(key, "metadata key")] = check_value(value, f"metadata {key}")
    return CoreLog(metadata=meta)


def _event_sort_key(ev: CoreEvent) -> tuple[datetime, str]:
    return (as_utc(ev.timestamp) if ev.timestamp is not None else STATIC_TIME, ev.event_id)


@gc_paused()
def canonicalize(log: CoreLog) -> CoreLog:
    """Copy of ``log`` with every container in canonical order.

    Events are ordered by (timestamp, id), objects by id, attribute maps by
    key. Relation sets carry no order; serializers sort them. An e2o
    relation without qualifier takes its event's type.
    """
    objects = {}
    for oid in sorted(log.objects):
        obj = log.objects[oid]
        objects[oid] = CoreObject(
            obj.object_id,
            obj.object_type,
            obj.object_class,
            {k: list(obj.attributes[k]) for k in sorted(obj.attributes)},
        )
    events = {}
    for ev in sorted(log.events.values(), key=_event_sort_key):
        # shallow copy without re-running field checks (hot on large logs)
        clone = object.__new__(CoreEvent)
        clone.__dict__.update(ev.__dict__)
        clone.attributes = {k: ev.attributes[k] for k in sorted(ev.attributes)}
        events[ev.event_id] = clone
    e2o = set()
    for rel in log.e2o:
        ev = log.events.get(rel.event_id)
        if not rel.qualifier and ev is not None:
            rel = EventObjectRel(rel.event_id, rel.object_id, ev.event_type)
        e2o.add(rel)
    return CoreLog(
        objects=objects,
        events=events,
        e2o=e2o,
        o2o=set(log.o2o),
        e2e=set(log.e2e),
        metadata={k: log.metadata[k] for k in sorted(log.metadata)},
        notes=list(log.notes),
    )


def _object_key(obj: CoreObject) -> tuple:
    return (
        obj.object_id,
        obj.object_type,
        str(obj.object_class),
        tuple(
            (name, tuple((as_utc(ts), tagged(v)) for ts, v in obj.attributes[name]))
            for name in sorted(obj.attributes)
        ),
    )


def _event_key(ev: CoreEvent) -> tuple:
    return (
        ev.event_id,
        as_utc(ev.timestamp) if ev.timestamp is not None else None,
        ev.event_class.value,
        ev.event_type,
        ev.activity,
        tuple((k, tagged(ev.attributes[k])) for k in sorted(ev.attributes)),
    )


def canonical_key(log: CoreLog) -> tuple:
    """Hashable, order-free, tag-aware identity of a log."""
    return (
        tuple((k, tagged(log.metadata[k])) for k in sorted(log.metadata)),
        tuple(_object_key(log.objects[k]) for k in sorted(log.objects)),
        tuple(_event_key(log.events[k]) for k in sorted(log.events)),
        tuple(sorted(log.e2o)),
        tuple(sorted(log.o2o)),
        tuple(sorted(log.e2e)),
    )


def first_difference(a: CoreLog, b: CoreLog) -> str | None:
    """Path of the first record where two logs differ, or None if equal."""
    if a == b:
        return None
    for key in sorted(set(a.metadata) | set(b.metadata)):
        if tagged(a.metadata.get(key)) != tagged(b.metadata.get(key)) or (key in a.metadata) != (
            key in b.metadata
        ):
            return f"metadata[{key!r}]"
    for oid in sorted(set(a.objects) | set(b.objects)):
        if oid not in a.objects or oid not in b.objects:
            return f"objects[{oid!r}]"
        ka, kb = _object_key(a.objects[oid]), _object_key(b.objects[oid])
        if ka != kb:
            return f"objects[{oid!r}]." + _differing_part(ka, kb, ("object_id", "object_type", "object_class", "attributes"))
    for eid in sorted(set(a.events) | set(b.events)):
        if eid not in a.events or eid not in b.events:
            return f"events[{eid!r}]"
        ka, kb = _event_key(a.events[eid]), _event_key(b.events[eid])
        if ka != kb:
            return f"events[{eid!r}]." + _differing_part(
                ka, kb, ("event_id", "timestamp", "event_class", "event_type", "activity", "attributes")
            )
    for name in ("e2o", "o2o", "e2e"):
        sa, sb = getattr(a, name), getattr(b, name)
        if sa != sb:
            first = min(sa ^ sb)
            return f"{name}[{first}]"
    return "<unknown>"


def _differing_part(ka: tuple, kb: tuple, names: tuple[str, ...]) -> str:
    for name, x, y in zip(names, ka, kb):
        if x != y:
            if name == "attributes":
                da, db = dict(x), dict(y)
                for attr in sorted(set(da) | set(db)):
                    if da.get(attr) != db.get(attr):
                        return f"attributes[{attr!r}]"
            return name
    return "<unknown>"
