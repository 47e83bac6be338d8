"""In-memory OCEL 2.0 table set."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, NamedTuple

from corelog.diagnostics import Diagnostic
from corelog.model import Value
from corelog.timestamps import as_utc

_TYPE_NAMES = {str: "string", int: "integer", float: "float", bool: "boolean"}


class OcelError(Exception):
    pass


class DecodeError(OcelError):
    pass


class AttributeDecl(NamedTuple):
    name: str
    type: str


@dataclass
class OcelType:
    name: str
    attributes: list[AttributeDecl] = field(default_factory=list)


class Relationship(NamedTuple):
    object_id: str
    qualifier: str


@dataclass
class ObjectAttribute:
    name: str
    time: datetime
    value: Value


@dataclass
class EventAttribute:
    name: str
    value: Value


@dataclass
class OcelObject:
    id: str
    type: str
    attributes: list[ObjectAttribute] = field(default_factory=list)
    relationships: list[Relationship] = field(default_factory=list)


@dataclass
class OcelEvent:
    id: str
    type: str
    time: datetime
    attributes: list[EventAttribute] = field(default_factory=list)
    relationships: list[Relationship] = field(default_factory=list)


@dataclass
class OcelDocument:
    object_types: list[OcelType] = field(default_factory=list)
    event_types: list[OcelType] = field(default_factory=list)
    objects: list[OcelObject] = field(default_factory=list)
    events: list[OcelEvent] = field(default_factory=list)
    warnings: list[Diagnostic] = field(default_factory=list, compare=False)

    def canonical(self) -> OcelDocument:
        """Copy with every array in canonical order."""

        def types(ts: Iterable[OcelType]) -> list[OcelType]:
            return [OcelType(t.name, sorted(t.attributes)) for t in sorted(ts, key=lambda t: t.name)]

        objects = [
            OcelObject(
                o.id,
                o.type,
                _sorted(o.attributes, lambda a: (a.name, as_utc(a.time))),
                _sorted(o.relationships),
            )
            for o in sorted(self.objects, key=lambda o: o.id)
        ]
        events = [
            OcelEvent(
                e.id,
                e.type,
                e.time,
                _sorted(e.attributes, lambda a: a.name),
                _sorted(e.relationships),
            )
            for e in sorted(self.events, key=lambda e: (as_utc(e.time), e.id))
        ]
        return OcelDocument(
            types(self.object_types), types(self.event_types), objects, events, list(self.warnings)
        )

    def relationship_count(self) -> int:
        return sum(len(e.relationships) for e in self.events)


def _sorted(items: list, key=None) -> list:
    # most records hold zero or one attribute/relationship
    return list(items) if len(items) < 2 else sorted(items, key=key)


def attribute_type(values: Iterable[Value]) -> str:
    """Declared OCEL type for a set of values; mixed or unknown tags give "string"."""
    names = {_TYPE_NAMES[type(v)] for v in values if v is not None}
    return names.pop() if len(names) == 1 else "string"


def derive_types(
    items: Iterable[OcelObject] | Iterable[OcelEvent],
) -> list[OcelType]:
    """Type declarations inferred from the records that use each type."""
    values: dict[str, dict[str, list[Value]]] = {}
    for item in items:
        attrs = values.setdefault(item.type, {})
        for a in item.attributes:
            attrs.setdefault(a.name, []).append(a.value)
    return [
        OcelType(name, [AttributeDecl(k, attribute_type(vs)) for k, vs in sorted(attrs.items())])
        for name, attrs in sorted(values.items())
    ]


def with_derived_types(objects: list[OcelObject], events: list[OcelEvent], warnings=()) -> OcelDocument:
    return OcelDocument(derive_types(objects), derive_types(events), objects, events, list(warnings)).canonical()
