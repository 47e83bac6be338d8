"""Shared parser plumbing: errors, profiles, reports and the log builder."""

from __future__ import annotations

import enum
import hashlib
import json
import re
import xml.etree.ElementTree as ET
from collections import Counter
from fnmatch import fnmatchcase
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Iterable, Mapping, Protocol

from corelog.diagnostics import Diagnostic
from corelog.model import (
    CoreEvent,
    CoreLog,
    CoreLogError,
    CoreObject,
    CycleDetected,
    DanglingEventRef,
    DanglingObjectRef,
    EventEventRel,
    ObjectClass,
    ObjectObjectRel,
    RelationError,
    Value,
    canonicalize,
)
from corelog.timestamps import TimestampError, format_timestamp, parse_timestamp
from corelog.validation import validate

SOURCE_QUALIFIER = "source"
CASE_QUALIFIER = "case"


class ParseError(Exception):
    """Base class for every parser failure."""


class MalformedInput(ParseError):
    def __init__(self, message: str, location: str | None = None):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class MalformedXml(MalformedInput):
    def __init__(self, message: str, position: tuple[int, int] | None = None):
        where = f"line {position[0]}, column {position[1]}" if position else None
        super().__init__(message, where)
        self.position = position


class MissingExtension(ParseError):
    pass


class SchemaViolation(ParseError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class MappingError(ParseError):
    def __init__(self, rule: str, message: str):
        super().__init__(f"mapping rule {rule!r}: {message}")
        self.rule = rule


# -- profiles and mapping ------------------------------------------------------


@dataclass(frozen=True)
class ClassRule:
    """Field-name glob pattern -> object class for custom inputs."""

    pattern: str
    object_class: ObjectClass


@dataclass(frozen=True)
class MappingConfig:
    """How the fields of a custom record map onto CORE concepts.

    Every record is an event. A record with a non-empty ``activity_key``
    value is a ProcessEvent; otherwise it is an Observation when it carries
    at least one of ``observation_attribute_keys``, and skipped when not.
    Each field in ``object_keys`` names a related object (field value = object
    id, field name = object type); its class comes from the first matching
    ``object_class_rules`` entry, falling back to General.Other("unmapped").
    """

    activity_key: str = "concept:name"
    timestamp_key: str = "time:timestamp"
    id_key: str | None = None
    resource_key: str | None = None
    observation_attribute_keys: tuple[str, ...] = ()
    object_keys: tuple[str, ...] = ()
    object_class_rules: tuple[ClassRule, ...] = ()
    qualifier_defaults: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.activity_key, str) or not self.activity_key:
            raise MappingError("activity_key", "must be a non-empty field name")
        if not isinstance(self.timestamp_key, str) or not self.timestamp_key:
            raise MappingError("timestamp_key", "must be a non-empty field name")
        object.__setattr__(self, "observation_attribute_keys", tuple(self.observation_attribute_keys))
        object.__setattr__(self, "object_keys", tuple(self.object_keys))
        object.__setattr__(self, "object_class_rules", tuple(self.object_class_rules))
        object.__setattr__(self, "qualifier_defaults", dict(self.qualifier_defaults))
        for name in ("id_key", "resource_key"):
            value = getattr(self, name)
            if value is not None and (not isinstance(value, str) or not value):
                raise MappingError(name, "must be a non-empty field name when given")
        consumed = [self.activity_key, self.timestamp_key, self.id_key, self.resource_key, *self.object_keys]
        seen = [k for k in consumed if k is not None]
        if len(set(seen)) != len(seen):
            raise MappingError("object_keys", "a field may be bound to only one concept")

    def class_for(self, field_name: str) -> ObjectClass:
        for rule in self.object_class_rules:
            if fnmatchcase(field_name, rule.pattern):
                return rule.object_class
        return ObjectClass.other("unmapped")

    def qualifier_for(self, field_name: str) -> str:
        return self.qualifier_defaults.get(field_name) or self.qualifier_defaults.get("e2o") or field_name

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> MappingConfig:
        known = {
            "activity_key",
            "timestamp_key",
            "id_key",
            "resource_key",
            "observation_attribute_keys",
            "object_keys",
            "object_class_rules",
            "qualifier_defaults",
        }
        if not isinstance(raw, Mapping):
            raise MappingError("<root>", "mapping must be a JSON object")
        unknown = sorted(set(raw) - known)
        if unknown:
            raise MappingError(unknown[0], "unknown mapping key")
        rules = []
        for i, rule in enumerate(raw.get("object_class_rules", [])):
            name = f"object_class_rules[{i}]"
            if not isinstance(rule, Mapping) or not isinstance(rule.get("pattern"), str):
                raise MappingError(name, "expected an object with 'pattern' and 'class'")
            try:
                object_class = ObjectClass.parse(str(rule.get("class")), rule.get("direction"))
            except ValueError as exc:
                raise MappingError(name, str(exc)) from None
            rules.append(ClassRule(rule["pattern"], object_class))
        kwargs = {k: raw[k] for k in known - {"object_class_rules"} if k in raw}
        for key in ("observation_attribute_keys", "object_keys"):
            if key in kwargs and (
                not isinstance(kwargs[key], list) or not all(isinstance(v, str) for v in kwargs[key])
            ):
                raise MappingError(key, "expected a list of field names")
        quals = kwargs.get("qualifier_defaults", {})
        if not isinstance(quals, Mapping) or not all(isinstance(v, str) and v for v in quals.values()):
            raise MappingError("qualifier_defaults", "expected an object of non-empty strings")
        return cls(object_class_rules=tuple(rules), **kwargs)

    @classmethod
    def from_json(cls, data: bytes | str) -> MappingConfig:
        try:
            raw = json.loads(data)
        except ValueError as exc:
            raise MappingError("<root>", f"not valid JSON: {exc}") from None
        return cls.from_dict(raw)


class ProfileKind(str, enum.Enum):
    DATASTREAM_TRIER = "datastream-trier"
    DATASTREAM_TUM = "datastream-tum"
    NICE = "nice"
    CAIRO = "cairo"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ParserProfile:
    kind: ProfileKind
    mapping: MappingConfig | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        if (self.kind is ProfileKind.CUSTOM) != (self.mapping is not None):
            raise ValueError("a mapping is required for, and only for, the custom profile")

    @classmethod
    def trier(cls) -> ParserProfile:
        return cls(ProfileKind.DATASTREAM_TRIER)

    @classmethod
    def tum(cls) -> ParserProfile:
        return cls(ProfileKind.DATASTREAM_TUM)

    @classmethod
    def nice(cls) -> ParserProfile:
        return cls(ProfileKind.NICE)

    @classmethod
    def cairo(cls) -> ParserProfile:
        return cls(ProfileKind.CAIRO)

    @classmethod
    def custom(cls, mapping: MappingConfig) -> ParserProfile:
        return cls(ProfileKind.CUSTOM, mapping)


@dataclass
class ParseReport:
    log: CoreLog
    diagnostics: list[Diagnostic]
    counts: dict[str, int]

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.is_error]


class Parser(Protocol):
    def __call__(self, document: bytes) -> ParseReport: ...


# -- input helpers -----------------------------------------------------------

_ENCODING_DECL = re.compile(rb"""^\s*<\?xml[^>]*encoding\s*=\s*["']([A-Za-z0-9._-]+)["']""")


def decode_utf8(data: bytes) -> str:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedInput(f"input is not UTF-8 (invalid byte at offset {exc.start})") from None
    return text[1:] if text.startswith("\ufeff") else text


def load_xml(data: bytes) -> ET.Element:
    """Parse a UTF-8 XML document; DTDs and entity declarations are refused."""
    decode_utf8(data)
    m = _ENCODING_DECL.match(data)
    if m and m.group(1).lower().replace(b"_", b"-") not in (b"utf-8", b"utf8"):
        raise MalformedInput(f"declared encoding {m.group(1).decode()} is not supported; use UTF-8")
    if b"<!DOCTYPE" in data or b"<!ENTITY" in data:
        raise MalformedXml("document type declarations are not accepted")
    try:
        return ET.fromstring(data)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc).split(":")[0], getattr(exc, "position", None)) from None


def local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def timestamp_value(text: str, path: str) -> tuple[datetime, bool]:
    try:
        return parse_timestamp(text)
    except TimestampError as exc:
        raise SchemaViolation(path, str(exc)) from None


XES_SCALARS = ("string", "int", "float", "boolean", "date", "id")
XES_NESTED = ("list", "container")


def xes_scalar(elem: ET.Element, path: str) -> Value:
    """Typed value of an XES attribute element; dates become canonical text."""
    kind = local_name(elem.tag)
    text = elem.get("value")
    if text is None:
        raise SchemaViolation(path, "attribute element without value")
    if kind in ("string", "id"):
        return text
    if kind == "int":
        try:
            return int(text)
        except ValueError:
            raise SchemaViolation(path, f"{text!r} is not an integer") from None
    if kind == "float":
        try:
            value = float(text)
        except ValueError:
            raise SchemaViolation(path, f"{text!r} is not a number") from None
        if value != value or value in (float("inf"), float("-inf")):
            raise SchemaViolation(path, "non-finite floats are not supported")
        return value
    if kind == "boolean":
        if text.lower() not in ("true", "false"):
            raise SchemaViolation(path, f"{text!r} is not a boolean")
        return text.lower() == "true"
    if kind == "date":
        return format_timestamp(timestamp_value(text, path)[0])
    raise SchemaViolation(path, f"unsupported attribute element <{kind}>")


def nested_json(elem: ET.Element, path: str) -> str:
    """Lossless text rendering of a nested XES list/container."""

    def walk(e: ET.Element, p: str) -> Any:
        out = []
        for i, child in enumerate(e):
            cp = f"{p}/{local_name(child.tag)}[{i}]"
            if local_name(child.tag) in XES_NESTED:
                out.append([child.get("key", ""), walk(child, cp)])
            else:
                out.append([child.get("key", ""), xes_scalar(child, cp)])
        return out

    return json.dumps(walk(elem, path), ensure_ascii=False, sort_keys=True)


def content_id(data: bytes) -> str:
    return "ds:" + hashlib.sha256(data).hexdigest()[:12]


# -- builder -----------------------------------------------------------------


class LogBuilder:
    """Accumulates a log plus the notes and counts that go into a report.

    The synthesized information-system data source is created on first use,
    so an empty document yields an empty log.
    """

    def __init__(self, document: bytes, origin: str):
        self.log = CoreLog()
        self.notes: list[Diagnostic] = []
        self.counts: Counter[str] = Counter()
        self._document = document
        self._origin = origin
        self._source_id: str | None = None

    def data_source(self) -> str:
        if self._source_id is None:
            obj = CoreObject(content_id(self._document), "Information system", ObjectClass.information_system())
            obj.set_attribute("origin", self._origin)
            self.log.add_object(obj)
            self._source_id = obj.object_id
        return self._source_id

    def note(self, code: str, message: str, subject: str) -> None:
        self.notes.append(Diagnostic(code, message, subject))

    def ensure_object(self, obj: CoreObject) -> str:
        """Add ``obj`` unless an object with its id already exists."""
        if obj.object_id not in self.log.objects:
            self.log.add_object(obj)
        return obj.object_id

    def add_object(self, obj: CoreObject) -> bool:
        note = self.log.add_object(obj, strict=False)
        if note is not None:
            self.notes.append(note)
            self.counts["duplicates_skipped"] += 1
            return False
        return True

    def add_event(self, ev: CoreEvent, links: Iterable[tuple[str, str]]) -> bool:
        """Insert ``ev``; a duplicate id is skipped with W003 and counted."""
        self.counts["source_events"] += 1
        try:
            note = self.log.add_event(ev, links, strict=False)
        except DanglingObjectRef as exc:
            self.skip(ev.event_id, str(exc))
            return False
        if note is not None:
            self.notes.append(note)
            self.counts["skipped"] += 1
            self.counts["duplicates_skipped"] += 1
            return False
        return True

    def skip(self, subject: str, reason: str, *, counted: bool = False) -> None:
        """Record a source event that does not become a CORE event."""
        if not counted:
            self.counts["source_events"] += 1
        self.counts["skipped"] += 1
        self.note("W005", reason, subject)

    def add_e2e(self, source: str, target: str) -> bool:
        try:
            self.log.add_e2e(EventEventRel(source, target))
        except DanglingEventRef as exc:
            self.note("E005", f"derivation {source} -> {target}: {exc}", source)
            return False
        except CycleDetected as exc:
            self.note("E008", str(exc), source)
            return False
        return True

    def add_o2o(self, source: str, target: str, qualifier: str) -> bool:
        try:
            self.log.add_o2o(ObjectObjectRel(source, target, qualifier))
        except DanglingObjectRef as exc:
            self.note("E005", f"relation {source} -> {target}: {exc}", source)
            return False
        except RelationError as exc:
            self.note("E005", str(exc), source)
            return False
        return True

    def report(self) -> ParseReport:
        log = canonicalize(self.log)
        log.notes = list(self.notes)
        counts = dict(self.counts)
        counts.setdefault("source_events", 0)
        counts.setdefault("skipped", 0)
        counts["events"] = len(log.events)
        counts["objects"] = len(log.objects)
        counts["e2o"] = len(log.e2o)
        counts["o2o"] = len(log.o2o)
        counts["e2e"] = len(log.e2e)
        return ParseReport(log, validate(log), dict(sorted(counts.items())))


__all__ = [
    "CASE_QUALIFIER",
    "ClassRule",
    "CoreLogError",
    "LogBuilder",
    "MalformedInput",
    "MalformedXml",
    "MappingConfig",
    "MappingError",
    "MissingExtension",
    "ParseError",
    "ParseReport",
    "Parser",
    "ParserProfile",
    "ProfileKind",
    "SOURCE_QUALIFIER",
    "SchemaViolation",
]
