"""NICE smart-environment logs.

Expected layout::

    <log name="...">
      <dataSources>
        <sensor id="..." type="..." location="..." metadata="..."/>
        <informationSystem id="..." type="..."/>
        <analytics id="..." type="..." direction="BottomUp"/>
      </dataSources>
      <objects>
        <featureOfInterest id="..." kind="location|date|user|..."/>
      </objects>
      <events>
        <iotEvent id="..." timestamp="..." source="..." label="...">
          <attribute key="..." value="..." type="int"/>
          <object ref="..." qualifier="..."/>
          <derivedFrom ref="..."/>
        </iotEvent>
        <processEvent id="..." timestamp="..." activity="..." source="..."> ... </processEvent>
        <contextEvent id="..." timestamp="..." object="..." attribute="..." value="..." type="..."/>
      </events>
    </log>

Unknown XML attributes on records are kept as string attributes. References
that resolve nowhere are dropped and reported as E005.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

from corelog.model import CoreEvent, CoreObject, EventClass, ObjectClass, Value
from corelog.parsers.base import (
    SOURCE_QUALIFIER,
    LogBuilder,
    ParseReport,
    SchemaViolation,
    load_xml,
    local_name,
    timestamp_value,
)

SECTIONS = ("dataSources", "objects", "events")
LOCATED_AT = "located-at"
LOCATION_QUALIFIER = "location"

_FOI_CLASSES = {
    "location": ObjectClass.context_object,
    "date": ObjectClass.context_object,
    "user": ObjectClass.resource,
}


def _typed(text: str, kind: str, path: str) -> Value:
    kind = kind or "string"
    try:
        if kind == "string":
            return text
        if kind == "int":
            return int(text)
        if kind == "float":
            value = float(text)
            if value != value or value in (float("inf"), float("-inf")):
                raise ValueError("non-finite")
            return value
        if kind == "boolean":
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
    except ValueError:
        raise SchemaViolation(path, f"{text!r} is not a valid {kind}") from None
    raise SchemaViolation(path, f"unknown value type {kind!r}")


def _required(elem: ET.Element, name: str, path: str) -> str:
    value = elem.get(name)
    if value is None or value == "":
        raise SchemaViolation(f"{path}/@{name}", "required attribute missing")
    return value


class _NiceParser:
    def __init__(self, document: bytes):
        self.b = LogBuilder(document, "nice")
        self.root = load_xml(document)
        self.sensor_locations: dict[str, str] = {}

    def run(self) -> ParseReport:
        root = self.root
        if local_name(root.tag) != "log":
            raise SchemaViolation("/log", f"root element is <{local_name(root.tag)}>")
        sections: dict[str, ET.Element] = {}
        for child in root:
            tag = local_name(child.tag)
            if tag not in SECTIONS:
                raise SchemaViolation(f"/log/{tag}", "unknown section")
            if tag in sections:
                raise SchemaViolation(f"/log/{tag}", "section appears twice")
            sections[tag] = child
        for key, value in sorted(root.attrib.items()):
            self.b.log.metadata[key] = value

        if "objects" in sections:
            self.objects(sections["objects"])
        if "dataSources" in sections:
            self.data_sources(sections["dataSources"])
        events = sections.get("events")
        if events is None or len(events) == 0:
            self.b.note("W004", "document contains no events", "<log>")
        else:
            self.events(events)
        return self.b.report()

    def objects(self, section: ET.Element) -> None:
        for i, elem in enumerate(section):
            path = f"/log/objects/{local_name(elem.tag)}[{i}]"
            if local_name(elem.tag) != "featureOfInterest":
                raise SchemaViolation(path, "expected <featureOfInterest>")
            oid = _required(elem, "id", path)
            kind = _required(elem, "kind", path)
            make = _FOI_CLASSES.get(kind, ObjectClass.case_object)
            obj = CoreObject(oid, elem.get("type") or kind, make())
            for key, value in elem.attrib.items():
                if key not in ("id", "type"):
                    obj.set_attribute(key, value)
            self.attributes(elem, path, obj.set_attribute)
            self.b.add_object(obj)

    def data_sources(self, section: ET.Element) -> None:
        for i, elem in enumerate(section):
            tag = local_name(elem.tag)
            path = f"/log/dataSources/{tag}[{i}]"
            oid = _required(elem, "id", path)
            extra = {k: v for k, v in elem.attrib.items() if k != "id"}
            if tag == "sensor":
                obj = CoreObject(oid, "Sensor", ObjectClass.sensor())
                if "type" in extra:
                    extra["sensor_type"] = extra.pop("type")
            elif tag == "informationSystem":
                obj = CoreObject(oid, extra.pop("type", "Information system"), ObjectClass.information_system())
            elif tag == "analytics":
                direction = extra.pop("direction", "BottomUp")
                try:
                    link = ObjectClass.link(direction)
                except ValueError:
                    raise SchemaViolation(f"{path}/@direction", f"unknown direction {direction!r}") from None
                obj = CoreObject(oid, extra.pop("type", "Analytics"), link)
            else:
                raise SchemaViolation(path, "expected <sensor>, <informationSystem> or <analytics>")
            for key, value in extra.items():
                obj.set_attribute(key, value)
            self.attributes(elem, path, obj.set_attribute)
            if not self.b.add_object(obj):
                continue
            location = extra.get("location")
            if tag == "sensor" and location:
                if location not in self.b.log.objects:
                    place = CoreObject(location, "location", ObjectClass.context_object())
                    place.set_attribute("kind", "location")
                    self.b.add_object(place)
                self.b.add_o2o(oid, location, LOCATED_AT)
                self.sensor_locations[oid] = location

    def attributes(self, elem: ET.Element, path: str, sink) -> None:
        for j, child in enumerate(elem):
            if local_name(child.tag) != "attribute":
                raise SchemaViolation(f"{path}/{local_name(child.tag)}[{j}]", "expected <attribute>")
            cpath = f"{path}/attribute[{j}]"
            sink(_required(child, "key", cpath), _typed(child.get("value", ""), child.get("type", ""), cpath))

    def events(self, section: ET.Element) -> None:
        derivations: list[tuple[str, str, str]] = []
        for i, elem in enumerate(section):
            tag = local_name(elem.tag)
            path = f"/log/events/{tag}[{i}]"
            if tag == "contextEvent":
                self.context_event(elem, path)
            elif tag in ("iotEvent", "processEvent"):
                derivations.extend(self.event(elem, tag, path))
            else:
                raise SchemaViolation(path, "expected <iotEvent>, <processEvent> or <contextEvent>")
        for source, target, path in derivations:
            if source not in self.b.log.events:
                self.b.note("E005", f"{path}: derivation source {source!r} not found", target)
                continue
            self.b.add_e2e(source, target)

    def event(self, elem: ET.Element, tag: str, path: str) -> list[tuple[str, str, str]]:
        eid = _required(elem, "id", path)
        when, assumed = timestamp_value(_required(elem, "timestamp", path), f"{path}/@timestamp")
        attrs: dict[str, Value] = {}
        links: list[tuple[str, str]] = []
        derived_from: list[str] = []
        for j, child in enumerate(elem):
            ctag = local_name(child.tag)
            cpath = f"{path}/{ctag}[{j}]"
            if ctag == "attribute":
                attrs[_required(child, "key", cpath)] = _typed(
                    child.get("value", ""), child.get("type", ""), cpath
                )
            elif ctag == "object":
                links.append((_required(child, "ref", cpath), child.get("qualifier") or ""))
            elif ctag == "derivedFrom":
                derived_from.append(_required(child, "ref", cpath))
            else:
                raise SchemaViolation(cpath, "expected <attribute>, <object> or <derivedFrom>")

        reserved = {"id", "timestamp", "source", "label", "activity"}
        attrs.update({k: v for k, v in elem.attrib.items() if k not in reserved and k not in attrs})
        if tag == "processEvent":
            ev = CoreEvent.process(eid, when, _required(elem, "activity", path), **attrs)
        elif derived_from:
            ev = CoreEvent.iot(eid, when, _required(elem, "label", path), **attrs)
        else:
            if elem.get("label"):
                attrs.setdefault("label", elem.get("label"))
            ev = CoreEvent.observation(eid, when, **attrs)

        source = elem.get("source")
        if source:
            links.insert(0, (source, SOURCE_QUALIFIER))
            location = self.sensor_locations.get(source)
            has_business = any(
                oid in self.b.log.objects and self.b.log.objects[oid].object_class.is_business for oid, _ in links
            )
            if ev.event_class is EventClass.OBSERVATION and location and not has_business:
                links.append((location, LOCATION_QUALIFIER))
        resolved = []
        for oid, qualifier in links:
            if oid in self.b.log.objects:
                resolved.append((oid, qualifier or ev.event_type))
            else:
                self.b.note("E005", f"{path}: reference to unknown object {oid!r} dropped", eid)
        if not self.b.add_event(ev, resolved):
            return []
        if assumed:
            self.b.note("W002", "timestamp has no timezone", eid)
        return [(src, eid, path) for src in derived_from]

    def context_event(self, elem: ET.Element, path: str) -> None:
        eid = elem.get("id") or path
        target = elem.get("object")
        name = elem.get("attribute")
        self.b.counts["source_events"] += 1
        self.b.counts["context_events"] += 1
        if target in self.b.log.objects and name and "value" in elem.attrib and elem.get("timestamp"):
            when, assumed = timestamp_value(elem.get("timestamp", ""), f"{path}/@timestamp")
            value = _typed(elem.get("value", ""), elem.get("type", ""), f"{path}/@value")
            self.b.log.objects[target].set_attribute(name, value, when)  # type: ignore[index]
            self.b.counts["skipped"] += 1
            self.b.counts["context_folded"] += 1
            if assumed:
                self.b.note("W002", "context event timestamp has no timezone", target)  # type: ignore[arg-type]
            return
        self.b.skip(eid, "context event resolves to no object attribute; dropped", counted=True)


def parse_nice(document: bytes) -> ParseReport:
    """Parse a NICE XML document."""
    return _NiceParser(document).run()
