"""Exit criteria of the build. Each test prints one PASS/FAIL line."""

from __future__ import annotations

import csv
import random
import time
import xml.etree.ElementTree as ET
from contextlib import contextmanager
from datetime import datetime, timedelta
from pathlib import Path

import pytest

from corelog.cli import CliConfig, load
from corelog.model import (
    CoreEvent,
    CoreObject,
    EventClass,
    EventEventRel,
    EventObjectRel,
    LinkDirection,
    ObjectClass,
    ObjectKind,
    canonicalize,
    first_difference,
    new_log,
)
from corelog.ocel import (
    E2E_LINK_TYPE,
    E2E_SOURCE,
    E2E_TARGET,
    METADATA_ID,
    from_ocel,
    loads_json,
    read_relational,
    to_ocel,
    write_relational,
)
from corelog.ocel.jsonio import dumps_json
from corelog.parsers import ParserProfile, ProfileKind, parse
from corelog.running_example import PEAK_ID, SAMPLE_ID, running_example
from corelog.streaming import SpillPolicy, open_session
from corelog.timestamps import UTC
from corelog.validation import validate
from conftest import ACCEPTANCE, FIXTURES
from generators import random_log

pytestmark = pytest.mark.acceptance

CATALOG = FIXTURES / "catalog"
CODES = ["E002", "E003", "E004", "E005", "E006", "E007", "E008", "W001", "W002", "W003"]


@contextmanager
def verdict(capsys, label: str):
    """Print ``label`` with PASS or FAIL and the elapsed time, then re-raise failures."""
    start = time.perf_counter()
    status, detail = "FAIL", ""
    try:
        yield
        status = "PASS"
    except BaseException as exc:
        detail = f" ({type(exc).__name__})"
        raise
    finally:
        elapsed = time.perf_counter() - start
        ACCEPTANCE.setdefault(int(label.split()[1]), []).append(status == "PASS")
        with capsys.disabled():
            print(f"\n[acceptance] {label}: {status} in {elapsed:.2f}s{detail}")


# -- 1 ---------------------------------------------------------------------------


def test_criterion_1_running_example(capsys):
    with verdict(capsys, "criterion 1 running-example reconstruction"):
        start = time.perf_counter()
        log = running_example()
        classes = {o.object_id: (o.object_type, o.object_class) for o in log.objects.values()}
        assert classes["o4"] == ("Flow sensor", ObjectClass.sensor())
        assert classes["o5"] == ("Tank", ObjectClass.context_object())
        assert classes["o1"] == ("Batch", ObjectClass.case_object())
        links = [k for k, (t, c) in classes.items() if t == "Analytics" and c == ObjectClass.link(LinkDirection.BOTTOM_UP)]
        assert len(links) == 2
        assert log.events["e7423"].attributes["value"] == 206
        assert log.events[PEAK_ID].event_type == "Peak detected"
        assert log.events[SAMPLE_ID].activity == "Take sample"
        assert [d for d in validate(log) if d.is_error] == []

        doc = to_ocel(log)
        link_objects = [o for o in doc.objects if o.type == E2E_LINK_TYPE]
        assert len(link_objects) == len(log.e2e)
        link_ids = {o.id for o in link_objects}
        rows = [(e.id, r) for e in doc.events for r in e.relationships if r.object_id in link_ids]
        assert len(rows) == 2 * len(log.e2e)
        for lid in link_ids:
            quals = sorted(r.qualifier for _, r in rows if r.object_id == lid)
            assert quals == sorted([E2E_SOURCE, E2E_TARGET])
        assert time.perf_counter() - start < 1.0


# -- 2 ---------------------------------------------------------------------------


def test_criterion_2_lossless_round_trip(capsys, tmp_path):
    with verdict(capsys, "criterion 2 lossless round trip, 500 logs via JSON and CSV"):
        start = time.perf_counter()
        failures = []
        for seed in range(500):
            log = random_log(random.Random(seed), max_events=200, max_objects=50, max_e2e=100)
            assert len(log.events) <= 200 and len(log.objects) <= 50 and len(log.e2e) <= 100
            expected = canonicalize(log)
            doc = to_ocel(log)
            via_json = from_ocel(loads_json(dumps_json(doc)))
            bundle = tmp_path / f"b{seed}"
            write_relational(doc, bundle)
            via_csv = from_ocel(read_relational(bundle))
            for name, back in (("json", via_json), ("csv", via_csv)):
                where = first_difference(expected, back)
                if where is not None:
                    failures.append((seed, name, where))
        assert failures == []
        assert time.perf_counter() - start < 60.0


# -- 3 ---------------------------------------------------------------------------

T0 = datetime(2024, 3, 1, 9, tzinfo=UTC)


class TestCriterion3Requirements:
    def test_r1_granularity_levels(self, capsys):
        with verdict(capsys, "criterion 3 R1 granularity levels"):
            log = running_example()
            kinds = {ev.event_class for ev in log.events.values()}
            assert kinds == set(EventClass)
            back = from_ocel(to_ocel(log))
            for eid in ("e1", "e7423", PEAK_ID):
                assert back.events[eid].event_class is log.events[eid].event_class
            assert back.events["e7423"].event_class is EventClass.OBSERVATION
            assert back.events[PEAK_ID].event_class is EventClass.IOT_EVENT

    def test_r2_context_independent_of_control_flow(self, capsys):
        with verdict(capsys, "criterion 3 R2 context independent of control flow"):
            log = new_log()
            log.add_object(CoreObject("thermo", "Thermometer", ObjectClass.sensor()))
            room = CoreObject("kitchen", "Room", ObjectClass.context_object())
            log.add_object(room)
            for i, temp in enumerate([20.5, 21.0, 22.5]):
                ts = T0 + timedelta(minutes=i)
                log.add_event(CoreEvent.iot(f"t{i}", ts, "Temperature changed", celsius=temp), [("thermo", "source"), ("kitchen", "room")])
                room.set_attribute("temperature", temp, ts)
            assert not any(ev.event_class is EventClass.PROCESS_EVENT for ev in log.events.values())
            assert [d for d in validate(log) if d.is_error] == []
            back = from_ocel(to_ocel(log))
            assert back == canonicalize(log)
            assert back.objects["kitchen"].value_at("temperature", T0 + timedelta(seconds=90)) == 21.0

    def test_r3_traceability(self, capsys):
        with verdict(capsys, "criterion 3 R3 traceability"):
            log = from_ocel(to_ocel(running_example(3)))
            peaks = {eid for eid in log.lineage(SAMPLE_ID) if log.events[eid].event_type == "Peak detected"}
            assert len(peaks) == 3
            observations = set()
            for peak in peaks:
                observations |= {e for e in log.lineage(peak) if log.events[e].event_class is EventClass.OBSERVATION}
            assert observations and observations <= log.lineage(SAMPLE_ID)
            assert observations == {f"e{n}" for n in range(7425, 7556)}
            # the abstraction rule travels with the link object
            link = next(r.object_id for r in log.objects_of(PEAK_ID) if log.objects[r.object_id].object_class.kind is ObjectKind.LINK)
            assert log.objects[link].value_at("algorithm") == "peak detection"

    def test_r4_semantic_annotations(self, capsys):
        with verdict(capsys, "criterion 3 R4 semantic annotations"):
            log = running_example()
            model = CoreObject("bpmn", "Process model", ObjectClass.other("Process model"))
            model.set_attribute("notation", "BPMN 2.0")
            model.set_attribute("ontology_class", "https://example.org/onto#Filtering")
            log.add_object(model)
            log.e2o.add(EventObjectRel("e1", "bpmn", "follows"))
            back = from_ocel(to_ocel(log))
            assert back == canonicalize(log)
            assert back.objects["bpmn"].value_at("ontology_class").endswith("#Filtering")
            assert any(r.target_id == "o5" and r.qualifier == "observes" for r in back.o2o)

    def test_r5_flexible_case_notion(self, capsys):
        with verdict(capsys, "criterion 3 R5 flexible case notion"):
            log = new_log()
            log.add_object(CoreObject("mes", "MES", ObjectClass.information_system()))
            log.add_object(CoreObject("order-1", "Order", ObjectClass.case_object()))
            log.add_object(CoreObject("batch-9", "Batch", ObjectClass.case_object()))
            log.add_event(CoreEvent.process("p", T0, "Pack"), [("mes", "source"), ("order-1", "order"), ("batch-9", "batch")])
            for via in ("json", "csv"):
                doc = to_ocel(log)
                back = from_ocel(loads_json(dumps_json(doc))) if via == "json" else _csv_round_trip(doc)
                cases = {r.object_id for r in back.objects_of("p") if back.objects[r.object_id].object_class.kind is ObjectKind.CASE_OBJECT}
                assert cases == {"order-1", "batch-9"}

    def test_r6_data_sources(self, capsys):
        with verdict(capsys, "criterion 3 R6 different data sources"):
            log = new_log()
            log.add_object(CoreObject("s", "Flow sensor", ObjectClass.sensor()))
            log.add_object(CoreObject("erp", "ERP", ObjectClass.information_system()))
            log.add_object(CoreObject("rule", "Analytics", ObjectClass.link(LinkDirection.BOTTOM_UP)))
            log.add_object(CoreObject("fetch", "Fetcher", ObjectClass.link(LinkDirection.TOP_DOWN)))
            log.add_object(CoreObject("c", "Batch", ObjectClass.case_object()))
            log.add_event(CoreEvent.observation("o", T0), [("s", "source"), ("c", "batch")])
            log.add_event(CoreEvent.process("p", T0, "Order"), [("erp", "source"), ("c", "batch")])
            log.derive_event(log.objects["rule"], ["o"], CoreEvent.iot("i", None, "High flow"), [("c", "batch")])
            log.derive_event(log.objects["fetch"], ["p"], CoreEvent.observation("f", None), [("c", "batch")])
            assert [d for d in validate(log) if d.is_error] == []
            back = from_ocel(to_ocel(log))
            assert back == canonicalize(log)
            assert {o.object_class for o in back.objects.values() if o.object_class.is_data_source} == {
                ObjectClass.sensor(),
                ObjectClass.information_system(),
                ObjectClass.link(LinkDirection.BOTTOM_UP),
                ObjectClass.link(LinkDirection.TOP_DOWN),
            }

    def test_r7_metadata(self, capsys):
        with verdict(capsys, "criterion 3 R7 metadata"):
            log = running_example()
            log.metadata.update({"model_version": 4, "updated_by": "line engineer", "tolerance": 0.25})
            doc = to_ocel(log)
            meta = next(o for o in doc.objects if o.id == METADATA_ID)
            assert {a.name for a in meta.attributes} >= {"model_version", "logging_strategy"}
            assert from_ocel(doc).metadata == log.metadata
            assert _csv_round_trip(doc).metadata == log.metadata


def _csv_round_trip(doc):
    import tempfile

    with tempfile.TemporaryDirectory() as scratch:
        write_relational(doc, Path(scratch) / "b")
        return from_ocel(read_relational(Path(scratch) / "b"))


# -- 4 ---------------------------------------------------------------------------


def _source_records(path: Path, kind: ProfileKind) -> int:
    """Independent count of the records a fixture contains."""
    if path.suffix == ".csv":
        with path.open(newline="", encoding="utf-8") as fh:
            return sum(1 for _ in csv.DictReader(fh))
    root = ET.parse(path).getroot()
    if kind is ProfileKind.NICE:
        return sum(1 for el in root.iter() if el.tag in ("processEvent", "iotEvent", "contextEvent"))
    if kind is ProfileKind.CAIRO:
        return sum(1 for _ in root.iter("event"))
    total = 0
    for event in root.iter("event"):
        named = any(el.get("key") == "concept:name" for el in event)
        points = sum(1 for el in event.iter("list") if el.get("key") == "stream:point")
        # an unnamed event only carries its points, unless it has none
        total += points + (1 if named or not points else 0)
    return total


def _parsed(name: str, kind: ProfileKind):
    path = FIXTURES / name
    report = parse(path.read_bytes(), ParserProfile(kind))
    c = report.counts
    assert c["source_events"] == _source_records(path, kind)
    assert c["events"] + c["skipped"] == c["source_events"]
    assert c["events"] == len(report.log.events) and c["objects"] == len(report.log.objects)
    assert c["e2o"] == len(report.log.e2o) and c["o2o"] == len(report.log.o2o) and c["e2e"] == len(report.log.e2e)
    return report.log


def _by_class(log, cls):
    return [ev for ev in log.events.values() if ev.event_class is cls]


class TestCriterion4Parsers:
    def test_datastream_trier(self, capsys):
        with verdict(capsys, "criterion 4 DataStream Trier fixture"):
            log = _parsed("datastream_trier.xes", ProfileKind.DATASTREAM_TRIER)
            assert len(_by_class(log, EventClass.PROCESS_EVENT)) == 1
            assert len(_by_class(log, EventClass.OBSERVATION)) == 2
            assert [o.object_id for o in log.objects.values() if o.object_class == ObjectClass.resource()] == ["operator-1"]

    def test_datastream_tum(self, capsys):
        with verdict(capsys, "criterion 4 DataStream TUM fixture"):
            log = _parsed("datastream_tum.xes", ProfileKind.DATASTREAM_TUM)
            assert any(o.object_class == ObjectClass.machine() for o in log.objects.values())
            assert log.e2e
            for rel in log.e2e:
                assert log.events[rel.source_event_id].event_class is EventClass.OBSERVATION
                assert log.events[rel.target_event_id].event_class is EventClass.PROCESS_EVENT

    def test_nice(self, capsys):
        with verdict(capsys, "criterion 4 NICE fixture"):
            log = _parsed("nice_smarthome.xml", ProfileKind.NICE)
            sensors = {o.object_id for o in log.objects.values() if o.object_class == ObjectClass.sensor()}
            assert sensors
            located = {r.source_id for r in log.o2o if r.source_id in sensors}
            assert located == sensors
            assert all(log.objects[r.target_id].object_class.is_business for r in log.o2o if r.source_id in sensors)

    @pytest.mark.parametrize("name", ["cairo_donation.xes", "cairo_donation.csv"])
    def test_cairo(self, capsys, name):
        with verdict(capsys, f"criterion 4 CAIRO fixture ({name})"):
            log = _parsed(name, ProfileKind.CAIRO)
            path = FIXTURES / name
            if path.suffix == ".csv":
                with path.open(newline="", encoding="utf-8") as fh:
                    traces = {row["trace"] for row in csv.DictReader(fh)}
            else:
                traces = {
                    s.get("value")
                    for t in ET.parse(path).getroot().iter("trace")
                    for s in t
                    if s.tag == "string" and s.get("key") == "concept:name"
                }
            cases = {o.object_id for o in log.objects.values() if o.object_class == ObjectClass.case_object()}
            assert cases == traces


# -- 5 ---------------------------------------------------------------------------


def test_criterion_5_streaming_equivalence(capsys, tmp_path):
    n, limit = 100_000, 10_000

    def observations():
        for i in range(n):
            yield CoreEvent.observation(f"obs-{i:06d}", T0 + timedelta(milliseconds=250 * i), value=(i * 37) % 1000 / 10)

    def ingest_all(directory: Path, threshold: int):
        session = open_session(SpillPolicy(directory, threshold), {"kind": "sensor", "name": "flow-1"})
        peak = 0
        for ev in observations():
            session.ingest(ev)
            peak = max(peak, len(session))
        return session, peak, session.finalize()

    with verdict(capsys, "criterion 5 streaming equivalence, 100k observations"):
        start = time.perf_counter()
        spilled, peak, log = ingest_all(tmp_path / "spill", limit)
        assert len(spilled.segments) == 10
        assert [s.record_count for s in spilled.segments] == [limit] * 10
        assert peak <= limit
        assert len(log.events) == n
        _, _, whole = ingest_all(tmp_path / "whole", n + 1)
        assert dumps_json(to_ocel(log, check=False)) == dumps_json(to_ocel(whole, check=False))
        assert time.perf_counter() - start < 30.0


# -- 6 ---------------------------------------------------------------------------

CLEAN = [
    ("datastream_trier.xes", "datastream-trier"),
    ("datastream_tum.xes", "datastream-tum"),
    ("nice_smarthome.xml", "nice"),
    ("cairo_donation.xes", "cairo"),
    ("cairo_donation.csv", "cairo"),
    ("custom_orders.csv", "custom"),
    ("custom_readings.jsonl", "custom"),
    ("catalog/clean_small.json", "ocel-json"),
    ("catalog/clean_running_example.json", "ocel-json"),
]


def _codes(path: Path, fmt: str) -> set[str]:
    mapping = FIXTURES / "custom_mapping.json" if fmt == "custom" else None
    return {d.code for d in load(CliConfig("validate", path, fmt, mapping=mapping)).diagnostics}


def _catalog_format(path: Path) -> str:
    return "nice" if path.suffix == ".xml" else "ocel-json"


def test_criterion_6_catalog_coverage(capsys):
    with verdict(capsys, "criterion 6 validator catalog coverage"):
        triggered: dict[str, set[str]] = {}
        for path in sorted(CATALOG.glob("[ew]0*")):
            code = path.name[:4].upper()
            found = _codes(path, _catalog_format(path))
            assert code in found, f"{path.name} does not trigger {code}: {sorted(found)}"
            for c in found:
                triggered.setdefault(c, set()).add(path.name)
        assert set(CODES) <= set(triggered)
        for name, fmt in CLEAN:
            leaked = _codes(FIXTURES / name, fmt) & set(CODES)
            assert leaked == set(), f"clean fixture {name} triggers {sorted(leaked)}"
