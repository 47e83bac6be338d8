from __future__ import annotations

import math
import random
import struct
from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corelog.model import (
    CoreEvent,
    CoreObject,
    DuplicateId,
    EventEventRel,
    EventObjectRel,
    LinkDirection,
    ObjectClass,
    ObjectObjectRel,
    canonicalize,
    new_log,
)
from corelog.ocel.jsonio import dumps_json
from corelog.ocel.transform import to_ocel
from corelog.streaming import (
    END_MARK,
    MAGIC,
    FinalizeError,
    MalformedRecord,
    SegmentError,
    SessionClosed,
    SpillError,
    SpillPolicy,
    StreamError,
    decode_record,
    encode_record,
    open_session,
    read_record_at,
    read_segment,
    source_object,
    write_segment,
)
from corelog.timestamps import UTC
from generators import random_log

T0 = datetime(2024, 5, 1, tzinfo=UTC)
SENSOR = {"kind": "sensor", "name": "flow-1"}


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now


def obs(i: int) -> CoreEvent:
    return CoreEvent.observation(f"obs-{i}", T0 + timedelta(seconds=i), value=i * 0.5)


def session(tmp_path, count=None, age=None, **kw):
    return open_session(SpillPolicy(tmp_path / "seg", count, age), SENSOR, **kw)


def as_bytes(log) -> bytes:
    return dumps_json(to_ocel(log, check=False))


class TestPolicy:
    def test_needs_a_trigger(self, tmp_path):
        with pytest.raises(ValueError):
            SpillPolicy(tmp_path)

    @pytest.mark.parametrize("count, age", [(0, None), (-1, None), (None, timedelta(0))])
    def test_rejects_non_positive(self, tmp_path, count, age):
        with pytest.raises(ValueError):
            SpillPolicy(tmp_path, count, age)

    def test_path_is_normalized(self, tmp_path):
        assert SpillPolicy(str(tmp_path), 5).segment_directory == tmp_path


class TestOpen:
    def test_fresh_session(self, tmp_path):
        s = session(tmp_path, 10_000)
        assert s.segments == [] and len(s) == 0 and not s.closed
        assert (tmp_path / "seg").is_dir()

    def test_sensor_descriptor(self, tmp_path):
        s = session(tmp_path, 10)
        assert s.source.object_class == ObjectClass.sensor()
        assert s.source_id == "ds:flow-1"
        assert s.source.value_at("name") == "flow-1"

    @pytest.mark.parametrize(
        "descriptor, expected",
        [
            ({"kind": "information_system", "name": "mes"}, ObjectClass.information_system()),
            ({"kind": "IS"}, ObjectClass.information_system()),
            ({"kind": "link", "direction": "TopDown"}, ObjectClass.link(LinkDirection.TOP_DOWN)),
            ({"kind": "link"}, ObjectClass.link(LinkDirection.BOTTOM_UP)),
        ],
    )
    def test_other_sources(self, descriptor, expected):
        assert source_object(descriptor).object_class == expected

    def test_descriptor_extras(self):
        obj = source_object({"kind": "sensor", "id": "s9", "type": "Flowmeter", "unit": "l/min"})
        assert (obj.object_id, obj.object_type, obj.value_at("unit")) == ("s9", "Flowmeter", "l/min")

    @pytest.mark.parametrize("descriptor", [{"kind": "camera"}, {"kind": "sensor", "direction": "top_down"}])
    def test_bad_descriptor(self, descriptor):
        with pytest.raises(ValueError):
            source_object(descriptor)

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(StreamError):
            open_session(SpillPolicy(blocker / "seg", 5), SENSOR)


class TestSpillTriggers:
    @pytest.mark.parametrize("n, limit", [(10_001, 10_000), (7, 3), (9, 3), (1, 1), (5, 100)])
    def test_count_trigger(self, tmp_path, n, limit):
        s = session(tmp_path, limit)
        for i in range(n):
            s.ingest(obs(i))
            assert len(s) <= limit
        assert len(s.segments) == n // limit
        assert len(s) == n % limit
        log = s.finalize()
        assert len(s.segments) == math.ceil(n / limit)
        assert len(log.events) == n

    def test_age_trigger_is_lazy(self, tmp_path):
        clock = FakeClock()
        s = session(tmp_path, age=timedelta(seconds=5), clock=clock)
        s.ingest(obs(0))
        clock.now = 4.9
        s.ingest(obs(1))
        assert s.segments == []
        clock.now = 100.0
        assert s.segments == []  # no timer fires between ingests
        s.ingest(obs(2))
        assert [seg.record_count for seg in s.segments] == [3] and len(s) == 0

    def test_age_restarts_per_buffer(self, tmp_path):
        clock = FakeClock()
        s = session(tmp_path, age=timedelta(seconds=5), clock=clock)
        s.ingest(obs(0))
        clock.now = 6
        s.ingest(obs(1))
        clock.now = 7
        s.ingest(obs(2))
        assert len(s.segments) == 1 and len(s) == 1

    def test_manual_spill(self, tmp_path):
        s = session(tmp_path, 100)
        for i in range(3):
            s.ingest(obs(i))
        seg = s.spill()
        assert seg.sequence_number == 0 and seg.record_count == 3 and len(s) == 0
        assert seg.min_timestamp == T0 and seg.max_timestamp == T0 + timedelta(seconds=2)
        assert seg.path.name == "segment-0.coreseg"
        s.ingest(obs(3))
        assert s.spill().sequence_number == 1

    def test_empty_spill_rejected(self, tmp_path):
        with pytest.raises(StreamError):
            session(tmp_path, 5).spill()

    def test_object_only_segment_has_no_time_range(self, tmp_path):
        s = session(tmp_path, 5)
        s.ingest(CoreObject("tank", "Tank", ObjectClass.context_object()))
        seg = s.spill()
        assert seg.min_timestamp is None and seg.max_timestamp is None

    def test_failed_spill_keeps_buffer(self, tmp_path, monkeypatch):
        s = session(tmp_path, 100)
        for i in range(4):
            s.ingest(obs(i))

        def broken(path, payloads):
            raise OSError("disk full")

        monkeypatch.setattr("corelog.streaming.write_segment", broken)
        with pytest.raises(SpillError):
            s.spill()
        assert len(s) == 4 and s.segments == []
        monkeypatch.undo()
        assert s.spill().record_count == 4
        assert len(s.finalize().events) == 4

    def test_failed_write_leaves_no_file(self, tmp_path):
        path = tmp_path / "segment-0.coreseg"
        with pytest.raises(SpillError):
            write_segment(path, [b"ok", _Huge()])
        assert list(tmp_path.iterdir()) == []


class _Huge(bytes):
    def __len__(self):
        return END_MARK


class TestIngest:
    def test_events_link_to_source(self, tmp_path):
        s = session(tmp_path, 10)
        s.ingest(obs(0))
        log = s.finalize()
        assert log.e2o == {EventObjectRel("obs-0", "ds:flow-1", "source")}
        assert "ds:flow-1" in log.objects

    def test_missing_qualifier_takes_event_type(self, tmp_path):
        s = session(tmp_path, 10)
        s.ingest(CoreObject("tank", "Tank", ObjectClass.context_object()))
        s.ingest(obs(0), [("tank", None)])
        assert EventObjectRel("obs-0", "tank", "observed") in s.finalize().e2o

    def test_duplicate_in_buffer(self, tmp_path):
        s = session(tmp_path, 10)
        s.ingest(obs(0))
        with pytest.raises(DuplicateId):
            s.ingest(obs(0))

    def test_duplicate_across_segments(self, tmp_path):
        s = session(tmp_path, 2)
        for i in range(5):
            s.ingest(obs(i))
        with pytest.raises(DuplicateId):
            s.ingest(obs(1))
        s.ingest(CoreObject("tank", "Tank", ObjectClass.context_object()))
        assert s.locate("tank", "object") is not None
        with pytest.raises(DuplicateId):
            s.ingest(CoreObject("tank", "Tank", ObjectClass.context_object()))
        with pytest.raises(DuplicateId):
            s.ingest(CoreObject("ds:flow-1", "Sensor", ObjectClass.sensor()))

    @pytest.mark.parametrize(
        "record, links",
        [
            (CoreEvent.observation("x", None), []),
            (CoreEvent("x", T0, "observation", "reading"), []),
            (CoreEvent.process("x", T0, None), []),
            (obs(0), [("", "q")]),
            (CoreObject("tank", "Tank", ObjectClass.context_object()), [("a", "b")]),
            (EventEventRel("a", "a"), []),
            (ObjectObjectRel("a", "a", "part-of"), []),
            (ObjectObjectRel("a", "b", ""), []),
            (EventObjectRel("a", "b", ""), []),
            (EventObjectRel("", "b", "q"), []),
            ("not a record", []),
        ],
    )
    def test_malformed(self, tmp_path, record, links):
        s = session(tmp_path, 10)
        with pytest.raises(MalformedRecord):
            s.ingest(record, links)
        assert len(s) == 0

    def test_e2e_to_spilled_source_resolves(self, tmp_path):
        s = session(tmp_path, 3)
        for i in range(3):
            s.ingest(obs(i))
        assert s.locate("obs-0") == (0, len(MAGIC))
        s.ingest(CoreEvent.iot("peak", T0 + timedelta(minutes=1), "Peak detected"))
        s.ingest(EventEventRel("obs-0", "peak"))
        assert s.lookup.pending == []
        log = s.finalize()
        assert EventEventRel("obs-0", "peak") in log.e2e
        assert log.notes == []

    def test_out_of_order_relations_wait(self, tmp_path):
        s = session(tmp_path, 2)
        s.ingest(EventEventRel("obs-0", "peak"))
        s.ingest(ObjectObjectRel("tank", "plant", "part-of"))
        s.ingest(EventObjectRel("obs-1", "tank", "tank"))
        assert len(s.lookup.pending) == 3 and len(s) == 0
        s.ingest(obs(0))
        s.ingest(CoreObject("tank", "Tank", ObjectClass.context_object()))
        # o2o re-filed under its other endpoint
        assert ObjectObjectRel("tank", "plant", "part-of") in s.lookup.waiting[("object", "plant")]
        s.ingest(obs(1))
        s.ingest(CoreObject("plant", "Plant", ObjectClass.context_object()))
        s.ingest(CoreEvent.iot("peak", T0 + timedelta(hours=1), "Peak detected"))
        assert s.lookup.pending == []
        log = s.finalize()
        assert log.notes == []
        assert EventEventRel("obs-0", "peak") in log.e2e
        assert ObjectObjectRel("tank", "plant", "part-of") in log.o2o
        assert EventObjectRel("obs-1", "tank", "tank") in log.e2o

    def test_event_link_to_later_object(self, tmp_path):
        s = session(tmp_path, 1)
        s.ingest(obs(0), [("tank", "observes")])
        s.ingest(CoreObject("tank", "Tank", ObjectClass.context_object()))
        assert EventObjectRel("obs-0", "tank", "observes") in s.finalize().e2o

    def test_pending_becomes_e005(self, tmp_path):
        s = session(tmp_path, 10)
        s.ingest(obs(0), [("ghost", "observes")])
        s.ingest(EventEventRel("obs-0", "never"))
        log = s.finalize()
        assert sorted((d.code, d.subject) for d in log.notes) == [("E005", "ghost"), ("E005", "never")]
        assert len(log.events) == 1
        assert all(r.object_id != "ghost" for r in log.e2o)

    def test_fetch_spilled_records(self, tmp_path):
        s = session(tmp_path, 2)
        tank = CoreObject("tank", "Tank", ObjectClass.context_object())
        tank.set_attribute("volume", 40)
        s.ingest(tank)
        s.ingest(obs(0), [("tank", "tank")])
        s.ingest(obs(1))
        assert s.fetch("tank", "object") == tank
        assert s.fetch("obs-0") == obs(0)
        assert s.locate("obs-1") is None  # still buffered
        with pytest.raises(KeyError):
            s.fetch("obs-1")

    def test_lookup_totality(self, tmp_path):
        s = session(tmp_path, 4)
        ids = []
        for i in range(11):
            s.ingest(obs(i))
            ids.append(f"obs-{i}")
        s.finalize()
        for i in ids:
            seq, off = s.locate(i)
            assert decode_record(read_record_at(s.segments[seq].path, off))[0].event_id == i

    def test_closed_session(self, tmp_path):
        s = session(tmp_path, 10)
        s.ingest(obs(0))
        s.finalize()
        for call in (lambda: s.ingest(obs(1)), s.spill, s.finalize):
            with pytest.raises(SessionClosed):
                call()


class TestSegmentFiles:
    def test_layout(self, tmp_path):
        path = tmp_path / "s.coreseg"
        offsets = write_segment(path, [b"ab", b"", b"xyz"])
        data = path.read_bytes()
        assert data[:8] == b"CORESEG1"
        assert offsets == [8, 14, 18]
        assert data[8:14] == struct.pack("<I", 2) + b"ab"
        assert data[-12:] == struct.pack("<I", 0xFFFFFFFF) + struct.pack("<Q", 3)
        assert read_segment(path) == [(8, b"ab"), (14, b""), (18, b"xyz")]
        assert read_record_at(path, 18) == b"xyz"

    def test_segments_parse_independently(self, tmp_path):
        s = session(tmp_path, 3)
        for i in range(8):
            s.ingest(obs(i))
        s.spill()
        for seg in s.segments:
            records = read_segment(seg.path, seg.sequence_number)
            assert len(records) == seg.record_count
            ids = [decode_record(p)[0].event_id for _, p in records]
            assert ids == sorted(ids, key=lambda x: int(x.split("-")[1]))  # arrival order

    @pytest.mark.parametrize(
        "damage, message",
        [
            (lambda d: b"CORESEG2" + d[8:], "magic"),
            (lambda d: d[:-12], "torn"),
            (lambda d: d[:-15], "torn"),
            (lambda d: d[:-4], "trailer"),
            (lambda d: d[:-8] + struct.pack("<Q", 9), "trailer says 9"),
            (lambda d: d + b"\0", "trailer"),
        ],
    )
    def test_damage_is_reported(self, tmp_path, damage, message):
        path = tmp_path / "segment-0.coreseg"
        write_segment(path, [b"one", b"two"])
        path.write_bytes(damage(path.read_bytes()))
        with pytest.raises(SegmentError, match=message) as info:
            read_segment(path, 0)
        assert info.value.sequence_number == 0 and "segment 0" in str(info.value)

    def test_finalize_names_the_bad_segment(self, tmp_path):
        s = session(tmp_path, 2)
        for i in range(5):
            s.ingest(obs(i))
        path = s.segments[1].path
        path.write_bytes(path.read_bytes()[:-20])
        with pytest.raises(FinalizeError, match=r"segment 1 .*segment-1\.coreseg"):
            s.finalize()

    def test_missing_segment(self, tmp_path):
        s = session(tmp_path, 1)
        s.ingest(obs(0))
        s.segments[0].path.unlink()
        with pytest.raises(FinalizeError, match="unreadable"):
            s.finalize()

    def test_record_at_bad_offset(self, tmp_path):
        path = tmp_path / "s.coreseg"
        write_segment(path, [b"abc"])
        with pytest.raises(SegmentError):
            read_record_at(path, 15)


class TestRecordCodec:
    @pytest.mark.parametrize(
        "record",
        [
            EventObjectRel("e", "o", "q"),
            ObjectObjectRel("a", "b", "part-of"),
            EventEventRel("a", "b", "fetched-by"),
            CoreEvent.process("p", T0, "Fill", operator="ann", volume=None),
            CoreEvent.iot("i", T0, "Peak detected", flag=True),
        ],
    )
    def test_round_trip(self, record):
        back, links = decode_record(encode_record(record))
        assert back == record and links == []

    def test_object_round_trip(self):
        obj = CoreObject("s 1", "Sensor", ObjectClass.link(LinkDirection.TOP_DOWN))
        obj.set_attribute("unit", "°C")
        obj.set_attribute("level", 3, T0)
        assert decode_record(encode_record(obj))[0] == obj

    def test_event_links_come_back_as_e2o(self):
        _, links = decode_record(encode_record(obs(0), [("s", "source"), ("t", "tank")]))
        assert links == [EventObjectRel("obs-0", "s", "source"), EventObjectRel("obs-0", "t", "tank")]

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            decode_record(b'{"kind":"blob"}')


# -- spill transparency --------------------------------------------------------


def stream_of(log, rng: random.Random):
    """Records of ``log`` in a shuffled order in which relations may precede their endpoints."""
    links: dict[str, list] = {}
    for rel in log.e2o:
        links.setdefault(rel.event_id, []).append((rel.object_id, rel.qualifier))
    items = [(obj, []) for obj in log.objects.values()]
    items += [(ev, sorted(links.get(ev.event_id, []), key=str)) for ev in log.events.values()]
    items += [(rel, []) for rel in sorted(log.o2o) + sorted(log.e2e)]
    rng.shuffle(items)
    return items


def direct(log, source):
    """The same log built with core-model operations only."""
    out = new_log(log.metadata)
    out.add_object(source)
    for obj in log.objects.values():
        out.add_object(obj)
    for rel in log.e2o:
        out.e2o.add(rel)
    for ev in log.events.values():
        out.events[ev.event_id] = ev
        out.e2o.add(EventObjectRel(ev.event_id, source.object_id, "source"))
    out.o2o |= log.o2o
    out.e2e |= log.e2e
    return canonicalize(out)


def run(tmp_path, items, limit):
    s = open_session(SpillPolicy(tmp_path, limit), SENSOR)
    for rec, links in items:
        s.ingest(rec, links)
        assert len(s) <= limit
    return s, s.finalize()


class TestSpillTransparency:
    @settings(max_examples=25)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 12))
    def test_any_threshold_gives_same_bytes(self, tmp_path_factory, seed, limit):
        rng = random.Random(seed)
        log = random_log(rng, max_events=25, max_objects=8, max_e2e=10)
        log.metadata = {}
        items = stream_of(log, rng)
        _, spilled = run(tmp_path_factory.mktemp("a"), items, limit)
        _, whole = run(tmp_path_factory.mktemp("b"), items, 10**9)
        assert spilled.notes == [] and whole.notes == []
        assert as_bytes(spilled) == as_bytes(whole)
        assert spilled == direct(log, source_object(SENSOR))

    def test_running_example_shaped_stream(self, tmp_path):
        tank = CoreObject("tank", "Tank", ObjectClass.context_object())
        items = [(tank, [])] + [(obs(i), [("tank", "tank")]) for i in range(50)]
        items.append((CoreEvent.iot("peak", T0 + timedelta(minutes=5), "Peak detected"), [("tank", "tank")]))
        items += [(EventEventRel(f"obs-{i}", "peak"), []) for i in (10, 11, 12)]
        s, spilled = run(tmp_path / "a", items, 7)
        assert len(s.segments) == math.ceil(len(items) / 7)
        _, whole = run(tmp_path / "b", items, 10**6)
        assert as_bytes(spilled) == as_bytes(whole)
        assert spilled.lineage("peak") >= {"obs-10", "obs-11", "obs-12"}
