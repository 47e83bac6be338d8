"""Seeded generator of strictly valid random CORE logs, plus hypothesis glue."""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

from hypothesis import strategies as st

from corelog.model import (
    CoreEvent,
    CoreLog,
    CoreObject,
    EventClass,
    EventEventRel,
    LinkDirection,
    ObjectClass,
    ObjectObjectRel,
    new_log,
)

BASE = datetime(2024, 1, 1, tzinfo=timezone.utc)
ZONES = [timezone.utc, timezone(timedelta(hours=2)), timezone(timedelta(hours=-5, minutes=-30))]
# strings that are easy to confuse with other JSON literals once untyped
ID_SUFFIXES = ["null", "a,b", 'quote"d', "über", "日本", "x:y"]
TRICKY = ["", "1", "1.0", "true", "null", "-0", "a,b", 'quote"d', "line\nbreak", "über", "日本", " padded "]

SOURCE_CLASSES = [
    ObjectClass.sensor,
    ObjectClass.information_system,
    lambda: ObjectClass.link(LinkDirection.BOTTOM_UP),
    lambda: ObjectClass.link(LinkDirection.TOP_DOWN),
]
BUSINESS_CLASSES = [ObjectClass.case_object, ObjectClass.context_object]
GENERAL_CLASSES = [
    ObjectClass.activity,
    ObjectClass.subprocess,
    ObjectClass.resource,
    ObjectClass.machine,
    lambda: ObjectClass.other("widget"),
    lambda: ObjectClass.other("spare part ü"),
]


def random_value(rng: random.Random):
    kind = rng.randrange(7)
    if kind == 0:
        return rng.choice(TRICKY)
    if kind == 1:
        return rng.randint(-(2**62), 2**62)
    if kind == 2:
        return rng.choice([0.0, -0.0, 1.0, 0.1, 1e-300, -2.5e17, rng.uniform(-1e6, 1e6)])
    if kind == 3:
        return rng.random() < 0.5
    if kind == 4:
        return None
    if kind == 5:
        return rng.randint(-3, 3)
    return "".join(rng.choice("abcxyz-_ é") for _ in range(rng.randint(1, 8)))


def random_time(rng: random.Random, lo: timedelta = timedelta(0)) -> datetime:
    offset = lo + timedelta(seconds=rng.randint(0, 86_400), microseconds=rng.choice([0, 0, 1000 * rng.randint(0, 999), rng.randint(0, 999_999)]))
    return (BASE + offset).astimezone(rng.choice(ZONES))


def random_log(
    rng: random.Random,
    max_events: int = 200,
    max_objects: int = 50,
    max_e2e: int = 100,
) -> CoreLog:
    """A log that :func:`corelog.validation.validate` reports no errors for.

    Every event gets exactly one data-source link and at least one business
    link. e2e edges run from lower to higher event index, so the graph is
    acyclic by construction.
    """
    log = new_log({f"meta_{i}": random_value(rng) for i in range(rng.randint(0, 3))})
    n_objects = rng.randint(2, max(2, max_objects))
    sources, business, general = [], [], []
    for i in range(n_objects):
        if i == 0:
            make, bucket = rng.choice(SOURCE_CLASSES), sources
        elif i == 1:
            make, bucket = rng.choice(BUSINESS_CLASSES), business
        else:
            pool = rng.choice([(SOURCE_CLASSES, sources), (BUSINESS_CLASSES, business), (GENERAL_CLASSES, general)])
            make, bucket = rng.choice(pool[0]), pool[1]
        oid = f"o{i}" if rng.random() < 0.8 else f"o{i} {rng.choice(ID_SUFFIXES)}"
        obj = CoreObject(oid, rng.choice(["Tank", "Batch", "Sensor", "Room", "Typ ü"]), make())
        for a in range(rng.randint(0, 3)):
            name = f"attr{a}"
            obj.set_attribute(name, random_value(rng))
            for _ in range(rng.randint(0, 2)):
                obj.set_attribute(name, random_value(rng), random_time(rng))
        log.add_object(obj)
        bucket.append(oid)

    n_events = rng.randint(1, max(1, max_events))
    order = []
    for i in range(n_events):
        cls = rng.choice(list(EventClass))
        ts = random_time(rng, timedelta(seconds=i))
        attrs = {f"k{j}": random_value(rng) for j in range(rng.randint(0, 3))}
        if cls is EventClass.OBSERVATION:
            ev = CoreEvent.observation(f"e{i}", ts, **attrs)
        elif cls is EventClass.PROCESS_EVENT:
            ev = CoreEvent.process(f"e{i}", ts, rng.choice(["Filtering", "Take sample", "Ship order", "Ä"]), **attrs)
        else:
            ev = CoreEvent.iot(f"e{i}", ts, rng.choice(["Peak detected", "Door opened"]), **attrs)
        links = [(rng.choice(sources), rng.choice(["source", "made-by", None]))]
        for oid in rng.sample(business, rng.randint(1, min(3, len(business)))):
            links.append((oid, rng.choice(["case", "observes", "tank", ""]) or None))
        for oid in rng.sample(general, rng.randint(0, min(2, len(general)))):
            links.append((oid, "uses"))
        log.add_event(ev, links)
        order.append(ev.event_id)

    if len(order) > 1:
        for _ in range(rng.randint(0, max_e2e)):
            a, b = sorted(rng.sample(range(len(order)), 2))
            log.add_e2e(EventEventRel(order[a], order[b], rng.choice(["derived-from", "derived-from", "fetched-by"])))

    for _ in range(rng.randint(0, 5)):
        s, t = rng.choice(list(log.objects)), rng.choice(list(log.objects))
        log.add_o2o(ObjectObjectRel(s, t, "self" if s == t else rng.choice(["part-of", "observes", "located-at"])))
    return log


def logs(max_events: int = 30, max_objects: int = 10, max_e2e: int = 15) -> st.SearchStrategy[CoreLog]:
    """Hypothesis strategy over :func:`random_log` (shrinks by seed)."""
    return st.integers(min_value=0, max_value=2**32 - 1).map(
        lambda seed: random_log(random.Random(seed), max_events, max_objects, max_e2e)
    )
