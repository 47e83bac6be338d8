"""The manufacturing running example: a flow sensor on a tank, peak detection
over its observations, and a "Take sample" process event derived from peaks.

Object ids follow the published fragment (o1 batch, o4 flow sensor, o5 tank);
o2/o3 are the two analytics links and o6 is the MES that logs ``Filtering``.
"""

from __future__ import annotations

from datetime import datetime, timedelta

from corelog.model import (
    CoreEvent,
    CoreLog,
    CoreObject,
    ObjectClass,
    ObjectObjectRel,
    new_log,
)
from corelog.timestamps import UTC

DAY = datetime(2023, 5, 16, tzinfo=UTC)
FIRST_OBS, LAST_OBS = 7423, 7555
PEAK_ID, SAMPLE_ID = "e7556", "e7557"

# values printed in the fragment; the rest are synthetic
_KNOWN_VALUES = {7423: 206, 7424: 206, 7425: 207, 7555: 204, 7558: 204, 7559: 202}
_SYNTHETIC_PEAKS = {7468: 251, 7511: 249, 7550: 253}


def at(hh: int, mm: int, ss: int, ms: int = 0) -> datetime:
    return DAY + timedelta(hours=hh, minutes=mm, seconds=ss, milliseconds=ms)


def observation_time(n: int) -> datetime:
    if n <= 7425:
        return at(12, 54, 57) + timedelta(seconds=n - FIRST_OBS)
    if n <= LAST_OBS:
        # 130 steps spread over the 76 s between e7425 and e7555
        return at(12, 54, 59) + timedelta(milliseconds=round((n - 7425) * 76000 / 130))
    return at(12, 56, 15) + timedelta(seconds=n - 7557)


def observation_value(n: int) -> int:
    if n in _KNOWN_VALUES:
        return _KNOWN_VALUES[n]
    return _SYNTHETIC_PEAKS.get(n, 203 + (n * 7) % 5)


def running_example(peak_count: int = 1) -> CoreLog:
    """Build the example log.

    ``peak_count=1`` reproduces the published fragment (one "Peak detected"
    event derived from e7425..e7555). ``peak_count=3`` splits that window in
    three and derives "Take sample" from three peaks.
    """
    if peak_count not in (1, 3):
        raise ValueError("peak_count must be 1 or 3")
    log = new_log({"logging_strategy": "continuous", "tz_offset": "+00:00"})

    batch = CoreObject("o1", "Batch", ObjectClass.case_object())
    batch.set_attribute("product", "filtered beverage")
    log.add_object(batch)
    sample_link = CoreObject("o2", "Analytics", ObjectClass.link("BottomUp"))
    sample_link.set_attribute("rule", "three consecutive peaks within a short time window")
    peak_link = CoreObject("o3", "Analytics", ObjectClass.link("BottomUp"))
    peak_link.set_attribute("algorithm", "peak detection")
    sensor = CoreObject("o4", "Flow sensor", ObjectClass.sensor())
    sensor.set_attribute("unit", "l/min")
    tank = CoreObject("o5", "Tank", ObjectClass.context_object())
    mes = CoreObject("o6", "MES", ObjectClass.information_system())
    for obj in (sensor, tank, mes):
        log.add_object(obj)
    log.add_o2o(ObjectObjectRel("o4", "o5", "observes"))

    log.add_event(
        CoreEvent.process("e1", at(12, 34, 56), "Filtering", lifecycle="start"),
        [("o6", "source"), ("o1", "batch"), ("o5", "tank")],
    )

    def observe(n: int) -> None:
        ts, value = observation_time(n), observation_value(n)
        log.add_event(
            CoreEvent.observation(f"e{n}", ts, value=value),
            [("o4", "made-by"), ("o5", "observes")],
        )
        tank.set_attribute("product_flow", value, ts)

    for n in range(FIRST_OBS, LAST_OBS + 1):
        observe(n)

    if peak_count == 1:
        windows = [(PEAK_ID, 7425, LAST_OBS)]
    else:
        windows = [("pk1", 7425, 7468), ("pk2", 7469, 7511), (PEAK_ID, 7512, LAST_OBS)]
    peaks = []
    for peak_id, lo, hi in windows:
        log.derive_event(
            peak_link,
            [f"e{n}" for n in range(lo, hi + 1)],
            CoreEvent.iot(peak_id, None, "Peak detected", lifecycle="complete"),
            [("o5", "tank")],
        )
        peaks.append(peak_id)

    log.derive_event(
        sample_link,
        peaks,
        CoreEvent.process(SAMPLE_ID, None, "Take sample", lifecycle="complete"),
        [("o1", "batch")],
    )

    for n in (7558, 7559):
        observe(n)
    return log
