"""Timestamp parsing and canonical formatting.

All instants are compared in UTC. Naive datetimes are accepted and read as
UTC; callers that care (parsers, validation) flag them with W002.
"""

from __future__ import annotations

import re
from datetime import datetime, timedelta, timezone

UTC = timezone.utc

#: Time used for object attributes that carry no change history.
STATIC_TIME = datetime(1970, 1, 1, tzinfo=UTC)

_ISO_RE = re.compile(
    r"^(?P<date>\d{4}-\d{2}-\d{2})"
    r"(?:[T ](?P<h>\d{2}):(?P<m>\d{2})(?::(?P<s>\d{2})(?:[.,](?P<frac>\d+))?)?)?"
    r"(?P<tz>Z|z|[+-]\d{2}(?::?\d{2})?)?$"
)


class TimestampError(ValueError):
    pass


def is_naive(ts: datetime) -> bool:
    return ts.tzinfo is None or ts.tzinfo.utcoffset(ts) is None


def as_utc(ts: datetime) -> datetime:
    """Return the same instant as an aware UTC datetime."""
    if ts.tzinfo is UTC:
        return ts
    if is_naive(ts):
        return ts.replace(tzinfo=UTC)
    return ts.astimezone(UTC)


def parse_timestamp(text: str) -> tuple[datetime, bool]:
    """Parse an ISO-8601 string.

    Returns the datetime and a flag telling whether the timezone was absent
    (in which case the result is UTC by assumption).
    """
    if len(text) in (24, 27) and text[-1] == "Z" and text[10] == "T":
        # canonical form written by format_timestamp
        try:
            return datetime.fromisoformat(text[:-1]).replace(tzinfo=UTC), False
        except ValueError:
            pass
    m = _ISO_RE.match(text.strip())
    if not m:
        raise TimestampError(f"not an ISO-8601 timestamp: {text!r}")
    year, month, day = (int(p) for p in m["date"].split("-"))
    frac = (m["frac"] or "0")[:6].ljust(6, "0")
    try:
        dt = datetime(
            year,
            month,
            day,
            int(m["h"] or 0),
            int(m["m"] or 0),
            int(m["s"] or 0),
            int(frac),
        )
    except ValueError as exc:
        raise TimestampError(f"invalid timestamp {text!r}: {exc}") from None
    tz = m["tz"]
    if tz is None:
        return dt.replace(tzinfo=UTC), True
    if tz in ("Z", "z"):
        return dt.replace(tzinfo=UTC), False
    sign = -1 if tz[0] == "-" else 1
    digits = tz[1:].replace(":", "")
    hours, minutes = int(digits[:2]), int(digits[2:4] or 0)
    offset = timedelta(hours=hours, minutes=minutes) * sign
    return dt.replace(tzinfo=timezone(offset)), False


def format_timestamp(ts: datetime) -> str:
    """Canonical UTC rendering, e.g. ``2024-03-14T12:54:57.000Z``.

    Milliseconds are always written; microseconds only when present.
    """
    ts = as_utc(ts)
    text = f"{ts.year:04d}-{ts.month:02d}-{ts.day:02d}T{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d}"
    if ts.microsecond % 1000 == 0:
        return f"{text}.{ts.microsecond // 1000:03d}Z"
    return f"{text}.{ts.microsecond:06d}Z"
