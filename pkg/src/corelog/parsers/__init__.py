"""Parsers from legacy IoT-enhanced log formats into CORE logs.

All parsers take the raw document bytes (UTF-8) and return a
:class:`ParseReport` holding the canonical log, its diagnostics and
per-concept counts. ``counts["events"] + counts["skipped"]`` always equals
``counts["source_events"]``.
"""

from __future__ import annotations

from corelog.parsers.base import (
    ClassRule,
    LogBuilder,
    MalformedInput,
    MalformedXml,
    MappingConfig,
    MappingError,
    MissingExtension,
    ParseError,
    ParseReport,
    Parser,
    ParserProfile,
    ProfileKind,
    SchemaViolation,
    content_id,
)
from corelog.parsers.cairo import parse_cairo
from corelog.parsers.custom import parse_custom
from corelog.parsers.datastream import parse_datastream
from corelog.parsers.nice import parse_nice


def parse(document: bytes, profile: ParserProfile) -> ParseReport:
    """Dispatch to the parser selected by ``profile``."""
    kind = profile.kind
    if kind in (ProfileKind.DATASTREAM_TRIER, ProfileKind.DATASTREAM_TUM):
        return parse_datastream(document, profile)
    if kind is ProfileKind.NICE:
        return parse_nice(document)
    if kind is ProfileKind.CAIRO:
        return parse_cairo(document)
    assert profile.mapping is not None
    return parse_custom(document, profile.mapping)


__all__ = [
    "ClassRule",
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
    "SchemaViolation",
    "content_id",
    "parse",
    "parse_cairo",
    "parse_custom",
    "parse_datastream",
    "parse_nice",
]
