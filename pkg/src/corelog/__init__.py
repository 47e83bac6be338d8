"""CORE: an object-centric metamodel for IoT-enhanced event logs.

The package covers the domain model and its builder rules, validation,
parsers for legacy IoT log formats, the OCEL 2.0 encoding with JSON and CSV
backends, and spill-to-disk streaming ingestion.
"""

from corelog.diagnostics import CATALOG, Diagnostic, Severity
from corelog.model import (
    CoreEvent,
    CoreLog,
    CoreLogError,
    CoreObject,
    EventClass,
    EventEventRel,
    EventObjectRel,
    LinkDirection,
    ObjectClass,
    ObjectKind,
    ObjectObjectRel,
    canonicalize,
    first_difference,
    new_log,
)
from corelog.validation import is_strictly_valid, validate

__version__ = "0.1.0"

__all__ = [
    "CATALOG",
    "CoreEvent",
    "CoreLog",
    "CoreLogError",
    "CoreObject",
    "Diagnostic",
    "EventClass",
    "EventEventRel",
    "EventObjectRel",
    "LinkDirection",
    "ObjectClass",
    "ObjectKind",
    "ObjectObjectRel",
    "Severity",
    "canonicalize",
    "first_difference",
    "is_strictly_valid",
    "new_log",
    "validate",
]
