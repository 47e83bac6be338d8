"""Diagnostic records and their text / structured renderings.

Codes are an external contract: tooling may match on them, so existing codes
never change meaning. ``E`` codes are errors, ``W`` codes warnings.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable

LOG_SUBJECT = "<log>"


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"


CATALOG: dict[str, str] = {
    "E002": "event has no DataSource-classed object",
    "E003": "event has more than one DataSource-classed object",
    "E004": "event has no Business-classed object",
    "E005": "dangling reference",
    "E006": "observation event_type is not 'observed'",
    "E007": "process event activity missing or event_type differs from activity",
    "E008": "event-to-event cycle",
    "W001": "derived event is earlier than one of its sources",
    "W002": "timezone assumed UTC",
    "W003": "duplicate id skipped",
    # Input-side warnings raised by parsers, decoders and readers.
    "W004": "empty input container",
    "W005": "source record not representable and dropped",
    "W006": "class defaulted during plain OCEL import",
    "W007": "unknown document member ignored",
}


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    subject: str = LOG_SUBJECT

    def __post_init__(self) -> None:
        if self.code not in CATALOG:
            raise ValueError(f"unknown diagnostic code {self.code!r}")

    @property
    def severity(self) -> Severity:
        return Severity.ERROR if self.code.startswith("E") else Severity.WARNING

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def sort_key(self) -> tuple[int, str, str, str]:
        return (0 if self.is_error else 1, self.code, self.subject, self.message)

    def to_record(self) -> dict[str, str]:
        return {
            "code": self.code,
            "severity": self.severity.value,
            "subject": self.subject,
            "message": self.message,
        }

    def __str__(self) -> str:
        return f"{self.code} {self.severity.value} {self.subject}: {self.message}"


def sort_diagnostics(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    """Sort by (severity, code, subject) and drop exact duplicates."""
    return sorted(set(diags), key=Diagnostic.sort_key)


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diags)


def render_text(diags: Iterable[Diagnostic], counts: dict[str, int] | None = None) -> str:
    lines = [str(d) for d in diags]
    for key in sorted(counts or {}):
        lines.append(f"count {key}={counts[key]}")
    return "".join(line + "\n" for line in lines)


def render_structured(diags: Iterable[Diagnostic], counts: dict[str, int] | None = None) -> str:
    doc = {
        "diagnostics": [d.to_record() for d in diags],
        "counts": dict(sorted((counts or {}).items())),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def read_structured(text: str) -> list[Diagnostic]:
    """Inverse of :func:`render_structured` (counts are ignored)."""
    doc = json.loads(text)
    out = []
    for i, rec in enumerate(doc["diagnostics"]):
        diag = Diagnostic(rec["code"], rec["message"], rec["subject"])
        if diag.severity.value != rec["severity"]:
            raise ValueError(f"diagnostics[{i}]: severity does not match code {rec['code']}")
        out.append(diag)
    return out
