"""OCEL 2.0 encoding of CORE logs and the serializer backends behind it.

The transformation code talks to a :class:`Backend`; concrete backends
decide the on-disk layout (JSON document or CSV bundle).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

from corelog.ocel.csvio import read_relational, write_relational
from corelog.ocel.document import (
    AttributeDecl,
    DecodeError,
    EventAttribute,
    ObjectAttribute,
    OcelDocument,
    OcelError,
    OcelEvent,
    OcelObject,
    OcelType,
    Relationship,
)
from corelog.ocel.jsonio import dumps_json, loads_json, read_json, write_json
from corelog.ocel.transform import (
    E2E_LINK_TYPE,
    E2E_SOURCE,
    E2E_TARGET,
    METADATA_ID,
    InvalidLog,
    ReservedKeyCollision,
    from_ocel,
    to_ocel,
)


@dataclass(frozen=True)
class Backend:
    name: str
    write: Callable[[OcelDocument, "str | os.PathLike"], None]
    read: Callable[["str | os.PathLike"], OcelDocument]


BACKENDS: dict[str, Backend] = {
    "ocel-json": Backend("ocel-json", write_json, read_json),
    "ocel-csv": Backend("ocel-csv", write_relational, read_relational),
}

__all__ = [
    "AttributeDecl",
    "BACKENDS",
    "Backend",
    "DecodeError",
    "E2E_LINK_TYPE",
    "E2E_SOURCE",
    "E2E_TARGET",
    "EventAttribute",
    "InvalidLog",
    "METADATA_ID",
    "ObjectAttribute",
    "OcelDocument",
    "OcelError",
    "OcelEvent",
    "OcelObject",
    "OcelType",
    "Relationship",
    "ReservedKeyCollision",
    "dumps_json",
    "from_ocel",
    "loads_json",
    "read_json",
    "read_relational",
    "to_ocel",
    "write_json",
    "write_relational",
]
