"""Structural checks of a :class:`~corelog.model.CoreLog`.

``validate`` never raises and never repairs; the diagnostics are its output.
"""

from __future__ import annotations

from collections import defaultdict

from corelog.diagnostics import Diagnostic, has_errors, sort_diagnostics
from corelog.model import CoreLog, EventClass, OBSERVED
from corelog.timestamps import as_utc, is_naive


def validate(log: CoreLog) -> list[Diagnostic]:
    diags: list[Diagnostic] = list(log.notes)

    sources: dict[str, int] = defaultdict(int)
    business: dict[str, int] = defaultdict(int)
    for rel in log.e2o:
        obj = log.objects.get(rel.object_id)
        if rel.event_id not in log.events or obj is None:
            missing = rel.object_id if obj is None else rel.event_id
            diags.append(Diagnostic("E005", f"e2o {rel.event_id} -> {rel.object_id}: {missing} not found", rel.event_id))
            continue
        if obj.object_class.is_data_source:
            sources[rel.event_id] += 1
        elif obj.object_class.is_business:
            business[rel.event_id] += 1

    for rel in log.o2o:
        for oid in (rel.source_id, rel.target_id):
            if oid not in log.objects:
                diags.append(Diagnostic("E005", f"o2o {rel.source_id} -> {rel.target_id}: {oid} not found", rel.source_id))

    for eid, ev in log.events.items():
        n = sources[eid]
        if n == 0:
            diags.append(Diagnostic("E002", "no data source", eid))
        elif n > 1:
            diags.append(Diagnostic("E003", f"{n} data sources", eid))
        if business[eid] == 0:
            diags.append(Diagnostic("E004", "no business object", eid))
        if ev.event_class is EventClass.OBSERVATION and ev.event_type != OBSERVED:
            diags.append(Diagnostic("E006", f"event_type is {ev.event_type!r}", eid))
        if ev.event_class is EventClass.PROCESS_EVENT and (not ev.activity or ev.event_type != ev.activity):
            diags.append(Diagnostic("E007", f"activity {ev.activity!r}, event_type {ev.event_type!r}", eid))
        if ev.timestamp is not None and is_naive(ev.timestamp):
            diags.append(Diagnostic("W002", "event timestamp has no timezone", eid))

    for oid, obj in log.objects.items():
        if any(is_naive(ts) for entries in obj.attributes.values() for ts, _ in entries):
            diags.append(Diagnostic("W002", "attribute timestamp has no timezone", oid))

    edges: dict[str, set[str]] = defaultdict(set)
    for rel in log.e2e:
        src = log.events.get(rel.source_event_id)
        dst = log.events.get(rel.target_event_id)
        if src is None or dst is None:
            missing = rel.source_event_id if src is None else rel.target_event_id
            diags.append(Diagnostic("E005", f"e2e {rel.source_event_id} -> {rel.target_event_id}: {missing} not found", rel.target_event_id))
            continue
        edges[rel.source_event_id].add(rel.target_event_id)
        if src.timestamp is not None and dst.timestamp is not None and as_utc(dst.timestamp) < as_utc(src.timestamp):
            diags.append(Diagnostic("W001", f"earlier than source {rel.source_event_id}", rel.target_event_id))

    for eid in sorted(cyclic_events(edges)):
        diags.append(Diagnostic("E008", "event lies on an e2e cycle", eid))

    return sort_diagnostics(diags)


def is_strictly_valid(log: CoreLog) -> bool:
    return not has_errors(validate(log))


def cyclic_events(edges: dict[str, set[str]]) -> set[str]:
    """Nodes on a directed cycle (members of non-trivial SCCs or self-loops).

    Iterative Tarjan, so long derivation chains don't hit the recursion limit.
    """
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    result: set[str] = set()
    counter = 0
    nodes = set(edges) | {t for ts in edges.values() for t in ts}
    for root in sorted(nodes):
        if root in index:
            continue
        work = [(root, iter(sorted(edges.get(root, ()))))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(sorted(edges.get(nxt, ())))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                if len(component) > 1 or node in edges.get(node, ()):
                    result.update(component)
    return result
