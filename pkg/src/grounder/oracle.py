"""Brute-force reference resolution by literal constraint evaluation.

Enumerates every node and applies each query constraint exactly as written:
label equality, descriptor containment, geometric relation recomputed from
raw center displacements, and memory-window predicates. No similarity
scoring, no top-k, no visibility. The corpus generator uses it to certify
ground truth at generation time, and the test suite uses it as the
independent second route the resolver must agree with.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import List, Optional

from .parsing import EntitySpec, MemoryCue, MemoryWindow, ReferenceQuery
from .scene_graph import ObjectNode, RelationalGraph, SpatialRelation


@dataclass
class OracleOutcome:
    """All nodes satisfying every constraint; resolvable iff exactly one."""

    satisfying_ids: List[str] = field(default_factory=list)
    anchor_failure: bool = False

    @property
    def unique_id(self) -> Optional[str]:
        if self.anchor_failure or len(self.satisfying_ids) != 1:
            return None
        return self.satisfying_ids[0]

    @property
    def ambiguous(self) -> bool:
        return not self.anchor_failure and len(self.satisfying_ids) > 1


def _norm(text: str) -> str:
    return " ".join(text.lower().split())


def _strip_suffix(word: str) -> str:
    w = word.lower()
    for suf in ("ing", "ed", "es", "s"):
        if w.endswith(suf) and len(w) - len(suf) >= 2:
            w = w[: -len(suf)]
            break
    if w.endswith("e") and len(w) > 3:
        w = w[:-1]
    return w


def literal_direct_match(node: ObjectNode, spec: EntitySpec) -> bool:
    """Label equality and descriptor containment, nothing fuzzier."""
    if spec.label is not None and _norm(spec.label) != _norm(node.label):
        return False
    node_desc = {_norm(d) for d in node.descriptors}
    return all(_norm(d) in node_desc for d in spec.descriptors)


def literal_relation(
    a: ObjectNode, b: ObjectNode, radius_m: float
) -> Optional[SpatialRelation]:
    """Relation of b to a, recomputed from geometry (independent of graph edges)."""
    dx = b.center.x - a.center.x
    dy = b.center.y - a.center.y
    dz = b.center.z - a.center.z
    dist = (dx * dx + dy * dy + dz * dz) ** 0.5
    if dist == 0.0 or dist > radius_m:
        return None
    ax, ay, az = abs(dx), abs(dy), abs(dz)
    if ax >= ay and ax >= az:
        return SpatialRelation.RIGHT_OF if dx > 0 else SpatialRelation.LEFT_OF
    if ay >= az:
        return SpatialRelation.ABOVE if dy > 0 else SpatialRelation.BELOW
    return SpatialRelation.BEHIND_OF if dz > 0 else SpatialRelation.IN_FRONT_OF


def literal_memory_match(
    node: ObjectNode,
    cue: MemoryCue,
    now: datetime,
    session_id: str,
    session_start: Optional[datetime],
    minutes_window: timedelta,
) -> bool:
    if now.tzinfo is None:
        now = now.replace(tzinfo=timezone.utc)
    for r in node.memory:
        if cue.verb is not None and _strip_suffix(cue.verb) != _strip_suffix(r.action):
            continue
        if cue.window is MemoryWindow.MINUTES_AGO:
            if timedelta(0) <= now - r.timestamp <= minutes_window:
                return True
        elif cue.window is MemoryWindow.THIS_SESSION_EARLIER:
            if r.session_id == session_id and r.timestamp < now:
                return True
        elif cue.window is MemoryWindow.PREVIOUS_SESSION:
            if r.session_id != session_id and (
                session_start is None or r.timestamp < session_start
            ):
                return True
        elif cue.window is MemoryWindow.YESTERDAY:
            if r.timestamp.astimezone(timezone.utc).date() == (
                now.astimezone(timezone.utc).date() - timedelta(days=1)
            ):
                return True
    return False


def _spec_matches(
    graph: RelationalGraph,
    node: ObjectNode,
    spec: EntitySpec,
    now: datetime,
    session_id: str,
    session_start: Optional[datetime],
    minutes_window: timedelta,
) -> bool:
    if not literal_direct_match(node, spec):
        return False
    if spec.memory_cue is not None and not literal_memory_match(
        node, spec.memory_cue, now, session_id, session_start, minutes_window
    ):
        return False
    return True


def oracle_resolve(
    graph: RelationalGraph,
    query: ReferenceQuery,
    now: datetime,
    session_id: Optional[str] = None,
    session_start: Optional[datetime] = None,
    minutes_window: timedelta = timedelta(minutes=10),
) -> OracleOutcome:
    """Enumerate all nodes; intersect every constraint literally."""
    session_id = session_id if session_id is not None else graph.session_id
    nodes = graph.sorted_nodes()

    anchor_nodes: List[ObjectNode] = []
    for clause in query.relation_clauses:
        matches = [
            n
            for n in nodes
            if _spec_matches(
                graph, n, clause.anchor, now, session_id, session_start, minutes_window
            )
        ]
        if len(matches) != 1:
            return OracleOutcome(anchor_failure=True)
        anchor_nodes.append(matches[0])

    satisfying = []
    for node in nodes:
        if not _spec_matches(
            graph, node, query.target, now, session_id, session_start, minutes_window
        ):
            continue
        ok = True
        for clause, anchor in zip(query.relation_clauses, anchor_nodes):
            if node.id == anchor.id:
                ok = False
                break
            actual = literal_relation(anchor, node, graph.radius_m)
            if clause.relation is SpatialRelation.ADJACENT:
                if actual is None:
                    ok = False
                    break
            elif actual is not clause.relation:
                ok = False
                break
        if ok:
            satisfying.append(node.id)
    return OracleOutcome(satisfying_ids=satisfying)
