"""Object-centric relational scene graph.

Nodes carry attribute descriptors and an embedded interaction-memory list;
directed edges carry one of six spatial relation labels derived purely from
node geometry (dominant displacement axis within a half-meter radius). The
whole edge set is therefore a function of the node poses, which keeps
persistence and pose updates honest: edges are always re-derivable.
"""

from __future__ import annotations

import bisect
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .geometry import Vec3

logger = logging.getLogger(__name__)

DEFAULT_RADIUS_M = 0.5


class GraphError(ValueError):
    """Base class for graph construction/mutation failures."""


class DuplicateNodeIdError(GraphError):
    def __init__(self, node_id: str):
        super().__init__(f"duplicate node id: {node_id!r}")
        self.node_id = node_id


class UnknownNodeError(GraphError):
    def __init__(self, node_id: str):
        super().__init__(f"unknown node id: {node_id!r}")
        self.node_id = node_id


class GraphDocumentError(GraphError):
    """Malformed persisted graph document; carries the offending location."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


class SpatialRelation(Enum):
    LEFT_OF = "left_of"
    RIGHT_OF = "right_of"
    ABOVE = "above"
    BELOW = "below"
    IN_FRONT_OF = "in_front_of"
    BEHIND_OF = "behind_of"
    # Query-only: "next to"/"beside". Never stored on an edge.
    ADJACENT = "adjacent"

    def inverse(self) -> "SpatialRelation":
        return _INVERSES[self]


_INVERSES = {
    SpatialRelation.LEFT_OF: SpatialRelation.RIGHT_OF,
    SpatialRelation.RIGHT_OF: SpatialRelation.LEFT_OF,
    SpatialRelation.ABOVE: SpatialRelation.BELOW,
    SpatialRelation.BELOW: SpatialRelation.ABOVE,
    SpatialRelation.IN_FRONT_OF: SpatialRelation.BEHIND_OF,
    SpatialRelation.BEHIND_OF: SpatialRelation.IN_FRONT_OF,
}

STORED_RELATIONS = tuple(_INVERSES.keys())


def format_timestamp(ts: datetime) -> str:
    """RFC 3339 UTC with a Z suffix; naive datetimes are taken as UTC."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_timestamp(raw: str) -> datetime:
    try:
        return datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValueError(f"bad RFC 3339 timestamp {raw!r}: {exc}") from exc


@dataclass
class InteractionRecord:
    """One remembered interaction on a node: who did what, when, and why."""

    actor: str
    action: str
    timestamp: datetime
    session_id: str
    intent: Optional[str] = None

    def __post_init__(self):
        if not self.action:
            raise ValueError("interaction record requires a non-empty action")
        if self.timestamp.tzinfo is None:
            self.timestamp = self.timestamp.replace(tzinfo=timezone.utc)

    def to_dict(self) -> dict:
        return {
            "actor": self.actor,
            "action": self.action,
            "intent": self.intent,
            "ts": format_timestamp(self.timestamp),
            "session_id": self.session_id,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "InteractionRecord":
        return cls(
            actor=str(doc.get("actor", "")),
            action=str(doc["action"]),
            intent=doc.get("intent"),
            timestamp=parse_timestamp(doc["ts"]),
            session_id=str(doc.get("session_id", "")),
        )


@dataclass
class ObjectNode:
    """One physical object: pose, AABB half-sizes, descriptors, and memory."""

    id: str
    label: str
    center: Vec3
    half_extents: Vec3
    descriptors: List[str] = field(default_factory=list)
    scene_context: str = ""
    memory: List[InteractionRecord] = field(default_factory=list)
    created_at: Optional[datetime] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("node id must be non-empty")
        if min(self.half_extents.x, self.half_extents.y, self.half_extents.z) <= 0:
            raise ValueError(f"node {self.id!r}: half_extents must be positive")
        if self.created_at is not None and self.created_at.tzinfo is None:
            self.created_at = self.created_at.replace(tzinfo=timezone.utc)
        self.memory.sort(key=lambda r: r.timestamp)

    def add_record(self, record: InteractionRecord) -> None:
        """Insert preserving ascending timestamp order."""
        keys = [r.timestamp for r in self.memory]
        self.memory.insert(bisect.bisect_right(keys, record.timestamp), record)

    def to_dict(self) -> dict:
        doc = {
            "id": self.id,
            "label": self.label,
            "descriptors": list(self.descriptors),
            "center": self.center.to_list(),
            "half_extents": self.half_extents.to_list(),
            "scene_context": self.scene_context,
            "memory": [r.to_dict() for r in self.memory],
        }
        if self.created_at is not None:
            doc["created_at"] = format_timestamp(self.created_at)
        return doc

    @classmethod
    def from_dict(cls, doc: dict, location: str = "node") -> "ObjectNode":
        try:
            created = doc.get("created_at")
            return cls(
                id=str(doc["id"]),
                label=str(doc.get("label", "")),
                descriptors=[str(d) for d in doc.get("descriptors", [])],
                center=Vec3.from_list(doc["center"]),
                half_extents=Vec3.from_list(doc["half_extents"]),
                scene_context=str(doc.get("scene_context", "")),
                memory=[InteractionRecord.from_dict(m) for m in doc.get("memory", [])],
                created_at=parse_timestamp(created) if created else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphDocumentError(location, str(exc)) from exc


@dataclass(frozen=True)
class RelationEdge:
    """Directed labeled edge: to_id is <relation> of from_id, at <distance> m."""

    from_id: str
    to_id: str
    relation: SpatialRelation
    distance: float

    def to_dict(self) -> dict:
        return {
            "from_id": self.from_id,
            "to_id": self.to_id,
            "relation": self.relation.value,
            "distance": self.distance,
        }


@dataclass
class CoordinateFrame:
    """Right-handed session frame: +X right, +Y up, -Z toward the initial view."""

    origin: Vec3 = field(default_factory=lambda: Vec3(0.0, 0.0, 0.0))
    axes: str = "RH_Yup"

    def to_dict(self) -> dict:
        return {"origin": self.origin.to_list(), "axes": self.axes}

    @classmethod
    def from_dict(cls, doc: dict) -> "CoordinateFrame":
        return cls(
            origin=Vec3.from_list(doc.get("origin", [0.0, 0.0, 0.0])),
            axes=str(doc.get("axes", "RH_Yup")),
        )


def derive_relation(
    a: ObjectNode,
    b: ObjectNode,
    radius_m: float = DEFAULT_RADIUS_M,
) -> Optional[Tuple[SpatialRelation, float]]:
    """Spatial relation of b relative to a, or None when out of radius.

    The label comes from the dominant axis of the center displacement,
    with ties broken X over Y over Z. Coincident centers yield no edge.
    """
    d = b.center - a.center
    dist = d.norm()
    if dist > radius_m:
        return None
    if dist == 0.0:
        logger.warning(
            "coincident centers for nodes %r and %r; no relation derived", a.id, b.id
        )
        return None
    ax, ay, az = abs(d.x), abs(d.y), abs(d.z)
    if ax >= ay and ax >= az:
        rel = SpatialRelation.RIGHT_OF if d.x > 0 else SpatialRelation.LEFT_OF
    elif ay >= az:
        rel = SpatialRelation.ABOVE if d.y > 0 else SpatialRelation.BELOW
    else:
        rel = SpatialRelation.BEHIND_OF if d.z > 0 else SpatialRelation.IN_FRONT_OF
    return rel, dist


@dataclass
class RelationalGraph:
    session_id: str
    frame: CoordinateFrame = field(default_factory=CoordinateFrame)
    nodes: Dict[str, ObjectNode] = field(default_factory=dict)
    edges: List[RelationEdge] = field(default_factory=list)
    radius_m: float = DEFAULT_RADIUS_M

    def node(self, node_id: str) -> ObjectNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def edges_from(self, node_id: str) -> List[RelationEdge]:
        return [e for e in self.edges if e.from_id == node_id]

    def has_edge(self, from_id: str, to_id: str, relation: Optional[SpatialRelation]) -> bool:
        """Relation None (or ADJACENT) matches any edge between the pair."""
        for e in self.edges:
            if e.from_id != from_id or e.to_id != to_id:
                continue
            if relation is None or relation is SpatialRelation.ADJACENT:
                return True
            if e.relation is relation:
                return True
        return False

    def sorted_nodes(self) -> List[ObjectNode]:
        return [self.nodes[k] for k in sorted(self.nodes)]


def _derive_all_edges(graph: RelationalGraph) -> List[RelationEdge]:
    edges: List[RelationEdge] = []
    ordered = graph.sorted_nodes()
    for a in ordered:
        for b in ordered:
            if a.id == b.id:
                continue
            hit = derive_relation(a, b, graph.radius_m)
            if hit is not None:
                rel, dist = hit
                edges.append(RelationEdge(a.id, b.id, rel, dist))
    return edges


def build_graph(
    nodes: List[ObjectNode],
    radius_m: float = DEFAULT_RADIUS_M,
    frame: Optional[CoordinateFrame] = None,
    session_id: str = "",
) -> RelationalGraph:
    """Construct the graph; edges are the full pairwise derivation."""
    graph = RelationalGraph(
        session_id=session_id,
        frame=frame or CoordinateFrame(),
        radius_m=radius_m,
    )
    for node in nodes:
        if node.id in graph.nodes:
            raise DuplicateNodeIdError(node.id)
        graph.nodes[node.id] = node
    graph.edges = _derive_all_edges(graph)
    return graph


def record_interaction(
    graph: RelationalGraph,
    node_id: str,
    record: InteractionRecord,
    now: Optional[datetime] = None,
) -> RelationalGraph:
    """Append a memory record to one node, keeping timestamp order."""
    node = graph.node(node_id)
    if now is not None and record.timestamp > now:
        raise ValueError(
            f"record timestamp {format_timestamp(record.timestamp)} is in the future"
        )
    node.add_record(record)
    return graph


def update_node_pose(
    graph: RelationalGraph,
    node_id: str,
    new_center: Vec3,
    new_half_extents: Optional[Vec3] = None,
    record: Optional[InteractionRecord] = None,
) -> RelationalGraph:
    """Move/resize a node in place, log the causing action, re-derive its edges."""
    node = graph.node(node_id)
    if new_half_extents is not None:
        if min(new_half_extents.x, new_half_extents.y, new_half_extents.z) <= 0:
            raise ValueError(f"node {node_id!r}: half_extents must be positive")
        node.half_extents = new_half_extents
    node.center = new_center
    if record is not None:
        node.add_record(record)

    graph.edges = [e for e in graph.edges if node_id not in (e.from_id, e.to_id)]
    for other in graph.sorted_nodes():
        if other.id == node_id:
            continue
        out = derive_relation(node, other, graph.radius_m)
        if out is not None:
            graph.edges.append(RelationEdge(node_id, other.id, out[0], out[1]))
        back = derive_relation(other, node, graph.radius_m)
        if back is not None:
            graph.edges.append(RelationEdge(other.id, node_id, back[0], back[1]))
    return graph


SCHEMA_VERSION = 1


def graph_to_doc(graph: RelationalGraph) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "session_id": graph.session_id,
        "frame": graph.frame.to_dict(),
        "radius_m": graph.radius_m,
        "nodes": [n.to_dict() for n in graph.sorted_nodes()],
        "edges": [e.to_dict() for e in graph.edges],
    }


def save_graph(graph: RelationalGraph) -> bytes:
    return json.dumps(graph_to_doc(graph), indent=2, sort_keys=True).encode("utf-8")


def graph_from_doc(doc: dict) -> RelationalGraph:
    if not isinstance(doc, dict):
        raise GraphDocumentError("$", "document root must be an object")
    nodes_doc = doc.get("nodes")
    if not isinstance(nodes_doc, list):
        raise GraphDocumentError("nodes", "missing or non-list 'nodes'")

    nodes: List[ObjectNode] = []
    seen = set()
    for i, nd in enumerate(nodes_doc):
        node = ObjectNode.from_dict(nd, location=f"nodes[{i}]")
        if node.id in seen:
            raise GraphDocumentError(f"nodes[{i}]", f"duplicate node id {node.id!r}")
        seen.add(node.id)
        nodes.append(node)

    for j, ed in enumerate(doc.get("edges", []) or []):
        for endpoint in ("from_id", "to_id"):
            ref = ed.get(endpoint) if isinstance(ed, dict) else None
            if ref not in seen:
                raise GraphDocumentError(
                    f"edges[{j}].{endpoint}", f"edge references missing node {ref!r}"
                )

    try:
        frame = CoordinateFrame.from_dict(doc.get("frame", {}))
    except (TypeError, ValueError) as exc:
        raise GraphDocumentError("frame", str(exc)) from exc

    # Edges are a pure function of node poses; re-derive rather than trust.
    return build_graph(
        nodes,
        radius_m=float(doc.get("radius_m", DEFAULT_RADIUS_M)),
        frame=frame,
        session_id=str(doc.get("session_id", "")),
    )


def load_graph(data: bytes) -> RelationalGraph:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise GraphDocumentError("$", f"not valid JSON: {exc}") from exc
    return graph_from_doc(doc)
