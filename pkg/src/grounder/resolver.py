"""Referent resolution over the relational graph.

Pipeline: resolve anchors, cull to the visible set, intersect the hard
relational and memory constraints, rank the survivors by attribute
similarity, select under confidence thresholds, then re-verify every hard
constraint on the winner. Any failure ends in a FALLBACK result instead of
a guess, and the trace records what each stage did.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import List, Optional, Protocol

from .geometry import Vec3
from .matching import CachingEmbedder, HashingEmbedder, ScoredCandidate, score_candidates, top_k
from .parsing import EntitySpec, MemoryCue, MemoryWindow, ReferenceQuery, RelationClause
from .scene_graph import ObjectNode, RelationalGraph, SpatialRelation
from .view_filter import CameraPose, filter_visible, in_frustum, is_occluded

logger = logging.getLogger(__name__)


class ResolutionMode(Enum):
    RESOLVED = "resolved"
    FALLBACK = "fallback"


PARSE_FAIL_UPSTREAM = "PARSE_FAIL_UPSTREAM"
ANCHOR_UNRESOLVED = "ANCHOR_UNRESOLVED"
NO_CANDIDATE = "NO_CANDIDATE"
AMBIGUOUS = "AMBIGUOUS"
VERIFY_FAIL = "VERIFY_FAIL"


@dataclass
class ResolutionConfig:
    k: int = 5
    tau_min: float = 0.2
    tau_margin: float = 0.05
    minutes_ago_window: timedelta = timedelta(minutes=10)
    anchor_depth_limit: int = 3
    include_scene_context: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not (0.0 <= self.tau_margin <= 2.0):
            raise ValueError("tau_margin must be in [0, 2]")
        if self.anchor_depth_limit < 1:
            raise ValueError("anchor_depth_limit must be >= 1")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "tau_min": self.tau_min,
            "tau_margin": self.tau_margin,
            "minutes_ago_window_s": self.minutes_ago_window.total_seconds(),
            "anchor_depth_limit": self.anchor_depth_limit,
            "include_scene_context": self.include_scene_context,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ResolutionConfig":
        return cls(
            k=int(doc.get("k", 5)),
            tau_min=float(doc.get("tau_min", 0.2)),
            tau_margin=float(doc.get("tau_margin", 0.05)),
            minutes_ago_window=timedelta(
                seconds=float(doc.get("minutes_ago_window_s", 600.0))
            ),
            anchor_depth_limit=int(doc.get("anchor_depth_limit", 3)),
            include_scene_context=bool(doc.get("include_scene_context", False)),
        )


@dataclass
class TraceStep:
    stage: str
    n_in: int
    n_out: int
    reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {"stage": self.stage, "in": self.n_in, "out": self.n_out, "reason": self.reason}


@dataclass
class ResolutionResult:
    mode: ResolutionMode
    raw_transcript: str
    target_id: Optional[str] = None
    candidates: List[ScoredCandidate] = field(default_factory=list)
    trace: List[TraceStep] = field(default_factory=list)

    def fallback_reason(self) -> Optional[str]:
        if self.mode is ResolutionMode.RESOLVED:
            return None
        for step in reversed(self.trace):
            if step.reason is not None:
                return step.reason
        return None

    def to_dict(self) -> dict:
        doc = {
            "mode": self.mode.value,
            "candidates": [c.to_dict() for c in self.candidates],
            "trace": [t.to_dict() for t in self.trace],
            "raw_transcript": self.raw_transcript,
        }
        if self.target_id is not None:
            doc["target_id"] = self.target_id
        return doc


def parse_failure_result(transcript: str, detail: str = "") -> ResolutionResult:
    """Fallback result for utterances that never produced a query."""
    return ResolutionResult(
        mode=ResolutionMode.FALLBACK,
        raw_transcript=transcript,
        trace=[TraceStep("parse", 0, 0, reason=PARSE_FAIL_UPSTREAM)],
    )


_STEM_SUFFIXES = ("ing", "ed", "es", "s")


def stem(verb: str) -> str:
    """Suffix-stripping stemmer good enough for action verbs (fixed/fix, moving/move)."""
    word = verb.lower()
    for suffix in _STEM_SUFFIXES:
        if word.endswith(suffix) and len(word) - len(suffix) >= 2:
            word = word[: -len(suffix)]
            break
    if word.endswith("e") and len(word) > 3:
        word = word[:-1]
    return word


def match_memory(
    node: ObjectNode,
    cue: MemoryCue,
    now: datetime,
    session_id: str,
    config: ResolutionConfig,
    session_start: Optional[datetime] = None,
) -> bool:
    """Does any memory record on the node satisfy the cue's verb and window?"""
    if now.tzinfo is None:
        now = now.replace(tzinfo=timezone.utc)
    for record in node.memory:
        if cue.verb is not None and stem(cue.verb) != stem(record.action):
            continue
        ts = record.timestamp
        if cue.window is MemoryWindow.MINUTES_AGO:
            if timedelta(0) <= now - ts <= config.minutes_ago_window:
                return True
        elif cue.window is MemoryWindow.THIS_SESSION_EARLIER:
            if record.session_id == session_id and ts < now:
                return True
        elif cue.window is MemoryWindow.PREVIOUS_SESSION:
            if record.session_id != session_id and (
                session_start is None or ts < session_start
            ):
                return True
        elif cue.window is MemoryWindow.YESTERDAY:
            if ts.astimezone(timezone.utc).date() == (
                now.astimezone(timezone.utc).date() - timedelta(days=1)
            ):
                return True
    return False


class _Fallback(Exception):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(reason)
        self.reason = reason
        self.detail = detail


def _select(
    scored: List[ScoredCandidate], spec_has_text: bool, config: ResolutionConfig
) -> ScoredCandidate:
    """Pick a confident winner or raise. Memory-only specs embed to nothing,
    so similarity cannot discriminate; those need exactly one survivor."""
    if not scored:
        raise _Fallback(NO_CANDIDATE, "no candidate survived filtering")
    if not spec_has_text:
        if len(scored) > 1:
            raise _Fallback(AMBIGUOUS, "multiple survivors and no attributes to rank")
        return scored[0]
    best = scored[0]
    if best.score < config.tau_min:
        raise _Fallback(
            AMBIGUOUS, f"best score {best.score:.3f} below tau_min {config.tau_min}"
        )
    if len(scored) > 1 and best.score - scored[1].score < config.tau_margin:
        raise _Fallback(
            AMBIGUOUS,
            f"margin {best.score - scored[1].score:.3f} below tau_margin {config.tau_margin}",
        )
    return best


def _score_or_zero(
    spec: EntitySpec, candidates: List[ObjectNode], embedder, config: ResolutionConfig
) -> List[ScoredCandidate]:
    """Similarity scores, or zero scores when the spec carries no text
    (memory-only or clause-grounded generic targets rank by survival alone)."""
    if not candidates:
        return []
    if spec.text().strip():
        return score_candidates(spec, candidates, embedder, config.include_scene_context)
    return [ScoredCandidate(node_id=n.id, score=0.0) for n in sorted(candidates, key=lambda n: n.id)]


def _relation_filter(
    graph: RelationalGraph,
    nodes: List[ObjectNode],
    anchor_id: str,
    relation: SpatialRelation,
) -> List[ObjectNode]:
    return [
        n
        for n in nodes
        if n.id != anchor_id and graph.has_edge(anchor_id, n.id, relation)
    ]


def _resolve_spec(
    graph: RelationalGraph,
    spec: EntitySpec,
    now: datetime,
    config: ResolutionConfig,
    embedder,
    session_id: str,
    session_start: Optional[datetime],
    depth: int,
) -> str:
    """Resolve a bare entity spec (anchor pipeline: no visibility filter)."""
    if depth > config.anchor_depth_limit:
        raise _Fallback(ANCHOR_UNRESOLVED, "anchor recursion depth exceeded")
    candidates = graph.sorted_nodes()
    if spec.memory_cue is not None:
        candidates = [
            n
            for n in candidates
            if match_memory(n, spec.memory_cue, now, session_id, config, session_start)
        ]
    scored = _score_or_zero(spec, candidates, embedder, config)
    try:
        winner = _select(scored, bool(spec.text().strip()), config)
    except _Fallback as exc:
        raise _Fallback(ANCHOR_UNRESOLVED, f"anchor {spec.text() or '<memory>'!r}: {exc.detail}")
    return winner.node_id


def _satisfies_hard_constraints(
    graph: RelationalGraph,
    node: ObjectNode,
    query: ReferenceQuery,
    anchors: dict,
    cam: Optional[CameraPose],
    now: datetime,
    config: ResolutionConfig,
    session_id: str,
    session_start: Optional[datetime],
) -> bool:
    """Literal re-check of every hard constraint on a chosen winner."""
    for i, clause in enumerate(query.relation_clauses):
        anchor_id = anchors[i]
        relation = None if clause.relation is SpatialRelation.ADJACENT else clause.relation
        if node.id == anchor_id or not graph.has_edge(anchor_id, node.id, relation):
            return False
    if query.target.memory_cue is not None:
        if not match_memory(
            node, query.target.memory_cue, now, session_id, config, session_start
        ):
            return False
    if cam is not None:
        if not in_frustum(cam, node) or is_occluded(cam, node, graph):
            return False
    return True


def resolve(
    graph: RelationalGraph,
    query: ReferenceQuery,
    now: datetime,
    cam: Optional[CameraPose] = None,
    config: Optional[ResolutionConfig] = None,
    embedder=None,
    session_id: Optional[str] = None,
    session_start: Optional[datetime] = None,
) -> ResolutionResult:
    """Resolve the query target against the graph; never raises on bad input."""
    config = config or ResolutionConfig()
    embedder = embedder or CachingEmbedder(HashingEmbedder())
    session_id = session_id if session_id is not None else graph.session_id
    trace: List[TraceStep] = []
    n_all = len(graph.nodes)

    def fallback(reason: str, detail: str, stage: str, n_in: int, n_out: int = 0):
        trace.append(TraceStep(stage, n_in, n_out, reason=reason))
        logger.info("resolution fell back at %s: %s (%s)", stage, reason, detail)
        return ResolutionResult(
            mode=ResolutionMode.FALLBACK,
            raw_transcript=query.raw_transcript,
            trace=trace,
        )

    if n_all == 0:
        return fallback(NO_CANDIDATE, "empty graph", "candidates", 0)

    # (1) Anchors, destination anchor included: an ungroundable instruction
    # must not produce a pointer.
    anchors: dict = {}
    clauses = list(query.relation_clauses)
    all_clauses = clauses + ([query.destination] if query.destination else [])
    for i, clause in enumerate(all_clauses):
        try:
            anchor_id = _resolve_spec(
                graph, clause.anchor, now, config, embedder,
                session_id, session_start, depth=1,
            )
        except _Fallback as exc:
            return fallback(exc.reason, exc.detail, "anchors", n_all)
        if i < len(clauses):
            anchors[i] = anchor_id
    if all_clauses:
        trace.append(TraceStep("anchors", n_all, n_all,
                               reason=f"resolved {len(all_clauses)} anchor(s)"))

    # (2) Visibility.
    candidates = graph.sorted_nodes()
    if cam is not None:
        survivors = filter_visible(cam, candidates, graph)
        trace.append(TraceStep("visibility", len(candidates), len(survivors)))
        candidates = survivors
        if not candidates:
            return fallback(NO_CANDIDATE, "nothing in view", "visibility-check", 0)

    # (3) Hard constraints: relation clauses intersect, then the memory cue.
    for i, clause in enumerate(clauses):
        relation = None if clause.relation is SpatialRelation.ADJACENT else clause.relation
        survivors = _relation_filter(graph, candidates, anchors[i], relation)
        trace.append(
            TraceStep(f"relation:{clause.relation.value}", len(candidates), len(survivors))
        )
        candidates = survivors
        if not candidates:
            return fallback(
                NO_CANDIDATE, f"no node is {clause.relation.value} of anchor",
                "relation-check", 0,
            )
    if query.target.memory_cue is not None:
        survivors = [
            n
            for n in candidates
            if match_memory(
                n, query.target.memory_cue, now, session_id, config, session_start
            )
        ]
        trace.append(TraceStep("memory", len(candidates), len(survivors)))
        candidates = survivors
        if not candidates:
            return fallback(NO_CANDIDATE, "no matching interaction history", "memory-check", 0)

    # (4) Similarity ranking.
    scored = _score_or_zero(query.target, candidates, embedder, config)
    ranked = top_k(scored, config.k)
    trace.append(TraceStep("score", len(candidates), len(ranked)))

    # (5) Confident selection.
    try:
        winner = _select(ranked, bool(query.target.text().strip()), config)
    except _Fallback as exc:
        result = fallback(exc.reason, exc.detail, "select", len(ranked), 0)
        result.candidates = ranked
        return result

    # (6) Verification pass over every hard constraint.
    if not _satisfies_hard_constraints(
        graph, graph.node(winner.node_id), query, anchors, cam,
        now, config, session_id, session_start,
    ):
        result = fallback(VERIFY_FAIL, "winner failed constraint re-check", "verify", 1, 0)
        result.candidates = ranked
        return result
    trace.append(TraceStep("verify", 1, 1))

    return ResolutionResult(
        mode=ResolutionMode.RESOLVED,
        raw_transcript=query.raw_transcript,
        target_id=winner.node_id,
        candidates=ranked,
        trace=trace,
    )


DESTINATION_OFFSET_M = 0.3

_RELATION_OFFSETS = {
    SpatialRelation.RIGHT_OF: Vec3(DESTINATION_OFFSET_M, 0.0, 0.0),
    SpatialRelation.LEFT_OF: Vec3(-DESTINATION_OFFSET_M, 0.0, 0.0),
    SpatialRelation.ABOVE: Vec3(0.0, DESTINATION_OFFSET_M, 0.0),
    SpatialRelation.BELOW: Vec3(0.0, -DESTINATION_OFFSET_M, 0.0),
    SpatialRelation.IN_FRONT_OF: Vec3(0.0, 0.0, -DESTINATION_OFFSET_M),
    SpatialRelation.BEHIND_OF: Vec3(0.0, 0.0, DESTINATION_OFFSET_M),
    SpatialRelation.ADJACENT: Vec3(DESTINATION_OFFSET_M, 0.0, 0.0),
}


def resolve_destination(
    graph: RelationalGraph,
    dest: RelationClause,
    now: datetime,
    config: Optional[ResolutionConfig] = None,
    embedder=None,
    session_id: Optional[str] = None,
    session_start: Optional[datetime] = None,
) -> Vec3:
    """Placement point such that the moved object ends up in the requested
    relation to the destination anchor. Raises ValueError when the anchor
    cannot be grounded (callers fall back)."""
    config = config or ResolutionConfig()
    embedder = embedder or CachingEmbedder(HashingEmbedder())
    session_id = session_id if session_id is not None else graph.session_id
    try:
        anchor_id = _resolve_spec(
            graph, dest.anchor, now, config, embedder, session_id, session_start, depth=1
        )
    except _Fallback as exc:
        raise ValueError(f"destination anchor unresolved: {exc.detail}") from exc
    anchor = graph.node(anchor_id)
    return anchor.center + _RELATION_OFFSETS[dest.relation]


class ExternalReasoner(Protocol):
    """LLM reasoner drop-in: candidates plus query in, chosen id or abstain out."""

    def choose(self, query_doc: dict, candidates: List[dict]) -> str: ...


def resolve_with_reasoner(
    reasoner: ExternalReasoner,
    graph: RelationalGraph,
    query: ReferenceQuery,
    now: datetime,
    cam: Optional[CameraPose] = None,
    config: Optional[ResolutionConfig] = None,
    embedder=None,
    session_id: Optional[str] = None,
    session_start: Optional[datetime] = None,
) -> ResolutionResult:
    """Like resolve(), but the final pick among the top-k is delegated to an
    external reasoner; abstention or an off-list answer maps to FALLBACK."""
    config = config or ResolutionConfig()
    base = resolve(
        graph, query, now, cam=cam, config=config, embedder=embedder,
        session_id=session_id, session_start=session_start,
    )
    if not base.candidates:
        return base
    candidate_docs = [
        {**graph.node(c.node_id).to_dict(), "score": c.score} for c in base.candidates
    ]
    try:
        choice = reasoner.choose(query.to_dict(), candidate_docs)
    except Exception as exc:
        logger.warning("external reasoner failed: %s", exc)
        choice = "abstain"
    if choice == "abstain" or choice not in {c.node_id for c in base.candidates}:
        if base.mode is ResolutionMode.RESOLVED:
            base.mode = ResolutionMode.FALLBACK
            base.target_id = None
            base.trace.append(TraceStep("reason", len(base.candidates), 0, reason=AMBIGUOUS))
        return base
    sid = session_id if session_id is not None else graph.session_id
    anchors = {}
    for i, clause in enumerate(query.relation_clauses):
        try:
            anchors[i] = _resolve_spec(
                graph, clause.anchor, now, config,
                embedder or CachingEmbedder(HashingEmbedder()), sid, session_start, 1,
            )
        except _Fallback:
            return base
    node = graph.node(choice)
    if not _satisfies_hard_constraints(
        graph, node, query, anchors, cam, now, config, sid, session_start
    ):
        base.mode = ResolutionMode.FALLBACK
        base.target_id = None
        base.trace.append(TraceStep("verify", 1, 0, reason=VERIFY_FAIL))
        return base
    base.mode = ResolutionMode.RESOLVED
    base.target_id = choice
    base.trace.append(TraceStep("reason", len(base.candidates), 1))
    return base
