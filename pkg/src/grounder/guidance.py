"""AR guidance directives: pointer anchoring, summaries, lettered steps.

A resolved referent gets an arrow anchor floating a fixed margin above its
AABB top face plus a short templated action summary; anything unresolved
shows the raw transcript with no pointer at all, so a failed resolution can
never steer the user at a wrong object.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Protocol, Tuple

from .geometry import Vec3
from .parsing import EntitySpec, ReferenceQuery
from .resolver import ResolutionMode, ResolutionResult
from .scene_graph import InteractionRecord, RelationalGraph

logger = logging.getLogger(__name__)

POINTER_MARGIN_M = 0.1
SUMMARY_WORD_LIMIT = 12


class DirectiveMode(Enum):
    POINTER = "pointer"
    FALLBACK_TRANSCRIPT = "fallback_transcript"


@dataclass
class GuidanceDirective:
    mode: DirectiveMode
    transcript: str
    anchor_point: Optional[Vec3] = None
    summary: Optional[str] = None
    steps: List[Tuple[str, str]] = field(default_factory=list)
    referent_id: Optional[str] = None
    active: bool = True

    def to_dict(self) -> dict:
        doc = {
            "mode": self.mode.value,
            "transcript": self.transcript,
            "steps": [{"letter": l, "text": t} for l, t in self.steps],
            "active": self.active,
        }
        if self.anchor_point is not None:
            doc["anchor_point"] = self.anchor_point.to_list()
        if self.summary is not None:
            doc["summary"] = self.summary
        if self.referent_id is not None:
            doc["referent_id"] = self.referent_id
        return doc


class ExternalSummarizer(Protocol):
    """LLM summarizer drop-in: query document in, one-line directive out."""

    def summarize(self, query_doc: dict) -> str: ...


def _spec_phrase(spec: EntitySpec) -> str:
    words = list(spec.descriptors)
    if spec.label:
        words.append(spec.label)
    return " ".join(words) if words else "object"


def _clamp_words(text: str, limit: int = SUMMARY_WORD_LIMIT) -> str:
    words = text.split()
    return " ".join(words[:limit])


def summarize_step(action: str, spec: EntitySpec) -> str:
    return _clamp_words(f"{action} the {_spec_phrase(spec)}")


def _distinguishing_descriptor(
    graph: RelationalGraph, referent_id: str
) -> Optional[str]:
    """First referent descriptor no same-label node shares, if the label clashes."""
    referent = graph.nodes[referent_id]
    rivals = [
        n
        for n in graph.nodes.values()
        if n.id != referent_id and n.label == referent.label
    ]
    if not rivals:
        return None
    for d in referent.descriptors:
        if all(d not in r.descriptors for r in rivals):
            return d
    return referent.descriptors[0] if referent.descriptors else None


def make_directive(
    result: ResolutionResult,
    graph: RelationalGraph,
    query: Optional[ReferenceQuery],
    summarizer: Optional[ExternalSummarizer] = None,
) -> GuidanceDirective:
    if (
        result.mode is not ResolutionMode.RESOLVED
        or result.target_id is None
        or result.target_id not in graph.nodes
        or query is None
    ):
        # Misguidance avoidance: raw transcript, no positional data.
        return GuidanceDirective(
            mode=DirectiveMode.FALLBACK_TRANSCRIPT,
            transcript=result.raw_transcript,
        )

    referent = graph.nodes[result.target_id]
    anchor = Vec3(
        referent.center.x,
        referent.center.y + referent.half_extents.y + POINTER_MARGIN_M,
        referent.center.z,
    )

    summary = None
    if summarizer is not None:
        try:
            summary = _clamp_words(str(summarizer.summarize(query.to_dict())))
        except Exception as exc:
            logger.warning("external summarizer failed, using template: %s", exc)
            summary = None
    if not summary:
        label = referent.label or _spec_phrase(query.target)
        qualifier = _distinguishing_descriptor(graph, referent.id)
        phrase = f"{qualifier} {label}" if qualifier else label
        summary = _clamp_words(f"{query.action} the {phrase}")

    steps = [
        (chr(ord("A") + i), summarize_step(s.action, s.target))
        for i, s in enumerate(query.steps)
    ]
    return GuidanceDirective(
        mode=DirectiveMode.POINTER,
        transcript=result.raw_transcript,
        anchor_point=anchor,
        summary=summary,
        steps=steps,
        referent_id=referent.id,
    )


def expire_on_action(
    directive: GuidanceDirective, record: InteractionRecord, node_id: str
) -> GuidanceDirective:
    """An action on the pointed referent retires the pointer; anything else keeps it."""
    if directive.referent_id is not None and node_id == directive.referent_id:
        directive.active = False
    return directive
