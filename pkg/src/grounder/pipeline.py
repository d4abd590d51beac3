"""End-to-end utterance handling: parse, resolve, emit a guidance directive."""

from __future__ import annotations

from datetime import datetime
from typing import Optional, Tuple

from .guidance import GuidanceDirective, make_directive
from .parsing import ParseFailure, ReferenceQuery, parse, parse_with_external
from .resolver import (
    ResolutionConfig,
    ResolutionResult,
    parse_failure_result,
    resolve,
)
from .scene_graph import RelationalGraph
from .view_filter import CameraPose


def run_utterance(
    graph: RelationalGraph,
    transcript: str,
    now: datetime,
    cam: Optional[CameraPose] = None,
    config: Optional[ResolutionConfig] = None,
    embedder=None,
    session_id: Optional[str] = None,
    session_start: Optional[datetime] = None,
    external_parser=None,
) -> Tuple[Optional[ReferenceQuery], ResolutionResult, GuidanceDirective]:
    """Full pipeline for one utterance. Parse failures become the transcript
    fallback directive instead of surfacing as errors."""
    try:
        if external_parser is not None:
            query = parse_with_external(external_parser, transcript)
        else:
            query = parse(transcript)
    except ParseFailure as exc:
        result = parse_failure_result(transcript, detail=exc.reason)
        return None, result, make_directive(result, graph, None)

    result = resolve(
        graph,
        query,
        now,
        cam=cam,
        config=config,
        embedder=embedder,
        session_id=session_id,
        session_start=session_start,
    )
    return query, result, make_directive(result, graph, query)
