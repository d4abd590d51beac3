"""Session-scoped HTTP API: scene registration, utterance resolution, action
recording, graph inspection, and persistence.

Reasoning runs server-side so a thin client only ships node poses and
transcripts. Mutations are serialized per session behind a lock; utterance
resolution is read-only and may overlap. Error bodies are always
{code, message, detail}.

Env: GROUNDER_PORT, GROUNDER_DATA_DIR, GROUNDER_TEST_CLOCK (enables the
per-request {now} override used by deterministic tests).
"""

from __future__ import annotations

import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .guidance import GuidanceDirective, expire_on_action
from .matching import CachingEmbedder, HashingEmbedder
from .pipeline import run_utterance
from .resolver import ResolutionConfig
from .scene_graph import (
    GraphDocumentError,
    InteractionRecord,
    ObjectNode,
    RelationalGraph,
    build_graph,
    graph_to_doc,
    load_graph,
    parse_timestamp,
    record_interaction,
    save_graph,
    update_node_pose,
)
from .geometry import Vec3
from .view_filter import CameraPose


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: str = ""):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


@dataclass
class Session:
    session_id: str
    graph: RelationalGraph
    config: ResolutionConfig
    created_at: datetime
    lineage_id: str
    active_directives: List[GuidanceDirective] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    embedder: CachingEmbedder = field(
        default_factory=lambda: CachingEmbedder(HashingEmbedder())
    )


def _node_from_doc(doc: dict, index: int) -> ObjectNode:
    try:
        return ObjectNode.from_dict(doc, location=f"nodes[{index}]")
    except GraphDocumentError as exc:
        raise ApiError(422, "invalid_node", str(exc)) from exc


def _scene_fingerprint(graph: RelationalGraph) -> list:
    return [
        (
            n.id,
            n.label,
            tuple(n.descriptors),
            n.center.to_list(),
            n.half_extents.to_list(),
            n.scene_context,
        )
        for n in graph.sorted_nodes()
    ]


def create_app(
    data_dir: Optional[str] = None,
    test_clock: Optional[bool] = None,
) -> FastAPI:
    data_path = Path(data_dir or os.environ.get("GROUNDER_DATA_DIR", "./grounder-data"))
    test_mode = (
        test_clock
        if test_clock is not None
        else bool(os.environ.get("GROUNDER_TEST_CLOCK"))
    )
    app = FastAPI(title="grounder", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: Dict[str, Session] = {}
    app.state.sessions = sessions
    app.state.data_dir = data_path

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={
                "code": "validation_error",
                "message": "request body failed validation",
                "detail": str(exc.errors()),
            },
        )

    def clock(body: Optional[dict]) -> datetime:
        if test_mode and body and body.get("now"):
            try:
                return parse_timestamp(str(body["now"]))
            except ValueError as exc:
                raise ApiError(422, "bad_clock", "unparseable 'now' override", str(exc))
        return datetime.now(timezone.utc)

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return session

    @app.post("/sessions")
    def create_session(body: dict = Body(default={})):
        now = clock(body)
        session_id = uuid.uuid4().hex[:12]
        config = (
            ResolutionConfig.from_dict(body["config"])
            if body.get("config")
            else ResolutionConfig()
        )
        resume_from = body.get("resume_from")
        lineage = session_id
        if resume_from:
            path = data_path / f"{resume_from}.json"
            if not path.exists():
                raise ApiError(
                    404, "unknown_lineage", f"no persisted graph {resume_from!r}"
                )
            try:
                graph = load_graph(path.read_bytes())
            except GraphDocumentError as exc:
                raise ApiError(422, "bad_document", str(exc)) from exc
            graph.session_id = session_id  # fresh session; memory keeps old ids
            lineage = str(resume_from)
        else:
            graph = build_graph([], session_id=session_id)
        sessions[session_id] = Session(
            session_id=session_id,
            graph=graph,
            config=config,
            created_at=now,
            lineage_id=lineage,
        )
        return {"session_id": session_id, "resumed_from": resume_from}

    @app.post("/sessions/{session_id}/scene")
    def register_scene(session_id: str, body: dict = Body(...)):
        session = get_session(session_id)
        nodes_doc = body.get("nodes")
        if not isinstance(nodes_doc, list) or not nodes_doc:
            raise ApiError(422, "empty_scene", "scene registration needs a non-empty node list")
        now = clock(body)
        nodes = [_node_from_doc(d, i) for i, d in enumerate(nodes_doc)]
        seen = set()
        for node in nodes:
            if node.id in seen:
                raise ApiError(422, "duplicate_node", f"duplicate node id {node.id!r}", node.id)
            seen.add(node.id)
            if node.created_at is None:
                node.created_at = now

        with session.lock:
            incoming = build_graph(
                nodes, radius_m=session.graph.radius_m, session_id=session_id
            )
            if _scene_fingerprint(incoming) == _scene_fingerprint(session.graph):
                # Already holds this scene; skip reconstruction, keep memory.
                graph = session.graph
            else:
                for node in incoming.nodes.values():
                    prior = session.graph.nodes.get(node.id)
                    if prior is not None and not node.memory:
                        node.memory = prior.memory
                session.graph = incoming
                graph = incoming
        return {"nodes": len(graph.nodes), "edges": len(graph.edges)}

    @app.post("/sessions/{session_id}/utterance")
    def submit_utterance(session_id: str, body: dict = Body(...)):
        session = get_session(session_id)
        transcript = body.get("transcript")
        if not isinstance(transcript, str) or not transcript.strip():
            raise ApiError(422, "empty_transcript", "transcript must be a non-empty string")
        cam = None
        if body.get("camera"):
            try:
                cam = CameraPose.from_dict(body["camera"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ApiError(422, "bad_camera", "unparseable camera pose", str(exc))
        now = clock(body)
        query, result, directive = run_utterance(
            session.graph,
            transcript,
            now,
            cam=cam,
            config=session.config,
            embedder=session.embedder,
            session_id=session.session_id,
            session_start=session.created_at,
        )
        with session.lock:
            session.active_directives.append(directive)
        return {
            "query": query.to_dict() if query else None,
            "resolution": result.to_dict(),
            "directive": directive.to_dict(),
        }

    @app.post("/sessions/{session_id}/actions")
    def record_action(session_id: str, body: dict = Body(...)):
        session = get_session(session_id)
        node_id = body.get("node_id")
        action = body.get("action")
        if not node_id or not action:
            raise ApiError(422, "bad_action", "node_id and action are required")
        if node_id not in session.graph.nodes:
            raise ApiError(404, "unknown_node", f"no node {node_id!r}")
        now = clock(body)
        record = InteractionRecord(
            actor=str(body.get("actor", "user")),
            action=str(action),
            intent=body.get("intent"),
            timestamp=now,
            session_id=session.session_id,
        )
        with session.lock:
            if body.get("new_center") is not None:
                try:
                    new_center = Vec3.from_list(body["new_center"])
                    new_half = (
                        Vec3.from_list(body["new_half_extents"])
                        if body.get("new_half_extents") is not None
                        else None
                    )
                except (TypeError, ValueError) as exc:
                    raise ApiError(422, "bad_pose", "unparseable pose update", str(exc))
                update_node_pose(session.graph, node_id, new_center, new_half, record)
            else:
                record_interaction(session.graph, node_id, record)
            expired = 0
            for directive in session.active_directives:
                was = directive.active
                expire_on_action(directive, record, node_id)
                expired += int(was and not directive.active)
        node = session.graph.nodes[node_id]
        return {
            "node": {
                "id": node.id,
                "label": node.label,
                "center": node.center.to_list(),
                "memory_records": len(node.memory),
            },
            "expired_directives": expired,
        }

    @app.get("/sessions/{session_id}/graph")
    def get_graph(session_id: str):
        session = get_session(session_id)
        return graph_to_doc(session.graph)

    @app.post("/sessions/{session_id}/persist")
    def persist(session_id: str, body: dict = Body(default={})):
        session = get_session(session_id)
        data_path.mkdir(parents=True, exist_ok=True)
        path = data_path / f"{session.lineage_id}.json"
        with session.lock:
            path.write_bytes(save_graph(session.graph))
        return {"path": str(path), "lineage_id": session.lineage_id}

    @app.get("/sessions/{session_id}/directives")
    def get_directives(session_id: str):
        session = get_session(session_id)
        return {"directives": [d.to_dict() for d in session.active_directives]}

    return app


def main() -> None:
    import uvicorn

    port = int(os.environ.get("GROUNDER_PORT", "8023"))
    uvicorn.run(create_app(), host="127.0.0.1", port=port)


if __name__ == "__main__":
    main()
