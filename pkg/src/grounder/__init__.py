"""Speech-to-scene-graph referent grounding engine.

Resolves spatial referring expressions ("the bolt next to the panel we fixed
earlier") against an object-centric relational graph of a known 3D scene,
and emits a spatially anchored guidance directive or a safe transcript
fallback.
"""

from .geometry import Quaternion, Vec3
from .guidance import DirectiveMode, GuidanceDirective, expire_on_action, make_directive
from .matching import (
    CachingEmbedder,
    EmbeddingVector,
    HashingEmbedder,
    ScoredCandidate,
    score_candidates,
    top_k,
)
from .parsing import (
    EntitySpec,
    MemoryCue,
    MemoryWindow,
    ParseFailure,
    ReferencePattern,
    ReferenceQuery,
    RelationClause,
    classify_pattern,
    parse,
)
from .pipeline import run_utterance
from .resolver import (
    ResolutionConfig,
    ResolutionMode,
    ResolutionResult,
    match_memory,
    resolve,
    resolve_destination,
)
from .scene_graph import (
    CoordinateFrame,
    InteractionRecord,
    ObjectNode,
    RelationEdge,
    RelationalGraph,
    SpatialRelation,
    build_graph,
    derive_relation,
    load_graph,
    record_interaction,
    save_graph,
    update_node_pose,
)
from .view_filter import CameraPose, OcclusionInputs, filter_visible, in_frustum, is_occluded

__version__ = "0.1.0"

__all__ = [
    "CachingEmbedder",
    "CameraPose",
    "CoordinateFrame",
    "DirectiveMode",
    "EmbeddingVector",
    "EntitySpec",
    "GuidanceDirective",
    "HashingEmbedder",
    "InteractionRecord",
    "MemoryCue",
    "MemoryWindow",
    "ObjectNode",
    "OcclusionInputs",
    "ParseFailure",
    "Quaternion",
    "ReferencePattern",
    "ReferenceQuery",
    "RelationClause",
    "RelationEdge",
    "RelationalGraph",
    "ResolutionConfig",
    "ResolutionMode",
    "ResolutionResult",
    "ScoredCandidate",
    "SpatialRelation",
    "Vec3",
    "build_graph",
    "classify_pattern",
    "derive_relation",
    "expire_on_action",
    "filter_visible",
    "in_frustum",
    "is_occluded",
    "load_graph",
    "make_directive",
    "match_memory",
    "parse",
    "record_interaction",
    "resolve",
    "resolve_destination",
    "run_utterance",
    "save_graph",
    "score_candidates",
    "top_k",
    "update_node_pose",
]
