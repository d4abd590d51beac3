"""Attribute similarity: deterministic text embeddings, scoring, and top-k.

The default embedder is a hashed bag-of-tokens vector (D=256, unit L2 norm):
reproducible everywhere, no model downloads. An external embedding client
can replace it behind the same interface as long as it keeps one dimension
per session.
"""

from __future__ import annotations

import re
import threading
import zlib
from dataclasses import dataclass
from typing import Dict, List, Optional, Protocol, Sequence

import numpy as np

from .parsing import EntitySpec
from .scene_graph import ObjectNode

DEFAULT_DIMENSION = 256

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class MatchUnderspecifiedError(ValueError):
    """Spec has no scorable text and no memory cue to filter on instead."""


class EmbeddingDimensionError(ValueError):
    """External embedder returned vectors of a different dimension mid-session."""


@dataclass(frozen=True)
class EmbeddingVector:
    """Unit-norm vector; `empty` flags the all-zero output of empty text."""

    values: np.ndarray
    empty: bool = False

    def cosine(self, other: "EmbeddingVector") -> float:
        if self.empty or other.empty:
            return 0.0
        return float(np.dot(self.values, other.values))


@dataclass(frozen=True)
class ScoredCandidate:
    node_id: str
    score: float

    def to_dict(self) -> dict:
        return {"node_id": self.node_id, "score": self.score}


def tokenize(text: str) -> List[str]:
    return _TOKEN_RE.findall(text.lower())


def normalize_text(text: str) -> str:
    return " ".join(tokenize(text))


class HashingEmbedder:
    """Deterministic bag-of-tokens embedder: crc32 token buckets, L2-normalized."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension < 1:
            raise ValueError("embedding dimension must be >= 1")
        self.dimension = dimension

    @staticmethod
    def bucket(token: str, dimension: int = DEFAULT_DIMENSION) -> int:
        return zlib.crc32(token.encode("utf-8")) % dimension

    def embed(self, text: str) -> EmbeddingVector:
        counts = np.zeros(self.dimension, dtype=np.float64)
        tokens = tokenize(text)
        if not tokens:
            return EmbeddingVector(values=counts, empty=True)
        for tok in tokens:
            counts[self.bucket(tok, self.dimension)] += 1.0
        counts /= np.linalg.norm(counts)
        return EmbeddingVector(values=counts)

    def embed_batch(self, texts: Sequence[str]) -> List[EmbeddingVector]:
        return [self.embed(t) for t in texts]


class ExternalEmbedder(Protocol):
    """Embedding service drop-in: {texts:[...]} in, {vectors:[[...]]} out."""

    def embed_batch(self, texts: Sequence[str]) -> List[Sequence[float]]: ...


class ExternalEmbedderClient:
    """Wraps an external embedder, enforcing one dimension per session."""

    def __init__(self, backend: ExternalEmbedder):
        self._backend = backend
        self._dimension: Optional[int] = None

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> List[EmbeddingVector]:
        raw = self._backend.embed_batch(list(texts))
        out = []
        for vec in raw:
            arr = np.asarray(vec, dtype=np.float64)
            if self._dimension is None:
                self._dimension = arr.shape[0]
            elif arr.shape[0] != self._dimension:
                raise EmbeddingDimensionError(
                    f"expected dimension {self._dimension}, got {arr.shape[0]}"
                )
            norm = np.linalg.norm(arr)
            if norm == 0.0:
                out.append(EmbeddingVector(values=arr, empty=True))
            else:
                out.append(EmbeddingVector(values=arr / norm))
        return out


class CachingEmbedder:
    """Memoizes embeddings by exact normalized text; writes are atomic per key."""

    def __init__(self, embedder, enabled: bool = True):
        self.embedder = embedder
        self.enabled = enabled
        self._cache: Dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> EmbeddingVector:
        if not self.enabled:
            return self.embedder.embed(text)
        key = normalize_text(text)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        vec = self.embedder.embed(text)
        with self._lock:
            self._cache[key] = vec
        return vec

    def embed_batch(self, texts: Sequence[str]) -> List[EmbeddingVector]:
        return [self.embed(t) for t in texts]


def node_text(node: ObjectNode, include_scene_context: bool = False) -> str:
    parts = [node.label] + list(node.descriptors)
    if include_scene_context and node.scene_context:
        parts.append(node.scene_context)
    return " ".join(p for p in parts if p)


def score_candidates(
    spec: EntitySpec,
    nodes: Sequence[ObjectNode],
    embedder=None,
    include_scene_context: bool = False,
) -> List[ScoredCandidate]:
    """Cosine-score nodes against a spec, descending, ties by node id."""
    if not nodes:
        return []
    if embedder is None:
        embedder = HashingEmbedder()
    spec_text = spec.text()
    if not spec_text.strip() and spec.memory_cue is None:
        raise MatchUnderspecifiedError(
            "entity spec has no text to match and no memory cue"
        )
    query_vec = embedder.embed(spec_text)
    scored = [
        ScoredCandidate(
            node_id=n.id,
            score=query_vec.cosine(embedder.embed(node_text(n, include_scene_context))),
        )
        for n in nodes
    ]
    scored.sort(key=lambda c: (-c.score, c.node_id))
    return scored


def top_k(scored: Sequence[ScoredCandidate], k: int = 5) -> List[ScoredCandidate]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return list(scored[:k])
