"""Benchmark scenes, corpus generation, and batch evaluation.

Corpus entries are generated from scene ground truth and certified by the
brute-force oracle at generation time, so a batch run measures the resolver
against unambiguous expectations rather than corpus noise. Memory entries
ship a setup script of interaction records because recall cues need prior
history; setups accumulate in utterance order, and the generator verifies
each entry against the accumulated state it will actually see.
"""

from __future__ import annotations

import copy
import json
import random
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Dict, List, Optional, Sequence, Tuple

from .geometry import Vec3
from .matching import CachingEmbedder, HashingEmbedder
from .oracle import oracle_resolve
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
from .resolver import (
    ResolutionConfig,
    ResolutionMode,
    resolve,
)
from .scene_graph import (
    InteractionRecord,
    ObjectNode,
    RelationalGraph,
    SpatialRelation,
    build_graph,
    record_interaction,
)

# Formative-study pattern shares; chained references are composites counted
# within the three base patterns, so the explicit fourth weight defaults to 0.
DEFAULT_WEIGHTS = (57.6, 31.2, 11.2, 0.0)

REFERENCE_NOW = datetime(2026, 1, 15, 12, 0, 0, tzinfo=timezone.utc)


# ---------------------------------------------------------------------------
# Vocabulary: tokens kept only if their embedding hash bucket is unused, so
# distinct generated texts can never collide into equal vectors.
# ---------------------------------------------------------------------------

_LABEL_CANDIDATES = [
    "cube", "sphere", "box", "panel", "bolt", "lamp", "mug", "book",
    "plate", "wrench", "valve", "gauge", "switch", "cable", "bracket", "tray",
]

_DESCRIPTOR_CANDIDATES = [
    # Benchmark tokens lead so the filter always keeps them.
    "purple", "striped", "red", "plain", "blue", "dotted", "green",
    "checkered", "yellow", "solid", "orange", "spotted", "white", "glossy",
    "black", "matte", "small", "large", "round", "square", "metal",
    "wooden", "shiny", "cracked", "brown", "pink", "gray", "tall", "flat",
    "narrow", "teal", "crimson", "navy", "amber", "thick", "thin",
]

_ACTION_POOL = [
    "moved", "selected", "rotated", "fixed", "tightened", "opened",
    "checked", "cleaned",
]


# Tokens the benchmark scene and its canonical task phrasings depend on;
# these claim their hash buckets before the rest of the vocabulary.
_RESERVED_TOKENS = [
    "cube", "purple", "striped", "red", "plain", "blue", "dotted", "green",
    "checkered", "yellow", "solid", "orange", "spotted", "white", "glossy",
    "black", "matte",
]


def _collision_free(candidates: Sequence[str], used: set) -> List[str]:
    kept = []
    for tok in candidates:
        b = HashingEmbedder.bucket(tok)
        if b not in used:
            used.add(b)
            kept.append(tok)
    return kept


_USED_BUCKETS: set = set()
_collision_free(_RESERVED_TOKENS, _USED_BUCKETS)
SCENE_LABELS = ["cube"] + _collision_free(_LABEL_CANDIDATES[1:], _USED_BUCKETS)
SCENE_DESCRIPTORS = _RESERVED_TOKENS[1:] + _collision_free(
    [d for d in _DESCRIPTOR_CANDIDATES if d not in _RESERVED_TOKENS], _USED_BUCKETS
)


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------

BENCHMARK_CUBES = [
    ("cube_purple", ["purple", "striped"]),
    ("cube_red", ["red", "plain"]),
    ("cube_blue", ["blue", "dotted"]),
    ("cube_green", ["green", "checkered"]),
    ("cube_yellow", ["yellow", "solid"]),
    ("cube_orange", ["orange", "spotted"]),
    ("cube_white", ["white", "glossy"]),
    ("cube_black", ["black", "matte"]),
]


def benchmark_scene(session_id: str = "benchmark") -> RelationalGraph:
    """Eight uniquely textured cubes in a 4x2 grid on a desk plane.

    Column spacing 0.35 m and row spacing 0.40 m keep lateral and depth
    neighbors related while diagonals (0.53 m) fall outside the radius.
    """
    nodes = []
    for i, (node_id, descriptors) in enumerate(BENCHMARK_CUBES):
        col, row = i % 4, i // 4
        nodes.append(
            ObjectNode(
                id=node_id,
                label="cube",
                descriptors=list(descriptors),
                center=Vec3(0.35 * col, 0.05, -0.4 * row),
                half_extents=Vec3(0.05, 0.05, 0.05),
                scene_context="desk with eight mock cubes",
            )
        )
    return build_graph(nodes, session_id=session_id)


def random_scene(
    rng: random.Random,
    n_nodes: Optional[int] = None,
    max_nodes: int = 10,
    session_id: str = "random",
) -> RelationalGraph:
    """Random labeled scene with unique (label, descriptor-set) node texts."""
    if n_nodes is None:
        n_nodes = rng.randint(2, max_nodes)
    nodes = []
    seen_texts = set()
    for i in range(n_nodes):
        for _attempt in range(100):
            label = rng.choice(SCENE_LABELS)
            k = rng.randint(1, 3)
            descriptors = sorted(rng.sample(SCENE_DESCRIPTORS, k))
            key = (label, tuple(descriptors))
            if key not in seen_texts:
                seen_texts.add(key)
                break
        else:
            break
        nodes.append(
            ObjectNode(
                id=f"n{i:02d}",
                label=label,
                descriptors=descriptors,
                center=Vec3(
                    rng.uniform(-0.6, 0.6),
                    rng.uniform(-0.6, 0.6),
                    rng.uniform(-0.6, 0.6),
                ),
                half_extents=Vec3(
                    rng.uniform(0.02, 0.1),
                    rng.uniform(0.02, 0.1),
                    rng.uniform(0.02, 0.1),
                ),
            )
        )
    return build_graph(nodes, session_id=session_id)


# ---------------------------------------------------------------------------
# Corpus entries
# ---------------------------------------------------------------------------

EXPECT_FALLBACK = "EXPECT_FALLBACK"


@dataclass
class SetupAction:
    """One interaction record to replay before an entry runs."""

    node_id: str
    action: str
    offset_s: float
    actor: str = "operator"
    session_id: Optional[str] = None  # None = the evaluating session

    def to_dict(self) -> dict:
        doc = {
            "node_id": self.node_id,
            "action": self.action,
            "actor": self.actor,
            "offset_s": self.offset_s,
        }
        if self.session_id is not None:
            doc["session_id"] = self.session_id
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SetupAction":
        return cls(
            node_id=str(doc["node_id"]),
            action=str(doc["action"]),
            offset_s=float(doc["offset_s"]),
            actor=str(doc.get("actor", "operator")),
            session_id=doc.get("session_id"),
        )


@dataclass
class CorpusEntry:
    transcript: str
    expected_target_id: str  # node id or EXPECT_FALLBACK
    patterns: List[str] = field(default_factory=list)
    scene_ref: str = ""
    setup: List[SetupAction] = field(default_factory=list)

    @property
    def expects_fallback(self) -> bool:
        return self.expected_target_id == EXPECT_FALLBACK

    def to_dict(self) -> dict:
        return {
            "transcript": self.transcript,
            "expected_target_id": self.expected_target_id,
            "patterns": sorted(self.patterns),
            "scene_ref": self.scene_ref,
            "setup": [s.to_dict() for s in self.setup],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CorpusEntry":
        return cls(
            transcript=str(doc["transcript"]),
            expected_target_id=str(doc["expected_target_id"]),
            patterns=[str(p) for p in doc.get("patterns", [])],
            scene_ref=str(doc.get("scene_ref", "")),
            setup=[SetupAction.from_dict(s) for s in doc.get("setup", [])],
        )


def write_corpus(entries: Sequence[CorpusEntry], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")


def read_corpus(path: str) -> List[CorpusEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(CorpusEntry.from_dict(json.loads(line)))
    return entries


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

_RELATION_SURFACE = {
    SpatialRelation.LEFT_OF: "to the left of",
    SpatialRelation.RIGHT_OF: "to the right of",
    SpatialRelation.ABOVE: "above",
    SpatialRelation.BELOW: "below",
    SpatialRelation.IN_FRONT_OF: "in front of",
    SpatialRelation.BEHIND_OF: "behind",
    SpatialRelation.ADJACENT: "next to",
}

_WINDOW_SURFACE = {
    MemoryWindow.MINUTES_AGO: "a minute ago",
    MemoryWindow.THIS_SESSION_EARLIER: "earlier",
    MemoryWindow.YESTERDAY: "yesterday",
    MemoryWindow.PREVIOUS_SESSION: "last time",
}

_WINDOW_OFFSETS_S = {
    MemoryWindow.MINUTES_AGO: -120.0,
    MemoryWindow.THIS_SESSION_EARLIER: -1500.0,
    MemoryWindow.YESTERDAY: -86400.0,
    MemoryWindow.PREVIOUS_SESSION: -172800.0,
}

# Phrasing variety per the formative feedback that template diversity matters.
_LEAD_VERBS = ["locate", "find", "select", ""]


def _np_text(label: Optional[str], descriptors: Sequence[str]) -> str:
    words = list(descriptors) + ([label] if label else ["one"])
    return " ".join(words)


def allocate_counts(n: int, weights: Sequence[float]) -> List[int]:
    """Largest-remainder allocation; deterministic, sums to n."""
    total = sum(weights)
    if total <= 0:
        raise ValueError("weights must sum to a positive value")
    raw = [n * w / total for w in weights]
    counts = [int(r) for r in raw]
    leftover = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


class CorpusGenerator:
    """Draws oracle-certified entries from a scene, one pattern at a time."""

    def __init__(
        self,
        graph: RelationalGraph,
        seed: int,
        scene_ref: str = "",
        config: Optional[ResolutionConfig] = None,
    ):
        self.rng = random.Random(seed)
        self.scene_ref = scene_ref
        self.config = config or ResolutionConfig()
        # Working copy accumulates setup records exactly as a batch run will.
        self.working = copy.deepcopy(graph)
        self.session_id = self.working.session_id or "batch"
        self.now = REFERENCE_NOW
        self.warnings: List[str] = []

    # -- helpers ----------------------------------------------------------

    def _verify(self, query: ReferenceQuery, expected_id: str) -> bool:
        outcome = oracle_resolve(
            self.working,
            query,
            self.now,
            session_id=self.session_id,
            session_start=self.now,
            minutes_window=self.config.minutes_ago_window,
        )
        return outcome.unique_id == expected_id

    def _reparse_matches(self, transcript: str, intended: ReferenceQuery) -> bool:
        try:
            parsed = parse(transcript)
        except ParseFailure:
            return False
        a, b = parsed.to_dict(), intended.to_dict()
        a["raw_transcript"] = b["raw_transcript"] = ""
        return a == b

    def _finish(
        self,
        transcript: str,
        query: ReferenceQuery,
        expected_id: str,
        setup: List[SetupAction],
    ) -> CorpusEntry:
        if not self._reparse_matches(transcript, query):
            raise AssertionError(
                f"generated transcript does not round-trip: {transcript!r}"
            )
        return CorpusEntry(
            transcript=transcript,
            expected_target_id=expected_id,
            patterns=[p.value for p in classify_pattern(query)],
            scene_ref=self.scene_ref,
            setup=setup,
        )

    def _lead(self, noun_phrase: str) -> Tuple[str, str]:
        verb = self.rng.choice(_LEAD_VERBS)
        action = verb or "locate"
        text = f"{verb} the {noun_phrase}".strip()
        return text, action

    # -- patterns ----------------------------------------------------------

    def gen_direct(self) -> Optional[CorpusEntry]:
        nodes = self.working.sorted_nodes()
        for _try in range(40):
            node = self.rng.choice(nodes)
            spec = EntitySpec(label=node.label, descriptors=list(node.descriptors))
            transcript, action = self._lead(_np_text(spec.label, spec.descriptors))
            query = ReferenceQuery(
                raw_transcript=transcript, action=action, target=spec
            )
            if self._verify(query, node.id):
                return self._finish(transcript, query, node.id, [])
        return None

    def gen_relational(self) -> Optional[CorpusEntry]:
        edges = list(self.working.edges)
        if not edges:
            return None
        for _try in range(60):
            edge = self.rng.choice(edges)
            anchor = self.working.nodes[edge.from_id]
            target = self.working.nodes[edge.to_id]
            relation = edge.relation
            if self.rng.random() < 0.2:
                relation = SpatialRelation.ADJACENT
            anchor_spec = EntitySpec(
                label=anchor.label, descriptors=list(anchor.descriptors)
            )
            for target_spec in (
                EntitySpec(label=target.label),
                EntitySpec(label=target.label, descriptors=list(target.descriptors)),
            ):
                phrase = (
                    f"{_np_text(target_spec.label, target_spec.descriptors)} "
                    f"{_RELATION_SURFACE[relation]} "
                    f"the {_np_text(anchor_spec.label, anchor_spec.descriptors)}"
                )
                transcript, action = self._lead(phrase)
                query = ReferenceQuery(
                    raw_transcript=transcript,
                    action=action,
                    target=target_spec,
                    relation_clauses=[
                        RelationClause(relation=relation, anchor=anchor_spec)
                    ],
                )
                if self._verify(query, target.id):
                    return self._finish(transcript, query, target.id, [])
        return None

    def _fresh_memory_setup(
        self, node: ObjectNode, window: MemoryWindow
    ) -> Optional[Tuple[str, SetupAction, InteractionRecord]]:
        """Pick a verb whose cue would match only this node, then record it."""
        verbs = list(_ACTION_POOL)
        self.rng.shuffle(verbs)
        for verb in verbs:
            cue = MemoryCue(window=window, verb=verb)
            setup = SetupAction(
                node_id=node.id,
                action=verb,
                offset_s=_WINDOW_OFFSETS_S[window],
                session_id="prior-session"
                if window is MemoryWindow.PREVIOUS_SESSION
                else None,
            )
            record = InteractionRecord(
                actor=setup.actor,
                action=setup.action,
                timestamp=self.now + timedelta(seconds=setup.offset_s),
                session_id=setup.session_id or self.session_id,
            )
            node.add_record(record)
            probe = ReferenceQuery(
                raw_transcript="", target=EntitySpec(memory_cue=cue)
            )
            outcome = oracle_resolve(
                self.working,
                probe,
                self.now,
                session_id=self.session_id,
                session_start=self.now,
                minutes_window=self.config.minutes_ago_window,
            )
            if outcome.unique_id == node.id:
                return verb, setup, record
            node.memory.remove(record)  # undo: cue was not uniquely attributable
        return None

    @staticmethod
    def _apply_setup(
        graph: RelationalGraph,
        setup: SetupAction,
        now: datetime,
        session_id: str,
    ) -> None:
        record_interaction(
            graph,
            setup.node_id,
            InteractionRecord(
                actor=setup.actor,
                action=setup.action,
                timestamp=now + timedelta(seconds=setup.offset_s),
                session_id=setup.session_id or session_id,
            ),
        )

    def gen_memory(self) -> Optional[CorpusEntry]:
        nodes = self.working.sorted_nodes()
        windows = [
            MemoryWindow.MINUTES_AGO,
            MemoryWindow.THIS_SESSION_EARLIER,
            MemoryWindow.YESTERDAY,
            MemoryWindow.PREVIOUS_SESSION,
        ]
        for _try in range(40):
            node = self.rng.choice(nodes)
            window = self.rng.choice(windows)
            picked = self._fresh_memory_setup(node, window)
            if picked is None:
                continue
            verb, setup, record = picked
            generic = self.rng.random() < 0.5
            spec = EntitySpec(
                label=None if generic else node.label,
                memory_cue=MemoryCue(window=window, verb=verb),
            )
            noun = spec.label or "one"
            phrase = f"{noun} we {verb} {_WINDOW_SURFACE[window]}"
            transcript, action = self._lead(phrase)
            query = ReferenceQuery(
                raw_transcript=transcript, action=action, target=spec
            )
            if self._verify(query, node.id):
                return self._finish(transcript, query, node.id, [setup])
            node.memory.remove(record)
        return None

    def gen_chained(self) -> Optional[CorpusEntry]:
        """Relational plus memory on the anchor, per the composite pattern."""
        edges = list(self.working.edges)
        if not edges:
            return None
        for _try in range(60):
            edge = self.rng.choice(edges)
            anchor = self.working.nodes[edge.from_id]
            target = self.working.nodes[edge.to_id]
            window = self.rng.choice(
                [MemoryWindow.MINUTES_AGO, MemoryWindow.THIS_SESSION_EARLIER]
            )
            picked = self._fresh_memory_setup(anchor, window)
            if picked is None:
                continue
            verb, setup, record = picked
            anchor_spec = EntitySpec(
                label=anchor.label,
                memory_cue=MemoryCue(window=window, verb=verb),
            )
            target_spec = EntitySpec(
                label=target.label, descriptors=list(target.descriptors)
            )
            phrase = (
                f"{_np_text(target_spec.label, target_spec.descriptors)} "
                f"{_RELATION_SURFACE[edge.relation]} "
                f"the {anchor.label} we {verb} {_WINDOW_SURFACE[window]}"
            )
            transcript, action = self._lead(phrase)
            query = ReferenceQuery(
                raw_transcript=transcript,
                action=action,
                target=target_spec,
                relation_clauses=[
                    RelationClause(relation=edge.relation, anchor=anchor_spec)
                ],
            )
            if self._verify(query, target.id):
                return self._finish(transcript, query, target.id, [setup])
            anchor.memory.remove(record)
        return None

    def generate(self, n: int, weights: Sequence[float] = DEFAULT_WEIGHTS) -> List[CorpusEntry]:
        counts = allocate_counts(n, weights)
        makers = [self.gen_direct, self.gen_relational, self.gen_memory, self.gen_chained]
        names = ["direct", "relational", "memory", "chained"]
        entries: List[CorpusEntry] = []
        for maker, count, name in zip(makers, counts, names):
            for _ in range(count):
                entry = maker()
                if entry is None:
                    self.warnings.append(
                        f"skipped one {name} entry: unsatisfiable for this scene"
                    )
                    continue
                entries.append(entry)
        return entries


def generate_corpus(
    graph: RelationalGraph,
    n: int,
    weights: Sequence[float] = DEFAULT_WEIGHTS,
    seed: int = 0,
    scene_ref: str = "",
    config: Optional[ResolutionConfig] = None,
) -> Tuple[List[CorpusEntry], List[str]]:
    gen = CorpusGenerator(graph, seed=seed, scene_ref=scene_ref, config=config)
    entries = gen.generate(n, weights)
    return entries, gen.warnings


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _percentile(values: List[float], q: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    idx = min(len(ordered) - 1, max(0, round(q * (len(ordered) - 1))))
    return ordered[idx]


def evaluate_corpus(
    graph: RelationalGraph,
    entries: Sequence[CorpusEntry],
    now: Optional[datetime] = None,
    config: Optional[ResolutionConfig] = None,
    parallel: bool = False,
) -> dict:
    """Run setup scripts and resolution per entry; aggregate a report.

    Setups accumulate across entries (memory references are order-dependent),
    so parallel execution is refused for corpora that carry any setup.
    """
    config = config or ResolutionConfig()
    now = now or datetime.now(timezone.utc)
    working = copy.deepcopy(graph)
    session_id = working.session_id or "batch"
    session_start = now
    embedder = CachingEmbedder(HashingEmbedder())

    if parallel and any(e.setup for e in entries):
        raise ValueError("--parallel is only valid for memory-free corpora")

    def run_entry(entry: CorpusEntry) -> dict:
        started = time.perf_counter()
        outcome: str
        actual_id: Optional[str] = None
        reason: Optional[str] = None
        try:
            query = parse(entry.transcript)
        except ParseFailure as exc:
            outcome, reason = "parse_error", exc.reason
        else:
            result = resolve(
                working,
                query,
                now,
                config=config,
                embedder=embedder,
                session_id=session_id,
                session_start=session_start,
            )
            if result.mode is ResolutionMode.RESOLVED:
                outcome, actual_id = "resolved", result.target_id
            else:
                outcome, reason = "fallback", result.fallback_reason()
        elapsed_ms = (time.perf_counter() - started) * 1000.0

        if entry.expects_fallback:
            correct = outcome in ("fallback", "parse_error")
        else:
            correct = outcome == "resolved" and actual_id == entry.expected_target_id
        return {
            "transcript": entry.transcript,
            "outcome": outcome,
            "actual_target_id": actual_id,
            "expected_target_id": entry.expected_target_id,
            "reason": reason,
            "correct": correct,
            "patterns": list(entry.patterns),
            "latency_ms": elapsed_ms,
        }

    results: List[dict] = []
    if parallel:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor() as pool:
            results = list(pool.map(run_entry, entries))
    else:
        for entry in entries:
            for setup in entry.setup:
                CorpusGenerator._apply_setup(working, setup, now, session_id)
            results.append(run_entry(entry))

    n = len(results)
    n_resolved = sum(1 for r in results if r["outcome"] == "resolved")
    n_fallback = sum(1 for r in results if r["outcome"] == "fallback")
    n_error = sum(1 for r in results if r["outcome"] == "parse_error")
    per_pattern: Dict[str, dict] = {}
    for r in results:
        for p in r["patterns"]:
            bucket = per_pattern.setdefault(p, {"total": 0, "correct": 0})
            bucket["total"] += 1
            bucket["correct"] += 1 if r["correct"] else 0
    for bucket in per_pattern.values():
        bucket["accuracy"] = bucket["correct"] / bucket["total"]
    reasons: Dict[str, int] = {}
    for r in results:
        if r["reason"]:
            reasons[r["reason"]] = reasons.get(r["reason"], 0) + 1
    latencies = [r["latency_ms"] for r in results]
    return {
        "totals": {
            "entries": n,
            "resolved": n_resolved,
            "fallback": n_fallback,
            "parse_error": n_error,
            "rates": {
                "resolved": n_resolved / n if n else 0.0,
                "fallback": n_fallback / n if n else 0.0,
                "parse_error": n_error / n if n else 0.0,
            },
        },
        "accuracy": (sum(1 for r in results if r["correct"]) / n) if n else 0.0,
        "per_pattern": per_pattern,
        "fallback_reasons": reasons,
        "latency_ms": {
            "p50": _percentile(latencies, 0.50),
            "p95": _percentile(latencies, 0.95),
        },
        "entries": results,
    }
