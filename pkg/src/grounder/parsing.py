"""Deterministic controlled-English parser for spatial reference utterances.

Turns a transcript into a structured query: an action verb, a target entity
spec, anchor specs joined by spatial relation clauses, memory cues, an
optional move destination, and ordered steps. The grammar is intentionally
closed-vocabulary so the whole pipeline is testable offline; an external
parser backend can be dropped in through the same query document schema.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Protocol, Sequence, Set, Tuple

from .scene_graph import SpatialRelation


class ParseFailure(Exception):
    """Unparseable transcript; carries the raw text so callers can fall back."""

    NO_NOUN_PHRASE = "NO_NOUN_PHRASE"
    UNSUPPORTED_RELATION = "UNSUPPORTED_RELATION"
    UNRECOGNIZED_MEMORY = "UNRECOGNIZED_MEMORY"
    EMPTY = "EMPTY"
    EXTERNAL_MALFORMED = "EXTERNAL_MALFORMED"

    def __init__(self, transcript: str, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail or transcript!r}")
        self.transcript = transcript
        self.reason = reason
        self.detail = detail


class MemoryWindow(Enum):
    MINUTES_AGO = "minutes_ago"
    THIS_SESSION_EARLIER = "this_session_earlier"
    PREVIOUS_SESSION = "previous_session"
    YESTERDAY = "yesterday"


class ReferencePattern(Enum):
    DIRECT_FEATURE = "direct_feature"
    RELATIONAL = "relational"
    MEMORY = "memory"
    CHAINED = "chained"


@dataclass
class MemoryCue:
    """Recall cue: an optional past-tense verb plus a categorical time window."""

    window: MemoryWindow
    verb: Optional[str] = None

    def to_dict(self) -> dict:
        return {"verb": self.verb, "window": self.window.value}

    @classmethod
    def from_dict(cls, doc: dict) -> "MemoryCue":
        return cls(window=MemoryWindow(doc["window"]), verb=doc.get("verb"))


# Nouns that pose the question of the referent rather than naming it.
GENERIC_NOUNS = {"thing", "one", "it", "that", "object", "item"}


@dataclass
class EntitySpec:
    """What the speaker said about one entity: class noun, attributes, recall cue.

    A spec may be contentless only as a query target grounded by relation
    clauses ("the one to the left of the yellow file"); anchors and bare
    targets must carry something, which the parser enforces contextually.
    """

    label: Optional[str] = None
    descriptors: List[str] = field(default_factory=list)
    memory_cue: Optional[MemoryCue] = None

    def __post_init__(self):
        if self.label is not None and self.label in GENERIC_NOUNS:
            raise ValueError(f"generic noun {self.label!r} cannot be a label")

    def is_empty(self) -> bool:
        return self.label is None and not self.descriptors and self.memory_cue is None

    def text(self) -> str:
        parts = ([self.label] if self.label else []) + list(self.descriptors)
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "descriptors": list(self.descriptors),
            "memory_cue": self.memory_cue.to_dict() if self.memory_cue else None,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EntitySpec":
        cue = doc.get("memory_cue")
        return cls(
            label=doc.get("label"),
            descriptors=[str(d) for d in doc.get("descriptors", [])],
            memory_cue=MemoryCue.from_dict(cue) if cue else None,
        )


@dataclass
class RelationClause:
    relation: SpatialRelation
    anchor: EntitySpec

    def to_dict(self) -> dict:
        return {"relation": self.relation.value, "anchor": self.anchor.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "RelationClause":
        return cls(
            relation=SpatialRelation(doc["relation"]),
            anchor=EntitySpec.from_dict(doc["anchor"]),
        )


@dataclass
class StepSpec:
    action: str
    target: EntitySpec

    def to_dict(self) -> dict:
        return {"action": self.action, "target": self.target.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "StepSpec":
        return cls(action=str(doc["action"]), target=EntitySpec.from_dict(doc["target"]))


@dataclass
class ReferenceQuery:
    raw_transcript: str
    target: EntitySpec
    action: str = "locate"
    intent: Optional[str] = None
    relation_clauses: List[RelationClause] = field(default_factory=list)
    destination: Optional[RelationClause] = None
    steps: List[StepSpec] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "raw_transcript": self.raw_transcript,
            "action": self.action,
            "intent": self.intent,
            "target": self.target.to_dict(),
            "relation_clauses": [c.to_dict() for c in self.relation_clauses],
            "destination": self.destination.to_dict() if self.destination else None,
            "steps": [s.to_dict() for s in self.steps],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ReferenceQuery":
        dest = doc.get("destination")
        return cls(
            raw_transcript=str(doc.get("raw_transcript", "")),
            action=str(doc.get("action", "locate")),
            intent=doc.get("intent"),
            target=EntitySpec.from_dict(doc["target"]),
            relation_clauses=[
                RelationClause.from_dict(c) for c in doc.get("relation_clauses", [])
            ],
            destination=RelationClause.from_dict(dest) if dest else None,
            steps=[StepSpec.from_dict(s) for s in doc.get("steps", [])],
        )


# ---------------------------------------------------------------------------
# Lexicon
# ---------------------------------------------------------------------------

ACTION_VERBS = {
    "locate", "find", "select", "identify", "point", "look", "show",
    "grab", "take", "pick", "check", "inspect", "clean", "fix", "repair",
    "tighten", "loosen", "open", "close", "press", "push", "pull",
    "rotate", "turn", "move", "put", "place", "bring", "shift", "slide",
}

MOVE_CLASS_VERBS = {"move", "put", "place", "bring", "shift", "slide", "drag"}

# Verbs that may swallow a following particle ("point to", "pick up").
VERB_PARTICLES = {"to", "at", "up", "on"}

DETERMINERS = {"the", "a", "an", "this", "that", "these", "those"}

FILLER_TOKENS = {"um", "uh", "er", "hmm", "please", "uhm", "ah"}

# Adjective-like attribute words that stand alone as descriptors; consecutive
# tokens outside this set group into one compound descriptor ("quest 3").
ATTRIBUTE_ADJECTIVES = {
    # colors
    "red", "blue", "green", "yellow", "purple", "orange", "black", "white",
    "gray", "grey", "brown", "pink", "cyan", "magenta", "violet", "golden",
    "silver", "beige", "teal", "maroon", "crimson", "amber", "navy",
    # texture / finish
    "striped", "dotted", "spotted", "checkered", "plain", "solid", "glossy",
    "matte", "shiny", "dull", "rough", "smooth", "textured", "patterned",
    "wooden", "metal", "metallic", "plastic", "glass", "rubber", "ceramic",
    # size / shape
    "small", "large", "big", "tiny", "huge", "tall", "short", "long",
    "wide", "narrow", "round", "square", "flat", "thick", "thin",
    # position-ish attributes usable as names ("the left panel")
    "left", "right", "upper", "lower", "top", "bottom", "front", "back",
    "first", "new", "old", "broken", "cracked", "loose", "clean", "dirty",
}

ORDINAL_WORDS = {
    "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth",
    "ninth", "tenth",
}

# Words that signal a spatial relation the grammar does not support.
UNSUPPORTED_RELATION_WORDS = {
    "between", "near", "nearby", "by", "opposite", "across", "inside",
    "on", "onto", "at", "towards", "toward", "underneath", "atop",
    "against", "along", "around", "outside", "within", "to", "of", "from",
}

MEMORY_MARKERS = {"we", "i", "you"}
MEMORY_AUXILIARIES = {"ve", "d", "have", "had", "just", "already", "recently"}
MEMORY_VERB_PARTICLES = {"about", "at", "on", "to", "with", "up"}
RELATIVE_PRONOUNS = {"that", "which", "who"}

# Relation phrase inventory, longest surface form first.
_RELATION_PHRASES: List[Tuple[Tuple[str, ...], SpatialRelation]] = [
    (("to", "the", "left", "of"), SpatialRelation.LEFT_OF),
    (("to", "the", "right", "of"), SpatialRelation.RIGHT_OF),
    (("in", "front", "of"), SpatialRelation.IN_FRONT_OF),
    (("left", "of"), SpatialRelation.LEFT_OF),
    (("right", "of"), SpatialRelation.RIGHT_OF),
    (("behind", "of"), SpatialRelation.BEHIND_OF),
    (("next", "to"), SpatialRelation.ADJACENT),
    (("above",), SpatialRelation.ABOVE),
    (("over",), SpatialRelation.ABOVE),
    (("below",), SpatialRelation.BELOW),
    (("under",), SpatialRelation.BELOW),
    (("beneath",), SpatialRelation.BELOW),
    (("behind",), SpatialRelation.BEHIND_OF),
    (("beside",), SpatialRelation.ADJACENT),
]

_WINDOW_PHRASES: List[Tuple[Tuple[str, ...], MemoryWindow]] = [
    (("a", "few", "minutes", "ago"), MemoryWindow.MINUTES_AGO),
    (("a", "minute", "ago"), MemoryWindow.MINUTES_AGO),
    (("a", "moment", "ago"), MemoryWindow.MINUTES_AGO),
    (("a", "second", "ago"), MemoryWindow.MINUTES_AGO),
    (("moments", "ago"), MemoryWindow.MINUTES_AGO),
    (("minutes", "ago"), MemoryWindow.MINUTES_AGO),
    (("just", "now"), MemoryWindow.MINUTES_AGO),
    (("earlier", "today"), MemoryWindow.THIS_SESSION_EARLIER),
    (("earlier",), MemoryWindow.THIS_SESSION_EARLIER),
    (("previously",), MemoryWindow.THIS_SESSION_EARLIER),
    (("before",), MemoryWindow.THIS_SESSION_EARLIER),
    (("yesterday",), MemoryWindow.YESTERDAY),
    (("the", "last", "time"), MemoryWindow.PREVIOUS_SESSION),
    (("last", "time"), MemoryWindow.PREVIOUS_SESSION),
    (("last", "session"), MemoryWindow.PREVIOUS_SESSION),
    (("the", "previous", "session"), MemoryWindow.PREVIOUS_SESSION),
    (("previous", "session"), MemoryWindow.PREVIOUS_SESSION),
]

_NUMBER_WORDS = {
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    "ten", "couple",
}

_STEP_SPLIT = [("after", "that"), ("and", "then"), ("then",)]

_POLITENESS_PREFIXES = [
    ("could", "you"), ("can", "you"), ("would", "you"), ("will", "you"),
    ("hey",), ("ok",), ("okay",), ("now",),
]


def normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.lower()).strip()


def _tokenize(text: str) -> List[str]:
    text = text.lower().replace(",", " , ")
    text = re.sub(r"[^a-z0-9,]+", " ", text)
    return [t for t in text.split() if t and t not in FILLER_TOKENS]


def _strip_politeness(tokens: List[str]) -> List[str]:
    changed = True
    while changed and tokens:
        changed = False
        for prefix in _POLITENESS_PREFIXES:
            if tuple(tokens[: len(prefix)]) == prefix:
                tokens = tokens[len(prefix):]
                changed = True
    return tokens


def _match_phrase(tokens: Sequence[str], i: int, phrases) -> Optional[Tuple[int, object]]:
    for phrase, value in phrases:
        if tuple(tokens[i : i + len(phrase)]) == phrase:
            return len(phrase), value
    return None


def _split_steps(tokens: List[str]) -> List[List[str]]:
    segments: List[List[str]] = []
    current: List[str] = []
    i = 0
    while i < len(tokens):
        hit = _match_phrase(tokens, i, [(p, None) for p in _STEP_SPLIT])
        if hit is not None:
            segments.append(current)
            current = []
            i += hit[0]
        else:
            current.append(tokens[i])
            i += 1
    segments.append(current)
    return [s for s in segments if s]


@dataclass
class _Chunk:
    tokens: List[str]


def _scan_relations(
    tokens: List[str], transcript: str
) -> Tuple[List[str], List[Tuple[SpatialRelation, Tuple[str, ...], List[str]]]]:
    """Split a segment into the target chunk and (relation, surface, anchor chunk) triples."""
    target: List[str] = []
    clauses: List[Tuple[SpatialRelation, Tuple[str, ...], List[str]]] = []
    current = target
    i = 0
    while i < len(tokens):
        if tokens[i] in ORDINAL_WORDS and _match_phrase(tokens, i + 1, _RELATION_PHRASES):
            raise ParseFailure(
                transcript,
                ParseFailure.UNSUPPORTED_RELATION,
                f"ordinal spatial reference {tokens[i]!r}",
            )
        hit = _match_phrase(tokens, i, _RELATION_PHRASES)
        if hit is not None:
            length, relation = hit
            surface = tuple(tokens[i : i + length])
            anchor_tokens: List[str] = []
            clauses.append((relation, surface, anchor_tokens))
            current = anchor_tokens
            i += length
            continue
        current.append(tokens[i])
        i += 1
    # Chunk-separating conjunctions/commas sit at chunk tails; drop them.
    for chunk in [target] + [c[2] for c in clauses]:
        while chunk and chunk[-1] in {",", "and"}:
            chunk.pop()
        while chunk and chunk[0] in {",", "and"}:
            chunk.pop(0)
    return target, clauses


def _check_unsupported(tokens: List[str], transcript: str) -> None:
    for i, tok in enumerate(tokens):
        if tok in ("my", "your") and i + 1 < len(tokens) and tokens[i + 1] in (
            "left", "right", "side", "front", "back",
        ):
            raise ParseFailure(
                transcript,
                ParseFailure.UNSUPPORTED_RELATION,
                f"viewer-centered reference {tok!r} {tokens[i + 1]!r}",
            )
        if tok == "between":
            raise ParseFailure(
                transcript, ParseFailure.UNSUPPORTED_RELATION, "'between' reference"
            )


def _split_memory(chunk: List[str]) -> Tuple[List[str], Optional[List[str]]]:
    for i, tok in enumerate(chunk):
        if tok in MEMORY_MARKERS and i > 0:
            np_tokens = list(chunk[:i])
            while np_tokens and np_tokens[-1] in RELATIVE_PRONOUNS:
                np_tokens.pop()
            return np_tokens, list(chunk[i + 1 :])
    return list(chunk), None


def _parse_memory(tokens: List[str], transcript: str) -> MemoryCue:
    rest = [t for t in tokens if t != ","]
    while rest and rest[0] in MEMORY_AUXILIARIES:
        rest.pop(0)
    if not rest:
        raise ParseFailure(
            transcript, ParseFailure.UNRECOGNIZED_MEMORY, "memory clause lacks a verb"
        )
    verb = rest.pop(0)
    while rest and rest[0] in MEMORY_VERB_PARTICLES:
        rest.pop(0)
    hit = _match_phrase(rest, 0, _WINDOW_PHRASES)
    if hit is not None and hit[0] == len(rest):
        return MemoryCue(window=hit[1], verb=verb)
    # "<number> minutes ago" keeps MINUTES_AGO semantics.
    if (
        len(rest) == 3
        and (rest[0] in _NUMBER_WORDS or rest[0].isdigit())
        and rest[1] in ("minute", "minutes", "seconds")
        and rest[2] == "ago"
    ):
        return MemoryCue(window=MemoryWindow.MINUTES_AGO, verb=verb)
    raise ParseFailure(
        transcript,
        ParseFailure.UNRECOGNIZED_MEMORY,
        f"unrecognized time window {' '.join(rest)!r}",
    )


def _parse_noun_phrase(tokens: List[str], transcript: str) -> Tuple[Optional[str], List[str]]:
    """Return (label, descriptors); label None for generic nouns."""
    words = [t for t in tokens if t != ","]
    while words and words[0] in DETERMINERS:
        words.pop(0)
    words = [w for w in words if w != "and"]
    if not words:
        raise ParseFailure(transcript, ParseFailure.NO_NOUN_PHRASE, "empty noun phrase")
    for w in words:
        if w in UNSUPPORTED_RELATION_WORDS:
            raise ParseFailure(
                transcript,
                ParseFailure.UNSUPPORTED_RELATION,
                f"unsupported relation word {w!r}",
            )
        if w in ORDINAL_WORDS:
            raise ParseFailure(
                transcript,
                ParseFailure.UNSUPPORTED_RELATION,
                f"ordinal selection {w!r}",
            )

    noun = words[-1]
    modifiers = words[:-1]
    label = None if noun in GENERIC_NOUNS else noun

    descriptors: List[str] = []
    compound: List[str] = []
    for w in modifiers:
        if w in DETERMINERS:
            continue
        if w in ATTRIBUTE_ADJECTIVES:
            if compound:
                descriptors.append(" ".join(compound))
                compound = []
            descriptors.append(w)
        else:
            compound.append(w)
    if compound:
        descriptors.append(" ".join(compound))
    return label, descriptors


def _parse_entity(
    chunk: List[str], transcript: str, require_content: bool = True
) -> EntitySpec:
    np_tokens, memory_tokens = _split_memory(chunk)
    cue = _parse_memory(memory_tokens, transcript) if memory_tokens is not None else None
    label, descriptors = _parse_noun_phrase(np_tokens, transcript)
    try:
        spec = EntitySpec(label=label, descriptors=descriptors, memory_cue=cue)
    except ValueError as exc:
        raise ParseFailure(transcript, ParseFailure.NO_NOUN_PHRASE, str(exc)) from exc
    if require_content and spec.is_empty():
        raise ParseFailure(
            transcript,
            ParseFailure.NO_NOUN_PHRASE,
            "entity spec needs a label, descriptors, or a memory cue",
        )
    return spec


def _extract_intent(tokens: List[str]) -> Tuple[List[str], Optional[str]]:
    for i in range(len(tokens) - 1):
        if tokens[i] == "so" and tokens[i + 1] == "that":
            intent = " ".join(t for t in tokens[i + 2 :] if t != ",")
            head = tokens[:i]
            while head and head[-1] == ",":
                head.pop()
            return head, (intent or None)
    return tokens, None


def _parse_segment(
    tokens: List[str], transcript: str, default_action: str = "locate"
) -> Tuple[str, EntitySpec, List[RelationClause], Optional[RelationClause], Optional[str]]:
    tokens = list(tokens)
    # Segment-leading ordinal step markers ("first, ...") are step noise.
    if tokens and tokens[0] in (ORDINAL_WORDS | {"first"}) and len(tokens) > 1 and tokens[1] == ",":
        tokens = tokens[2:]
    tokens, intent = _extract_intent(tokens)

    action = default_action
    if tokens and tokens[0] in ACTION_VERBS:
        action = tokens.pop(0)
        if tokens and tokens[0] in VERB_PARTICLES:
            tokens.pop(0)

    _check_unsupported(tokens, transcript)
    target_tokens, raw_clauses = _scan_relations(tokens, transcript)
    if not target_tokens:
        raise ParseFailure(transcript, ParseFailure.NO_NOUN_PHRASE, "no target noun phrase")

    # A contentless target is legal only when relation clauses ground it.
    target = _parse_entity(
        target_tokens, transcript, require_content=not raw_clauses
    )
    clauses = [
        RelationClause(relation=rel, anchor=_parse_entity(chunk, transcript))
        for rel, _surface, chunk in raw_clauses
    ]

    destination = None
    if action in MOVE_CLASS_VERBS and raw_clauses:
        last_surface = raw_clauses[-1][1]
        if last_surface[:2] == ("to", "the"):
            destination = clauses.pop(-1)
    return action, target, clauses, destination, intent


def parse(transcript: str) -> ReferenceQuery:
    """Parse a transcript into a reference query. Raises ParseFailure."""
    if not transcript or not transcript.strip():
        raise ParseFailure(transcript or "", ParseFailure.EMPTY, "empty transcript")
    tokens = _strip_politeness(_tokenize(transcript))
    if not tokens:
        raise ParseFailure(transcript, ParseFailure.NO_NOUN_PHRASE, "nothing but filler")

    segments = _split_steps(tokens)
    parsed = []
    for i, seg in enumerate(segments):
        parsed.append(_parse_segment(seg, transcript, default_action="locate"))

    action, target, clauses, destination, intent = parsed[0]
    steps = (
        [StepSpec(action=a, target=t) for a, t, _c, _d, _i in parsed]
        if len(parsed) > 1
        else []
    )
    return ReferenceQuery(
        raw_transcript=transcript,
        action=action,
        intent=intent,
        target=target,
        relation_clauses=clauses,
        destination=destination,
        steps=steps,
    )


def classify_pattern(query: ReferenceQuery) -> Set[ReferencePattern]:
    """Which of the four referencing patterns the target reference uses.

    Destination clauses specify placement, not reference, and are excluded.
    A bare class noun is not a distinguishing feature; DIRECT_FEATURE needs
    at least one descriptor somewhere in the reference structure.
    """
    specs = [query.target] + [c.anchor for c in query.relation_clauses]
    patterns: Set[ReferencePattern] = set()
    if any(s.descriptors for s in specs):
        patterns.add(ReferencePattern.DIRECT_FEATURE)
    if query.relation_clauses:
        patterns.add(ReferencePattern.RELATIONAL)
    if any(s.memory_cue is not None for s in specs):
        patterns.add(ReferencePattern.MEMORY)
    if len(patterns) >= 2 or len(query.relation_clauses) >= 2:
        patterns.add(ReferencePattern.CHAINED)
    return patterns


class ExternalParser(Protocol):
    """LLM-backed parser drop-in: transcript in, ReferenceQuery document out."""

    def parse(self, transcript: str) -> dict: ...


def parse_with_external(parser: ExternalParser, transcript: str) -> ReferenceQuery:
    """Run an external parser and validate its document against the query schema."""
    try:
        doc = parser.parse(transcript)
        query = ReferenceQuery.from_dict(doc)
    except ParseFailure:
        raise
    except Exception as exc:
        raise ParseFailure(
            transcript, ParseFailure.EXTERNAL_MALFORMED, str(exc)
        ) from exc
    if not query.raw_transcript:
        query.raw_transcript = transcript
    return query
