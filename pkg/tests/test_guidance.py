from datetime import timedelta

import pytest

from grounder.guidance import (
    DirectiveMode,
    expire_on_action,
    make_directive,
)
from grounder.parsing import parse
from grounder.resolver import ResolutionMode, ResolutionResult, parse_failure_result, resolve
from grounder.scene_graph import InteractionRecord, build_graph

from conftest import FIXED_NOW, make_node


def rec(action="moved"):
    return InteractionRecord(
        actor="tech", action=action, timestamp=FIXED_NOW, session_id="s1"
    )


@pytest.fixture
def workshop():
    return build_graph(
        [
            make_node("bolt1", (0, 0.2, 0), label="bolt"),
            make_node("panel_left", (0.3, 0.2, 0), label="panel", descriptors=["left"]),
            make_node("panel_right", (0.6, 0.2, 0), label="panel", descriptors=["right"]),
        ],
        session_id="s1",
    )


class TestMakeDirective:
    def test_unique_label_summary(self, workshop):
        q = parse("tighten the bolt")
        r = resolve(workshop, q, FIXED_NOW)
        d = make_directive(r, workshop, q)
        assert d.mode is DirectiveMode.POINTER
        assert d.summary == "tighten the bolt"

    def test_clashing_label_adds_distinguishing_descriptor(self, workshop):
        q = parse("open the left panel")
        r = resolve(workshop, q, FIXED_NOW)
        assert r.target_id == "panel_left"
        d = make_directive(r, workshop, q)
        assert d.summary == "open the left panel"

    def test_anchor_point_margin_exact(self, workshop):
        q = parse("tighten the bolt")
        r = resolve(workshop, q, FIXED_NOW)
        d = make_directive(r, workshop, q)
        node = workshop.nodes["bolt1"]
        assert d.anchor_point.y - (node.center.y + node.half_extents.y) == pytest.approx(0.1)
        assert d.anchor_point.x == node.center.x
        assert d.anchor_point.z == node.center.z

    def test_fallback_keeps_transcript_and_no_pointer(self, workshop):
        raw = "um…   The the\tpanel??"
        r = parse_failure_result(raw)
        d = make_directive(r, workshop, None)
        assert d.mode is DirectiveMode.FALLBACK_TRANSCRIPT
        assert d.transcript == raw  # byte-identical
        assert d.anchor_point is None
        assert d.referent_id is None
        assert d.summary is None
        assert "anchor_point" not in d.to_dict()

    def test_three_step_lettering(self, workshop):
        q = parse("tighten the bolt then open the left panel then check the right panel")
        r = resolve(workshop, q, FIXED_NOW)
        d = make_directive(r, workshop, q)
        letters = [letter for letter, _ in d.steps]
        assert letters == ["A", "B", "C"]
        assert d.steps[0][1] == "tighten the bolt"
        assert d.steps[1][1] == "open the left panel"
        assert d.steps[2][1] == "check the right panel"

    def test_referent_missing_from_graph_falls_back(self, workshop):
        q = parse("tighten the bolt")
        r = ResolutionResult(
            mode=ResolutionMode.RESOLVED, raw_transcript=q.raw_transcript,
            target_id="ghost",
        )
        d = make_directive(r, workshop, q)
        assert d.mode is DirectiveMode.FALLBACK_TRANSCRIPT

    def test_summary_word_cap(self, workshop):
        class Rambler:
            def summarize(self, query_doc):
                return " ".join(["word"] * 40)

        q = parse("tighten the bolt")
        r = resolve(workshop, q, FIXED_NOW)
        d = make_directive(r, workshop, q, summarizer=Rambler())
        assert len(d.summary.split()) <= 12

    def test_failing_summarizer_falls_back_to_template(self, workshop):
        class Broken:
            def summarize(self, query_doc):
                raise TimeoutError("llm timeout")

        q = parse("tighten the bolt")
        r = resolve(workshop, q, FIXED_NOW)
        d = make_directive(r, workshop, q, summarizer=Broken())
        assert d.mode is DirectiveMode.POINTER
        assert d.summary == "tighten the bolt"


class TestExpiry:
    def _pointer(self, workshop):
        q = parse("tighten the bolt")
        return make_directive(resolve(workshop, q, FIXED_NOW), workshop, q)

    def test_action_on_referent_expires(self, workshop):
        d = self._pointer(workshop)
        expire_on_action(d, rec(), "bolt1")
        assert d.active is False

    def test_action_on_other_node_keeps_active(self, workshop):
        d = self._pointer(workshop)
        expire_on_action(d, rec(), "panel_left")
        assert d.active is True

    def test_fallback_directive_never_expires(self, workshop):
        d = make_directive(parse_failure_result("garbage"), workshop, None)
        expire_on_action(d, rec(), "bolt1")
        assert d.active is True
