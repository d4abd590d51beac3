"""Acceptance suite: one test per release criterion, each printing a
[PASS]/[FAIL] line (run with `pytest -s tests/test_acceptance.py` to see them).
"""

import functools
import json
import random
import sys
import time
from datetime import timedelta

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from grounder.cli import main as cli_main
from grounder.corpus import (
    EXPECT_FALLBACK,
    CorpusEntry,
    SetupAction,
    benchmark_scene,
    evaluate_corpus,
    generate_corpus,
    random_scene,
    write_corpus,
)
from grounder.geometry import Vec3, aabb_bounds, point_in_aabb
from grounder.guidance import DirectiveMode, make_directive
from grounder.matching import CachingEmbedder, HashingEmbedder, ScoredCandidate, top_k
from grounder.parsing import ParseFailure, parse
from grounder.pipeline import run_utterance
from grounder.resolver import AMBIGUOUS, ResolutionMode, resolve
from grounder.scene_graph import (
    build_graph,
    derive_relation,
    graph_to_doc,
    load_graph,
    record_interaction,
    save_graph,
    update_node_pose,
)
from grounder.service import create_app
from grounder.view_filter import CameraPose, is_occluded, occluder_hit_distance

from conftest import FIXED_NOW, make_node

NOW_ISO = "2026-01-15T12:00:00Z"


def criterion(name):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[FAIL] {name}", file=sys.stderr)
                raise
            print(f"[PASS] {name}")

        return run

    return wrap


# ---------------------------------------------------------------------------
# Criterion 1: oracle equivalence on 1,000 randomized scenes, < 60 s.
# ---------------------------------------------------------------------------

@criterion("oracle equivalence: 1,000 random scenes, resolver = brute-force oracle")
def test_oracle_equivalence_1000_scenes():
    started = time.monotonic()
    one_hot = [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)]
    names = ["direct", "relational", "memory", "chained"]
    coverage = {n: 0 for n in names}
    agreements = 0
    scene_rng = random.Random(777)

    for trial in range(1000):
        pattern_idx = trial % 4
        needs_edges = pattern_idx in (1, 3)
        graph = None
        for _ in range(50):
            candidate = random_scene(
                random.Random(scene_rng.randrange(2**31)),
                n_nodes=random.Random(scene_rng.randrange(2**31)).randint(4, 10),
                session_id=f"scene{trial}",
            )
            if not needs_edges or candidate.edges:
                graph = candidate
                break
        assert graph is not None

        entries, _warnings = generate_corpus(
            graph, 1, weights=one_hot[pattern_idx], seed=trial, scene_ref="rnd"
        )
        assert entries, f"trial {trial}: no {names[pattern_idx]} entry generated"
        report = evaluate_corpus(graph, entries, now=FIXED_NOW)
        assert report["accuracy"] == 1.0, (trial, report["entries"])
        agreements += len(entries)
        coverage[names[pattern_idx]] += len(entries)

    elapsed = time.monotonic() - started
    assert agreements == 1000
    assert all(coverage[n] >= 200 for n in names), coverage
    assert elapsed < 60.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# Criterion 2: benchmark-scene suite via the batch CLI.
# ---------------------------------------------------------------------------

AMBIGUOUS_TRANSCRIPTS = [
    "the cube",
    "locate the cube",
    "find the cube",
    "select the cube",
    "point to the cube",
    "the cube next to the red plain cube",
    "the one next to the blue dotted cube",
    "the cube we moved earlier",
    "the cube next to the green checkered cube",
    "the cube next to the orange spotted cube",
]


def ambiguous_entries(scene_ref):
    entries = []
    for text in AMBIGUOUS_TRANSCRIPTS:
        setup = []
        if text == "the cube we moved earlier":
            setup = [
                SetupAction(node_id="cube_red", action="moved", offset_s=-1500),
                SetupAction(node_id="cube_blue", action="moved", offset_s=-1400),
            ]
        entries.append(
            CorpusEntry(
                transcript=text,
                expected_target_id=EXPECT_FALLBACK,
                patterns=[],
                scene_ref=scene_ref,
                setup=setup,
            )
        )
    return entries


@criterion("benchmark suite: 40-entry corpus resolves 100%; ambiguous corpus 100% AMBIGUOUS fallback")
def test_benchmark_suite_via_batch(tmp_path):
    runner = CliRunner()
    scene_path = tmp_path / "bench.json"
    scene_path.write_bytes(save_graph(benchmark_scene()))

    corpus_path = tmp_path / "bench40.jsonl"
    result = runner.invoke(
        cli_main,
        [
            "gen-corpus", "--scene", str(scene_path), "--n", "40",
            "--seed", "7", "--out", str(corpus_path),
        ],
    )
    assert result.exit_code == 0, result.output
    entries = [json.loads(l) for l in corpus_path.read_text().splitlines()]
    assert len(entries) == 40
    tags = {p for e in entries for p in e["patterns"]}
    assert tags == {"direct_feature", "relational", "memory", "chained"}

    report_path = tmp_path / "report.json"
    result = runner.invoke(
        cli_main,
        [
            "batch", "--scene", str(scene_path), "--corpus", str(corpus_path),
            "--report", str(report_path), "--now", NOW_ISO,
        ],
    )
    assert result.exit_code == 0, result.output
    report = json.loads(report_path.read_text())
    assert report["totals"]["resolved"] == 40
    assert report["accuracy"] == 1.0
    assert all(b["accuracy"] == 1.0 for b in report["per_pattern"].values())

    ambiguous_path = tmp_path / "ambiguous.jsonl"
    write_corpus(ambiguous_entries("bench.json"), str(ambiguous_path))
    ambiguous_report_path = tmp_path / "ambiguous_report.json"
    result = runner.invoke(
        cli_main,
        [
            "batch", "--scene", str(scene_path), "--corpus", str(ambiguous_path),
            "--report", str(ambiguous_report_path), "--now", NOW_ISO,
        ],
    )
    assert result.exit_code == 0, result.output
    report = json.loads(ambiguous_report_path.read_text())
    assert report["totals"]["fallback"] == 10
    assert report["accuracy"] == 1.0
    assert all(e["reason"] == AMBIGUOUS for e in report["entries"])


# ---------------------------------------------------------------------------
# Criterion 3: feasibility analogue (81 = 63 + 11 + 7).
# ---------------------------------------------------------------------------

MALFORMED_TRANSCRIPTS = [
    "um… the the",
    "uh",
    "the",
    "second to the right of the cube",
    "the cube in between the red plain cube and the blue dotted cube",
    "what is next to the one on the right",
    "one to the right of what i am viewing",
]


@criterion("feasibility analogue: 81-entry mixed corpus reports 77.8% / 13.6% / 8.6%")
def test_feasibility_analogue(tmp_path):
    bench = benchmark_scene()
    resolvable, warnings = generate_corpus(bench, 63, seed=21, scene_ref="b")
    assert len(resolvable) == 63, warnings

    ambiguous = ambiguous_entries("b")
    extra = CorpusEntry(
        transcript="the cube next to the white glossy cube",
        expected_target_id=EXPECT_FALLBACK,
        scene_ref="b",
    )
    ambiguous = ambiguous + [extra]
    assert len(ambiguous) == 11

    malformed = [
        CorpusEntry(transcript=t, expected_target_id=EXPECT_FALLBACK, scene_ref="b")
        for t in MALFORMED_TRANSCRIPTS
    ]
    for entry in malformed:
        with pytest.raises(ParseFailure):
            parse(entry.transcript)

    mixed = resolvable + ambiguous + malformed
    assert len(mixed) == 81
    report = evaluate_corpus(bench, mixed, now=FIXED_NOW)
    totals = report["totals"]
    assert totals["resolved"] == 63
    assert totals["fallback"] == 11
    assert totals["parse_error"] == 7
    rates = totals["rates"]
    assert abs(rates["resolved"] * 100 - 77.8) < 0.05
    assert abs(rates["fallback"] * 100 - 13.6) < 0.05
    assert abs(rates["parse_error"] * 100 - 8.6) < 0.05
    assert report["accuracy"] == 1.0


# ---------------------------------------------------------------------------
# Criterion 4: occlusion vs dense ray-march oracle; exact inequality cases.
# ---------------------------------------------------------------------------

@criterion("occlusion: matches multi-sample ray oracle on 500 scenes; inequality cases exact")
def test_occlusion_against_sampling_oracle():
    def march_oracle(cam, target, others):
        to_target = target.center - cam.position
        dist = to_target.norm()
        direction = to_target.scaled(1.0 / dist)
        boxes = [
            aabb_bounds(o.center, o.half_extents) for o in others if o.id != target.id
        ]

        def inside_any(t):
            p = cam.position + direction.scaled(t)
            return any(point_in_aabb(p, lo, hi) for lo, hi in boxes)

        length, steps = 16.0, 3000
        prev_t, hit = 0.0, None
        for i in range(steps + 1):
            t = length * i / steps
            if inside_any(t):
                lo, hi = prev_t, t
                for _ in range(60):
                    mid = (lo + hi) / 2.0
                    if inside_any(mid):
                        hi = mid
                    else:
                        lo = mid
                hit = hi
                break
            prev_t = t
        d_b = hit if hit is not None else float("inf")
        slack = max(target.half_extents.x, target.half_extents.y, target.half_extents.z)
        return dist > d_b + slack

    rng = random.Random(4242)
    for trial in range(500):
        nodes = [
            make_node(
                f"n{i}",
                (rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)),
                half=rng.uniform(0.05, 0.4),
            )
            for i in range(rng.randint(2, 12))
        ]
        scene = build_graph(nodes, session_id=f"occ{trial}")
        cam = CameraPose(
            position=Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), 4.5)
        )
        target = nodes[rng.randrange(len(nodes))]
        assert is_occluded(cam, target, scene) == march_oracle(cam, target, nodes), trial

    cam = CameraPose(position=Vec3(0, 0, 0))
    target = make_node("t", (0, 0, -3.0), half=0.5)
    # D_A > D_B + slack: 3.0 > 1.9 + 0.5 -> occluded.
    scene = build_graph([target, make_node("b", (0, 0, -2.0), half=0.1)])
    assert is_occluded(cam, target, scene) is True
    # Equality: 3.0 > 2.5 + 0.5 is false -> visible.
    scene = build_graph([target, make_node("b", (0, 0, -2.6), half=0.1)])
    assert occluder_hit_distance(cam, target, list(scene.nodes.values())) == pytest.approx(2.5)
    assert is_occluded(cam, target, scene) is False
    # No hit: D_B = inf -> visible.
    scene = build_graph([target, make_node("b", (6, 6, 6), half=0.1)])
    assert is_occluded(cam, target, scene) is False


# ---------------------------------------------------------------------------
# Criterion 5: graph invariants.
# ---------------------------------------------------------------------------

@criterion("graph invariants: inverse closure, radius bound, rebuild equivalence, round-trip")
def test_graph_invariants():
    rng = random.Random(31337)

    # Inverse closure and distance bound over random graphs.
    for trial in range(100):
        g = random_scene(random.Random(trial), n_nodes=rng.randint(2, 12))
        edge_set = {(e.from_id, e.to_id, e.relation) for e in g.edges}
        for e in g.edges:
            assert e.distance <= g.radius_m
            assert (e.to_id, e.from_id, e.relation.inverse()) in edge_set

    # Rebuild equivalence across 1,000 random pose mutations (n <= 20).
    nodes = [
        make_node(
            f"n{i:02d}", (rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))
        )
        for i in range(20)
    ]
    g = build_graph(nodes, session_id="mut")
    for _ in range(1000):
        node_id = rng.choice(sorted(g.nodes))
        update_node_pose(
            g,
            node_id,
            Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
        )
        fresh = build_graph(list(g.nodes.values()), g.radius_m)
        assert {(e.from_id, e.to_id, e.relation) for e in g.edges} == {
            (e.from_id, e.to_id, e.relation) for e in fresh.edges
        }

    # Persistence round-trip identity, memory included.
    bench = benchmark_scene()
    from grounder.scene_graph import InteractionRecord

    record_interaction(
        bench,
        "cube_red",
        InteractionRecord(
            actor="tech", action="moved", timestamp=FIXED_NOW, session_id="benchmark"
        ),
    )
    assert graph_to_doc(load_graph(save_graph(bench))) == graph_to_doc(bench)


# ---------------------------------------------------------------------------
# Criterion 6: top-k equivalence and cache transparency.
# ---------------------------------------------------------------------------

@criterion("top-k: equals full-sort prefix on 1,000 vectors; cache-on/off bit-identical")
def test_topk_and_cache():
    rng = random.Random(6)
    for _ in range(1000):
        n = rng.randint(1, 60)
        scored = sorted(
            (ScoredCandidate(f"n{i:03d}", rng.uniform(-1, 1)) for i in range(n)),
            key=lambda c: (-c.score, c.node_id),
        )
        k = rng.randint(1, 10)
        assert top_k(scored, k) == scored[: min(k, n)]

    texts = [f"{a} {b} cube" for a in ("red", "blue", "green") for b in ("small", "large")]
    texts += ["", "purple striped cube", "purple striped cube"]
    cache_on = CachingEmbedder(HashingEmbedder(), enabled=True)
    cache_off = CachingEmbedder(HashingEmbedder(), enabled=False)
    for t in texts * 2:
        assert np.array_equal(cache_on.embed(t).values, cache_off.embed(t).values)


# ---------------------------------------------------------------------------
# Criterion 7: two-session memory lifecycle under an injected clock.
# ---------------------------------------------------------------------------

@criterion("memory lifecycle: persist -> resume resolves PREVIOUS_SESSION and MINUTES_AGO cues")
def test_memory_lifecycle_two_sessions(tmp_path):
    app = create_app(data_dir=str(tmp_path), test_clock=True)
    with TestClient(app) as client:
        t0 = "2026-01-15T12:00:00Z"
        s1 = client.post("/sessions", json={"now": t0}).json()["session_id"]
        nodes = graph_to_doc(benchmark_scene())["nodes"]
        assert (
            client.post(
                f"/sessions/{s1}/scene", json={"nodes": nodes, "now": t0}
            ).status_code
            == 200
        )
        client.post(
            f"/sessions/{s1}/actions",
            json={"node_id": "cube_blue", "action": "fixed", "actor": "tech", "now": t0},
        )
        persisted = client.post(f"/sessions/{s1}/persist", json={}).json()
        assert persisted["path"]

        t1 = "2026-01-16T09:00:00Z"
        s2 = client.post(
            "/sessions", json={"now": t1, "resume_from": s1}
        ).json()["session_id"]
        assert s2 != s1

        resp = client.post(
            f"/sessions/{s2}/utterance",
            json={"transcript": "the cube we fixed last time", "now": "2026-01-16T09:01:00Z"},
        ).json()
        assert resp["resolution"]["mode"] == "resolved"
        assert resp["resolution"]["target_id"] == "cube_blue"

        client.post(
            f"/sessions/{s2}/actions",
            json={
                "node_id": "cube_black", "action": "rotated", "actor": "tech",
                "now": "2026-01-16T09:01:30Z",
            },
        )
        resp = client.post(
            f"/sessions/{s2}/utterance",
            json={
                "transcript": "the cube we rotated a minute ago",
                "now": "2026-01-16T09:03:00Z",
            },
        ).json()
        assert resp["resolution"]["mode"] == "resolved"
        assert resp["resolution"]["target_id"] == "cube_black"

        # The old record belongs to the prior session: "a minute ago" in the
        # resumed session must not reach it.
        resp = client.post(
            f"/sessions/{s2}/utterance",
            json={
                "transcript": "the cube we fixed a minute ago",
                "now": "2026-01-16T09:03:30Z",
            },
        ).json()
        assert resp["resolution"]["mode"] == "fallback"


# ---------------------------------------------------------------------------
# Criterion 8: misguidance avoidance on every fallback path.
# ---------------------------------------------------------------------------

@criterion("misguidance avoidance: every failure path yields transcript fallback, no anchor")
def test_misguidance_paths(monkeypatch):
    bench = benchmark_scene()

    def assert_safe_fallback(transcript, directive, result):
        assert result.mode is ResolutionMode.FALLBACK
        assert directive.mode is DirectiveMode.FALLBACK_TRANSCRIPT
        assert directive.transcript == transcript
        assert directive.anchor_point is None
        assert directive.referent_id is None
        doc = directive.to_dict()
        assert "anchor_point" not in doc
        assert "referent_id" not in doc

    # Parse failures of every reason class.
    for transcript in [
        "um… the the",                       # NO_NOUN_PHRASE
        "the",                               # NO_NOUN_PHRASE (determiner only)
        "second to the right of the cube",   # UNSUPPORTED_RELATION (ordinal)
        "the cube to my left",               # UNSUPPORTED_RELATION (viewer)
        "the cube between the box and the tray",  # UNSUPPORTED_RELATION
        "the panel we fixed somewhere",      # UNRECOGNIZED_MEMORY
    ]:
        with pytest.raises(ParseFailure):
            parse(transcript)
        _q, result, directive = run_utterance(bench, transcript, FIXED_NOW)
        assert result.fallback_reason() == "PARSE_FAIL_UPSTREAM"
        assert_safe_fallback(transcript, directive, result)

    # Resolver fallbacks: anchor unresolved, no candidate, both ambiguity
    # flavors, and sub-threshold similarity.
    cases = {
        "the cube next to the lamp": "ANCHOR_UNRESOLVED",
        "the cube below the purple striped cube": "NO_CANDIDATE",
        "the cube": "AMBIGUOUS",
        "the wrench": "AMBIGUOUS",
        "the one next to the blue dotted cube": "AMBIGUOUS",
    }
    for transcript, reason in cases.items():
        _q, result, directive = run_utterance(bench, transcript, FIXED_NOW)
        assert result.fallback_reason() == reason, transcript
        assert_safe_fallback(transcript, directive, result)

    # Verification failure (paper's evaluation-agent stand-in): force the
    # re-check to reject the winner and require the same safe fallback.
    transcript = "locate the purple striped cube"
    query = parse(transcript)
    monkeypatch.setattr(
        "grounder.resolver._satisfies_hard_constraints", lambda *a, **k: False
    )
    result = resolve(bench, query, FIXED_NOW)
    monkeypatch.undo()
    assert result.fallback_reason() == "VERIFY_FAIL"
    directive = make_directive(result, bench, query)
    assert_safe_fallback(transcript, directive, result)
