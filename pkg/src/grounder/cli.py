"""Operator CLI: one-shot resolution, corpus generation, batch evaluation, serve.

Exit codes for `resolve`: 0 resolved, 2 fallback, 1 error.
"""

from __future__ import annotations

import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from .corpus import (
    DEFAULT_WEIGHTS,
    evaluate_corpus,
    generate_corpus,
    read_corpus,
    write_corpus,
)
from .pipeline import run_utterance
from .resolver import ResolutionMode
from .scene_graph import GraphDocumentError, load_graph
from .view_filter import CameraPose

EXIT_RESOLVED = 0
EXIT_ERROR = 1
EXIT_FALLBACK = 2


def _load_scene(path: str):
    try:
        return load_graph(Path(path).read_bytes())
    except OSError as exc:
        raise click.ClickException(f"cannot read scene file {path!r}: {exc}")
    except GraphDocumentError as exc:
        raise click.ClickException(f"invalid scene file {path!r}: {exc}")


@click.group()
def main():
    """Spatial-reference grounding tools."""


@main.command("resolve")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--utterance", required=True)
@click.option("--camera", "camera_path", type=click.Path(), default=None)
@click.option("--trace", is_flag=True, help="Include the resolution trace.")
def resolve_cmd(scene_path: str, utterance: str, camera_path: str, trace: bool):
    """Resolve one utterance against a scene file and print the result."""
    graph = _load_scene(scene_path)
    cam = None
    if camera_path:
        try:
            cam = CameraPose.from_dict(json.loads(Path(camera_path).read_bytes()))
        except (OSError, ValueError, KeyError) as exc:
            raise click.ClickException(f"cannot read camera file {camera_path!r}: {exc}")
    now = datetime.now(timezone.utc)
    _query, result, directive = run_utterance(
        graph, utterance, now, cam=cam, session_start=now
    )
    out = {"resolution": result.to_dict(), "directive": directive.to_dict()}
    if not trace:
        out["resolution"].pop("trace", None)
    click.echo(json.dumps(out, indent=2, sort_keys=True))
    sys.exit(
        EXIT_RESOLVED if result.mode is ResolutionMode.RESOLVED else EXIT_FALLBACK
    )


def _parse_weights(raw: str):
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 4:
        raise click.ClickException(
            "--weights needs four comma-separated numbers: direct,relational,memory,chained"
        )
    try:
        weights = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise click.ClickException(f"bad --weights: {exc}")
    if sum(weights) <= 0:
        raise click.ClickException("--weights must sum to a positive value")
    return weights


@main.command("gen-corpus")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--n", "n_entries", required=True, type=int)
@click.option(
    "--weights",
    default=",".join(str(w) for w in DEFAULT_WEIGHTS),
    show_default=True,
    help="direct,relational,memory,chained shares",
)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def gen_corpus_cmd(scene_path: str, n_entries: int, weights: str, seed: int, out_path: str):
    """Generate an oracle-verified corpus for a scene (deterministic per seed)."""
    graph = _load_scene(scene_path)
    entries, warnings = generate_corpus(
        graph,
        n_entries,
        weights=_parse_weights(weights),
        seed=seed,
        scene_ref=Path(scene_path).name,
    )
    for warning in warnings:
        click.echo(f"warning: {warning}", err=True)
    write_corpus(entries, out_path)
    click.echo(f"wrote {len(entries)} entries to {out_path}")


@main.command("batch")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--parallel", is_flag=True, help="Only valid for memory-free corpora.")
@click.option("--now", "now_raw", default=None, help="RFC 3339 clock override.")
def batch_cmd(scene_path: str, corpus_path: str, report_path: str, parallel: bool, now_raw: str):
    """Evaluate a corpus against a scene and write a JSON report."""
    graph = _load_scene(scene_path)
    try:
        entries = read_corpus(corpus_path)
    except (OSError, ValueError, KeyError) as exc:
        raise click.ClickException(f"cannot read corpus {corpus_path!r}: {exc}")
    mismatched = [
        e.scene_ref
        for e in entries
        if e.scene_ref and e.scene_ref != Path(scene_path).name
    ]
    if mismatched:
        raise click.ClickException(
            f"corpus was generated for scene {mismatched[0]!r}, not {Path(scene_path).name!r}"
        )
    now = None
    if now_raw:
        from .scene_graph import parse_timestamp

        now = parse_timestamp(now_raw)
    try:
        report = evaluate_corpus(graph, entries, now=now, parallel=parallel)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    Path(report_path).write_text(json.dumps(report, indent=2, sort_keys=True))
    totals = report["totals"]
    click.echo(
        "entries={entries} resolved={resolved} fallback={fallback} "
        "parse_error={parse_error} accuracy={acc:.3f}".format(
            **totals, acc=report["accuracy"]
        )
    )


@main.command("serve")
@click.option("--port", default=8023, show_default=True, type=int)
@click.option("--data-dir", default=None, type=click.Path())
def serve_cmd(port: int, data_dir: str):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(data_dir=data_dir), host="127.0.0.1", port=port)


if __name__ == "__main__":
    main()
