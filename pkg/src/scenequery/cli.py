"""Headless command-line access to ingest, query runs, sweeps, export,
repository operations, and the HTTP service.

Exit codes: 0 ok, 1 usage, 2 validation, 3 io, 4 not-found.  With --json,
errors are emitted as machine-readable JSON on stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import engine, export, query, repo, store
from .derive import DerivationConfig
from .errors import (
    BadParameterPath,
    EntryNotFound,
    InvalidDocument,
    IoError,
    MissingManifest,
    OverlappingIntervals,
    ParseError,
    PersonMissingFeature,
    PersonUnknown,
    SceneQueryError,
    SchemaViolation,
    StorageError,
    TimestampOutOfRange,
    UnknownSchemaVersion,
    ValidationFailed,
)

EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NOT_FOUND = 4

_EXIT_CODES: list[tuple[type, int]] = [
    (PersonUnknown, EXIT_NOT_FOUND),
    (EntryNotFound, EXIT_NOT_FOUND),
    (PersonMissingFeature, EXIT_VALIDATION),
    (ParseError, EXIT_VALIDATION),
    (UnknownSchemaVersion, EXIT_VALIDATION),
    (ValidationFailed, EXIT_VALIDATION),
    (InvalidDocument, EXIT_VALIDATION),
    (BadParameterPath, EXIT_VALIDATION),
    (SchemaViolation, EXIT_VALIDATION),
    (TimestampOutOfRange, EXIT_VALIDATION),
    (OverlappingIntervals, EXIT_VALIDATION),
    (MissingManifest, EXIT_IO),
    (StorageError, EXIT_IO),
    (IoError, EXIT_IO),
]


@click.group()
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
@click.pass_context
def cli(ctx, as_json):
    """Scene search over multimodal conversation features."""
    ctx.ensure_object(dict)
    ctx.obj["json"] = as_json


def _read_query(path: str) -> query.QueryNode:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read query file: {exc}")
    return query.from_document(text)


def _load_bundle(path: str) -> store.SessionBundle:
    if not Path(path).is_dir():
        raise IoError(f"bundle directory not found: {path}")
    return store.load_bundle(path)


def _eval_config(bundle: store.SessionBundle, dt, merge_gap, min_seg) -> engine.EvaluationConfig:
    return engine.EvaluationConfig(
        sampling_period_s=dt if dt is not None else bundle.sampling_period_default,
        merge_gap_s=merge_gap,
        min_segment_s=min_seg,
    )


def _validated(node: query.QueryNode, bundle: store.SessionBundle) -> query.QueryNode:
    errors = query.validate(node, bundle)
    if errors:
        raise ValidationFailed(errors)
    return node


@cli.command()
@click.argument("bundle_dir", type=click.Path())
@click.pass_context
def ingest(ctx, bundle_dir):
    """Load and validate a bundle directory; print its summary."""
    bundle = _load_bundle(bundle_dir)
    meta = {
        "session_id": bundle.session_id,
        "duration_s": bundle.duration,
        "persons": list(bundle.persons),
        "sampling_period_s": bundle.sampling_period_default,
        "tracks": list(store.iter_track_descriptors(bundle)),
    }
    if ctx.obj["json"]:
        click.echo(json.dumps(meta, ensure_ascii=False, indent=2))
    else:
        click.echo(f"session {bundle.session_id}: {bundle.duration:g} s, persons {', '.join(bundle.persons)}")
        for desc in meta["tracks"]:
            click.echo(f"  {desc['person']:<12} {desc['feature']:<16} {desc['kind']}")


@cli.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path())
@click.option("--query", "query_file", required=True, type=click.Path())
@click.option("--person", required=True)
@click.option("--dt", type=float, default=None, help="sampling period in seconds (default: bundle's)")
@click.option("--merge-gap", type=float, default=0.0)
@click.option("--min-seg", type=float, default=0.0)
@click.option("--out", "out_file", type=click.Path(), default=None)
@click.pass_context
def run(ctx, bundle_dir, query_file, person, dt, merge_gap, min_seg, out_file):
    """Evaluate a query document against a bundle for one person."""
    bundle = _load_bundle(bundle_dir)
    node = _validated(_read_query(query_file), bundle)
    cfg = _eval_config(bundle, dt, merge_gap, min_seg)
    segments, traces = engine.evaluate(node, bundle, person, cfg)
    payload = engine.result_payload(bundle, person, node, cfg, segments, traces)
    data = engine.to_json_bytes(payload)
    if out_file:
        Path(out_file).write_bytes(data)
    if ctx.obj["json"]:
        sys.stdout.buffer.write(data)
    else:
        click.echo(f"{len(segments)} segment(s) for {person} in {bundle.session_id}:")
        for seg in segments:
            click.echo(f"  [{seg.start:10.3f}, {seg.end:10.3f})  {seg.end - seg.start:8.3f} s")
        if out_file:
            click.echo(f"wrote {out_file}")


@cli.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path())
@click.option("--query", "query_file", required=True, type=click.Path())
@click.option("--person", required=True)
@click.option("--param", "parameter_path", required=True, help="e.g. root.0.threshold")
@click.option("--from", "lo", required=True, type=float)
@click.option("--to", "hi", required=True, type=float)
@click.option("--steps", required=True, type=int)
@click.option("--dt", type=float, default=None)
@click.option("--merge-gap", type=float, default=0.0)
@click.option("--min-seg", type=float, default=0.0)
@click.pass_context
def sweep(ctx, bundle_dir, query_file, person, parameter_path, lo, hi, steps, dt, merge_gap, min_seg):
    """Evaluate a query across evenly spaced values of one parameter."""
    if steps < 2:
        raise ValidationFailed([query.ValidationError("root", "bad_steps", "steps must be >= 2")])
    if not lo < hi:
        raise ValidationFailed([query.ValidationError("root", "bad_range", "--from must be < --to")])
    bundle = _load_bundle(bundle_dir)
    node = _validated(_read_query(query_file), bundle)
    cfg = _eval_config(bundle, dt, merge_gap, min_seg)
    result = engine.sweep(node, bundle, person, cfg, parameter_path, lo, hi, steps)
    if ctx.obj["json"]:
        sys.stdout.buffer.write(engine.to_json_bytes(result.to_json()))
    else:
        click.echo(f"{parameter_path:>24}   segments   total duration")
        for value, count, duration in zip(result.values, result.segment_counts, result.total_durations_s):
            click.echo(f"{value:24.6g}   {count:8d}   {duration:12.3f} s")


@cli.command("export")
@click.option("--query", "query_file", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None,
              help="pin this bundle's derivation config and sampling period")
@click.option("--dt", type=float, default=None)
@click.option("--merge-gap", type=float, default=0.0)
@click.option("--min-seg", type=float, default=0.0)
@click.pass_context
def export_cmd(ctx, query_file, out_dir, bundle_dir, dt, merge_gap, min_seg):
    """Export a query as a standalone headless-runnable directory."""
    node = _read_query(query_file)
    bundle = _load_bundle(bundle_dir) if bundle_dir else None
    if bundle is not None:
        derivation = DerivationConfig.from_file(Path(bundle_dir) / "derivation.json")
        cfg = _eval_config(bundle, dt, merge_gap, min_seg)
    else:
        derivation = DerivationConfig()
        cfg = engine.EvaluationConfig(
            sampling_period_s=dt if dt is not None else 0.1,
            merge_gap_s=merge_gap, min_segment_s=min_seg)
    out = export.export_standalone(node, out_dir, derivation, cfg, bundle=bundle)
    if ctx.obj["json"]:
        click.echo(json.dumps({"exported": str(out)}))
    else:
        click.echo(f"exported to {out}")


@cli.group("repo")
def repo_cmd():
    """Knowledge-share repository operations."""


@repo_cmd.command("add")
@click.option("--org", required=True)
@click.option("--root", "repo_root", required=True, type=click.Path())
@click.option("--title", required=True)
@click.option("--description", default="")
@click.option("--query", "query_file", required=True, type=click.Path())
@click.option("--author", default="")
@click.pass_context
def repo_add(ctx, org, repo_root, title, description, query_file, author):
    """Contribute a query; reports the duplicate it matches, if any."""
    repository = repo.QueryRepository(repo_root)
    try:
        document = Path(query_file).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read query file: {exc}")
    outcome = repository.contribute(org, title, description, document, author)
    if isinstance(outcome, repo.DuplicateOf):
        if ctx.obj["json"]:
            click.echo(json.dumps({"duplicate_of": outcome.entry_id}))
        else:
            click.echo(f"duplicate of {outcome.entry_id}")
    else:
        if ctx.obj["json"]:
            click.echo(json.dumps({"entry_id": outcome}))
        else:
            click.echo(f"stored as {outcome}")


def _print_entries(ctx, entries):
    if ctx.obj["json"]:
        click.echo(json.dumps([e.to_json() for e in entries], ensure_ascii=False, indent=2))
    else:
        for e in entries:
            fork = f" (fork of {e.forked_from})" if e.forked_from else ""
            click.echo(f"{e.entry_id}  {e.title}{fork}")
            click.echo(f"    features: {', '.join(e.used_features)}")
            if e.description:
                click.echo(f"    {e.description}")


@repo_cmd.command("list")
@click.option("--org", required=True)
@click.option("--root", "repo_root", required=True, type=click.Path())
@click.pass_context
def repo_list(ctx, org, repo_root):
    """List all queries in an organization, newest first."""
    _print_entries(ctx, repo.QueryRepository(repo_root).search(org))


@repo_cmd.command("search")
@click.option("--org", required=True)
@click.option("--root", "repo_root", required=True, type=click.Path())
@click.option("--text", default=None)
@click.option("--features", default=None, help="comma-separated feature names")
@click.pass_context
def repo_search(ctx, org, repo_root, text, features):
    """Search by description text and/or used features."""
    wanted = {f for f in (features or "").split(",") if f} or None
    _print_entries(ctx, repo.QueryRepository(repo_root).search(org, text=text, features=wanted))


@repo_cmd.command("fork")
@click.option("--org", required=True)
@click.option("--root", "repo_root", required=True, type=click.Path())
@click.option("--id", "entry_id", required=True)
@click.option("--author", default="")
@click.pass_context
def repo_fork(ctx, org, repo_root, entry_id, author):
    """Fork an entry; the copy records its lineage."""
    entry = repo.QueryRepository(repo_root).fork(org, entry_id, author)
    if ctx.obj["json"]:
        click.echo(json.dumps(entry.to_json(), ensure_ascii=False, indent=2))
    else:
        click.echo(f"forked {entry_id} -> {entry.entry_id}")


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(), envvar="SCENEQUERY_DATA")
@click.option("--repo", "repo_root", required=True, type=click.Path(), envvar="SCENEQUERY_REPO")
@click.option("--host", default="127.0.0.1", envvar="SCENEQUERY_HOST")
@click.option("--port", default=8000, type=int, envvar="SCENEQUERY_PORT")
@click.option("--dt", type=float, default=None, envvar="SCENEQUERY_DT",
              help="override the default sampling period for all sessions")
def serve(data_dir, repo_root, host, port, dt):
    """Preprocess all bundles under --data and serve the HTTP API."""
    import uvicorn

    from .service import build_app

    default_cfg = engine.EvaluationConfig(sampling_period_s=dt) if dt is not None else None
    app = build_app(data_dir, repo_root, default_config=default_cfg)
    uvicorn.run(app, host=host, port=port)


def main() -> int:
    try:
        cli.main(standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.exceptions.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except SceneQueryError as exc:
        for etype, code in _EXIT_CODES:
            if isinstance(exc, etype):
                exit_code = code
                break
        else:
            exit_code = EXIT_VALIDATION
        if "--json" in sys.argv:
            click.echo(json.dumps(exc.to_json(), ensure_ascii=False), err=True)
        else:
            click.echo(f"error [{exc.code}]: {exc.message}", err=True)
        return exit_code


if __name__ == "__main__":
    sys.exit(main())
