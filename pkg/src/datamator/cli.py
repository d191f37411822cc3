"""Command-line interface: inspect datasets, run pipelines, compile
datamations, transpile to SQL, evaluate corpora, and serve the HTTP API."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import Config, load_config
from .corpus import load_corpus
from .datamation.doc import doc_to_dict, generate
from .datamation.svg import render_keyframe_svg
from .decomposer import DecomposeError, resolve
from .executor import ExecError, execute
from .ingest import IngestError, load_dataset_dir
from .model import Groups, Projection, Records, Scalar
from .sql import Unsupported, run_eval, transpile_to_sql
from .text import NoValidCandidate, ParseError, parse, serialize, validate


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML config file; DATAMATOR_* env vars override it.")
@click.pass_context
def main(ctx, config_path):
    ctx.obj = load_config(config_path)


def _load_data(path: str):
    try:
        return load_dataset_dir(path)
    except (IngestError, ValueError) as exc:
        raise click.ClickException(str(exc))


def _parse_pipeline(text: str, dataset):
    try:
        pipeline = parse(text)
    except ParseError as exc:
        raise click.ClickException(str(exc))
    report = validate(pipeline, dataset.schema)
    if not report.valid:
        raise click.ClickException(f"invalid pipeline: {report.summary()}")
    return pipeline


def _describe_result(result) -> str:
    if isinstance(result, Scalar):
        return f"scalar {result.value!r}"
    if isinstance(result, Projection):
        return f"projection of {result.column} over {len(result.row_ids)} rows"
    if isinstance(result, Records):
        focus = f", focus {result.focus}" if result.focus else ""
        return f"{len(result.row_ids)} records of {result.table}{focus}"
    if isinstance(result, Groups):
        return f"{len(result.entries)} groups by {result.key_column}"
    return repr(result)


@main.command()
@click.argument("data_dir", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="Emit the schema as JSON.")
def ingest(data_dir, as_json):
    """Load a dataset directory and report its inferred schema."""
    dataset = _load_data(data_dir)
    if as_json:
        payload = {
            t.name: {c.name: c.type.value for c in t.columns}
            for t in dataset.schema.tables
        }
        click.echo(json.dumps(payload, indent=2))
        return
    for table in dataset.schema.tables:
        rows = dataset.table_rows(table.name)
        click.echo(f"{table.name} ({len(rows)} rows)")
        for col in table.columns:
            click.echo(f"  {col.name}: {col.type.value}")


@main.command()
@click.argument("question")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--datamation", "doc_path", type=click.Path(), default=None,
              help="Write the compiled datamation JSON here.")
@click.pass_obj
def ask(config: Config, question, data_dir, doc_path):
    """Resolve a natural-language question and print the answer."""
    dataset = _load_data(data_dir)
    try:
        resolution = resolve(question, dataset, config)
    except (DecomposeError, NoValidCandidate) as exc:
        raise click.ClickException(str(exc))
    trace = execute(resolution.pipeline, dataset, tie_policy=config.tie_policy)
    click.echo(f"pipeline: {serialize(resolution.pipeline)}")
    click.echo(f"answer: {json.dumps(trace.answer)}")
    if doc_path:
        doc = generate(resolution.pipeline, dataset, config)
        Path(doc_path).write_text(json.dumps(doc_to_dict(doc)), encoding="utf-8")
        click.echo(f"datamation written to {doc_path}")


@main.command(name="exec")
@click.argument("pipeline_text")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--trace", "show_trace", is_flag=True, help="Print per-step results.")
@click.pass_obj
def exec_cmd(config: Config, pipeline_text, data_dir, show_trace):
    """Execute a pipeline and print its answer."""
    dataset = _load_data(data_dir)
    pipeline = _parse_pipeline(pipeline_text, dataset)
    try:
        trace = execute(pipeline, dataset, tie_policy=config.tie_policy)
    except ExecError as exc:
        raise click.ClickException(str(exc))
    if show_trace:
        for i, result in enumerate(trace.per_step, start=1):
            click.echo(f"step {i}: {_describe_result(result)}")
    click.echo(json.dumps(trace.answer))


@main.command(name="validate")
@click.argument("pipeline_text")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--lenient", is_flag=True, help="Skip the dead-step rule (V7).")
def validate_cmd(pipeline_text, data_dir, lenient):
    """Validate a pipeline against a dataset's schema."""
    dataset = _load_data(data_dir)
    try:
        pipeline = parse(pipeline_text)
    except ParseError as exc:
        raise click.ClickException(str(exc))
    report = validate(pipeline, dataset.schema, strict=not lenient)
    if report.valid:
        click.echo("valid")
        return
    for violation in report.violations:
        click.echo(f"{violation.rule_id} step {violation.step_index}: {violation.message}")
    sys.exit(1)


@main.command()
@click.argument("pipeline_text")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("-o", "--out", "out_path", type=click.Path(), default=None)
@click.pass_obj
def compile(config: Config, pipeline_text, data_dir, out_path):
    """Compile a pipeline into a datamation document (JSON)."""
    dataset = _load_data(data_dir)
    pipeline = _parse_pipeline(pipeline_text, dataset)
    doc = generate(pipeline, dataset, config)
    text = json.dumps(doc_to_dict(doc), indent=2)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


@main.command(name="render-frames")
@click.argument("pipeline_text")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_obj
def render_frames(config: Config, pipeline_text, data_dir, out_dir):
    """Render one SVG per key-frame of the compiled datamation."""
    dataset = _load_data(data_dir)
    pipeline = _parse_pipeline(pipeline_text, dataset)
    doc = generate(pipeline, dataset, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(len(doc.keyframes)):
        path = out / f"frame_{i:02d}.svg"
        path.write_text(render_keyframe_svg(doc, i), encoding="utf-8")
    click.echo(f"wrote {len(doc.keyframes)} frames to {out}")


@main.command()
@click.argument("pipeline_text")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
def transpile(pipeline_text, data_dir):
    """Transpile a pipeline to SQL."""
    dataset = _load_data(data_dir)
    pipeline = _parse_pipeline(pipeline_text, dataset)
    try:
        click.echo(transpile_to_sql(pipeline, dataset.schema))
    except Unsupported as exc:
        raise click.ClickException(str(exc))


@main.command(name="eval")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--sut", type=click.Choice(["identity", "rules"]), default="identity",
              help="System under test: echo the gold pipeline, or the rule decomposer.")
@click.option("--json", "json_path", type=click.Path(), default=None)
@click.pass_obj
def eval_cmd(config: Config, corpus_path, sut, json_path):
    """Measure execution accuracy over a JSONL corpus."""
    load = load_corpus(corpus_path)
    for line_no, message in load.errors:
        click.echo(f"corpus line {line_no}: {message}", err=True)
    if not load.records:
        raise click.ClickException("corpus contains no loadable records")

    if sut == "identity":
        system = lambda record: record.gold_pipeline  # noqa: E731
    else:
        from .sql import resolve_dataset_ref

        cache: dict[str, object] = {}

        def system(record):
            if record.dataset_ref not in cache:
                cache[record.dataset_ref] = resolve_dataset_ref(record.dataset_ref)
            resolution = resolve(record.question, cache[record.dataset_ref], config)
            return serialize(resolution.pipeline)

    summary = run_eval(list(load.records), system)
    click.echo(summary.format_table())
    if json_path:
        Path(json_path).write_text(summary.to_json(), encoding="utf-8")
        click.echo(f"wrote {json_path}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.pass_obj
def serve(config: Config, host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import build_app

    uvicorn.run(build_app(config), host=host, port=port)


if __name__ == "__main__":
    main()
