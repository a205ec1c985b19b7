"""Command line interface: run the pipeline, evaluate matchers, serve HTTP."""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click

from schemamap.core import ingest_csv
from schemamap.evaluation import (
    CupidMatcher,
    EvalReport,
    LabeledCorpus,
    LsdMatcher,
    PipelineMatcher,
    eval_matcher,
    generate_corpus,
    perturb_prefix,
    run_ablation,
    sweep_kshot,
)
from schemamap.pipeline import Pipeline, PipelineConfig, SessionManager
from schemamap.similarity import load_vectors


@click.group(name="map")
def main() -> None:
    """Schema matching pipeline: map source tables onto a target schema."""


def _load_config(path: str) -> PipelineConfig:
    return PipelineConfig.from_file(path)


def _apply_overrides(config: PipelineConfig, no_ner: bool, no_rag: bool, backend: str | None) -> PipelineConfig:
    if no_ner:
        config = replace(config, ner_enabled=False)
    if no_rag:
        config = replace(config, rag_enabled=False)
    if backend:
        config = replace(config, backend=replace(config.backend, kind=backend))
    return config


@main.command()
@click.option("--table", "table_path", required=True, type=click.Path(exists=True), help="CSV table to map.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Pipeline config JSON.")
@click.option("--no-ner", is_flag=True, help="Disable the entity/dtype destination filter.")
@click.option("--no-rag", is_flag=True, help="Disable the top-k retrieval compressor.")
@click.option("--backend", type=click.Choice(["oracle", "llm"]), default=None, help="Override the matcher backend.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Also write the session JSON here.")
def run(table_path: str, config_path: str, no_ner: bool, no_rag: bool, backend: str | None, out_path: str | None) -> None:
    """Map one CSV table and persist a review session."""
    config = _apply_overrides(_load_config(config_path), no_ner, no_rag, backend)
    ingest = ingest_csv(table_path, sample_limit=config.sample_limit)
    if ingest.warning_count:
        click.echo(f"warning: {ingest.warning_count} ragged row(s) normalized", err=True)
    manager = SessionManager(config)
    session = manager.run_table(ingest.columns)
    if out_path:
        Path(out_path).write_text(
            json.dumps(session.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
        )
    click.echo(f"session {session.id} ({session.status.value})")
    for mapping in session.mappings:
        click.echo(
            f"  {mapping.source:<30} -> {mapping.object_type}.{mapping.predicted_attribute}"
            f"  ({mapping.confidence:.2f}, {mapping.provenance.value})"
        )
    keys = [k.column for k in session.keys if k.is_key]
    if keys:
        click.echo(f"  keys: {', '.join(keys)}")
    if session.errors:
        click.echo(f"  errors: {len(session.errors)} column(s) not mapped", err=True)
        sys.exit(1)


@main.command()
@click.option("--corpus", "corpus_paths", required=True, multiple=True, type=click.Path(exists=True), help="Labeled corpus JSON (repeatable).")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Pipeline config JSON.")
@click.option("--arms", default="no-filter,ner,rag,both", show_default=True, help="Comma-separated filter arms.")
@click.option("--baselines", default="", help="Comma-separated baselines to include: cupid,lsd.")
@click.option("--shots", default="", help="Comma-separated exemplar counts for a k-shot sweep.")
@click.option("--prefix", default="", help="Also evaluate with this prefix added to every column name.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the report JSON here.")
def eval(corpus_paths: tuple, config_path: str, arms: str, baselines: str, shots: str, prefix: str, out_path: str | None) -> None:
    """Benchmark the pipeline (and optional baselines) on labeled corpora."""
    config = _load_config(config_path)
    corpora = [LabeledCorpus.load(p) for p in corpus_paths]
    arm_list = tuple(a.strip() for a in arms.split(",") if a.strip())

    report = run_ablation(corpora, config, arms=arm_list)

    baseline_list = [b.strip() for b in baselines.split(",") if b.strip()]
    if baseline_list:
        pipeline = Pipeline(config)
        table = load_vectors(config.vector_path) if config.vector_path else None
        for name in baseline_list:
            if name == "cupid":
                matcher = CupidMatcher(pipeline.schema)
            elif name == "lsd":
                matcher = LsdMatcher(pipeline.schema, table)
            else:
                raise click.BadParameter(f"unknown baseline {name!r}")
            for corpus in corpora:
                report.add(eval_matcher(corpus, matcher, arm="baseline"))

    if shots:
        shot_list = [int(s) for s in shots.split(",") if s.strip()]
        for corpus in corpora:
            for row in sweep_kshot(corpus, config, shot_list).rows:
                report.add(row)

    if prefix:
        baseline_rows = {
            (r.domain): r.accuracy for r in report.rows if r.arm == "both"
        }
        pipeline = Pipeline(config)
        for corpus in corpora:
            perturbed = perturb_prefix(corpus, prefix)
            row = eval_matcher(perturbed, PipelineMatcher(pipeline), arm=f"prefix:{prefix}")
            report.add(row)
            if corpus.domain in baseline_rows:
                delta = row.accuracy - baseline_rows[corpus.domain]
                click.echo(
                    f"prefix {prefix!r} on {corpus.domain}: accuracy delta {delta:+.4f}"
                )

    click.echo(report.render())
    if out_path:
        report.save(out_path)
        click.echo(f"report written to {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Pipeline config JSON.")
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(config_path: str, port: int, host: str) -> None:
    """Serve the HTTP review API (and the UI bundle when configured)."""
    import uvicorn

    from schemamap.service import create_app

    config = _load_config(config_path)
    uvicorn.run(create_app(config), host=host, port=port, log_level="info")


@main.command("gen-corpus")
@click.option("--domain", required=True, type=click.Choice(["person", "sales", "products", "tickets"]))
@click.option("--cases", default=50, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--mutate", is_flag=True, help="Randomly mutate column name variants.")
@click.option("--out", "out_path", required=True, type=click.Path())
def gen_corpus(domain: str, cases: int, seed: int, mutate: bool, out_path: str) -> None:
    """Generate a synthetic labeled corpus for one domain."""
    corpus = generate_corpus(domain, cases, seed=seed, mutate=mutate)
    corpus.save(out_path)
    click.echo(f"{len(corpus)} cases written to {out_path}")


if __name__ == "__main__":
    main()
