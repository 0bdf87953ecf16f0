"""Command-line entry points for the geolocation pipeline."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import yaml

from .corpus import save_corpus
from .partition import load_partition, partition_to_geojson
from .pipeline import (
    Pipeline,
    PipelineConfig,
    StageError,
    load_config,
    run_pipeline,
    set_by_dotted_path,
)
from .synth import generate_synthetic_corpus

EXIT_CODES = {
    "synth": 2, "ingest": 3, "featurize": 4, "partition": 5,
    "train": 6, "evaluate": 7,
}


def common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      help="YAML config file.")(fn)
    fn = click.option("--preset", type=str, default=None,
                      help="Named preset: geotext, utgeo2011, twitterworld, synthetic.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Master seed override.")(fn)
    fn = click.option("--out-dir", type=click.Path(), default="artifacts",
                      help="Artifact directory.")(fn)
    fn = click.option("--corpus", "corpus_path", type=click.Path(), default=None,
                      help="Corpus file (JSONL or TSV).")(fn)
    fn = click.option("--format", "corpus_format", type=click.Choice(["jsonl", "tsv"]),
                      default=None, help="Corpus file format.")(fn)
    fn = click.option("--stopwords", "stopwords_path", type=click.Path(exists=True),
                      default=None, help="Stop-word list file.")(fn)
    fn = click.option("--stem", type=click.Choice(["on", "off"]), default=None,
                      help="Toggle Porter stemming.")(fn)
    fn = click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE",
                      help="Override a config entry by dotted path.")(fn)
    fn = click.option("--force", is_flag=True, help="Ignore cached stage artifacts.")(fn)
    return fn


def build_config(config_path, preset, seed, corpus_path, corpus_format,
                 stopwords_path, stem, assignments) -> PipelineConfig:
    overrides: dict = {}
    if seed is not None:
        overrides["seed"] = seed
    if corpus_path is not None:
        set_by_dotted_path(overrides, "corpus.path", str(corpus_path))
    if corpus_format is not None:
        set_by_dotted_path(overrides, "corpus.format", corpus_format)
    if stopwords_path is not None:
        set_by_dotted_path(overrides, "preprocessing.stopwords_path", str(stopwords_path))
    if stem is not None:
        set_by_dotted_path(overrides, "preprocessing.stem", stem == "on")
    for assignment in assignments:
        key, _, value = assignment.partition("=")
        if not key or not _:
            raise click.BadParameter(f"expected KEY=VALUE, got {assignment!r}")
        set_by_dotted_path(overrides, key, yaml.safe_load(value))
    return load_config(config_path, preset, overrides)


def run_upto(stage: str, out_dir, force, **config_kwargs) -> Pipeline:
    config = build_config(**config_kwargs)
    pipe = Pipeline(config, out_dir)
    try:
        pipe.ensure(stage, force=force)
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CODES.get(exc.stage, 1))
    return pipe


@click.group()
def main():
    """Multiview geolocation pipeline."""


def stage_command(stage: str, doc: str):
    @main.command(name=stage, help=doc)
    @common_options
    def _cmd(out_dir, force, **kwargs):
        pipe = run_upto(stage, out_dir, force, **kwargs)
        ran = ", ".join(pipe.stages_run) or "nothing (all cached)"
        click.echo(f"{stage}: done; ran {ran}")
    return _cmd


stage_command("ingest", "Load and validate the corpus.")
stage_command("featurize", "Compute all four feature views.")
stage_command("partition", "Build the geographic class partition.")
stage_command("train", "Train the multi-branch classifier.")


@main.command(help="Generate a synthetic corpus file.")
@common_options
@click.option("--out", "out_file", type=click.Path(), default=None,
              help="Corpus file to write (default: <out-dir>/synthetic.jsonl).")
def synth(out_dir, force, out_file, **kwargs):
    config = build_config(**kwargs)
    target = Path(out_file) if out_file else Path(out_dir) / "synthetic.jsonl"
    target.parent.mkdir(parents=True, exist_ok=True)
    try:
        corpus, _ = generate_synthetic_corpus(config.synth_spec(), config.preprocess())
        save_corpus(corpus, target, "jsonl")
    except Exception as exc:
        click.echo(f"error: stage 'synth' failed: {exc}", err=True)
        sys.exit(EXIT_CODES["synth"])
    counts = corpus.split_counts
    click.echo(f"synth: wrote {len(corpus.users)} users to {target} "
               f"(train {counts['train']}, dev {counts['dev']}, test {counts['test']})")


@main.command(help="Evaluate on the test split and write the report.")
@common_options
def evaluate(out_dir, force, **kwargs):
    pipe = run_upto("evaluate", out_dir, force, **kwargs)
    report = json.loads((Path(out_dir) / "report.json").read_text("utf-8"))
    click.echo(json.dumps(report, sort_keys=True, indent=2))


@main.command(help="Run every stage end to end.")
@common_options
def run(out_dir, force, **kwargs):
    config = build_config(**kwargs)
    try:
        outcome = run_pipeline(config, out_dir, force=force)
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CODES.get(exc.stage, 1))
    click.echo(json.dumps(outcome["report"], sort_keys=True, indent=2))


@main.command(name="export-grid", help="Export the partition as GeoJSON.")
@click.option("--out-dir", type=click.Path(exists=True), default="artifacts")
@click.option("--output", type=click.Path(), required=True)
def export_grid(out_dir, output):
    partition_path = Path(out_dir) / "partition.json"
    if not partition_path.exists():
        click.echo("error: no partition.json; run the partition stage first", err=True)
        sys.exit(EXIT_CODES["partition"])
    partition = load_partition(partition_path)
    Path(output).write_text(
        json.dumps(partition_to_geojson(partition), sort_keys=True), "utf-8"
    )
    click.echo(f"export-grid: wrote {partition.num_classes} classes to {output}")


if __name__ == "__main__":
    main()
