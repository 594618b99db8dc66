"""Command-line pipeline: synth | featurize | quantize | mine | train | eval | report.

Global flags pick the config file, seed, run directory and worker count; each
subcommand reads the previous stage's artifacts from the run directory and
writes its own atomically. Outputs are identical for any --jobs value.
"""

from __future__ import annotations

import functools
from pathlib import Path

import click

from vpkl import __version__, pipeline
from vpkl.config import ConfigError, load_config
from vpkl.pipeline import MissingArtifact, RunPaths


class App:
    def __init__(self, cfg, paths: RunPaths, jobs: int):
        self.cfg = cfg
        self.paths = paths
        self.jobs = jobs


def stage_command(fn):
    """Convert stage failures into clean CLI errors (exit code 2 for usage)."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MissingArtifact as exc:
            raise click.UsageError(str(exc)) from exc
        except (ValueError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


@click.group()
@click.version_option(version=__version__, prog_name="vpkl")
@click.option("--config", "config_path", type=click.Path(path_type=Path),
              default=None, help="INI run configuration; defaults apply when omitted.")
@click.option("--seed", type=int, default=None,
              help="Override the configured base seed.")
@click.option("--out", type=click.Path(path_type=Path), default=Path("vpkl-run"),
              show_default=True, help="Run directory shared by all stages.")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
              help="Worker processes for parallelisable stages.")
@click.pass_context
def main(ctx, config_path, seed, out, jobs):
    """Few-shot keyword localisation pipeline over a shared run directory."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    if seed is not None:
        cfg = cfg.with_seed(seed)
    ctx.obj = App(cfg=cfg, paths=RunPaths(root=out), jobs=jobs)


@main.command()
@click.pass_obj
@stage_command
def synth(app: App):
    """Generate the synthetic corpus, queries, support set and trial manifests."""
    summary = pipeline.stage_synth(app.cfg, app.paths)
    click.echo(
        f"synth: {summary['utterances']} utterances, "
        f"{len(summary['keywords'])} keywords, "
        f"{summary['support_segments']} support segments -> {app.paths.corpus}"
    )


@main.command()
@click.pass_obj
@stage_command
def featurize(app: App):
    """Compute mel features for WAV-backed manifests (synthetic mels pass through)."""
    marker = pipeline.stage_featurize(app.cfg, app.paths)
    click.echo(
        f"featurize: {marker['computed']} computed, "
        f"{marker['passthrough']} already present"
    )


@main.command()
@click.pass_obj
@stage_command
def quantize(app: App):
    """Train the unit codebook on the background split and encode all splits."""
    summary = pipeline.stage_quantize(app.cfg, app.paths)
    click.echo(
        f"quantize: codebook k={summary['codebook_size']}, "
        f"{summary['utterances']} utterances encoded "
        f"(substitution rate {summary['substitution_rate']})"
    )


@main.command()
@click.pass_obj
@stage_command
def mine(app: App):
    """Rank the corpus against the support set and mine positive/negative pairs."""
    report = pipeline.stage_mine(app.cfg, app.paths, jobs=app.jobs)
    click.echo(
        f"mine: accuracy {100 * report['mining_accuracy']:.1f}% "
        f"over {report['corpus_size']} utterances (n={report['n_pairs']})"
    )


@main.command()
@click.option("--pairs", "pairs_source", type=click.Choice(["mined", "oracle"]),
              default="mined", show_default=True,
              help="Train from mined pairs or ground-truth oracle pairs.")
@click.pass_obj
@stage_command
def train(app: App, pairs_source: str):
    """Train one model per seed with the contrastive objective."""
    summary = pipeline.stage_train(app.cfg, app.paths, pairs_source=pairs_source)
    for seed, entry in sorted(summary["seeds"].items()):
        click.echo(
            f"train: seed {seed} best epoch {entry['best_epoch']} "
            f"val loss {entry['best_val_loss']:.2f} "
            f"({entry['epochs_run']} epochs)"
        )


@main.command(name="eval")
@click.pass_obj
@stage_command
def eval_cmd(app: App):
    """Tune the detection threshold on dev and score the test trials."""
    doc = pipeline.stage_eval(app.cfg, app.paths, jobs=app.jobs)
    agg = doc["aggregate"]
    click.echo(
        f"eval: detection F1 {agg['detection']['f1']['mean']:.2f}, "
        f"localisation F1 {agg['localisation']['f1']['mean']:.2f} "
        f"over {agg['n_runs']} run(s)"
    )


@main.command()
@click.pass_obj
@stage_command
def report(app: App):
    """Render the metrics table and collate per-trial frame-score curves."""
    click.echo(pipeline.stage_report(app.cfg, app.paths), nl=False)
