from collections.abc import Callable
import functools
import logging
from pathlib import Path

import click
from kedro.framework.cli.utils import LazyGroup

from mindmerger_lab.config.experiment import ExperimentConfig, load_config
from mindmerger_lab.core import (
    ConfigError,
    ExitCode,
    MindLabError,
    SweepAxis,
    UnknownVariantError,
    VariantId,
)
from mindmerger_lab.evalkit.compare import compare_runs, compare_variants, load_run_metrics
from mindmerger_lab.evalkit.report import accuracy_table
from mindmerger_lab.pipeline.experiment import (
    corpora_for,
    eval_only as evaluate_stored,
    run_experiment,
    stored_metrics_match,
    sweep as run_sweep,
)
from mindmerger_lab.pipeline.gradcheck_suite import run_gradcheck_suite
from mindmerger_lab.pipeline.rundir import RunLayout
from mindmerger_lab.synthlang.io import write_corpus
from mindmerger_lab.utils import canonical_json, exception_to_str, write_template, write_text_atomic


CONFIG_TEMPLATE = "mindlab.yml"
VALIDATION_ERRORS = (ConfigError, UnknownVariantError)

_CONFIG_OPTION = click.option(
    "--config",
    "-c",
    "config_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Path to the experiment YAML file.",
)
_SEEDS_OPTION = click.option(
    "--seeds", default=None, help="Comma-separated seeds overriding the config, e.g. '1,2,3'."
)
_VARIANTS_OPTION = click.option(
    "--variants",
    default=None,
    help="Comma-separated variant ids overriding the config, e.g. 'full,monoreason'.",
)
_OUT_OPTION = click.option(
    "--out",
    default=None,
    type=click.Path(file_okay=False, path_type=Path),
    help="Output root for run directories. Default to the config's 'output_root'.",
)
_WORKERS_OPTION = click.option(
    "--workers", default=None, type=int, help="Number of (variant, seed) runs executed concurrently."
)
_CACHE_OPTION = click.option(
    "--cache",
    default=None,
    type=click.Path(file_okay=False, path_type=Path),
    help="Cache directory for base checkpoints. Default to $MINDLAB_CACHE_DIR, then "
    "'<out>/.cache'.",
)


def _split(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


def _parse_seeds(value: str | None) -> list[int] | None:
    items = _split(value)
    if items is None:
        return None
    try:
        return [int(item) for item in items]
    except ValueError as e:
        raise ConfigError(f"--seeds must be comma-separated integers, got '{value}'") from e


def _parse_variants(value: str | None) -> list[str] | None:
    items = _split(value)
    if items is None:
        return None
    valid = [variant.value for variant in VariantId]
    unknown = [item for item in items if item not in valid]
    if unknown:
        raise UnknownVariantError(f"Unknown variant(s) {unknown}, expected names from {valid}")
    return items


def _load(
    config_path: Path,
    seeds: str | None = None,
    variants: str | None = None,
    workers: int | None = None,
) -> ExperimentConfig:
    """The validated config with the command-line overrides applied."""
    return load_config(config_path).with_overrides(
        seeds=_parse_seeds(seeds), variants=_parse_variants(variants), workers=workers
    )


def exit_codes(command: Callable) -> Callable:
    """Map lab errors to exit codes: validation failures to 3, runtime failures to 4."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except VALIDATION_ERRORS as e:
            click.secho(click.style(f"Invalid input: {exception_to_str(e)}", fg="red"), err=True)
            raise click.exceptions.Exit(ExitCode.VALIDATION_FAILURE) from e
        except MindLabError as e:
            click.secho(click.style(f"Run failed: {exception_to_str(e)}", fg="red"), err=True)
            raise click.exceptions.Exit(ExitCode.RUNTIME_FAILURE) from e

    return wrapper


@click.group(
    name="mindlab",
    cls=LazyGroup,
    lazy_subcommands={
        "init": "mindmerger_lab.framework.cli.cli.init",
        "run": "mindmerger_lab.framework.cli.cli.run",
        "sweep": "mindmerger_lab.framework.cli.cli.sweep",
        "compare": "mindmerger_lab.framework.cli.cli.compare",
        "gen-corpus": "mindmerger_lab.framework.cli.cli.gen_corpus",
        "eval-only": "mindmerger_lab.framework.cli.cli.eval_only",
        "gradcheck": "mindmerger_lab.framework.cli.cli.gradcheck",
    },
)
@click.option("--verbose", "-v", is_flag=True, default=False, help="Log at DEBUG level.")
def cli(verbose: bool):
    """Desk-scale lab for merging a multilingual encoder into a frozen LLM."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@click.command(name="init")  # type: ignore
@click.option(
    "--path",
    "-p",
    default=CONFIG_TEMPLATE,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Where the 'mindlab.yml' experiment config should be created. Default to "
    "'./mindlab.yml'",
)
@click.option(
    "--force",
    "-f",
    is_flag=True,
    default=False,
    help="Update the template without any checks.",
)
def init(path: Path, force: bool):
    """Initialize a 'mindlab.yml' experiment config."""
    if path.is_file() and not force:
        click.secho(
            click.style(
                f"A config already exists at '{path}' You can use the ``--force`` option to "
                "override it.",
                fg="red",
            )
        )
        return
    try:
        write_template(CONFIG_TEMPLATE, path)
        click.secho(click.style(f"'{path}' successfully updated.", fg="green"))
    except FileNotFoundError:
        click.secho(
            click.style(
                f"No directory '{path.parent}' found. Please check this folder exists.", fg="red"
            )
        )


@click.command(name="run")  # type: ignore
@_CONFIG_OPTION
@_SEEDS_OPTION
@_VARIANTS_OPTION
@_OUT_OPTION
@_WORKERS_OPTION
@_CACHE_OPTION
@exit_codes
def run(
    config_path: Path,
    seeds: str | None,
    variants: str | None,
    out: Path | None,
    workers: int | None,
    cache: Path | None,
):
    """Run every (variant, seed) of an experiment and export its reports."""
    config = _load(config_path, seeds, variants, workers)
    result = run_experiment(config, out, cache)
    click.echo(accuracy_table(result.ordered()).to_string(index=False))
    click.secho(click.style(f"Run directory: {result.layout.root}", fg="green"))


@click.command(name="sweep")  # type: ignore
@_CONFIG_OPTION
@click.option(
    "--axis",
    required=True,
    type=click.Choice([axis.value for axis in SweepAxis]),
    help="The config value to sweep.",
)
@click.option(
    "--values",
    "axis_values",
    required=True,
    help="Comma-separated axis values, e.g. '0,100,1000' or 'linear,mlp2,mlp3'.",
)
@_SEEDS_OPTION
@_VARIANTS_OPTION
@_OUT_OPTION
@_WORKERS_OPTION
@_CACHE_OPTION
@exit_codes
def sweep(
    config_path: Path,
    axis: str,
    axis_values: str,
    seeds: str | None,
    variants: str | None,
    out: Path | None,
    workers: int | None,
    cache: Path | None,
):
    """One full run per axis value; emits the Lrl/Hrl/Avg table."""
    config = _load(config_path, seeds, variants, workers)
    table, path = run_sweep(config, SweepAxis(axis), _split(axis_values) or [], out, cache)
    click.echo(table.to_string(index=False))
    click.secho(click.style(f"Sweep table: {path}", fg="green"))


@click.command(name="compare")  # type: ignore
@click.argument(
    "run_dirs",
    nargs=-1,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
)
@click.option(
    "--baseline",
    default=None,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="Baseline run directory. Default to the first run directory.",
)
@click.option(
    "--baseline-variant",
    default=None,
    type=click.Choice([variant.value for variant in VariantId]),
    help="Compare the variants of a single run against this variant instead.",
)
@click.option(
    "--output",
    "-o",
    default=None,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Write the delta table to this CSV file.",
)
@exit_codes
def compare(
    run_dirs: tuple[Path, ...],
    baseline: Path | None,
    baseline_variant: str | None,
    output: Path | None,
):
    """Per-language and aggregate deltas against a baseline run (or variant)."""
    if baseline_variant is not None:
        if len(run_dirs) != 1:
            raise ConfigError("--baseline-variant compares the variants of exactly one run")
        table = compare_variants(
            load_run_metrics(run_dirs[0]), VariantId(baseline_variant), run=run_dirs[0].name
        )
    else:
        if baseline is None:
            if len(run_dirs) < 2:
                raise ConfigError("compare needs a baseline and at least one other run")
            baseline, run_dirs = run_dirs[0], run_dirs[1:]
        table = compare_runs(baseline, list(run_dirs))
    if output is not None:
        write_text_atomic(output, table.to_csv(index=False, lineterminator="\n"))
    click.echo(table.to_string(index=False))


@click.command(name="gen-corpus")  # type: ignore
@_CONFIG_OPTION
@click.option(
    "--out",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory the corpus files are written to.",
)
@exit_codes
def gen_corpus(config_path: Path, out: Path):
    """Generate the synthetic corpora of an experiment as TSV files."""
    written = write_corpus(corpora_for(load_config(config_path)), out)
    for name, count in written.items():
        click.echo(f"{name}: {count}")
    click.secho(click.style(f"Corpus written to '{out}'", fg="green"))


@click.command(name="eval-only")  # type: ignore
@_CONFIG_OPTION
@_SEEDS_OPTION
@_VARIANTS_OPTION
@_OUT_OPTION
@_CACHE_OPTION
@exit_codes
def eval_only(
    config_path: Path,
    seeds: str | None,
    variants: str | None,
    out: Path | None,
    cache: Path | None,
):
    """Re-evaluate stored checkpoints and check them against the stored metrics."""
    # --seeds and --variants select from the run; they do not change its fingerprint
    config = load_config(config_path)
    selected = _parse_variants(variants)
    records = evaluate_stored(
        config,
        out,
        cache,
        variants=[VariantId(variant) for variant in selected] if selected is not None else None,
        seeds=_parse_seeds(seeds),
    )
    root = out if out is not None else config.output_root
    layout = RunLayout(Path(root) / config.fingerprint())
    click.echo(accuracy_table(list(records.values())).to_string(index=False))
    mismatched = [
        f"{variant.value}-{seed}"
        for (variant, seed), record in records.items()
        if not stored_metrics_match(layout, record)
    ]
    if mismatched:
        click.secho(
            click.style(f"Metrics differ from the stored files: {mismatched}", fg="yellow")
        )
    else:
        click.secho(click.style("Metrics match the stored files.", fg="green"))


@click.command(name="gradcheck")  # type: ignore
@click.option(
    "--seeds", default="0,1,2,3,4", help="Comma-separated seeds. Default to '0,1,2,3,4'."
)
@click.option("--tolerance", default=1e-3, type=float, help="Maximum relative error.")
@click.option(
    "--output",
    "-o",
    default=None,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Write the results as JSON to this file.",
)
@exit_codes
def gradcheck(seeds: str, tolerance: float, output: Path | None):
    """Finite-difference check of every primitive and of both bridge-stage losses."""
    results = run_gradcheck_suite(_parse_seeds(seeds) or [], tolerance)
    for result in results:
        color = "green" if result.passed else "red"
        click.secho(
            click.style(f"{result.name} seed={result.seed} error={result.error:.3e}", fg=color)
        )
    if output is not None:
        rows = [
            {"name": r.name, "seed": r.seed, "error": r.error, "passed": r.passed} for r in results
        ]
        write_text_atomic(output, canonical_json(rows) + "\n")
    failed = [result for result in results if not result.passed]
    if failed:
        click.secho(click.style(f"{len(failed)} gradient check(s) failed", fg="red"), err=True)
        raise click.exceptions.Exit(ExitCode.RUNTIME_FAILURE)
