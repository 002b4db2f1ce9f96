"""Command-line interface for LeMoLE."""

import functools
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

import click
from rich.console import Console
from rich.table import Table

from . import __version__, runs
from .checks import run_all_checks
from .config import Config
from .errors import ConfigError, LemoleError
from .logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

console = Console()


def _int_list(value: Optional[str]) -> Optional[List[int]]:
    if not value:
        return None
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got '{value}'")


def common_options(fn):
    """Options every subcommand accepts."""

    @click.option("--config", "config_path", type=click.Path(dir_okay=False),
                  help="YAML run configuration")
    @click.option("--seed", type=int, help="Override training.seed")
    @click.option("--out-dir", type=click.Path(file_okay=False), help="Override output.dir")
    @click.option("--threads", type=int, help="Cap evaluation workers (eval.threads)")
    @click.option("--verbose", "-v", is_flag=True, help="Enable debug output")
    @click.option("--quiet", "-q", is_flag=True, help="Only report errors")
    @functools.wraps(fn)
    def wrapper(config_path, seed, out_dir, threads, verbose, quiet, **kwargs):
        config = load_config(config_path, seed, out_dir, threads)
        level = logging.DEBUG if verbose else logging.ERROR if quiet else logging.INFO
        setup_logging(config.get("output.log_file"), level)
        return fn(config=config, quiet=quiet, **kwargs)

    return wrapper


def load_config(config_path: Optional[str], seed: Optional[int] = None,
                out_dir: Optional[str] = None, threads: Optional[int] = None) -> Config:
    """Config file first, then command-line flags on top."""
    config = Config()
    if config_path:
        config.load(config_path)
    else:
        config.apply_env_overrides()
    if seed is not None:
        config.set("training.seed", seed)
    if out_dir is not None:
        config.set("output.dir", out_dir)
    if threads is not None:
        config.set("eval.threads", max(1, threads))
    return config


def print_rows(title: str, rows: Sequence[Dict[str, Any]], quiet: bool) -> None:
    if quiet or not rows:
        return
    table = Table(title=title)
    columns = list(rows[0])
    for column in columns:
        table.add_column(column)
    for row in rows:
        table.add_row(*(f"{row.get(c):.6g}" if isinstance(row.get(c), float) else str(row.get(c))
                        for c in columns))
    console.print(table)


@click.group()
@click.version_option(__version__, prog_name="lemole")
def cli():
    """LeMoLE: mixture of linear experts conditioned on frozen text embeddings."""


@cli.command()
@common_options
def train(config: Config, quiet: bool):
    """Train a model; writes checkpoint, history and resolved config."""
    paths = runs.run_train(config)
    if not quiet:
        for name, path in paths.items():
            console.print(f"[green]✓[/green] {name}: {path}")


@cli.command()
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@common_options
def evaluate(config: Config, quiet: bool, checkpoint: str):
    """Score CHECKPOINT and the persistence baseline on the test split."""
    print_rows("Evaluation", runs.run_evaluate(config, checkpoint), quiet)


@cli.command()
@common_options
def ablate(config: Config, quiet: bool):
    """Prompt ablation: full, -static, -dynamic and -both."""
    print_rows("Prompt ablation", runs.run_ablate(config), quiet)


@cli.command()
@click.option("--m-values", help="Comma-separated expert counts (default eval.m_values)")
@common_options
def sweep(config: Config, quiet: bool, m_values: Optional[str]):
    """Expert-count sweep."""
    print_rows("Expert sweep", runs.run_sweep(config, _int_list(m_values)), quiet)


@cli.command()
@click.option("--horizons", "horizon_values", help="Comma-separated horizons (default eval.horizons)")
@common_options
def horizons(config: Config, quiet: bool, horizon_values: Optional[str]):
    """Long-range protocol: one model per forecast horizon."""
    print_rows("Horizons", runs.run_horizons(config, _int_list(horizon_values)), quiet)


@cli.command()
@click.option("--horizons", "horizon_values",
              help="Comma-separated horizons (default: model.horizon)")
@common_options
def domains(config: Config, quiet: bool, horizon_values: Optional[str]):
    """Time-domain against frequency-domain experts."""
    print_rows("Expert domains", runs.run_domains(config, _int_list(horizon_values)), quiet)


@cli.command()
@click.argument("csv_path", type=click.Path(dir_okay=False))
@click.option("--column", required=True, help="Column to test")
@click.option("--max-lag", type=int, help="Lagged differences (default: Schwert's rule)")
@common_options
def adf(config: Config, quiet: bool, csv_path: str, column: str, max_lag: Optional[int]):
    """Augmented Dickey-Fuller statistic of one CSV column."""
    result = runs.run_adf(config, csv_path, column, max_lag)
    if not quiet:
        console.print(
            f"ADF statistic {result.statistic:.4f} (lag {result.lag_order}, "
            f"p {result.p_bucket})"
        )


@cli.command()
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@click.option("--reps", type=int, help="Timed repetitions (default eval.bench_reps)")
@common_options
def bench(config: Config, quiet: bool, checkpoint: str, reps: Optional[int]):
    """Parameter count and training/inference timings of CHECKPOINT."""
    print_rows("Benchmark", [runs.run_bench(config, checkpoint, reps)], quiet)


@cli.command()
@click.argument("output", type=click.Path(dir_okay=False))
@common_options
def generate(config: Config, quiet: bool, output: str):
    """Write the bundled synthetic dataset to OUTPUT as CSV."""
    path = runs.run_generate(config, output)
    if not quiet:
        console.print(f"[green]✓[/green] wrote {path}")


@cli.command()
@common_options
def check(config: Config, quiet: bool):
    """Validate a configuration without running anything."""
    success, messages = run_all_checks(config)
    if not quiet:
        for msg in messages:
            console.print(msg if msg.startswith("✓") else f"[red]✗ {msg}[/red]")
    return EXIT_OK if success else EXIT_USAGE


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the CLI.

    Returns:
        int: 0 on success, 1 for usage or configuration errors, 2 for run failures
    """
    try:
        result = cli.main(args=list(argv) if argv is not None else None,
                          prog_name="lemole", standalone_mode=False)
    except click.exceptions.Abort:
        logger.error("Aborted")
        return EXIT_FAILURE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except ConfigError as e:
        for message in e.messages:
            logger.error(message)
        return EXIT_USAGE
    except LemoleError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE
    except Exception as e:
        logger.exception(f"An error occurred: {e}")
        return EXIT_FAILURE
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
