"""Command-line driver: train, eval, baseline, oracle and sweep."""
from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Tuple

import click

from app import __version__, configure_environment, create_services
from app.config import RunConfig, load_config
from app.errors import ConfigError, InvalidArgumentError, StarRisError
from app.utils.env import env_str

LOGGER = logging.getLogger("starris.cli")

EXIT_RUNTIME = 1
EXIT_USAGE = 2


def run_options(command: Callable[..., Any]) -> Callable[..., Any]:
    """Flags shared by every verb; unset flags keep the document value."""
    options = [
        click.option("--config", "config_path", type=click.Path(path_type=Path), help="YAML run configuration."),
        click.option("--seed", type=int, help="Master random seed."),
        click.option("--out", "output_dir", type=click.Path(path_type=Path), help="Output directory."),
        click.option("--episodes", type=click.IntRange(min=1), help="Episodes E."),
        click.option("--steps", type=click.IntRange(min=1), help="Steps per episode S."),
        click.option("--pmax-dbm", "pmax_dbm", type=float, multiple=True, help="BS power budget in dBm (repeatable)."),
        click.option("--antennas", type=click.IntRange(min=1), help="BS antennas M."),
        click.option("--elements", type=click.IntRange(min=1), help="STAR-RIS elements N."),
        click.option("--users-t", "users_t", type=click.IntRange(min=0), help="Users in the transmission zone."),
        click.option("--users-r", "users_r", type=click.IntRange(min=0), help="Users in the reflection zone."),
        click.option("--rmin", type=float, help="Minimum user rate in bps/Hz."),
        click.option("--quiet", is_flag=True, help="Disable the progress bar."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@click.group()
@click.version_option(version=__version__, prog_name="starris")
def cli() -> None:
    """STAR-RIS NOMA energy-efficiency simulator with a DDPG optimizer."""


@cli.command()
@run_options
@click.option("--resume", type=click.Path(path_type=Path), help="Continue from a training checkpoint.")
def train(resume: Optional[Path], **flags: Any) -> None:
    """Train the DDPG agent and write metrics.csv plus a checkpoint."""
    _execute("train", flags, resume=resume)


@cli.command(name="eval")
@run_options
@click.option("--checkpoint", type=click.Path(path_type=Path), help="Checkpoint to evaluate.")
def evaluate(checkpoint: Optional[Path], **flags: Any) -> None:
    """Greedy-policy EE over fresh seeded channel realizations."""
    _execute("eval", flags, checkpoint=checkpoint)


@cli.command()
@run_options
def baseline(**flags: Any) -> None:
    """Random STAR-RIS coefficients with full-power random beams."""
    _execute("baseline", flags)


@cli.command()
@run_options
@click.option("--channels", type=click.Path(path_type=Path), help="Replay a channel_dump.json realization.")
def oracle(channels: Optional[Path], **flags: Any) -> None:
    """Exhaustive grid search on one channel realization."""
    _execute("oracle", flags, channels=channels)


@cli.command()
@run_options
def sweep(**flags: Any) -> None:
    """Train and evaluate across the configured sweep axis."""
    _execute("sweep", flags)


def resolve_config(mode: str, flags: dict[str, Any], checkpoint: Optional[Path] = None) -> RunConfig:
    config = load_config(flags.get("config_path"))
    pmax: Tuple[float, ...] = flags.get("pmax_dbm") or ()
    config = config.with_overrides(
        mode=mode,
        seed=flags.get("seed"),
        output_dir=flags.get("output_dir"),
        episodes=flags.get("episodes"),
        steps=flags.get("steps"),
        pmax_dbm=list(pmax) or None,
        antennas=flags.get("antennas"),
        elements=flags.get("elements"),
        users_t=flags.get("users_t"),
        users_r=flags.get("users_r"),
        rmin=flags.get("rmin"),
        checkpoint=checkpoint,
    )
    config = config.with_output_root(env_str("STARRIS_OUTPUT_ROOT", "runs"))
    return config.validate()


def _execute(mode: str, flags: dict[str, Any], **extras: Any) -> None:
    configure_environment()
    try:
        config = resolve_config(mode, flags, extras.pop("checkpoint", None))
    except (ConfigError, InvalidArgumentError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    service = create_services(config, quiet=flags.get("quiet", False), **extras)
    try:
        outcome = service.run()
    except InvalidArgumentError as exc:
        LOGGER.error("%s failed: %s", mode, exc)
        sys.exit(EXIT_USAGE)
    except (StarRisError, FileNotFoundError, OSError):
        LOGGER.exception("%s run failed; partial artifacts kept in %s", mode, config.output_dir)
        sys.exit(EXIT_RUNTIME)
    for artifact in outcome.artifacts:
        LOGGER.info("wrote %s", artifact)


def main() -> None:
    cli(prog_name="starris")


if __name__ == "__main__":
    main()
