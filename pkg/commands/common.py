"""Options and config handling shared by every subcommand."""

from __future__ import annotations

import functools
import logging
from typing import Callable, Optional

import click

from config import ExperimentConfig, load_experiment_config, parse_experiment_config, settings
from errors import ConfigInvalid
from logging_config import setup_logging

EXIT_CONFIG_INVALID = 2


def experiment_options(command: Callable) -> Callable:
    """--config, --out, --format, --jobs and --seed."""

    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                  help="Experiment JSON (default: config/default_experiment.json).")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                  help="Output directory (default: output.directory of the config).")
    @click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
                  help="Report format (default: output.format of the config).")
    @click.option("--jobs", type=click.IntRange(min=1), default=None,
                  help="Worker processes (default: NODALLAB_JOBS or 1).")
    @click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                  help="Root seed (default: seed of the config).")
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        return command(*args, **kwargs)

    return wrapper


def load_config(
    config_path: Optional[str],
    out_dir: Optional[str],
    fmt: Optional[str],
    seed: Optional[int],
) -> ExperimentConfig:
    """Load the config and apply command-line overrides; exits with code 2 when invalid."""
    try:
        data = load_experiment_config(config_path).model_dump()
        if out_dir is not None:
            data["output"]["directory"] = out_dir
        if fmt is not None:
            data["output"]["format"] = fmt
        if seed is not None:
            data["seed"] = seed
        config = parse_experiment_config(data)
    except ConfigInvalid as exc:
        for message in exc.messages:
            click.echo(f"config error: {message}", err=True)
        raise SystemExit(EXIT_CONFIG_INVALID)
    ctx = click.get_current_context(silent=True)
    level = (ctx.find_root().obj or {}).get("log_level", logging.INFO) if ctx else logging.INFO
    setup_logging(config.output.directory, level)
    return config


def resolve_jobs(jobs: Optional[int]) -> int:
    return settings.jobs if jobs is None else jobs
