"""Invariant suite subcommand; exit code 1 on any hard failure."""

from __future__ import annotations

from pathlib import Path

import click

from commands.common import experiment_options, load_config
from experiments import verify
from formatters import dumps

EXIT_HARD_FAILURE = 1


@click.command(name="verify")
@experiment_options
def verify_command(config_path, out_dir, fmt, jobs, seed):
    """Run every hard invariant; soft checks are listed for information."""
    config = load_config(config_path, out_dir, fmt, seed)
    summary = verify(config)
    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify.summary.json").write_text(dumps(summary.to_json()))
    (out / "verify.geometry.json").write_text(dumps(summary.geometry))

    for check in summary.checks:
        if check.hard:
            mark = "PASS" if check.passed else "FAIL"
        else:
            mark = "info"
        click.echo(f"[{mark}] {check.name}: {check.detail}")
    hard = [c for c in summary.checks if c.hard]
    click.echo(f"{len(hard) - len(summary.failures)}/{len(hard)} hard checks passed")
    if not summary.passed:
        raise SystemExit(EXIT_HARD_FAILURE)


__all__ = ["verify_command"]
