"""The four scan subcommands."""

from __future__ import annotations

import click

from commands.common import experiment_options, load_config, resolve_jobs
from experiments import SCANS, run
from report_sink import ReportSink

_HELP = {
    "scan-w1": "W1 between the signed parts over a family (one row per instance).",
    "scan-tube-mass": "Retention outside nodal tubes and tube mass profiles.",
    "scan-doubling": "Doubling exponents, sandwich constants and good-ball mass.",
    "scan-uncertainty": "W1 times nodal length under unit L1 normalisation.",
}


def make_scan_command(scan: str) -> click.Command:
    @click.command(name=scan, help=_HELP[scan])
    @experiment_options
    def command(config_path, out_dir, fmt, jobs, seed):
        config = load_config(config_path, out_dir, fmt, seed)
        sink = ReportSink(scan, config, config.output.directory, config.output.format)
        outcome = run(config, scan, sink=sink, jobs=resolve_jobs(jobs))
        rows = sum(len(r) for r in outcome.rows.values())
        click.echo(f"{scan}: {rows} rows, {sink.errors} errors -> {sink.directory}")
        for name, fit in sorted(outcome.fits.items()):
            click.echo(f"  {name}: slope {fit['exponent']:.4f}, r^2 {fit['r_squared']:.5f}")

    return command


scan_commands = [make_scan_command(scan) for scan in SCANS]

__all__ = ["scan_commands", "make_scan_command"]
