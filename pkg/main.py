"""Command-line entry point for the nodal-transport laboratory."""

import logging

import click

from commands import all_commands


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level.")
@click.pass_context
def cli(ctx: click.Context, verbose: bool) -> None:
    """Nodal sets, tubes, doubling exponents and W1 of Laplace eigenfunctions."""
    ctx.ensure_object(dict)
    ctx.obj["log_level"] = logging.DEBUG if verbose else logging.INFO


for _command in all_commands:
    cli.add_command(_command)


if __name__ == "__main__":
    cli()
