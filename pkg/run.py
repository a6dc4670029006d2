#!/usr/bin/env python3
"""Startup script: ``python run.py verify --config config/default_experiment.json``."""

from main import cli


def main():
    """Main function to start the command line."""
    cli(prog_name="nodallab")


if __name__ == "__main__":
    main()
