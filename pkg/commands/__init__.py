"""Command package."""

from .scans import scan_commands
from .verify import verify_command

all_commands = [*scan_commands, verify_command]

__all__ = ["all_commands", "scan_commands", "verify_command"]
