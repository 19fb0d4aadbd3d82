"""Subcommands; each module exposes NAME, HELP, add_arguments, overrides and run."""

from app.cli.commands import assemble, constants, eigen, solve, symmetry, verify

COMMANDS = {module.NAME: module for module in (assemble, eigen, solve, symmetry, verify, constants)}

__all__ = ["COMMANDS"]
