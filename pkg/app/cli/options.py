"""Argument types and config overrides shared by several subcommands."""

import argparse
from typing import Any

from app.schemas.experiment import ExperimentConfig

Overrides = dict[str, dict[str, Any]]


def seed_type(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0.0:
        raise argparse.ArgumentTypeError("expected a positive number")
    return value


def add_grid_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--h", type=positive_float, help="Lattice spacing (overrides grid.h)")
    group.add_argument(
        "--target-nodes", type=positive_int, help="Interior node count (overrides grid.target_nodes)"
    )


def grid_overrides(args: argparse.Namespace) -> Overrides:
    if args.h is not None:
        return {"grid": {"h": args.h}}
    if args.target_nodes is not None:
        return {"grid": {"h": None, "target_nodes": args.target_nodes}}
    return {}


def collect(args: argparse.Namespace, mapping: dict[str, tuple[str, str]]) -> Overrides:
    """Map non-None argument values onto (section, key) config entries."""
    overrides: Overrides = {}
    for attr, (section, key) in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.setdefault(section, {})[key] = value
    return overrides


def merge(*parts: Overrides) -> Overrides:
    merged: Overrides = {}
    for part in parts:
        for section, values in part.items():
            merged.setdefault(section, {}).update(values)
    return merged


def apply_overrides(config: ExperimentConfig, overrides: Overrides) -> ExperimentConfig:
    """
    Re-validate the configuration with command-line values layered on top.

    Raises:
        pydantic.ValidationError: If an override breaks a section's constraints
    """
    if not overrides:
        return config
    data = config.model_dump()
    for section, values in overrides.items():
        data[section].update(values)
    return ExperimentConfig.model_validate(data)
