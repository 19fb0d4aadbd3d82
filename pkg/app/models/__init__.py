"""Array-backed data structures: grids, pairings and assembled operators."""

from app.models.grid import Grid, HalfSpace, ReflectionPairing
from app.models.operator import EigenResult, EnergyOperator
from app.models.system import CoupledSystem

__all__ = ["CoupledSystem", "EigenResult", "EnergyOperator", "Grid", "HalfSpace", "ReflectionPairing"]
