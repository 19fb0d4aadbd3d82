"""Coupled gradient system bound to an assembled operator."""

from dataclasses import dataclass

import numpy as np

from app.models.grid import FloatArray
from app.models.operator import EigenResult, EnergyOperator
from app.schemas.solver import SystemSpec


@dataclass(frozen=True, eq=False)
class CoupledSystem:
    """
    I u1 = a1 u1 + |u2|^q |u1|^(q-2) u1,  I u2 = a2 u2 + |u1|^q |u2|^(q-2) u2.

    ``a1``/``a2`` are the coefficient profiles sampled at interior nodes.
    """

    op: EnergyOperator
    spec: SystemSpec
    a1: FloatArray
    a2: FloatArray
    eigen: EigenResult

    @property
    def q(self) -> float:
        return self.spec.q

    @property
    def lambda1(self) -> float:
        return self.eigen.lambda1

    @property
    def coefficients_identical(self) -> bool:
        return bool(np.array_equal(self.a1, self.a2))

    @property
    def coercivity(self) -> float:
        """mu = 1 - ||a+||_inf / lambda1, so that ||(u, v)||^2 >= mu (E(u) + E(v))."""
        sup = max(float(np.max(self.a1)), float(np.max(self.a2)), 0.0)
        return 1.0 - sup / self.lambda1

