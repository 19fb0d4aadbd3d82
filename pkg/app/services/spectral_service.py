"""First Dirichlet eigenvalue of the discrete operator by inverse iteration."""

import math
from collections.abc import Sequence

import numpy as np
import structlog
from numpy.typing import ArrayLike
from scipy import linalg

from app.core.config import settings
from app.core.exceptions import ConvergenceError, DomainError
from app.models.operator import EigenResult, EnergyOperator
from app.schemas.spectral import EigenSummary
from app.services.energy_service import energy_service

logger = structlog.get_logger()


class SpectralService:
    """Service computing lambda1 and the positive first eigenfunction."""

    def lambda1(
        self,
        op: EnergyOperator,
        tol: float | None = None,
        max_iter: int | None = None,
        trials: Sequence[ArrayLike] = (),
    ) -> EigenResult:
        """
        Inverse power iteration on the SPD matrix of I.

        The loop stops once ||I phi - lambda phi||_h <= tol * lambda. The
        iteration starts from a positive vector; the inverse of the operator
        matrix is entrywise positive on connected weight graphs, so phi1 stays
        nonnegative.

        Args:
            op: Assembled operator
            tol: Relative residual tolerance (default EIGEN_TOL)
            max_iter: Iteration cap (default EIGEN_MAX_ITER)
            trials: Fields whose Rayleigh quotients are reported alongside lambda1

        Returns:
            EigenResult with ||phi1||_h = 1

        Raises:
            ConvergenceError: If the cap is reached; carries the best iterate
        """
        tol = settings.EIGEN_TOL if tol is None else tol
        max_iter = settings.EIGEN_MAX_ITER if max_iter is None else max_iter
        if not tol > 0.0:
            raise DomainError("Eigen tolerance must be positive", details={"tol": tol})

        matrix = op.scaled_matrix
        volume = op.cell_volume
        factor = linalg.cho_factor(matrix, lower=False, check_finite=False)

        x = np.ones(op.n) / math.sqrt(volume * op.n)
        best: tuple[float, np.ndarray, float] | None = None
        for iteration in range(1, max_iter + 1):
            y = linalg.cho_solve(factor, x, check_finite=False)
            x = y / math.sqrt(volume * float(y @ y))
            mx = matrix @ x
            lam = volume * float(x @ mx)
            residual = math.sqrt(volume * float(np.sum((mx - lam * x) ** 2)))
            if best is None or residual < best[2]:
                best = (lam, x.copy(), residual)
            if residual <= tol * lam:
                phi = self._orient(x)
                quotients = [self.rayleigh(op, p) for p in trials]
                if any(q < lam - 10.0 * residual for q in quotients):
                    logger.warning("Trial field below computed eigenvalue", lambda1=lam, trials=quotients)
                logger.info(
                    "Eigenpair converged",
                    lambda1=lam,
                    iterations=iteration,
                    residual=residual,
                    nodes=op.n,
                )
                return EigenResult(
                    lambda1=lam,
                    phi1=phi,
                    iterations=iteration,
                    residual=residual,
                    trial_quotients=quotients,
                )

        assert best is not None
        raise ConvergenceError(
            "Inverse iteration hit the iteration cap",
            best=EigenResult(
                lambda1=best[0], phi1=self._orient(best[1]), iterations=max_iter, residual=best[2]
            ),
            residual=best[2],
            details={"lambda1": best[0], "max_iter": max_iter},
        )

    def _orient(self, x: np.ndarray) -> np.ndarray:
        """Fix the sign so the eigenfunction has positive mass."""
        return -x if float(np.sum(x)) < 0.0 else x

    def rayleigh(self, op: EnergyOperator, u: ArrayLike) -> float:
        """E(u, u) / ||u||_h^2."""
        u = np.asarray(u, dtype=np.float64)
        mass = energy_service.inner(op, u, u)
        if mass == 0.0:
            raise DomainError("Rayleigh quotient of the zero field")
        return energy_service.bilinear(op, u, u) / mass

    def lambda1_subset(self, op: EnergyOperator, nodes: ArrayLike) -> float:
        """Dirichlet eigenvalue of a node subset: least eigenvalue of A_DD / h^N."""
        block = energy_service.submatrix(op, nodes) / op.cell_volume
        value = linalg.eigh(block, eigvals_only=True, subset_by_index=[0, 0])
        return float(value[0])

    def summary(self, op: EnergyOperator, result: EigenResult) -> EigenSummary:
        return EigenSummary(
            lambda1=result.lambda1,
            iterations=result.iterations,
            residual=result.residual,
            relative_residual=result.residual / result.lambda1,
            n_interior=op.n,
            grid=op.grid.metadata(),
            min_phi1=float(result.phi1.min()),
        )


spectral_service = SpectralService()
