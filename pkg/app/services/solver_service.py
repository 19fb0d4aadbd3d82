"""Nehari-manifold minimization for the coupled gradient system."""

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import structlog
from numpy.typing import ArrayLike
from scipy import linalg

from app.core.config import settings
from app.core.exceptions import (
    AppException,
    ConvergenceError,
    DegenerateProductError,
    DomainError,
    StagnationError,
)
from app.models.grid import FloatArray, ReflectionPairing
from app.models.operator import EigenResult, EnergyOperator
from app.models.system import CoupledSystem
from app.schemas.kernel import KernelSpec
from app.schemas.solver import (
    IterationRecord,
    NehariProjection,
    PolarizedSolutionReport,
    PositivityCheck,
    SolveReport,
    SolverOptions,
    SystemSpec,
)
from app.schemas.symmetry import FunctionalReductionReport
from app.services.energy_service import energy_service
from app.services.kernel_service import kernel_service
from app.services.polarization_service import polarization_service
from app.services.spectral_service import spectral_service

logger = structlog.get_logger()

# Every LOG_STRIDE-th iteration is kept in the report log
LOG_STRIDE = 10

# Largest step relative to the initial one
STEP_GROWTH_CAP = 1e3

# Symmetry checks on solved states use this multiple of the solver tolerance
SOLVED_SYMMETRY_FACTOR = 1e3

EPS = float(np.finfo(np.float64).eps)


@dataclass
class _Progress:
    """Last accepted iterate of a descent, shared with the restart logic."""

    u: FloatArray
    v: FloatArray
    J: float = math.inf
    residual: float = math.inf
    initial_residual: float | None = None
    iterations: int = 0
    min_norm: float = math.inf
    log: list[IterationRecord] = field(default_factory=list)


@dataclass
class _Outcome:
    u: FloatArray
    v: FloatArray
    J: float
    residual: float
    initial_residual: float
    iterations: int
    restarts: int
    min_norm: float
    log: list[IterationRecord]


class SolverService:
    """Service for the functional J, its Nehari manifold and ground states."""

    # ------------------------------------------------------------------
    # System setup
    # ------------------------------------------------------------------

    def critical_exponent(self, kernel: KernelSpec) -> float | None:
        """
        N / (N - 2s) for the kernel's effective order s, None when unbounded.

        Tabulated kernels take s from the near-origin decay r^{-(N + 2s)}.
        """
        N = kernel.dimension
        near, _, _ = kernel_service.exponents(kernel)
        if near is None or near <= N:
            return None
        s = 0.5 * (near - N)
        if N <= 2.0 * s:
            return None
        return N / (N - 2.0 * s)

    def prepare(
        self,
        op: EnergyOperator,
        spec: SystemSpec,
        eigen: EigenResult | None = None,
        coefficient_units: Literal["absolute", "lambda1"] = "absolute",
    ) -> CoupledSystem:
        """
        Bind coefficients and exponent to an operator.

        Args:
            op: Assembled operator
            spec: Coefficient profiles and exponent q
            eigen: Precomputed first eigenpair; computed when omitted
            coefficient_units: "lambda1" scales the profiles by lambda1

        Raises:
            DomainError: If q <= 1, if q is supercritical with enforcement on,
                or if ||a_i+||_inf >= lambda1
        """
        if spec.q <= 1.0:
            raise DomainError("Exponent q must exceed 1", details={"q": spec.q})
        critical = self.critical_exponent(op.kernel)
        if critical is not None and spec.q >= critical:
            if spec.enforce_subcritical:
                raise DomainError(
                    "Exponent q is not subcritical",
                    details={"q": spec.q, "critical": critical},
                )
            logger.warning("Exponent at or above the critical bound", q=spec.q, critical=critical)

        eigen = eigen or spectral_service.lambda1(op)
        scale = eigen.lambda1 if coefficient_units == "lambda1" else 1.0
        radii = op.grid.interior_radii
        a1 = scale * spec.a1.evaluate(radii)
        a2 = scale * spec.a2.evaluate(radii)

        sup = max(float(a1.max()), float(a2.max()), 0.0)
        if sup >= eigen.lambda1:
            raise DomainError(
                "Coefficient exceeds the first eigenvalue",
                details={"sup_a_plus": sup, "lambda1": eigen.lambda1},
            )
        system = CoupledSystem(op=op, spec=spec, a1=a1, a2=a2, eigen=eigen)
        if system.coefficients_identical:
            logger.warning("Identical coefficients; the symmetric diagonal u1 = u2 is invariant")
        return system

    # ------------------------------------------------------------------
    # Functional
    # ------------------------------------------------------------------

    def norm_sq(self, system: CoupledSystem, u: FloatArray, v: FloatArray) -> float:
        """||(u, v)||^2 = E(u) + E(v) - int a1 u^2 - int a2 v^2."""
        op = system.op
        potential = op.cell_volume * float(np.sum(system.a1 * u * u) + np.sum(system.a2 * v * v))
        return energy_service.energy(op, u) + energy_service.energy(op, v) - potential

    def product(self, system: CoupledSystem, u: FloatArray, v: FloatArray) -> float:
        """||uv||_q^q."""
        return system.op.cell_volume * float(np.sum(np.abs(u * v) ** system.q))

    def J(self, system: CoupledSystem, u: ArrayLike, v: ArrayLike) -> float:
        u, v = self._pair(system, u, v)
        return 0.5 * self.norm_sq(system, u, v) - self.product(system, u, v) / system.q

    def G(self, system: CoupledSystem, u: ArrayLike, v: ArrayLike) -> float:
        """Nehari functional; G = 0 on the manifold."""
        u, v = self._pair(system, u, v)
        return 0.5 * self.norm_sq(system, u, v) - self.product(system, u, v)

    def grad_J(self, system: CoupledSystem, u: ArrayLike, v: ArrayLike) -> tuple[FloatArray, FloatArray]:
        """
        Representative of J' in the h-weighted inner product.

        |t|^(q-2) t is taken as 0 at t = 0.
        """
        u, v = self._pair(system, u, v)
        q = system.q
        op = system.op
        power_u = np.sign(u) * np.abs(u) ** (q - 1.0)
        power_v = np.sign(v) * np.abs(v) ** (q - 1.0)
        gu = energy_service.apply(op, u) - system.a1 * u - np.abs(v) ** q * power_u
        gv = energy_service.apply(op, v) - system.a2 * v - np.abs(u) ** q * power_v
        return gu, gv

    def residual(self, system: CoupledSystem, u: ArrayLike, v: ArrayLike) -> float:
        gu, gv = self.grad_J(system, u, v)
        return math.sqrt(system.op.cell_volume * float(gu @ gu + gv @ gv))

    def _pair(self, system: CoupledSystem, u: ArrayLike, v: ArrayLike) -> tuple[FloatArray, FloatArray]:
        grid = system.op.grid
        return grid.check_field(u), grid.check_field(v)

    # ------------------------------------------------------------------
    # Nehari manifold
    # ------------------------------------------------------------------

    def nehari_project(
        self, system: CoupledSystem, u: ArrayLike, v: ArrayLike
    ) -> tuple[FloatArray, FloatArray, NehariProjection]:
        """
        Scale (u, v) onto the Nehari manifold.

        t0 = (||(u, v)||^2 / (2 ||uv||_q^q))^(1 / (2q - 2)).

        Raises:
            DegenerateProductError: If ||uv||_q^q = 0
            DomainError: If ||(u, v)||^2 <= 0
        """
        u, v = self._pair(system, u, v)
        q = system.q
        norm_sq = self.norm_sq(system, u, v)
        product = self.product(system, u, v)
        if product == 0.0:
            raise DegenerateProductError()
        if norm_sq <= 0.0:
            raise DomainError("Pair has nonpositive quadratic part", details={"norm_sq": norm_sq})

        t0 = (norm_sq / (2.0 * product)) ** (1.0 / (2.0 * q - 2.0))
        pu, pv = t0 * u, t0 * v
        norm_after = t0 * t0 * norm_sq
        product_after = t0 ** (2.0 * q) * product
        return (
            pu,
            pv,
            NehariProjection(
                t0=t0,
                norm_sq=norm_after,
                product=product_after,
                G_after=0.5 * norm_after - product_after,
                radial_derivative=norm_after - 2.0 * q * product_after,
            ),
        )

    def nehari_radius(self, system: CoupledSystem) -> float:
        """
        r0 with ||(u, v)|| >= r0 on the Nehari manifold.

        From ||uv||_q^q <= C ||(u, v)||^(2q), C = h^N (1 / (2 h^N mu lambda1))^q.
        """
        volume = system.op.cell_volume
        mu = system.coercivity
        constant = volume * (1.0 / (2.0 * volume * mu * system.lambda1)) ** system.q
        return (2.0 * constant) ** (-1.0 / (2.0 * system.q - 2.0))

    # ------------------------------------------------------------------
    # Seeds
    # ------------------------------------------------------------------

    def default_seed(self, system: CoupledSystem, perturbation: float = 0.5) -> tuple[FloatArray, FloatArray]:
        """(phi1, phi1 (1 + eps x1 / R)): both fields lean towards +x1."""
        phi = system.eigen.phi1
        x1 = system.op.grid.interior_points[:, 0]
        tilt = 1.0 + perturbation * x1 / system.op.grid.domain.r_out
        return phi.copy(), phi * tilt

    def random_seed(
        self, system: CoupledSystem, rng: np.random.Generator, perturbation: float = 0.5
    ) -> tuple[FloatArray, FloatArray]:
        phi = system.eigen.phi1
        n = phi.size
        return (
            phi * (1.0 + perturbation * rng.uniform(-1.0, 1.0, n)),
            phi * (1.0 + perturbation * rng.uniform(-1.0, 1.0, n)),
        )

    def _reseed(
        self, system: CoupledSystem, progress: _Progress, rng: np.random.Generator, perturbation: float
    ) -> tuple[FloatArray, FloatArray]:
        """Positive kick along phi1 from the last accepted iterate."""
        phi = system.eigen.phi1
        shape = phi / max(float(phi.max()), EPS)
        kicked = []
        for w in (progress.u, progress.v):
            amplitude = max(float(np.max(np.abs(w))), 1.0)
            kicked.append(np.abs(w) + perturbation * amplitude * shape * rng.uniform(0.5, 1.5, phi.size))
        return kicked[0], kicked[1]

    # ------------------------------------------------------------------
    # Descent
    # ------------------------------------------------------------------

    def _preconditioners(self, system: CoupledSystem) -> tuple[tuple, tuple]:
        """Cholesky factors of I - a_i, SPD since a_i < lambda1."""
        matrix = system.op.scaled_matrix
        factors = []
        for a in (system.a1, system.a2):
            shifted = matrix.copy()
            shifted[np.diag_indices_from(shifted)] -= a
            factors.append(linalg.cho_factor(shifted, check_finite=False))
        return factors[0], factors[1]

    def _descend(
        self,
        system: CoupledSystem,
        options: SolverOptions,
        progress: _Progress,
        factors: tuple[tuple, tuple] | None,
    ) -> None:
        """Projected gradient descent from progress.u/v; updates progress in place."""
        volume = system.op.cell_volume
        u, v, _ = self.nehari_project(system, progress.u, progress.v)
        J = self.J(system, u, v)
        gu, gv = self.grad_J(system, u, v)
        res = math.sqrt(volume * float(gu @ gu + gv @ gv))
        if progress.initial_residual is None:
            progress.initial_residual = res
        target = options.tol * progress.initial_residual

        step0 = 1.0 / system.lambda1 if options.metric == "l2" else 1.0
        step = step0
        best_J, best_res, stale = J, res, 0
        progress.u, progress.v, progress.J, progress.residual = u, v, J, res
        progress.min_norm = min(progress.min_norm, math.sqrt(self.norm_sq(system, u, v)))

        while res > target:
            if progress.iterations >= options.max_iter:
                raise ConvergenceError(
                    "Descent hit the iteration cap",
                    best=(progress.u, progress.v),
                    residual=res,
                    details={"J": J, "max_iter": options.max_iter},
                )
            progress.iterations += 1

            if factors is None:
                du, dv = -gu, -gv
            else:
                du = -linalg.cho_solve(factors[0], gu, check_finite=False)
                dv = -linalg.cho_solve(factors[1], gv, check_finite=False)
            slope = volume * float(gu @ du + gv @ dv)

            alpha = min(2.0 * step, STEP_GROWTH_CAP * step0)
            noise = 64.0 * EPS * abs(J)
            accepted = None
            while alpha >= 1e-12 * step0:
                try:
                    cu, cv, _ = self.nehari_project(system, u + alpha * du, v + alpha * dv)
                except DegenerateProductError:
                    alpha *= settings.ARMIJO_BACKTRACK
                    continue
                cj = self.J(system, cu, cv)
                decrease = settings.ARMIJO_C * alpha * slope
                if cj <= J + decrease + noise:
                    cgu, cgv = self.grad_J(system, cu, cv)
                    cres = math.sqrt(volume * float(cgu @ cgu + cgv @ cgv))
                    # below the resolution of J the residual is the merit function
                    if -decrease > noise or cres < res:
                        accepted = (cu, cv, cj, cgu, cgv, cres)
                        break
                alpha *= settings.ARMIJO_BACKTRACK
            if accepted is None:
                raise StagnationError(
                    "Line search found no acceptable step",
                    details={"J": J, "residual": res, "iteration": progress.iterations},
                )

            u, v, J, gu, gv, res = accepted
            step = alpha
            progress.u, progress.v, progress.J, progress.residual = u, v, J, res
            progress.min_norm = min(progress.min_norm, math.sqrt(self.norm_sq(system, u, v)))
            if progress.iterations % LOG_STRIDE == 0:
                progress.log.append(
                    IterationRecord(iteration=progress.iterations, J=J, residual=res, step=alpha)
                )

            if J < best_J or res < best_res:
                best_J, best_res, stale = min(J, best_J), min(res, best_res), 0
            else:
                stale += 1
                if stale >= settings.STAGNATION_WINDOW:
                    raise StagnationError(
                        "No decrease over the stagnation window",
                        details={"J": J, "residual": res, "iteration": progress.iterations},
                    )

    def _solve_seed(
        self,
        system: CoupledSystem,
        seed: tuple[FloatArray, FloatArray],
        options: SolverOptions,
        rng: np.random.Generator,
        factors: tuple[tuple, tuple] | None,
    ) -> _Outcome:
        progress = _Progress(u=np.asarray(seed[0], dtype=np.float64), v=np.asarray(seed[1], dtype=np.float64))
        restarts = 0
        while True:
            try:
                self._descend(system, options, progress, factors)
                break
            except (DegenerateProductError, StagnationError) as exc:
                if restarts >= settings.MAX_RESTARTS:
                    if isinstance(exc, StagnationError):
                        exc.details.update({"restarts": restarts, "best_J": progress.J})
                    raise
                restarts += 1
                logger.warning(
                    "Reseeding descent",
                    reason=exc.message,
                    restart=restarts,
                    J=progress.J,
                    residual=progress.residual,
                )
                progress.u, progress.v = self._reseed(system, progress, rng, options.perturbation)

        assert progress.initial_residual is not None
        progress.log.append(
            IterationRecord(
                iteration=progress.iterations, J=progress.J, residual=progress.residual, step=0.0
            )
        )
        return _Outcome(
            u=progress.u,
            v=progress.v,
            J=progress.J,
            residual=progress.residual,
            initial_residual=progress.initial_residual,
            iterations=progress.iterations,
            restarts=restarts,
            min_norm=progress.min_norm,
            log=progress.log,
        )

    def minimize(
        self,
        system: CoupledSystem,
        options: SolverOptions | None = None,
        seeds: list[tuple[FloatArray, FloatArray]] | None = None,
        rng: np.random.Generator | None = None,
        threads: int | None = None,
        symmetry: bool = True,
    ) -> tuple[FloatArray, FloatArray, SolveReport]:
        """
        Minimize J over the Nehari manifold.

        Each seed is descended independently (in a thread pool when several
        are given) and the lowest J wins. The winner is replaced by
        (|u1|, |u2|) projected back onto the manifold.

        Args:
            system: Prepared coupled system
            options: Tolerance, iteration cap, metric and seed count
            seeds: Explicit seeds; by default the tilted phi1 pair plus random ones
            rng: Generator for random seeds and reseeding
            threads: Worker threads for multi-seed runs
            symmetry: Attach a SymmetryReport to the result

        Returns:
            (u1, u2, SolveReport)

        Raises:
            DegenerateProductError: If every reseed produced a degenerate product
            StagnationError: If descent stalls after all reseeds
            ConvergenceError: If the iteration cap is hit; carries the best pair
        """
        options = options or SolverOptions()
        rng = rng or np.random.default_rng(settings.DEFAULT_SEED)
        if seeds is None:
            seeds = [self.default_seed(system, options.perturbation)]
            seeds += [self.random_seed(system, rng, options.perturbation) for _ in range(options.seeds - 1)]
        if not seeds:
            raise DomainError("No seeds given")

        factors = self._preconditioners(system) if options.metric == "sobolev" else None
        streams = rng.spawn(len(seeds))
        if len(seeds) == 1:
            outcomes: list[_Outcome | AppException] = [
                self._solve_seed(system, seeds[0], options, streams[0], factors)
            ]
        else:

            def run(index: int) -> _Outcome | AppException:
                try:
                    return self._solve_seed(system, seeds[index], options, streams[index], factors)
                except AppException as exc:
                    logger.warning("Seed failed", seed=index, error=exc.message)
                    return exc

            with ThreadPoolExecutor(max_workers=threads or settings.THREADS) as pool:
                outcomes = list(pool.map(run, range(len(seeds))))

        solved = [(i, o) for i, o in enumerate(outcomes) if isinstance(o, _Outcome)]
        if not solved:
            failure = outcomes[0]
            assert isinstance(failure, AppException)
            raise failure
        seed_index, best = min(solved, key=lambda item: item[1].J)

        u1, u2, report = self._finish(system, best, options, seed_index, symmetry, threads)
        logger.info(
            "Nehari minimization finished",
            J=report.J,
            residual_relative=report.residual_relative,
            iterations=report.iterations,
            restarts=report.restarts,
            seed=seed_index,
        )
        return u1, u2, report

    def symmetry_tolerance(self, options: SolverOptions, fields: Sequence[ArrayLike]) -> float:
        """Absolute tolerance for symmetry checks on solver output, scaled by the field maximum."""
        scale = max(float(np.max(np.abs(u))) for u in fields)
        return max(settings.SYMMETRY_TOL, SOLVED_SYMMETRY_FACTOR * options.tol) * scale

    def _finish(
        self,
        system: CoupledSystem,
        outcome: _Outcome,
        options: SolverOptions,
        seed_index: int,
        symmetry: bool,
        threads: int | None,
    ) -> tuple[FloatArray, FloatArray, SolveReport]:
        """Positivity post-processing, distinctness and symmetry diagnostics."""
        op = system.op
        J_before = outcome.J
        u1, u2, _ = self.nehari_project(system, np.abs(outcome.u), np.abs(outcome.v))
        J_after = self.J(system, u1, u2)
        positivity = PositivityCheck(
            J_before=J_before,
            J_after=J_after,
            holds=J_after <= J_before + 1e-10 * max(abs(J_before), 1.0),
        )
        if not positivity.holds:
            logger.warning("Absolute values raised J", J_before=J_before, J_after=J_after)

        residual = self.residual(system, u1, u2)
        norm_sq = self.norm_sq(system, u1, u2)
        product = self.product(system, u1, u2)
        G = 0.5 * norm_sq - product

        norm_u1 = energy_service.norm(op, u1)
        distinctness = energy_service.norm(op, u1 - u2) / max(norm_u1, np.finfo(float).tiny)
        distinct = distinctness > settings.DISTINCTNESS_RATIO
        if not distinct and not system.coefficients_identical:
            logger.warning("Components coincide although coefficients differ", distinctness=distinctness)

        report_symmetry = None
        if symmetry:
            tol = self.symmetry_tolerance(options, [u1, u2])
            report_symmetry = polarization_service.symmetry_report(op.grid, [u1, u2], tol, threads=threads)

        initial = outcome.initial_residual
        return (
            u1,
            u2,
            SolveReport(
                J=J_after,
                G=G,
                G_relative=abs(G) / max(norm_sq, np.finfo(float).tiny),
                norm_sq=norm_sq,
                product=product,
                residual=residual,
                residual_relative=residual / initial if initial > 0.0 else 0.0,
                initial_residual=initial,
                converged=residual <= options.tol * initial * (1.0 + 1e-6) or residual == 0.0,
                iterations=outcome.iterations,
                restarts=outcome.restarts,
                seed_index=seed_index,
                metric=options.metric,
                min_u1=float(u1.min()),
                min_u2=float(u2.min()),
                distinctness=distinctness,
                distinct=distinct,
                coefficients_identical=system.coefficients_identical,
                r0=self.nehari_radius(system),
                min_norm_seen=outcome.min_norm,
                positivity=positivity,
                lambda1=system.lambda1,
                log=outcome.log,
                symmetry=report_symmetry,
            ),
        )

    # ------------------------------------------------------------------
    # Polarized states
    # ------------------------------------------------------------------

    def polarize_solution(
        self, system: CoupledSystem, u1: ArrayLike, u2: ArrayLike, pairing: ReflectionPairing
    ) -> tuple[FloatArray, FloatArray, PolarizedSolutionReport]:
        """Polarize both components and project the pair back onto the manifold."""
        u1, u2 = self._pair(system, u1, u2)
        J_before = self.J(system, u1, u2)
        p1 = polarization_service.polarize(u1, pairing)
        p2 = polarization_service.polarize(u2, pairing)
        p1, p2, projection = self.nehari_project(system, p1, p2)
        J_after = self.J(system, p1, p2)
        return (
            p1,
            p2,
            PolarizedSolutionReport(
                normal=pairing.halfspace.normal.tolist(),
                t0=projection.t0,
                J_before=J_before,
                J_after=J_after,
                holds=J_after <= J_before + 1e-10 * max(abs(J_before), 1.0),
            ),
        )

    def functional_reduction_check(
        self, system: CoupledSystem, u: ArrayLike, v: ArrayLike, pairing: ReflectionPairing
    ) -> FunctionalReductionReport:
        """J(u_H, v_H) <= J(u, v) and G(u_H, v_H) <= G(u, v) for nonnegative pairs."""
        u, v = self._pair(system, u, v)
        if np.any(u < 0.0) or np.any(v < 0.0):
            raise DomainError("Functional reduction check requires nonnegative fields")
        if not pairing.mask_symmetric:
            raise DomainError("Domain mask is not symmetric with respect to the hyperplane")
        uh = polarization_service.polarize(u, pairing)
        vh = polarization_service.polarize(v, pairing)
        J, Jh = self.J(system, u, v), self.J(system, uh, vh)
        G, Gh = self.G(system, u, v), self.G(system, uh, vh)
        slack = 1e-10 * max(abs(J), abs(G), 1.0)
        return FunctionalReductionReport(
            J=J, J_polarized=Jh, G=G, G_polarized=Gh, holds=Jh <= J + slack and Gh <= G + slack
        )


solver_service = SolverService()
