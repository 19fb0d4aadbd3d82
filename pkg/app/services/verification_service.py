"""Randomized property suites behind the ``verify`` command."""

import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import structlog

from app.core.dependencies import build_kernel, build_operator, build_system
from app.core.exceptions import AppException
from app.models.grid import FloatArray, Grid
from app.models.operator import EnergyOperator
from app.models.system import CoupledSystem
from app.schemas.common import PropertyResult, VerifySummary
from app.schemas.experiment import ExperimentConfig
from app.schemas.geometry import RadialDomain
from app.schemas.kernel import FractionalFamily, KernelSpec
from app.services.coupling_service import coupling_service
from app.services.energy_service import energy_service
from app.services.geometry_service import geometry_service
from app.services.kernel_service import kernel_service
from app.services.polarization_service import polarization_service
from app.services.solver_service import solver_service
from app.services.spectral_service import spectral_service

logger = structlog.get_logger()

NORMALIZATION_CASES = [(N, s) for N in (1, 2) for s in (0.25, 0.5, 0.75)]
NORMALIZATION_RTOL = 1e-3
FORM_ATOL = 1e-12
NEHARI_RTOL = 1e-10
RESCALING_RTOL = 1e-8
DISCRETIZATION_RTOL = 0.02
SHRINKING_RADII = (1.0, 0.8, 0.6, 0.45, 0.3)


@dataclass
class _Context:
    config: ExperimentConfig
    kernel: KernelSpec
    rng: np.random.Generator
    quick: bool
    threads: int | None
    ground_state: tuple[CoupledSystem, FloatArray, FloatArray] | None = None
    cache: dict[str, EnergyOperator] = field(default_factory=dict)

    def trials(self, full: int, quick: int) -> int:
        return quick if self.quick else full


class VerificationService:
    """Service running every property suite and summarizing pass/fail counts."""

    def __init__(self) -> None:
        self.suites: dict[str, Callable[[_Context], PropertyResult]] = {
            "normalization": self.normalization,
            "quadratic_form": self.quadratic_form,
            "polarization": self.polarization,
            "eigenvalue": self.eigenvalue,
            "nehari": self.nehari,
            "ground_state": self.ground_state,
            "max_principle": self.max_principle,
            "discretization": self.discretization,
        }

    def run(
        self,
        config: ExperimentConfig,
        seed: int,
        quick: bool = False,
        threads: int | None = None,
        only: list[str] | None = None,
    ) -> VerifySummary:
        """
        Run the property suites in order.

        A suite that raises is recorded as failed with the error in its details.
        """
        ctx = _Context(
            config=config,
            kernel=build_kernel(config),
            rng=np.random.default_rng(seed),
            quick=quick,
            threads=threads,
        )
        names = only or list(self.suites)
        results = []
        for name in names:
            started = time.perf_counter()
            try:
                result = self.suites[name](ctx)
            except AppException as exc:
                logger.error("Property suite raised", suite=name, error=exc.message)
                result = PropertyResult(
                    name=name,
                    passed=False,
                    trials=0,
                    details={"error_code": exc.__class__.__name__, "detail": exc.message, **exc.details},
                )
            logger.info(
                "Property suite finished",
                suite=name,
                passed=result.passed,
                seconds=round(time.perf_counter() - started, 3),
            )
            results.append(result)

        failed = [r.name for r in results if not r.passed]
        return VerifySummary(
            seed=seed, quick=quick, passed=not failed, total=len(results), failed=failed, results=results
        )

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _ball_operator(self, ctx: _Context, target: int, radius: float = 1.0) -> EnergyOperator:
        key = f"ball-{radius}-{target}"
        if key not in ctx.cache:
            domain = RadialDomain(shape="ball", r_out=radius, dimension=ctx.kernel.dimension)
            grid = geometry_service.make_grid(domain, target_nodes=target)
            ctx.cache[key] = energy_service.assemble(ctx.kernel, grid, threads=ctx.threads)
        return ctx.cache[key]

    def _config_system(self, ctx: _Context, target: int | None = None) -> CoupledSystem:
        config = ctx.config
        if target is not None:
            config = config.model_copy(
                update={"grid": config.grid.model_copy(update={"h": None, "target_nodes": target})}
            )
        return build_system(config, build_operator(config, ctx.threads))

    def _strict_kernel(self, op: EnergyOperator) -> bool:
        return op.kernel.is_fractional and op.cutoff_radius is None

    # ------------------------------------------------------------------
    # Suites
    # ------------------------------------------------------------------

    def normalization(self, ctx: _Context) -> PropertyResult:
        """Gamma formula against the inverted quadrature for N in {1, 2}, s in {1/4, 1/2, 3/4}."""
        checks = [kernel_service.normalization_check(N, s) for N, s in NORMALIZATION_CASES]
        errors = [c.relative_error for c in checks]
        violations = sum(e > NORMALIZATION_RTOL for e in errors)
        return PropertyResult(
            name="normalization",
            passed=violations == 0,
            trials=len(checks),
            violations=violations,
            max_violation=max(errors),
            details={"rows": [c.model_dump(mode="json") for c in checks]},
        )

    def quadratic_form(self, ctx: _Context) -> PropertyResult:
        """E(u+, u-) <= 0 and E(|u|) <= E(u), strictly for sign-changing u; E <= rho <= 2E."""
        op = self._ball_operator(ctx, ctx.trials(500, 150))
        trials = ctx.trials(1000, 50)
        strict = self._strict_kernel(op)
        violations = 0
        worst = 0.0
        for _ in range(trials):
            u = ctx.rng.standard_normal(op.n)
            plus, minus = energy_service.parts(u)
            energy = energy_service.energy(op, u)
            scale = max(energy, 1.0)
            cross = energy_service.bilinear(op, plus, minus)
            gain = energy - energy_service.energy(op, np.abs(u))
            bad = cross > FORM_ATOL * scale or gain < -FORM_ATOL * scale
            if strict and plus.any() and minus.any():
                bad = bad or gain <= FORM_ATOL * scale
            worst = max(worst, cross / scale, -gain / scale)
            violations += int(bad)

        rho_trials = ctx.trials(10, 3)
        rho_violations = 0
        for _ in range(rho_trials):
            u = ctx.rng.standard_normal(op.n)
            energy = energy_service.energy(op, u)
            rho = energy_service.rho(op, u)
            rho_violations += int(not (energy * (1 - 1e-10) <= rho <= 2.0 * energy * (1 + 1e-10)))

        return PropertyResult(
            name="quadratic_form",
            passed=violations == 0 and rho_violations == 0,
            trials=trials + rho_trials,
            violations=violations + rho_violations,
            max_violation=max(worst, 0.0),
            details={"nodes": op.n, "strictness_asserted": strict, "rho_violations": rho_violations},
        )

    def polarization(self, ctx: _Context) -> PropertyResult:
        """Energy and product-norm inequalities with equality cases, and the two-point identity."""
        op = self._ball_operator(ctx, ctx.trials(500, 150))
        trials = ctx.trials(1000, 30)
        pairings = [
            geometry_service.reflection_pairing(op.grid, e)
            for e in geometry_service.lattice_directions(op.grid.dimension)
        ]
        q = ctx.config.system.q
        violations = 0
        equalities = 0
        for trial in range(trials):
            pairing = pairings[trial % len(pairings)]
            u = ctx.rng.standard_normal(op.n)
            kind = trial % 3
            if kind == 1:
                u = polarization_service.polarize(u, pairing)
            elif kind == 2:
                u = polarization_service.polarize(u, pairing, flip=True)
            energy = polarization_service.energy_reduction_check(op, u, pairing)
            if not energy.holds:
                violations += 1
            if energy.equality:
                equalities += 1
                if energy.dichotomy_asserted and energy.classification == "neither":
                    violations += 1

            w, v = np.abs(ctx.rng.standard_normal((2, op.n)))
            if kind:
                w = polarization_service.polarize(w, pairing, flip=kind == 2)
                v = polarization_service.polarize(v, pairing, flip=kind == 2)
            product = polarization_service.product_norm_check(w, v, pairing, q)
            if not product.holds or (product.equality and not product.condition):
                violations += 1

        scalars = ctx.trials(100_000, 10_000)
        a1, b1, a2, b2 = ctx.rng.standard_normal((4, scalars))
        identity = polarization_service.two_point_identity(a1, b1, a2, b2)
        scale = (np.abs(a1) + np.abs(b1)) * (np.abs(a2) + np.abs(b2)) + np.finfo(float).tiny
        identity_bad = (
            (np.abs(identity.f + identity.g) > FORM_ATOL * scale)
            | (identity.f < -FORM_ATOL * scale)
            | (np.abs(identity.f - identity.closed_form) > FORM_ATOL * scale)
        )
        identity_violations = int(identity_bad.sum())

        return PropertyResult(
            name="polarization",
            passed=violations == 0 and identity_violations == 0,
            trials=trials + scalars,
            violations=violations + identity_violations,
            details={
                "directions": len(pairings),
                "equality_cases": equalities,
                "identity_violations": identity_violations,
            },
        )

    def eigenvalue(self, ctx: _Context) -> PropertyResult:
        """lambda1 > 0, monotone along shrinking balls, and exact under lattice rescaling."""
        base = self._ball_operator(ctx, ctx.trials(300, 120))
        h = base.grid.h
        N = base.grid.dimension
        values = []
        for radius in SHRINKING_RADII:
            domain = RadialDomain(shape="ball", r_out=radius, dimension=N)
            op = energy_service.assemble(ctx.kernel, geometry_service.make_grid(domain, h=h), threads=ctx.threads)
            values.append(spectral_service.lambda1(op).lambda1)
        violations = sum(v <= 0.0 for v in values)
        violations += sum(b <= a for a, b in zip(values, values[1:]))

        details: dict[str, object] = {"radii": list(SHRINKING_RADII), "lambda1": values}
        family = ctx.kernel.family
        if isinstance(family, FractionalFamily):
            s = family.s
            scale = 2.0
            wide = RadialDomain(shape="ball", r_out=scale, dimension=N)
            op_wide = energy_service.assemble(
                ctx.kernel, geometry_service.make_grid(wide, h=scale * h), threads=ctx.threads
            )
            lam_wide = spectral_service.lambda1(op_wide).lambda1
            expected = scale ** (-2.0 * s) * values[0]
            rel = abs(lam_wide - expected) / expected
            details["rescaling_relative_error"] = rel
            violations += int(rel > RESCALING_RTOL)

        return PropertyResult(
            name="eigenvalue",
            passed=violations == 0,
            trials=len(values) + int(ctx.kernel.is_fractional),
            violations=violations,
            details=details,
        )

    def nehari(self, ctx: _Context) -> PropertyResult:
        """Projection zeroes G, the radial-derivative identity, and second-order gradient checks."""
        system = self._config_system(ctx, ctx.trials(200, 100))
        n = system.op.n
        q = system.q
        r0 = solver_service.nehari_radius(system)
        violations = 0
        worst = 0.0
        seeds = ctx.trials(100, 10)
        for _ in range(seeds):
            u, v = ctx.rng.standard_normal((2, n))
            _, _, proj = solver_service.nehari_project(system, u, v)
            g_rel = abs(proj.G_after) / proj.norm_sq
            d_rel = abs(proj.radial_derivative - (1.0 - q) * proj.norm_sq) / proj.norm_sq
            worst = max(worst, g_rel, d_rel)
            bad = g_rel > NEHARI_RTOL or d_rel > NEHARI_RTOL or math.sqrt(proj.norm_sq) < r0 * (1 - 1e-12)
            violations += int(bad)

        instances = ctx.trials(20, 5)
        gradient_bad = 0
        volume = system.op.cell_volume
        eps = 1e-3
        for _ in range(instances):
            u, v, phi, psi = ctx.rng.standard_normal((4, n))
            gu, gv = solver_service.grad_J(system, u, v)
            exact = volume * float(gu @ phi + gv @ psi)
            errors = []
            for step in (eps, eps / 2):
                plus = solver_service.J(system, u + step * phi, v + step * psi)
                minus = solver_service.J(system, u - step * phi, v - step * psi)
                errors.append(abs((plus - minus) / (2 * step) - exact))
            floor = 1e-9 * max(abs(exact), 1.0)
            if not (errors[1] <= 0.3 * errors[0] or errors[1] <= floor):
                gradient_bad += 1

        reduction_bad = 0
        pairings = [
            geometry_service.reflection_pairing(system.op.grid, e)
            for e in geometry_service.lattice_directions(system.op.grid.dimension)
        ]
        for pairing in pairings:
            u, v = np.abs(ctx.rng.standard_normal((2, n)))
            if not solver_service.functional_reduction_check(system, u, v, pairing).holds:
                reduction_bad += 1

        total = violations + gradient_bad + reduction_bad
        return PropertyResult(
            name="nehari",
            passed=total == 0,
            trials=seeds + instances + len(pairings),
            violations=total,
            max_violation=worst,
            details={"r0": r0, "gradient_violations": gradient_bad, "reduction_violations": reduction_bad},
        )

    def ground_state(self, ctx: _Context) -> PropertyResult:
        """Converged positive distinct ground state with consistent symmetry diagnostics."""
        system = self._config_system(ctx, 200 if ctx.quick else None)
        u1, u2, report = solver_service.minimize(
            system, ctx.config.solver, rng=ctx.rng, threads=ctx.threads
        )
        ctx.ground_state = (system, u1, u2)
        failures = []
        if not report.converged:
            failures.append("not converged")
        if report.min_u1 <= 0.0 or report.min_u2 <= 0.0:
            failures.append("not positive")
        if not report.coefficients_identical and not report.distinct:
            failures.append("components coincide")
        if not report.positivity.holds:
            failures.append("absolute values raised J")
        if report.min_norm_seen < report.r0 * (1 - 1e-12):
            failures.append("iterate inside the Nehari radius")

        details: dict[str, object] = {
            "J": report.J,
            "residual_relative": report.residual_relative,
            "iterations": report.iterations,
            "distinctness": report.distinctness,
        }
        if system.op.grid.dimension == 2 and report.symmetry is not None:
            axis = report.symmetry.axis
            scan = coupling_service.rotating_plane_scan(
                system,
                u1,
                u2,
                resolution_deg=ctx.config.diagnostics.resolution_deg,
                threads=ctx.threads,
                axis=axis,
            )
            details["axis"] = axis.model_dump(mode="json")
            details["scan"] = scan.model_dump(mode="json", exclude={"interior_directions"})
            if axis.status == "axis":
                if not scan.agrees:
                    failures.append("scan axis disagrees with find_axis")
                if not report.symmetry.foliated_holds:
                    failures.append("foliated Schwarz check failed")
            elif axis.status != "radial":
                failures.append(f"no axis detected ({axis.status})")

        details["failures"] = failures
        return PropertyResult(
            name="ground_state", passed=not failures, trials=1, violations=len(failures), details=details
        )

    def max_principle(self, ctx: _Context) -> PropertyResult:
        """Small-volume principle on random weakly coupled instances; strong principle on the ground state."""
        op = self._ball_operator(ctx, ctx.trials(150, 80))
        grid = op.grid
        e = geometry_service.lattice_directions(grid.dimension)[0]
        pairing = geometry_service.reflection_pairing(grid, e)
        h_side = np.flatnonzero(pairing.interior_side > 0)
        points = grid.interior_points
        m = 2
        trials = ctx.trials(200, 20)
        violations = 0
        unmet = 0
        for _ in range(trials):
            center = ctx.rng.choice(h_side)
            k = int(ctx.rng.integers(2, 9))
            distance = np.linalg.norm(points[h_side] - points[center], axis=1)
            D = np.sort(h_side[np.argsort(distance)[:k]])
            lam = spectral_service.lambda1_subset(op, D)
            bound = 0.9 * lam / 2 ** (m - 1)
            C = np.zeros((op.n, m, m))
            C[:, 0, 1] = ctx.rng.uniform(0.0, bound, op.n)
            C[:, 1, 0] = ctx.rng.uniform(0.0, bound, op.n)
            C[:, 0, 0] = ctx.rng.uniform(-bound, bound, op.n)
            C[:, 1, 1] = ctx.rng.uniform(-bound, bound, op.n)
            exterior = np.abs(ctx.rng.standard_normal((m, op.n)))
            verdict = coupling_service.mp_check(op, C, D, pairing, exterior=exterior, rng=ctx.rng)
            if verdict.verdict == "hypothesis not met":
                unmet += 1
            elif verdict.verdict != "holds":
                violations += 1

        strong_checked = 0
        strong_bad = 0
        if ctx.ground_state is not None:
            system, u1, u2 = ctx.ground_state
            scale = max(float(u1.max()), float(u2.max()))
            for direction in geometry_service.lattice_directions(system.op.grid.dimension):
                gs_pairing = geometry_service.reflection_pairing(system.op.grid, direction)
                lin = coupling_service.linearize(system, u1, u2, gs_pairing)
                D = np.flatnonzero(gs_pairing.interior_side > 0)
                if coupling_service.coupling_classify(lin.C, D).verdict == "not weakly coupled":
                    strong_bad += 1
                    continue
                report = coupling_service.mp_check(
                    system.op, lin.C, D, gs_pairing, mode="strong", W=lin.W, reference_scale=scale
                )
                if report.verdict == "hypothesis not met":
                    continue
                strong_checked += 1
                strong_bad += int(report.verdict == "fails")

        # the strong principle must have been exercised on at least one direction
        strong_missing = int(strong_checked == 0)
        return PropertyResult(
            name="max_principle",
            passed=violations == 0 and unmet == 0 and strong_bad == 0 and not strong_missing,
            trials=trials + strong_checked,
            violations=violations + unmet + strong_bad + strong_missing,
            details={
                "hypothesis_not_met": unmet,
                "strong_checked": strong_checked,
                "strong_violations": strong_bad,
                "strong_not_run": bool(strong_missing),
                "ground_state_available": ctx.ground_state is not None,
            },
        )

    def discretization(self, ctx: _Context) -> PropertyResult:
        """
        lambda1 on the unit ball changes by less than 2% when h is halved.

        Always runs at the configured resolution; coarse quick grids are not
        in the asymptotic regime.
        """
        target = ctx.config.grid.target_nodes or 800
        coarse = self._ball_operator(ctx, target)
        domain = RadialDomain(shape="ball", r_out=1.0, dimension=ctx.kernel.dimension)
        fine_grid: Grid = geometry_service.make_grid(domain, h=0.5 * coarse.grid.h)
        fine = energy_service.assemble(ctx.kernel, fine_grid, threads=ctx.threads)
        lam_coarse = spectral_service.lambda1(coarse).lambda1
        lam_fine = spectral_service.lambda1(fine).lambda1
        change = abs(lam_fine - lam_coarse) / lam_fine
        return PropertyResult(
            name="discretization",
            passed=change < DISCRETIZATION_RTOL,
            trials=1,
            violations=int(change >= DISCRETIZATION_RTOL),
            max_violation=change,
            details={"h": coarse.grid.h, "lambda1_h": lam_coarse, "lambda1_h_half": lam_fine},
        )


verification_service = VerificationService()
