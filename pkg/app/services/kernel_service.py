"""Radial kernel evaluation, normalization, validation and truncation."""

import csv
import math
from collections.abc import Callable
from pathlib import Path

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray
from pydantic import ValidationError
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma

from app.core.config import settings
from app.core.exceptions import DomainError, KernelValidationError, TailMassInfiniteError
from app.schemas.base import Verdict
from app.schemas.kernel import (
    BoundsVerdict,
    FractionalFamily,
    KernelBounds,
    KernelEvaluation,
    KernelSpec,
    KernelValidationReport,
    NormalizationCheck,
    TabulatedFamily,
    TruncatedKernel,
)

logger = structlog.get_logger()

FloatArray = NDArray[np.float64]

# Relative slack when comparing inferred exponents against bound exponents
EXPONENT_TOL = 1e-9


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere S^{N-1} in R^N."""
    return float(2.0 * math.pi ** (N / 2) / gamma(N / 2))


class TabulatedProfile:
    """
    Interpolant of a tabulated kernel.

    Between two positive samples the profile is linear in log-log coordinates,
    so power laws are reproduced exactly. A segment touching zero is linear in
    log r. Outside the table the first and last segments are extended.
    """

    def __init__(self, family: TabulatedFamily) -> None:
        self.N = family.N
        self.radii = np.asarray(family.radii, dtype=np.float64)
        self.values = np.asarray(family.values, dtype=np.float64)
        self.log_radii = np.log(self.radii)

    @property
    def size(self) -> int:
        return int(self.radii.size)

    def __call__(self, r: ArrayLike) -> FloatArray:
        r = np.asarray(r, dtype=np.float64)
        if self.size == 1:
            return np.full(r.shape, self.values[0])

        idx = np.clip(np.searchsorted(self.radii, r, side="right") - 1, 0, self.size - 2)
        k_lo = self.values[idx]
        k_hi = self.values[idx + 1]
        t = (np.log(r) - self.log_radii[idx]) / (self.log_radii[idx + 1] - self.log_radii[idx])

        positive = (k_lo > 0.0) & (k_hi > 0.0)
        log_lo = np.log(np.where(positive, k_lo, 1.0))
        log_hi = np.log(np.where(positive, k_hi, 1.0))
        loglog = np.exp(log_lo + t * (log_hi - log_lo))
        linear = k_lo + t * (k_hi - k_lo)
        return np.maximum(np.where(positive, loglog, linear), 0.0)

    def _segment_exponent(self, i: int) -> float | None:
        """Decay exponent a with k ~ r^{-a} on segment i, or None if it touches zero."""
        k_lo, k_hi = self.values[i], self.values[i + 1]
        if k_lo <= 0.0 or k_hi <= 0.0:
            return None
        return float(-(math.log(k_hi) - math.log(k_lo)) / (self.log_radii[i + 1] - self.log_radii[i]))

    @property
    def near_origin_exponent(self) -> float | None:
        if self.size < 2:
            return None
        return self._segment_exponent(0)

    @property
    def compact_tail(self) -> bool:
        return bool(self.values[-1] == 0.0)

    @property
    def tail_exponent(self) -> float | None:
        if self.compact_tail:
            return None
        if self.size < 2:
            return 0.0
        return self._segment_exponent(self.size - 2)


class KernelService:
    """Service for radial kernels k(z) = k0(|z|)."""

    # ------------------------------------------------------------------
    # Normalization
    # ------------------------------------------------------------------

    def fractional_normalization(self, N: int, s: float) -> float:
        """
        Normalization constant c_{N,s} of the fractional Laplacian.

        Args:
            N: Space dimension (>= 1)
            s: Order in (0, 1)

        Returns:
            2^{2s} s Gamma(N/2 + s) / (pi^{N/2} Gamma(1 - s))
        """
        if N < 1:
            raise DomainError("Dimension must be at least 1", details={"N": N})
        if not 0.0 < s < 1.0:
            raise DomainError("Order s must lie in (0, 1)", details={"s": s})
        return float(4.0**s * s * gamma(N / 2 + s) / (math.pi ** (N / 2) * gamma(1.0 - s)))

    def normalization_integral(self, N: int, s: float) -> float:
        """
        Integral of (1 - cos x1) |x|^{-N-2s} over R^N by quadrature.

        The transverse variables integrate in closed form, leaving
        2 A(N, s) times the one-dimensional integral of (1 - cos t) t^{-1-2s}
        over (0, inf). The oscillatory tail uses QAWF.
        """
        if not 0.0 < s < 1.0:
            raise DomainError("Order s must lie in (0, 1)", details={"s": s})
        transverse = math.pi ** ((N - 1) / 2) * gamma(0.5 + s) / gamma(N / 2 + s)

        near, _ = integrate.quad(
            lambda t: 2.0 * math.sin(0.5 * t) ** 2 * t ** (-1.0 - 2.0 * s),
            0.0,
            1.0,
            limit=200,
            epsabs=1e-13,
        )
        cos_tail, _ = integrate.quad(
            lambda t: t ** (-1.0 - 2.0 * s), 1.0, np.inf, weight="cos", wvar=1.0
        )
        far = 1.0 / (2.0 * s) - cos_tail
        return float(2.0 * transverse * (near + far))

    def normalization_check(self, N: int, s: float) -> NormalizationCheck:
        """Compare the Gamma formula with the inverted quadrature."""
        formula = self.fractional_normalization(N, s)
        quadrature = 1.0 / self.normalization_integral(N, s)
        return NormalizationCheck(
            N=N,
            s=s,
            gamma_formula=formula,
            quadrature=quadrature,
            relative_error=abs(formula - quadrature) / formula,
        )

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    def profile(self, spec: KernelSpec) -> TabulatedProfile | None:
        """Interpolant for tabulated kernels, None for analytic ones."""
        if isinstance(spec.family, TabulatedFamily):
            return TabulatedProfile(spec.family)
        return None

    def k0_array(self, spec: KernelSpec, r: ArrayLike) -> FloatArray:
        """Vectorized k0 for strictly positive radii (unchecked)."""
        r = np.asarray(r, dtype=np.float64)
        family = spec.family
        if isinstance(family, FractionalFamily):
            c = self.fractional_normalization(family.N, family.s)
            return c * r ** (-family.N - 2.0 * family.s)
        return TabulatedProfile(family)(r)

    def evaluate(self, spec: KernelSpec, r: float) -> KernelEvaluation:
        """
        Evaluate k0 at one radius with extrapolation metadata.

        Raises:
            DomainError: If r <= 0
        """
        if not r > 0.0:
            raise DomainError("Kernel radius must be positive", details={"r": r})
        value = float(self.k0_array(spec, np.array([r]))[0])

        family = spec.family
        if isinstance(family, FractionalFamily):
            return KernelEvaluation(radius=r, value=value, region="analytic", extrapolated=False)
        if r < family.radii[0]:
            logger.warning("Kernel query below first sample", r=r, first=family.radii[0])
            return KernelEvaluation(radius=r, value=value, region="below_table", extrapolated=True)
        if r > family.radii[-1]:
            return KernelEvaluation(radius=r, value=value, region="above_table", extrapolated=True)
        return KernelEvaluation(radius=r, value=value, region="table", extrapolated=False)

    def eval_k0(self, spec: KernelSpec, r: float) -> float:
        """Kernel value k0(r) for r > 0."""
        return self.evaluate(spec, r).value

    def exponents(self, spec: KernelSpec) -> tuple[float | None, float | None, bool]:
        """Near-origin exponent, tail exponent and compact-tail flag."""
        family = spec.family
        if isinstance(family, FractionalFamily):
            a = family.N + 2.0 * family.s
            return a, a, False
        table = TabulatedProfile(family)
        return table.near_origin_exponent, table.tail_exponent, table.compact_tail

    # ------------------------------------------------------------------
    # Radial masses
    # ------------------------------------------------------------------

    def _tail_integrable(self, spec: KernelSpec) -> bool:
        _, tail, compact = self.exponents(spec)
        return compact or (tail is not None and tail > spec.dimension)

    def radial_density_mass(self, spec: KernelSpec, r0: float, r1: float = math.inf) -> float:
        """Integral of k0(t) t^{N-1} over [r0, r1], i.e. the shell mass per unit solid angle."""
        if not r0 > 0.0:
            raise DomainError("Inner radius must be positive", details={"r0": r0})
        if r1 <= r0:
            return 0.0

        N = spec.dimension
        family = spec.family
        if isinstance(family, FractionalFamily):
            c = self.fractional_normalization(N, family.s)
            two_s = 2.0 * family.s
            outer = 0.0 if math.isinf(r1) else r1 ** (-two_s)
            return c * (r0 ** (-two_s) - outer) / two_s

        if math.isinf(r1) and not self._tail_integrable(spec):
            raise TailMassInfiniteError(
                details={"tail_exponent": self.exponents(spec)[1], "N": N}
            )

        table = TabulatedProfile(family)
        cutoff = max(settings.TAIL_RADIUS_FACTOR * r0, settings.TAIL_RADIUS_FACTOR, family.radii[-1])
        upper = min(r1, cutoff)
        knots = [float(x) for x in table.radii if r0 < x < upper]
        mass, _ = integrate.quad(
            lambda t: float(table(t)) * t ** (N - 1),
            r0,
            upper,
            points=knots or None,
            limit=200,
        )

        if r1 > cutoff and not table.compact_tail:
            k_last = float(table.values[-1])
            r_last = float(table.radii[-1])
            b = table.tail_exponent or 0.0
            amplitude = k_last * r_last**b
            if abs(b - N) < EXPONENT_TOL:
                mass += amplitude * math.log(r1 / cutoff)
            else:
                outer = 0.0 if math.isinf(r1) else r1 ** (N - b)
                mass += amplitude * (cutoff ** (N - b) - outer) / (b - N)
        return float(mass)

    def radial_mass(self, spec: KernelSpec, r0: float, r1: float = math.inf) -> float:
        """
        Kernel mass over the shell r0 <= |z| <= r1.

        Args:
            spec: Kernel
            r0: Inner radius (> 0)
            r1: Outer radius, possibly infinite

        Returns:
            |S^{N-1}| times the radial integral of k0(r) r^{N-1}
        """
        return sphere_area(spec.dimension) * self.radial_density_mass(spec, r0, r1)

    def exterior_density_mass(self, spec: KernelSpec, r: ArrayLike) -> FloatArray:
        """Vectorized integral of k0(t) t^{N-1} over [r, inf)."""
        radii = np.asarray(r, dtype=np.float64)
        family = spec.family
        if isinstance(family, FractionalFamily):
            c = self.fractional_normalization(family.N, family.s)
            two_s = 2.0 * family.s
            return c * radii ** (-two_s) / two_s
        flat = [self.radial_density_mass(spec, float(x)) for x in radii.ravel()]
        return np.asarray(flat, dtype=np.float64).reshape(radii.shape)

    def radial_moment(self, spec: KernelSpec, r: ArrayLike) -> FloatArray:
        """Vectorized integral of k0(t) t^{N+1} over [0, r]: the second moment per unit solid angle."""
        radii = np.asarray(r, dtype=np.float64)
        N = spec.dimension
        family = spec.family
        if isinstance(family, FractionalFamily):
            c = self.fractional_normalization(N, family.s)
            two_minus = 2.0 - 2.0 * family.s
            return c * radii**two_minus / two_minus

        table = TabulatedProfile(family)
        flat = []
        for x in radii.ravel():
            knots = [float(k) for k in table.radii if 0.0 < k < x]
            value, _ = integrate.quad(
                lambda t: float(table(t)) * t ** (N + 1), 0.0, float(x), points=knots or None, limit=200
            )
            flat.append(value)
        return np.asarray(flat, dtype=np.float64).reshape(radii.shape)

    def exterior_density_interpolant(
        self, spec: KernelSpec, r_min: float, r_max: float
    ) -> Callable[[FloatArray], FloatArray]:
        """
        Callable t -> integral of k0 s^{N-1} over [t, inf) on [r_min, r_max].

        Closed form for fractional kernels; tabulated kernels are sampled on a
        geometric grid and interpolated monotonically in log r.
        """
        if isinstance(spec.family, FractionalFamily):
            return lambda t: self.exterior_density_mass(spec, t)
        lo, hi = 0.99 * r_min, 1.01 * r_max
        samples = np.geomspace(lo, hi, settings.TAIL_TABLE_POINTS)
        interpolant = PchipInterpolator(np.log(samples), self.exterior_density_mass(spec, samples))
        return lambda t: np.maximum(interpolant(np.log(np.clip(t, lo, hi))), 0.0)

    def _require_polar(self, spec: KernelSpec) -> None:
        if spec.dimension < 2:
            raise DomainError("Ball masses need N >= 2", details={"N": spec.dimension})

    def ball_exterior_mass(self, spec: KernelSpec, rho: ArrayLike, R: float) -> tuple[FloatArray, float]:
        """
        Kernel mass over {|y| > R} seen from points at distance rho < R from the centre.

        Integrates the radial tail mass along rays from x: a ray at angle alpha
        to x/|x| leaves the ball after t = sqrt(R^2 - rho^2 sin^2) - rho cos.

        Returns:
            Masses per rho and the relative quadrature error estimate
        """
        rho = np.atleast_1d(np.asarray(rho, dtype=np.float64))
        self._require_polar(spec)
        if np.any(rho < 0.0) or np.any(rho >= R):
            raise DomainError("Points must lie inside the ball", details={"R": R, "rho_max": float(rho.max())})
        N = spec.dimension
        a = rho / R
        tail = self.exterior_density_interpolant(spec, R - float(rho.max()), R + float(rho.max()))
        ref = tail(R - rho)
        ref = np.where(ref > 0.0, ref, 1.0)

        def integrand(alpha: float) -> FloatArray:
            sin, cos = math.sin(alpha), math.cos(alpha)
            root = np.sqrt(1.0 - (a * sin) ** 2)
            # both forms are exact; each avoids cancellation on its half
            t = R * np.where(cos >= 0.0, (1.0 - a * a) / (root + a * max(cos, 0.0)), root - a * cos)
            return tail(t) / ref * sin ** (N - 2)

        values, error = integrate.quad_vec(
            integrand, 0.0, math.pi, epsrel=settings.KAPPA_QUAD_RTOL, norm="max", points=(0.5 * math.pi,)
        )
        return sphere_area(N - 1) * ref * values, float(error / max(float(np.max(values)), 1e-300))

    def ball_interior_mass(self, spec: KernelSpec, rho: ArrayLike, R: float) -> tuple[FloatArray, float]:
        """
        Kernel mass over {|y| < R} seen from points at distance rho > R from the centre.

        Rays at angle beta from -x/|x| cross the ball for sin(beta) < R/rho;
        with sin(beta) = (R/rho) sin(phi) the chord ends are
        rho (1 - a^2) / (cos(beta) + a cos(phi)) and rho (cos(beta) + a cos(phi)).

        Returns:
            Masses per rho and the relative quadrature error estimate
        """
        rho = np.atleast_1d(np.asarray(rho, dtype=np.float64))
        self._require_polar(spec)
        if np.any(rho <= R):
            raise DomainError("Points must lie outside the ball", details={"R": R, "rho_min": float(rho.min())})
        N = spec.dimension
        a = R / rho
        tail = self.exterior_density_interpolant(spec, float(rho.min()) - R, float(rho.max()) + R)
        ref = tail(rho - R)
        ref = np.where(ref > 0.0, ref, 1.0)

        def integrand(phi: float) -> FloatArray:
            sin_beta = a * math.sin(phi)
            cos_beta = np.sqrt(1.0 - sin_beta**2)
            far = cos_beta + a * math.cos(phi)
            near = (1.0 - a * a) / far
            chord = tail(rho * near) - tail(rho * far)
            return chord / ref * sin_beta ** (N - 2) * a * math.cos(phi) / cos_beta

        values, error = integrate.quad_vec(
            integrand, 0.0, 0.5 * math.pi, epsrel=settings.KAPPA_QUAD_RTOL, norm="max"
        )
        return sphere_area(N - 1) * ref * values, float(error / max(float(np.max(values)), 1e-300))

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------

    def _integrability_value(self, spec: KernelSpec) -> float:
        """|S^{N-1}| times the integral of min(1, r^2) k0(r) r^{N-1}."""
        N = spec.dimension
        family = spec.family
        area = sphere_area(N)
        if isinstance(family, FractionalFamily):
            c = self.fractional_normalization(N, family.s)
            return area * c * (1.0 / (2.0 - 2.0 * family.s) + 1.0 / (2.0 * family.s))

        table = TabulatedProfile(family)
        knots = [float(x) for x in table.radii if 0.0 < x < 1.0]
        near, _ = integrate.quad(
            lambda t: float(table(t)) * t ** (N + 1), 0.0, 1.0, points=knots or None, limit=200
        )
        return area * near + self.radial_mass(spec, 1.0)

    def _check_bounds(self, spec: KernelSpec, bounds: KernelBounds) -> BoundsVerdict:
        N = spec.dimension
        near, tail, compact = self.exponents(spec)
        table = self.profile(spec)
        lower_exp = N + 2.0 * bounds.s
        upper_exp = N + 2.0 * bounds.sigma
        tail_exp = N + 2.0 * bounds.gamma

        near_samples = np.logspace(-8.0, 0.0, 801)[:-1]
        tail_samples = np.logspace(0.0, 8.0, 801)
        k_near = self.k0_array(spec, near_samples)
        k_tail = self.k0_array(spec, tail_samples)

        lower: Verdict
        if np.any(k_near <= 0.0):
            lower = "fails"
        elif near is None:
            # log-type growth at most; no power singularity to dominate
            lower = "inconclusive" if table is None or table.size < 2 else "fails"
        else:
            lower = "holds" if lower_exp <= near * (1.0 + EXPONENT_TOL) else "fails"

        upper: Verdict
        if near is None:
            upper = "holds"
        else:
            upper = "holds" if near <= upper_exp * (1.0 + EXPONENT_TOL) else "fails"

        tail_verdict: Verdict
        if compact:
            tail_verdict = "holds"
        elif tail is None:
            tail_verdict = "inconclusive"
        else:
            tail_verdict = "holds" if tail >= tail_exp * (1.0 - EXPONENT_TOL) else "fails"

        c_required: float | None = None
        if lower == upper == tail_verdict == "holds":
            ratios = [
                float(np.max(near_samples ** (-lower_exp) / k_near)),
                float(np.max(k_near / near_samples ** (-upper_exp))),
                float(np.max(k_tail / tail_samples ** (-tail_exp))),
            ]
            c_required = max(ratios)

        holds = c_required is not None and (
            bounds.c is None or bounds.c >= c_required * (1.0 - 1e-9)
        )
        return BoundsVerdict(
            lower_near_origin=lower,
            upper_near_origin=upper,
            tail=tail_verdict,
            c_required=c_required,
            c_supplied=bounds.c,
            holds=holds,
        )

    def validate(self, spec: KernelSpec, bounds: KernelBounds | None = None) -> KernelValidationReport:
        """
        Validate a kernel against the integrability and bound conditions.

        Args:
            spec: Kernel to validate
            bounds: Optional (c, s, sigma, gamma) power bounds to test

        Returns:
            KernelValidationReport; never raises
        """
        N = spec.dimension
        near, tail, compact = self.exponents(spec)
        table = self.profile(spec)

        near_ok = near is None or near < N + 2.0
        tail_ok = compact or (tail is not None and tail > N)
        integrability: Verdict = "holds" if near_ok and tail_ok else "fails"

        divergence: Verdict
        if table is None:
            divergence = "holds"
        elif not tail_ok:
            divergence = "holds"
        elif table.size < 2 or near is None:
            divergence = "inconclusive"
        else:
            divergence = "holds" if near >= N else "fails"

        if table is None:
            monotonicity = "strictly decreasing"
        else:
            steps = np.diff(table.values)
            if np.any(steps > 0.0):
                monotonicity = "violated"
            elif np.all(steps < 0.0):
                monotonicity = "strictly decreasing"
            else:
                monotonicity = "nonincreasing"
        flag_consistent = (monotonicity == "strictly decreasing") == spec.strictly_decreasing

        value: float | None = None
        if integrability == "holds":
            try:
                value = self._integrability_value(spec)
            except (TailMassInfiniteError, ArithmeticError) as exc:
                logger.warning("Integrability quadrature failed", error=str(exc))

        report = KernelValidationReport(
            integrability=integrability,
            integrability_value=value,
            zeroth_moment_divergence=divergence,
            near_origin_exponent=near,
            tail_exponent=tail,
            compact_tail=compact,
            bounds=self._check_bounds(spec, bounds) if bounds is not None else None,
            monotonicity=monotonicity,
            flag_consistent=flag_consistent,
        )
        logger.debug(
            "Kernel validated",
            integrability=integrability,
            zeroth_moment_divergence=divergence,
            monotonicity=monotonicity,
        )
        return report

    def require_valid(self, spec: KernelSpec) -> KernelValidationReport:
        """Validate and raise KernelValidationError when the kernel is unusable."""
        report = self.validate(spec)
        if not report.valid:
            raise KernelValidationError(
                "Kernel fails the integrability condition",
                details=report.model_dump(),
            )
        return report

    # ------------------------------------------------------------------
    # Truncation
    # ------------------------------------------------------------------

    def truncate(self, spec: KernelSpec, delta: float) -> TruncatedKernel:
        """
        Split the kernel at radius delta and compute the far-part mass J_delta.

        Raises:
            DomainError: If delta <= 0
            TailMassInfiniteError: If the tail is not integrable
        """
        if not delta > 0.0:
            raise DomainError("Truncation radius must be positive", details={"delta": delta})
        tail_mass = self.radial_mass(spec, delta)
        logger.debug("Kernel truncated", delta=delta, tail_mass=tail_mass)
        return TruncatedKernel(base=spec, delta=delta, tail_mass=tail_mass)

    def eval_truncated(self, truncated: TruncatedKernel, r: float) -> tuple[float, float]:
        """Return (k_delta(r), j_delta(r))."""
        value = self.eval_k0(truncated.base, r)
        if r < truncated.delta:
            return value, 0.0
        return 0.0, value

    # ------------------------------------------------------------------
    # Loading
    # ------------------------------------------------------------------

    def load_tabulated(
        self, path: str | Path, N: int, strictly_decreasing: bool | None = None
    ) -> KernelSpec:
        """
        Load a tabulated kernel from a two-column CSV (r, k0), header optional.

        Raises:
            KernelValidationError: If the file is malformed or the samples are invalid
        """
        path = Path(path)
        if not path.is_file():
            raise KernelValidationError("Kernel table not found", details={"path": str(path)})
        radii: list[float] = []
        values: list[float] = []
        with path.open(newline="") as handle:
            for line_no, row in enumerate(csv.reader(handle), start=1):
                cells = [cell.strip() for cell in row if cell.strip()]
                if not cells or cells[0].startswith("#"):
                    continue
                if len(cells) != 2:
                    raise KernelValidationError(
                        "Kernel table rows must have two columns",
                        details={"path": str(path), "line": line_no},
                    )
                try:
                    r, k = float(cells[0]), float(cells[1])
                except ValueError:
                    if not radii:
                        continue  # header
                    raise KernelValidationError(
                        "Non-numeric kernel table entry",
                        details={"path": str(path), "line": line_no},
                    ) from None
                radii.append(r)
                values.append(k)

        if not radii:
            raise KernelValidationError("Kernel table is empty", details={"path": str(path)})
        try:
            spec = KernelSpec.tabulated(N, radii, values, strictly_decreasing)
        except ValidationError as exc:
            raise KernelValidationError(
                "Invalid kernel table",
                details={"path": str(path), "errors": exc.errors(include_url=False)},
            ) from exc
        logger.info("Kernel table loaded", path=str(path), samples=len(radii))
        return spec


kernel_service = KernelService()
