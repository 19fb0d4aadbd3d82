"""Linearized differences of reflected solutions, coupling classes and maximum principles."""

import math
from collections.abc import Callable
from typing import Literal, NamedTuple

import numpy as np
import structlog
from numpy.typing import ArrayLike
from scipy import linalg

from app.core.config import settings
from app.core.exceptions import DomainError, PairingError
from app.models.grid import FloatArray, Grid, HalfSpace, ReflectionPairing
from app.models.operator import EnergyOperator
from app.models.system import CoupledSystem
from app.schemas.solver import (
    CouplingVerdict,
    DirectionPositivity,
    LinearizationReport,
    MaxPrincipleReport,
    RotatingPlaneReport,
)
from app.schemas.symmetry import AxisResult
from app.services.energy_service import energy_service
from app.services.geometry_service import geometry_service
from app.services.polarization_service import polarization_service
from app.services.spectral_service import spectral_service

logger = structlog.get_logger()

MEAN_VALUE_GAUSS_POINTS = 8

Jacobian = Callable[[FloatArray], FloatArray]


class Linearization(NamedTuple):
    """W = U - U o sigma with (I - C) W = 0 on the H side."""

    C: FloatArray
    W: FloatArray
    reflected: FloatArray
    report: LinearizationReport


class CouplingService:
    """Service for mean-value linearizations and maximum-principle checks."""

    # ------------------------------------------------------------------
    # Mean-value coupling
    # ------------------------------------------------------------------

    def mean_value_coupling(self, jacobian: Jacobian, U: ArrayLike, U_e: ArrayLike) -> FloatArray:
        """
        c_ij(x) = int_0^1 d_j f_i(U_e + t (U - U_e)) dt by Gauss-Legendre.

        Args:
            jacobian: Maps (m, n) states to (n, m, m) Jacobians
            U: States of shape (m, n)
            U_e: Reflected states of shape (m, n)

        Returns:
            Coupling matrices of shape (n, m, m)
        """
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        U_e = np.atleast_2d(np.asarray(U_e, dtype=np.float64))
        if U.shape != U_e.shape:
            raise DomainError("State arrays differ in shape", details={"U": U.shape, "U_e": U_e.shape})
        nodes, weights = np.polynomial.legendre.leggauss(MEAN_VALUE_GAUSS_POINTS)
        nodes = 0.5 * (nodes + 1.0)
        weights = 0.5 * weights
        m, n = U.shape
        C = np.zeros((n, m, m), dtype=np.float64)
        for t, w in zip(nodes, weights):
            C += w * np.asarray(jacobian(U_e + t * (U - U_e)), dtype=np.float64)
        return C

    def system_jacobian(self, system: CoupledSystem) -> Jacobian:
        """Jacobian of f_i(U) = a_i u_i + |u_j|^q |u_i|^(q-2) u_i."""
        q = system.q
        a = (system.a1, system.a2)

        def jacobian(U: FloatArray) -> FloatArray:
            n = U.shape[1]
            out = np.zeros((n, 2, 2), dtype=np.float64)
            with np.errstate(divide="ignore", invalid="ignore"):
                for i, j in ((0, 1), (1, 0)):
                    ui, uj = U[i], U[j]
                    diag = (q - 1.0) * np.abs(uj) ** q * np.abs(ui) ** (q - 2.0)
                    out[:, i, i] = a[i] + np.where(ui == 0.0, 0.0, diag)
                    out[:, i, j] = q * np.sign(ui * uj) * np.abs(ui * uj) ** (q - 1.0)
            return out

        return jacobian

    def nonlinearity(self, system: CoupledSystem, U: FloatArray) -> FloatArray:
        q = system.q
        u1, u2 = U
        return np.stack(
            (
                system.a1 * u1 + np.abs(u2) ** q * np.sign(u1) * np.abs(u1) ** (q - 1.0),
                system.a2 * u2 + np.abs(u1) ** q * np.sign(u2) * np.abs(u2) ** (q - 1.0),
            )
        )

    def linearize(
        self, system: CoupledSystem, u1: ArrayLike, u2: ArrayLike, pairing: ReflectionPairing
    ) -> Linearization:
        """
        Coupling matrix of W = U - U o sigma for a solution U.

        For q < 2 the diagonal entries use the difference quotient
        (f_i(U) - f_i(U_e) - sum_{j != i} c_ij w_j) / w_i, which avoids the
        integrable singularity of |t|^(q-2) at sign changes.

        Raises:
            PairingError: If the pairing is not an exact lattice reflection
        """
        if not pairing.exact:
            raise PairingError()
        if not pairing.mask_symmetric:
            raise DomainError("Domain mask is not symmetric with respect to the hyperplane")
        grid = system.op.grid
        U = np.stack((grid.check_field(u1), grid.check_field(u2)))
        U_e = np.stack((pairing.reflected(U[0]), pairing.reflected(U[1])))
        W = U - U_e

        C = self.mean_value_coupling(self.system_jacobian(system), U, U_e)
        quotient = system.q < 2.0
        if quotient:
            df = self.nonlinearity(system, U) - self.nonlinearity(system, U_e)
            a = (system.a1, system.a2)
            for i, j in ((0, 1), (1, 0)):
                rest = df[i] - C[:, i, j] * W[j]
                with np.errstate(divide="ignore", invalid="ignore"):
                    C[:, i, i] = np.where(W[i] != 0.0, rest / W[i], a[i])

        residual = np.stack([energy_service.apply(system.op, W[i]) for i in range(2)])
        residual -= np.einsum("nij,jn->in", C, W)
        scale = max(float(np.max(np.abs(U))), np.finfo(float).tiny)
        h_side = pairing.interior_side > 0
        off = np.concatenate((C[h_side, 0, 1], C[h_side, 1, 0]))
        report = LinearizationReport(
            normal=pairing.halfspace.normal.tolist(),
            difference_quotient_diagonal=quotient,
            residual_max=float(np.max(np.abs(residual))),
            residual_relative=float(np.max(np.abs(residual))) / scale,
            off_diagonal_min=float(off.min()) if off.size else 0.0,
        )
        return Linearization(C=C, W=W, reflected=U_e, report=report)

    # ------------------------------------------------------------------
    # Coupling classes
    # ------------------------------------------------------------------

    def coupling_classify(self, C: ArrayLike, nodes: ArrayLike | None = None) -> CouplingVerdict:
        """
        Classify a coupling matrix field on a node set D.

        Weakly coupled: c_ij >= 0 on D for all i != j. Fully coupled: weakly
        coupled and every off-diagonal entry is positive at some node of D,
        which is reported as the witness.
        """
        C = np.asarray(C, dtype=np.float64)
        if C.ndim != 3 or C.shape[1] != C.shape[2]:
            raise DomainError("Coupling field must have shape (n, m, m)", details={"shape": list(C.shape)})
        idx = np.arange(C.shape[0]) if nodes is None else np.asarray(nodes, dtype=np.int64)
        if idx.size == 0:
            raise DomainError("Node set is empty")
        block = C[idx]
        m = C.shape[1]

        witness: dict[str, list[int]] = {}
        negative: dict[str, list[int]] = {}
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                key = f"{i},{j}"
                entries = block[:, i, j]
                witness[key] = idx[entries > 0.0].tolist()
                bad = idx[entries < 0.0]
                if bad.size:
                    negative[key] = bad.tolist()

        if negative:
            verdict = "not weakly coupled"
        elif all(witness.values()):
            verdict = "fully coupled"
        else:
            verdict = "weakly coupled"
        return CouplingVerdict(verdict=verdict, witness=witness, negative_nodes=negative)

    # ------------------------------------------------------------------
    # Maximum principles
    # ------------------------------------------------------------------

    def antisymmetric_block(self, op: EnergyOperator, pairing: ReflectionPairing, rows: ArrayLike, cols: ArrayLike) -> FloatArray:
        """A_xz - A_{x, sigma z}: the operator on fields odd under sigma."""
        if not pairing.exact or not pairing.mask_symmetric:
            raise PairingError()
        grid = op.grid
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        assert pairing.permutation is not None
        mirror = grid.position[pairing.permutation[grid.interior[cols]]]
        return op.matrix[np.ix_(rows, cols)] - op.matrix[np.ix_(rows, mirror)]

    def mp_check(
        self,
        op: EnergyOperator,
        C: ArrayLike,
        nodes: ArrayLike,
        pairing: ReflectionPairing,
        mode: Literal["small-volume", "strong"] = "small-volume",
        W: ArrayLike | None = None,
        F: ArrayLike | None = None,
        exterior: ArrayLike | None = None,
        rng: np.random.Generator | None = None,
        reference_scale: float | None = None,
    ) -> MaxPrincipleReport:
        """
        Maximum-principle checks for antisymmetric supersolutions on D in H.

        Both modes first classify C on D. small-volume needs weak coupling;
        with Lambda1(D) > 2^(m-1) c_inf, where c_inf bounds every entry of C,
        solve (I - C) W = F on D
        for F >= 0 and W = g >= 0 on the rest of the H side, then require
        W >= 0 on D.

        strong needs full coupling: a given antisymmetric W >= 0 on D is then
        either identically zero or strictly positive on D.

        Args:
            op: Assembled operator
            C: Coupling field of shape (n, m, m) over interior nodes
            nodes: Interior indices of D, all on the H side
            pairing: Exact reflection pairing of H
            mode: Which principle to check
            W: Antisymmetric field of shape (m, n) (strong mode)
            F: Right-hand side on D, shape (m, |D|); random nonnegative by default
            exterior: Values g on the H side outside D, shape (m, n); zero by default
            rng: Generator for the default right-hand side
            reference_scale: max |U| for the zero test in strong mode
        """
        C = np.asarray(C, dtype=np.float64)
        D = np.asarray(nodes, dtype=np.int64)
        if D.size == 0:
            raise DomainError("Node set is empty")
        if not pairing.exact:
            raise PairingError()
        if np.any(pairing.interior_side[D] <= 0):
            raise DomainError("Node set must lie on the H side")
        m = C.shape[1]
        classification = self.coupling_classify(C, D)

        if mode == "strong":
            if W is None:
                raise DomainError("Strong mode needs the field W")
            if classification.verdict != "fully coupled":
                return MaxPrincipleReport(
                    mode="strong",
                    verdict="hypothesis not met",
                    hypothesis_met=False,
                    nodes=int(D.size),
                    coupling=classification.verdict,
                )
            report = self._strong_check(np.atleast_2d(np.asarray(W, dtype=np.float64)), D, reference_scale)
            return report.model_copy(update={"coupling": classification.verdict})

        if classification.verdict == "not weakly coupled":
            return MaxPrincipleReport(
                mode="small-volume",
                verdict="hypothesis not met",
                hypothesis_met=False,
                nodes=int(D.size),
                coupling=classification.verdict,
            )

        volume = op.cell_volume
        block = C[D]
        # c_ij <= c_inf for all i, j, diagonal included
        coupling_bound = max(float(np.max(block)), 0.0)
        lam_D = spectral_service.lambda1_subset(op, D)
        hypothesis = lam_D > 2.0 ** (m - 1) * coupling_bound

        rng = rng or np.random.default_rng(settings.DEFAULT_SEED)
        F = rng.uniform(0.0, 1.0, (m, D.size)) if F is None else np.asarray(F, dtype=np.float64)
        rest = np.flatnonzero(pairing.interior_side > 0)
        rest = rest[~np.isin(rest, D)]
        rhs = F.copy()
        if exterior is not None and rest.size:
            g = np.asarray(exterior, dtype=np.float64)[:, rest]
            coupling = self.antisymmetric_block(op, pairing, D, rest) / volume
            rhs -= g @ coupling.T

        B = self.antisymmetric_block(op, pairing, D, D) / volume
        system = np.kron(B, np.eye(m))
        system -= linalg.block_diag(*block)
        solution = linalg.solve(system, rhs.T.reshape(-1), check_finite=False).reshape(D.size, m).T

        scale = max(float(np.max(np.abs(solution))), np.finfo(float).tiny)
        negative = solution < -1e-12 * scale
        min_value = float(solution.min())
        if not hypothesis:
            verdict = "hypothesis not met"
        else:
            verdict = "fails" if np.any(negative) else "holds"
        logger.debug(
            "Small-volume maximum principle",
            nodes=int(D.size),
            lambda_D=lam_D,
            coupling_bound=coupling_bound,
            min_value=min_value,
        )
        return MaxPrincipleReport(
            mode="small-volume",
            verdict=verdict,
            hypothesis_met=hypothesis,
            nodes=int(D.size),
            lambda_D=lam_D,
            coupling_bound=coupling_bound,
            min_value=min_value,
            violations=int(negative.sum()),
            coupling=classification.verdict,
        )

    def _strong_check(self, W: FloatArray, D: np.ndarray, reference_scale: float | None) -> MaxPrincipleReport:
        values = W[:, D]
        scale = reference_scale or max(float(np.max(np.abs(W))), np.finfo(float).tiny)
        peak = float(np.max(np.abs(values)))
        min_value = float(values.min())
        if peak <= settings.ZERO_FIELD_TOL * scale:
            verdict = "identically zero"
            hypothesis = True
        else:
            hypothesis = min_value >= -settings.ZERO_FIELD_TOL * scale
            if not hypothesis:
                verdict = "hypothesis not met"
            else:
                verdict = "holds" if min_value > 0.0 else "fails"
        return MaxPrincipleReport(
            mode="strong",
            verdict=verdict,
            hypothesis_met=hypothesis,
            nodes=int(D.size),
            min_value=min_value,
            violations=int(np.count_nonzero(values <= 0.0)) if verdict == "fails" else 0,
        )

    # ------------------------------------------------------------------
    # Rotating planes
    # ------------------------------------------------------------------

    def _scan_member(self, grid: Grid, fields: list[FloatArray], tol: float) -> Callable[[float], bool]:
        """W_e = U - U o sigma_e >= -tol on H_e for both components."""
        bounds = [geometry_service.interpolation_bound(grid, u) for u in fields]

        def member(angle_deg: float) -> bool:
            pairing = geometry_service.reflection_pairing(grid, HalfSpace.from_angle(math.radians(angle_deg)))
            checked = polarization_service.checked_interior(pairing)
            for u, bound in zip(fields, bounds):
                w = u - pairing.reflected(u)
                slack = tol + (0.0 if pairing.exact else bound)
                if checked.any() and float(w[checked].min()) < -slack:
                    return False
            return True

        return member

    def rotating_plane_scan(
        self,
        system: CoupledSystem,
        u1: ArrayLike,
        u2: ArrayLike,
        tol: float | None = None,
        resolution_deg: float | None = None,
        threads: int | None = None,
        axis: AxisResult | None = None,
    ) -> RotatingPlaneReport:
        """
        Rotate the reflection plane and record where W_e >= 0 holds.

        The arc [phi-, phi+] of such directions is located by a sweep with
        bisection; its midpoint is compared with find_axis. For lattice
        directions strictly inside the arc, W_e must be positive on H_e.
        """
        grid = system.op.grid
        if grid.dimension != 2:
            raise DomainError("Rotating-plane scan supports N = 2 only")
        fields = [grid.check_field(u1), grid.check_field(u2)]
        scale = max(float(np.max(np.abs(f))) for f in fields)
        tol = settings.SYMMETRY_TOL * max(scale, 1.0) if tol is None else tol
        resolution = resolution_deg or settings.SWEEP_RESOLUTION_DEG
        reference = axis or polarization_service.find_axis(grid, fields, tol, resolution, threads)

        member = self._scan_member(grid, fields, tol)
        angles, flags = polarization_service.sweep(grid, member, resolution, threads)
        if flags.all():
            return RotatingPlaneReport(
                verdict="radial",
                find_axis=reference.axis,
                agrees=reference.status == "radial",
            )
        if not flags.any():
            return RotatingPlaneReport(
                verdict="no symmetry detected",
                find_axis=reference.axis,
                agrees=reference.status in ("none", "inconclusive"),
            )
        start, length = polarization_service.largest_arc(flags)
        if length == 1:
            return RotatingPlaneReport(verdict="inconclusive", find_axis=reference.axis)

        first = float(angles[start])
        last = first + resolution * (length - 1)
        phi_minus = polarization_service.refine_edge(member, first, first - resolution)
        phi_plus = polarization_service.refine_edge(member, last, last + resolution)
        mid = math.radians(0.5 * (phi_minus + phi_plus))
        direction = [math.cos(mid), math.sin(mid)]

        interior = []
        for halfspace in geometry_service.lattice_directions(2):
            angle = math.degrees(halfspace.angle)
            shifted = phi_minus + (angle - phi_minus) % 360.0
            if not phi_minus < shifted < phi_plus:
                continue
            pairing = geometry_service.reflection_pairing(grid, halfspace)
            lin = self.linearize(system, fields[0], fields[1], pairing)
            D = np.flatnonzero(pairing.interior_side > 0)
            mins = [float(lin.W[i, D].min()) for i in range(2)]
            interior.append(DirectionPositivity(angle_deg=shifted, min_components=mins, positive=min(mins) > 0.0))

        agrees = None
        if reference.axis is not None:
            cosine = float(np.dot(direction, reference.axis))
            agrees = math.degrees(math.acos(min(1.0, max(-1.0, cosine)))) <= resolution
        report = RotatingPlaneReport(
            verdict="axis",
            phi_minus_deg=phi_minus,
            phi_plus_deg=phi_plus,
            axis=direction,
            find_axis=reference.axis,
            agrees=agrees,
            interior_directions=interior,
            monotone=all(d.positive for d in interior),
        )
        logger.info(
            "Rotating-plane scan",
            phi_minus=phi_minus,
            phi_plus=phi_plus,
            agrees=agrees,
            monotone=report.monotone,
        )
        return report


coupling_service = CouplingService()
