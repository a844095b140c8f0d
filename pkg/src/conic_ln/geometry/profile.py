"""
Boundary defining function of the cap.

Solves rho * Lap(rho) + S rho^2 = (n/2)(|rho'|^2 - 1) with rho(phi_max) = 0 and
rho'(0) = 0. The blow-up profile is xi = rho^(-beta). The boundary slope
rho'(phi_max) is not imposed; it is reported and must come out close to -1.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import spsolve

from ..config import NewtonOptions
from ..constants import StructuralConstants, structural_constants
from ..errors import ConvergenceError
from .angular_grid import (
    AngularField,
    AngularGrid,
    FieldLike,
    field_values,
    gradient_matrix,
    laplace_apply,
    laplace_matrix,
)
from .fitting import fit_power_law, resolved_boundary_window

logger = logging.getLogger(__name__)

_MAX_CONSECUTIVE_CLIPS = 10


@dataclass(frozen=True, eq=False)
class BoundaryProfile:
    grid: AngularGrid
    rho: AngularField
    xi: AngularField
    beta: float
    S_const: float
    boundary_slope: float
    residual_norm: float
    iterations: int = 0
    history: List[float] = field(default_factory=list, repr=False)

    @property
    def constants(self) -> StructuralConstants:
        return structural_constants(self.grid.dimension_n)

    @property
    def comparability(self) -> Tuple[float, float]:
        """(min, max) of rho / (phi_max - phi) over the grid."""
        ratio = self.rho.values / self.grid.distance
        return float(ratio.min()), float(ratio.max())

    def to_rows(self) -> Tuple[List[str], List[Tuple[float, float, float]]]:
        rows = [
            (float(p), float(r), float(x))
            for p, r, x in zip(self.grid.nodes, self.rho.values, self.xi.values)
        ]
        return ["phi", "rho", "xi"], rows

    def sidecar(self) -> Dict[str, Any]:
        return {
            "n": self.grid.dimension_n,
            "phi_max": self.grid.phi_max,
            "beta": self.beta,
            "boundary_slope": self.boundary_slope,
            "residual_norm": self.residual_norm,
            "node_count": self.grid.node_count,
        }


@dataclass(frozen=True)
class BlowupReport:
    slope: float
    c1: float
    c2: float
    window: Tuple[float, float]


def _rho_residual(
    rho: np.ndarray, lap: sparse.csr_matrix, grad: sparse.csr_matrix, S: float, n: int
) -> np.ndarray:
    d = grad @ rho
    return rho * (lap @ rho) + S * rho**2 - 0.5 * n * (d**2 - 1.0)


def _rho_jacobian(
    rho: np.ndarray, lap: sparse.csr_matrix, grad: sparse.csr_matrix, S: float, n: int
) -> sparse.csc_matrix:
    d = grad @ rho
    jac = (
        sparse.diags(lap @ rho + 2.0 * S * rho)
        + sparse.diags(rho) @ lap
        - n * (sparse.diags(d) @ grad)
    )
    return jac.tocsc()


def _one_sided_slope(grid: AngularGrid, values: np.ndarray) -> float:
    x = np.append(grid.nodes[-2:], grid.phi_max) - grid.phi_max
    y = np.append(values[-2:], 0.0)
    coeffs = np.polyfit(x, y, 2)
    return float(coeffs[1])


def solve_profile(
    grid: AngularGrid, opts: Optional[NewtonOptions] = None
) -> BoundaryProfile:
    """
    Solve the rho-equation on the grid by damped Newton.

    The line search halves the step until the sup-norm residual decreases;
    iterates are clipped at opts.positivity_floor.

    Args:
        grid: Angular grid of the cap.
        opts: Newton options; defaults are used when omitted.

    Returns:
        The converged profile.

    Raises:
        ConvergenceError: If Newton stalls, exceeds its iteration budget, or
            keeps producing nonpositive iterates. Carries the last iterate and
            the residual history.
    """
    opts = opts or NewtonOptions()
    const = structural_constants(grid.dimension_n)
    n, S = const.n, const.S
    lap = laplace_matrix(grid)
    grad = gradient_matrix(grid)
    abs_lap = abs(lap)

    rho = np.sin(grid.phi_max - grid.nodes)
    residual = _rho_residual(rho, lap, grad, S, n)
    norm = float(np.max(np.abs(residual)))
    history = [norm]
    clips = 0

    for iteration in range(1, opts.max_iterations + 1):
        floor = 64.0 * np.finfo(float).eps * float(np.max(rho * (abs_lap @ rho)))
        if norm <= max(opts.tolerance, floor):
            if norm > opts.tolerance:
                logger.warning(
                    "rho residual %.3e stopped at round-off floor %.3e", norm, floor
                )
            break
        step = spsolve(_rho_jacobian(rho, lap, grad, S, n), -residual)
        damping = 1.0
        while True:
            trial = rho + damping * step
            clipped = bool(np.any(trial < opts.positivity_floor))
            trial = np.maximum(trial, opts.positivity_floor)
            trial_residual = _rho_residual(trial, lap, grad, S, n)
            trial_norm = float(np.max(np.abs(trial_residual)))
            if np.isfinite(trial_norm) and trial_norm < norm:
                break
            damping *= 0.5
            if damping < opts.min_damping:
                raise ConvergenceError(
                    f"rho Newton line search failed at iteration {iteration} "
                    f"(residual {norm:.3e})",
                    last_iterate=rho,
                    history=history,
                )
        clips = clips + 1 if clipped else 0
        if clips > _MAX_CONSECUTIVE_CLIPS:
            raise ConvergenceError(
                "rho iterates stay nonpositive after projection",
                last_iterate=trial,
                history=history,
            )
        rho, residual, norm = trial, trial_residual, trial_norm
        history.append(norm)
        logger.debug("rho Newton %d: residual %.3e damping %.3g", iteration, norm, damping)
    else:
        raise ConvergenceError(
            f"rho Newton did not converge in {opts.max_iterations} iterations",
            last_iterate=rho,
            history=history,
        )

    slope = _one_sided_slope(grid, rho)
    logger.info(
        "profile n=%d phi_max=%.6g: residual %.3e, boundary slope %.8f",
        n,
        grid.phi_max,
        norm,
        slope,
    )
    return BoundaryProfile(
        grid=grid,
        rho=AngularField(grid, rho),
        xi=AngularField(grid, rho ** (-const.beta)),
        beta=const.beta,
        S_const=S,
        boundary_slope=slope,
        residual_norm=norm,
        iterations=len(history) - 1,
        history=history,
    )


def perturbed(profile: BoundaryProfile, delta: FieldLike) -> BoundaryProfile:
    """Copy of the profile with rho shifted by delta (xi kept consistent)."""
    rho = profile.rho.values + field_values(profile.grid, delta)
    return BoundaryProfile(
        grid=profile.grid,
        rho=AngularField(profile.grid, rho),
        xi=AngularField(profile.grid, rho ** (-profile.beta)),
        beta=profile.beta,
        S_const=profile.S_const,
        boundary_slope=profile.boundary_slope,
        residual_norm=profile.residual_norm,
    )


def xi_residual(profile: BoundaryProfile, relative: bool = False) -> AngularField:
    """
    Pointwise residual of Lap(xi) - beta^2 xi - c xi^p.

    The last node is reported as NaN: xi overflows there and O(h) errors are
    amplified without bound.

    Args:
        profile: The profile to check.
        relative: Divide by c xi^p, the size of the nonlinear term.
    """
    const = profile.constants
    xi = profile.xi.values
    lap = laplace_apply(profile.grid, xi, boundary="dirichlet").values
    nonlinear = const.c_nl * xi**const.p
    res = lap - const.beta**2 * xi - nonlinear
    if relative:
        res = res / nonlinear
    res = res.copy()
    res[-1] = np.nan
    return AngularField(profile.grid, res)


def blowup_rate_check(
    profile: BoundaryProfile, xi: Optional[FieldLike] = None
) -> BlowupReport:
    """
    Fit xi against the boundary distance over the resolved boundary decade.

    Args:
        profile: Profile supplying the grid (and xi unless overridden).
        xi: Optional replacement values for xi.

    Returns:
        Fitted slope (about -beta) with min and max of d^beta xi.

    Raises:
        DiagnosticError: If fewer than 3 boundary nodes are resolved.
    """
    grid = profile.grid
    values = profile.xi.values if xi is None else field_values(grid, xi)
    mask = resolved_boundary_window(grid)
    d = grid.distance
    slope, _ = fit_power_law(d[mask], values[mask])
    scaled = d**profile.beta * np.abs(values)
    return BlowupReport(
        slope=slope,
        c1=float(scaled.min()),
        c2=float(scaled.max()),
        window=(float(d[mask].min()), float(d[mask].max())),
    )


def compare_caps(small: BoundaryProfile, large: BoundaryProfile) -> bool:
    """
    Check that the larger cap has the larger rho on the common domain.

    A violation is logged as a warning; coarse meshes may break the
    comparison without anything being wrong.
    """
    if large.grid.phi_max < small.grid.phi_max:
        small, large = large, small
    spline = CubicSpline(
        np.append(large.grid.nodes, large.grid.phi_max),
        np.append(large.rho.values, 0.0),
        bc_type=((1, 0.0), "not-a-knot"),
    )
    holds = bool(np.all(spline(small.grid.nodes) >= small.rho.values - 1e-10))
    if not holds:
        logger.warning(
            "rho(phi_max=%.4g) is not above rho(phi_max=%.4g) everywhere",
            large.grid.phi_max,
            small.grid.phi_max,
        )
    return holds
