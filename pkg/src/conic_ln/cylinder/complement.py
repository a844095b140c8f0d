"""
Complement solver: minimise the discrete cylinder energy

    E(v) = sum_k |v_{k+1} - v_k|_M^2 / (2 dt)
         + dt * sum_k [ v_k.(K + beta^2 M).v_k / 2 + f_k.M.v_k ]

over fields vanishing at t0 and T. Its first variation is the discrete
equation v_tt + L v - beta^2 v = f at interior rows. The system is
block-tridiagonal with Toeplitz structure in t, so a sine transform in t
splits it into independent tridiagonal angular systems.
"""

import logging
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.fft import dst
from scipy.linalg import LinAlgError, solveh_banded
from scipy.sparse.linalg import cg

from ..errors import ConvergenceError, PreconditionError, ResolutionError
from ..spectral.index_set import resonance_tolerance
from ..spectral.spectrum import Spectrum
from .fields import CylinderField, cylinder_values

logger = logging.getLogger(__name__)

METHODS = ("direct", "cg")
CG_SWEEPS = 8
CG_STEP_TOL = 1e-9


def lower_modes(spectrum: Spectrum, mu: float) -> int:
    """Number I of eigen exponents below mu."""
    return int(np.count_nonzero(spectrum.gammas < mu))


def remove_lower_modes(spectrum: Spectrum, values: np.ndarray, upto: int) -> np.ndarray:
    if upto == 0:
        return values
    basis = spectrum.vectors[:, :upto]
    coefficients = (values * spectrum.operator.mass) @ basis
    return values - coefficients @ basis.T


def _check_orthogonal(spectrum: Spectrum, values: np.ndarray, upto: int, tol: float) -> None:
    if upto == 0:
        return
    mass = spectrum.operator.mass
    coefficients = (values * mass) @ spectrum.vectors[:, :upto]
    norms = np.sqrt(np.sum(values * values * mass, axis=1))
    limit = tol * np.maximum(norms, np.finfo(float).tiny)
    bad = np.abs(coefficients).max(axis=1) > limit
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0])
        raise PreconditionError(
            f"forcing is not orthogonal to the first {upto} eigenfields at t-row {row}; "
            "split it before the complement solve"
        )


def complement_system(spectrum: Spectrum, rows: int, dt: float) -> sparse.csr_matrix:
    """Assembled SPD matrix of the interior unknowns (used by the cg path)."""
    op = spectrum.operator
    mass = sparse.diags(op.mass)
    angular = (op.stiffness + op.constants.beta**2 * mass).tocsr()
    toeplitz = sparse.diags(
        [-np.ones(rows - 1), 2.0 * np.ones(rows), -np.ones(rows - 1)], [-1, 0, 1]
    )
    return (sparse.kron(toeplitz / dt, mass) + sparse.kron(dt * sparse.identity(rows), angular)).tocsr()


def _direct(spectrum: Spectrum, rhs: np.ndarray, dt: float) -> np.ndarray:
    op = spectrum.operator
    rows, size = rhs.shape
    beta2 = op.constants.beta**2
    sigma = 2.0 - 2.0 * np.cos(np.pi * np.arange(1, rows + 1) / (rows + 1))
    base_diag = dt * (op.stiffness.diagonal() + beta2 * op.mass)
    diag = (sigma[:, None] / dt) * op.mass[None, :] + base_diag[None, :]
    off = np.append(dt * op.stiffness.diagonal(1), 0.0)
    ab = np.zeros((2, rows * size))
    ab[0, 1:] = np.tile(off, rows)[:-1]
    ab[1, :] = diag.ravel()
    transformed = dst(rhs, type=1, axis=0, norm="ortho")
    try:
        solved = solveh_banded(ab, transformed.ravel())
    except LinAlgError as e:
        raise ResolutionError(
            "complement system is not positive definite; refine the angular mesh"
        ) from e
    return dst(solved.reshape(rows, size), type=1, axis=0, norm="ortho")


def _conjugate_gradients(system: sparse.csr_matrix, rhs: np.ndarray, start: np.ndarray) -> np.ndarray:
    # Jacobi-preconditioned sweeps restarted from the true residual; stop on the step size.
    precond = sparse.diags(1.0 / system.diagonal())
    solution = start.copy()
    for sweep in range(CG_SWEEPS):
        residual = rhs - system @ solution
        step, info = cg(system, residual, rtol=1e-10, atol=0.0, maxiter=20 * rhs.size, M=precond)
        if info != 0:
            raise ConvergenceError(f"conjugate gradients stopped with info={info}")
        solution += step
        if np.linalg.norm(step) <= CG_STEP_TOL * max(np.linalg.norm(solution), np.finfo(float).tiny):
            logger.debug("cg settled after %d sweeps", sweep + 1)
            return solution
    raise ConvergenceError(f"conjugate gradients did not settle in {CG_SWEEPS} sweeps")


def solve_complement(
    spectrum: Spectrum,
    f,
    mu: float,
    epsilon_res: float = 1e-8,
    orthogonality_tol: float = 1e-9,
    method: str = "direct",
    x0: Optional[np.ndarray] = None,
) -> CylinderField:
    """
    Solve v_tt + L v - beta^2 v = f on [t0, T] with v = 0 at both ends, for f
    orthogonal to every eigenfield with exponent below mu.

    Args:
        spectrum: Spectrum supplying L and the eigenfields.
        f: Forcing on the cylinder grid.
        mu: Weight rate; must not coincide with an eigen exponent.
        epsilon_res: Relative tolerance for that coincidence.
        orthogonality_tol: Allowed relative projection of f onto lower modes.
        method: "direct" (sine transform in t plus banded Cholesky) or "cg"
            (conjugate gradients on the assembled system, started from x0).
        x0: Initial guess for interior rows, shape (rows - 2, nodes).

    Returns:
        The minimiser, re-projected onto the complement.

    Raises:
        PreconditionError: If mu matches an eigen exponent or f is not
            orthogonal to the lower modes.
        ResolutionError: If the discrete system is not positive definite.
    """
    grid = f.grid
    values = cylinder_values(grid, f)
    if np.any(np.abs(spectrum.gammas - mu) <= resonance_tolerance(epsilon_res, mu)):
        raise PreconditionError(f"mu={mu} coincides with an eigen exponent")
    upto = lower_modes(spectrum, mu)
    _check_orthogonal(spectrum, values[1:-1], upto, orthogonality_tol)

    dt = grid.dt
    rhs = -dt * values[1:-1] * spectrum.operator.mass[None, :]
    rows, size = rhs.shape
    if method == "direct":
        interior = _direct(spectrum, rhs, dt)
    elif method == "cg":
        system = complement_system(spectrum, rows, dt)
        start = np.zeros(rows * size) if x0 is None else np.asarray(x0, dtype=float).ravel()
        interior = _conjugate_gradients(system, rhs.ravel(), start).reshape(rows, size)
    else:
        raise ValueError(f"unknown complement method {method!r}")

    interior = remove_lower_modes(spectrum, interior, upto)
    out = np.zeros(grid.shape)
    out[1:-1] = interior
    logger.debug("complement solve: %d x %d unknowns, %d lower modes removed", rows, size, upto)
    return CylinderField(grid, out)


def complement_energy(spectrum: Spectrum, v, f) -> float:
    """Discrete energy whose minimiser solve_complement returns."""
    grid = v.grid
    values = cylinder_values(grid, v)
    forcing = cylinder_values(grid, f)
    op = spectrum.operator
    dt = grid.dt
    jumps = np.diff(values, axis=0)
    kinetic = np.sum(jumps * jumps * op.mass) / (2.0 * dt)
    interior = values[1:-1]
    angular = np.einsum("ij,ij->", interior, (op.stiffness @ interior.T).T)
    angular += op.constants.beta**2 * np.sum(interior * interior * op.mass)
    coupling = np.sum(forcing[1:-1] * interior * op.mass)
    return float(kinetic + dt * (0.5 * angular + coupling))
