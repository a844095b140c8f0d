"""
Independent check of picard_solve: damped Newton on the full nonlinear
cylinder equation with Dirichlet ends taken from a candidate solution.

The unknown is the correction w = v - vhat on the interior rows. The
residual is assembled directly from c[(vhat + w)^p - vhat^p], not from the
quadrature form used by the iteration, and the Jacobian is one sparse
Kronecker system.
"""

import logging
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from ..config import NewtonOptions
from ..errors import DomainError, OracleError, ParameterError
from ..geometry.profile import BoundaryProfile
from ..spectral.operator import SingularOperator
from ..cylinder.fields import MIN_CYLINDER_LENGTH, CylinderField, build_cylinder_grid
from ..cylinder.operator import apply_angular_L, second_difference_t
from ..expansion.terms import Expansion, empty_expansion
from .residual import check_positive, expansion_residual

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-10


def _restrict(v: CylinderField, t0: float, T: float):
    t = v.grid.t_nodes
    first = int(np.argmin(np.abs(t - t0)))
    last = int(np.argmin(np.abs(t - T)))
    if abs(t[first] - t0) > 1e-9 or abs(t[last] - T) > 1e-9:
        raise ParameterError(f"[{t0}, {T}] does not start and end on grid nodes")
    if T - t0 < MIN_CYLINDER_LENGTH - 1e-12:
        raise ParameterError(f"oracle cylinder [{t0}, {T}] is shorter than {MIN_CYLINDER_LENGTH}")
    grid = build_cylinder_grid(v.grid.angular, float(t[first]), float(t[last]), v.grid.dt)
    if grid.shape[0] != last - first + 1:
        raise ParameterError("could not rebuild the t-grid of the window")
    return grid, v.values[first : last + 1]


def direct_solve_oracle(
    profile: BoundaryProfile,
    boundary_data_from: CylinderField,
    t0: float,
    T: float,
    vhat: Optional[Expansion] = None,
    operator: Optional[SingularOperator] = None,
    opts: Optional[NewtonOptions] = None,
) -> CylinderField:
    """
    Solve the nonlinear cylinder equation on [t0, T] with the candidate's
    values at both ends.

    Args:
        profile: Profile of the angular grid.
        boundary_data_from: Candidate solution v; only its rows at t0 and T
            are used.
        t0: Start of the window (a grid node).
        T: End of the window (a grid node).
        vhat: Expansion splitting v = xi + omega + w; xi alone when omitted.
        operator: Reused when given.
        opts: Newton iteration limits.

    Returns:
        The oracle solution v on the window.

    Raises:
        ParameterError: If the window is too short or not on grid nodes.
        DomainError: If the end data is not positive.
        OracleError: If Newton fails to converge.
    """
    opts = opts or NewtonOptions()
    operator = operator or SingularOperator(profile)
    vhat = vhat or empty_expansion(profile)
    grid, candidate = _restrict(boundary_data_from, t0, T)
    check_positive(candidate[[0, -1]], "end data")

    const = profile.constants
    xi = profile.xi.values
    sampled = vhat.sample(grid.t_nodes)
    vbase = xi[None, :] + sampled.values
    base = expansion_residual(vhat, grid.t_nodes, operator)
    rows, size = grid.shape
    dt = grid.dt

    w = np.zeros(grid.shape)
    w[0] = candidate[0] - vbase[0]
    w[-1] = candidate[-1] - vbase[-1]
    # linear interior start between the two ends
    frac = ((grid.t_nodes - grid.t0) / (grid.t_max - grid.t0))[:, None]
    w[1:-1] = ((1.0 - frac) * w[0] + frac * w[-1])[1:-1]

    def residual(wv: np.ndarray) -> np.ndarray:
        total = vbase + wv
        check_positive(total)
        nonlinear = const.c_nl * (total**const.p - vbase**const.p) - const.kappa * wv / profile.rho.values**2
        out = second_difference_t(wv, dt) + apply_angular_L(operator, wv) - const.beta**2 * wv - nonlinear + base
        scale = const.c_nl * total**const.p
        return (out / scale)[1:-1]

    tridiagonal = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(rows - 2, rows - 2)) / dt**2
    angular = -sparse.diags(1.0 / operator.mass) @ operator.stiffness - const.beta**2 * sparse.identity(size)
    linear = (sparse.kron(tridiagonal, sparse.identity(size)) + sparse.kron(sparse.identity(rows - 2), angular)).tocsr()

    current = residual(w)
    history = [float(np.max(np.abs(current)))]
    for iteration in range(opts.max_iterations):
        if history[-1] <= ORACLE_TOLERANCE:
            break
        total = (vbase + w)[1:-1]
        scale = const.c_nl * total**const.p
        derivative = const.c_nl * const.p * total ** (const.p - 1.0) - const.kappa / profile.rho.values**2
        # Jacobian of the scaled residual; the scale's own derivative is
        # dropped, so Newton targets the unscaled equation.
        jac = sparse.diags(1.0 / scale.ravel()) @ (linear - sparse.diags(derivative.ravel()))
        step = spsolve(jac.tocsc(), -current.ravel()).reshape(rows - 2, size)
        damping = 1.0
        while True:
            trial = w.copy()
            trial[1:-1] += damping * step
            try:
                candidate_res = residual(trial)
                norm = float(np.max(np.abs(candidate_res)))
            except DomainError:  # positivity lost on this step
                norm = np.inf
            if norm < history[-1] or damping <= opts.min_damping:
                break
            damping *= 0.5
        if not np.isfinite(norm):
            raise OracleError(f"oracle Newton left the positive cone at iteration {iteration}")
        w, current = trial, candidate_res
        history.append(norm)
        logger.debug("oracle newton %d: residual %.3e (damping %.3g)", iteration, norm, damping)
        if np.max(np.abs(step)) * damping <= 1e-14 * float(np.max(np.abs(vbase[1:-1]))):
            break
    if history[-1] > max(ORACLE_TOLERANCE, 1e-6):
        raise OracleError(
            f"oracle Newton stalled at residual {history[-1]:.3e} after {len(history) - 1} steps"
        )
    if history[-1] > ORACLE_TOLERANCE:
        logger.warning("oracle Newton stopped at residual %.3e", history[-1])
    return CylinderField(grid, vbase + w)
