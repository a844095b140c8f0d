"""
Pointwise residuals of N(v) = v_tt + Lap v - beta^2 v - c v^p on the cylinder.

Two evaluations are offered. The plain one differentiates v by finite
differences in t. The balanced hybrid one subtracts the discrete residual of
xi, applies d_tt analytically to the expansion part and by finite differences
to the correction w, so that

    N_h(vhat + w) = N_h(vhat) + Lcal_h w - P(w)

holds identically on the discrete level.
"""

import logging
from typing import Optional

import numpy as np

from ..errors import DomainError
from ..geometry.profile import BoundaryProfile
from ..spectral.operator import SingularOperator
from ..cylinder.fields import CylinderField, CylinderGrid, cylinder_values
from ..cylinder.operator import apply_angular_L, apply_cyl_operator, second_difference_t
from ..expansion.algebra import quadratic_remainder
from ..expansion.terms import Expansion

logger = logging.getLogger(__name__)


def check_positive(values: np.ndarray, what: str = "v") -> None:
    """
    Raises:
        DomainError: At the first node where values <= 0, named as (t row, phi node).
    """
    bad = np.argwhere(~(values > 0.0))
    if bad.size:
        node = tuple(int(i) for i in bad[0])
        raise DomainError(f"{what} is not positive at node {node}", node=node)


def xi_discrete_residual(operator: SingularOperator) -> np.ndarray:
    """Lap_h xi - beta^2 xi - c xi^p with the operator's Laplacian."""
    const = operator.constants
    xi = operator.profile.xi.values
    return operator.apply_laplace(xi) - const.beta**2 * xi - const.c_nl * xi**const.p


def nonlinear_residual(
    v,
    profile: BoundaryProfile,
    relative: bool = False,
    balanced: bool = False,
    operator: Optional[SingularOperator] = None,
) -> CylinderField:
    """
    Discrete N(v) at every node of v's grid.

    Args:
        v: Positive CylinderField.
        profile: Profile the angular grid belongs to.
        relative: Divide by c v^p.
        balanced: Subtract the t-independent discrete residual of xi.
        operator: Reused when given.

    Raises:
        DomainError: If v is not positive somewhere.
    """
    operator = operator or SingularOperator(profile)
    grid: CylinderGrid = v.grid
    values = cylinder_values(grid, v)
    check_positive(values)
    const = profile.constants
    lap = (-(operator.stiffness_grad @ values.T).T) / operator.mass
    nonlinear = const.c_nl * values**const.p
    res = second_difference_t(values, grid.dt) + lap - const.beta**2 * values - nonlinear
    if balanced:
        res = res - xi_discrete_residual(operator)[None, :]
    if relative:
        res = res / nonlinear
    return CylinderField(grid, res)


def expansion_residual(
    expansion: Expansion, t_nodes: np.ndarray, operator: SingularOperator
) -> np.ndarray:
    """
    Balanced N_h(xi + omega) with omega_tt taken analytically:
    omega_tt + L_h omega - beta^2 omega - F(omega).
    """
    sampled = expansion.sample(t_nodes)
    omega = sampled.values
    check_positive(expansion.profile.xi.values[None, :] + omega, "vhat")
    beta2 = operator.constants.beta**2
    return (
        sampled.tt
        + apply_angular_L(operator, omega)
        - beta2 * omega
        - quadratic_remainder(omega, expansion.profile)
    )


def hybrid_residual(
    expansion: Expansion, w, operator: SingularOperator
) -> CylinderField:
    """
    Balanced N_h(vhat + w) with d_tt analytic on omega and discrete on w.

    The end rows use one-sided differences in t and are not part of the
    discrete equation solved for w.
    """
    grid: CylinderGrid = w.grid
    wv = cylinder_values(grid, w)
    sampled = expansion.sample(grid.t_nodes)
    total = sampled.values + wv
    check_positive(expansion.profile.xi.values[None, :] + total)
    beta2 = operator.constants.beta**2
    out = (
        sampled.tt
        + second_difference_t(wv, grid.dt)
        + apply_angular_L(operator, total)
        - beta2 * total
        - quadratic_remainder(total, expansion.profile)
    )
    return CylinderField(grid, out)


def perturbation_term(
    w: np.ndarray,
    omega: np.ndarray,
    profile: BoundaryProfile,
    quadrature_points: int = 8,
) -> np.ndarray:
    """
    P(w) = c[(vhat + w)^p - vhat^p] - kappa w / rho^2, as w Q(w) with

        Q(w) = kappa rho^-2 int_0^1 [(1 + x + tau nu)^q - 1] dtau,

    x = omega / xi and nu = w / xi, integrated by Gauss-Legendre in tau.

    Raises:
        DomainError: If 1 + x + tau nu <= 0 for some tau in [0, 1].
    """
    const = profile.constants
    xi = profile.xi.values
    rho = profile.rho.values
    x = omega / xi
    nu = w / xi
    # 1 + x + tau nu is linear in tau, so both ends bound it from below
    check_positive(np.minimum(1.0 + x, 1.0 + x + nu), "vhat + tau w")
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_points)
    tau = 0.5 * (nodes + 1.0)
    integral = np.zeros_like(w)
    for tk, wk in zip(tau, 0.5 * weights):
        integral += wk * np.expm1(const.q * np.log1p(x + tk * nu))
    return const.kappa * rho**-2 * w * integral


def fixed_point_residual(
    expansion: Expansion, w: CylinderField, operator: SingularOperator, quadrature_points: int = 8
) -> np.ndarray:
    """Lcal_h w - P(w) + N_h(vhat), interior rows only (end rows zeroed)."""
    grid = w.grid
    omega = expansion.sample(grid.t_nodes).values
    out = (
        apply_cyl_operator(operator, w).values
        - perturbation_term(w.values, omega, expansion.profile, quadrature_points)
        + expansion_residual(expansion, grid.t_nodes, operator)
    )
    out[0] = out[-1] = 0.0
    return out
