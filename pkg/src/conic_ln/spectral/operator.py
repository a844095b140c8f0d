import logging
from typing import Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from ..constants import StructuralConstants
from ..errors import ShapeError
from ..geometry.angular_grid import (
    AngularField,
    AngularGrid,
    FieldLike,
    field_values,
    stiffness_matrix,
    weighted_l2_norm,
)
from ..geometry.fitting import boundary_decay_slope
from ..geometry.profile import BoundaryProfile

logger = logging.getLogger(__name__)


class SingularOperator:
    """
    Quadratic-form discretisation of L = Lap - kappa / rho^2 on H^1_0 of the cap.

    With K the Dirichlet stiffness plus the lumped potential and M the
    quadrature mass, the discrete operator is L_h = -M^-1 K. K is symmetric
    tridiagonal, so the generalized eigenproblem K x = lam M x reduces to a
    symmetric tridiagonal one.
    """

    def __init__(self, profile: BoundaryProfile):
        self.profile = profile
        self.grid: AngularGrid = profile.grid
        self.constants: StructuralConstants = profile.constants
        self.rho = profile.rho.values
        self.mass = self.grid.weights
        self.potential = self.constants.kappa / self.rho**2
        self.stiffness_grad = stiffness_matrix(self.grid)
        self.stiffness = (
            self.stiffness_grad + sparse.diags(self.mass * self.potential)
        ).tocsr()

    @property
    def size(self) -> int:
        return self.grid.node_count

    def values(self, f: FieldLike) -> np.ndarray:
        return field_values(self.grid, f)

    def apply_L(self, u: FieldLike) -> np.ndarray:
        return -(self.stiffness @ self.values(u)) / self.mass

    def apply_laplace(self, u: FieldLike) -> np.ndarray:
        """Laplacian consistent with apply_L (quadrature mass, Dirichlet)."""
        return -(self.stiffness_grad @ self.values(u)) / self.mass

    def symmetric_tridiagonal(self) -> Tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of M^-1/2 K M^-1/2."""
        k = self.stiffness
        scale = 1.0 / np.sqrt(self.mass)
        diag = k.diagonal() * scale**2
        off = k.diagonal(1) * scale[:-1] * scale[1:]
        return diag, off

    def shifted_matrix(self, shift: float) -> sparse.csc_matrix:
        """K - shift * M, so that (L + shift) u = g  <=>  (K - shift M) u = -M g."""
        return (self.stiffness - shift * sparse.diags(self.mass)).tocsc()

    def gradient_energy(self, u: FieldLike) -> float:
        v = self.values(u)
        return float(v @ (self.stiffness_grad @ v))

    def potential_energy(self, u: FieldLike) -> float:
        v = self.values(u)
        return float(np.sum(self.mass * self.potential * v * v))

    def hardy_energy(self, u: FieldLike) -> float:
        v = self.values(u)
        return float(v @ (self.stiffness @ v))

    def rayleigh_quotient(self, u: FieldLike) -> float:
        v = self.values(u)
        return self.hardy_energy(v) / float(np.sum(self.mass * v * v))


def hardy_solve(operator: SingularOperator, f: FieldLike) -> Tuple[AngularField, float]:
    """
    Solve -L u = f in H^1_0 and report the Hardy-type bound ratio.

    Returns:
        (u, ratio) with ratio = (|grad u| + |u / rho|) / |f| in weighted L2.
    """
    rhs = operator.values(f)
    grid = operator.grid
    u = spsolve(operator.stiffness.tocsc(), operator.mass * rhs)
    f_norm = weighted_l2_norm(grid, rhs)
    if f_norm == 0.0:
        return AngularField(grid, np.zeros_like(rhs)), 0.0
    grad_norm = np.sqrt(max(operator.gradient_energy(u), 0.0))
    hardy_norm = weighted_l2_norm(grid, u / operator.rho)
    return AngularField(grid, u), float((grad_norm + hardy_norm) / f_norm)


def forced_decay_slope(operator: SingularOperator, f: FieldLike, lam: float) -> float:
    """
    Solve (L + lam) u = f and fit the boundary slope of |u| against rho.

    For f ~ rho^(a-2) the slope approaches min(a, s).

    Raises:
        ShapeError: If f does not live on the operator's grid.
        DiagnosticError: If the boundary layer is not resolved.
    """
    rhs = operator.values(f)
    if rhs.shape != (operator.size,):
        raise ShapeError("forcing does not match the operator grid")
    u = spsolve(operator.shifted_matrix(lam), -operator.mass * rhs)
    return boundary_decay_slope(operator.grid, operator.rho, u)
