import numpy as np

from ..errors import ShapeError
from ..spectral.operator import SingularOperator
from .fields import CylinderField, CylinderGrid, cylinder_values


def second_difference_t(values: np.ndarray, dt: float) -> np.ndarray:
    """
    Second t-derivative: centred in the interior, one-sided second order at
    the two ends.
    """
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / dt**2
    out[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / dt**2
    out[-1] = (2.0 * values[-1] - 5.0 * values[-2] + 4.0 * values[-3] - values[-4]) / dt**2
    return out


def apply_angular_L(operator: SingularOperator, values: np.ndarray) -> np.ndarray:
    """L_h applied to every t-row."""
    return -(operator.stiffness @ values.T).T / operator.mass


def apply_cyl_operator(operator: SingularOperator, v) -> CylinderField:
    """
    Discrete cylinder operator v_tt + L v - beta^2 v.

    Args:
        operator: Singular angular operator built from the profile.
        v: CylinderField on a grid whose angular part matches the operator.

    Returns:
        The discrete operator applied at every node; rows at t0 and T use
        one-sided t-differences.
    """
    grid: CylinderGrid = v.grid
    if not grid.angular.same_as(operator.grid):
        raise ShapeError("cylinder field and operator use different angular grids")
    values = cylinder_values(grid, v)
    beta2 = operator.constants.beta**2
    out = second_difference_t(values, grid.dt) + apply_angular_L(operator, values) - beta2 * values
    return CylinderField(grid, out)
