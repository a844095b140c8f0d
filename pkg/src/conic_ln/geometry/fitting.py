"""Log-log fits over the resolved boundary layer of an angular grid."""

from typing import Tuple

import numpy as np

from ..errors import DiagnosticError
from .angular_grid import AngularGrid

# A node is resolved when its local spacing is at most this fraction of its
# distance to the boundary.
RESOLUTION_FRACTION = 0.2


def fit_power_law(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """
    Least-squares fit of log|y| = slope * log(x) + intercept.

    Returns:
        (slope, intercept). A constant y gives slope 0.

    Raises:
        DiagnosticError: With fewer than 3 usable samples.
    """
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if np.count_nonzero(keep) < 3:
        raise DiagnosticError("power-law fit needs at least 3 positive samples")
    slope, intercept = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope), float(intercept)


def local_spacing(grid: AngularGrid) -> np.ndarray:
    right = np.append(np.diff(grid.nodes), grid.phi_max - grid.nodes[-1])
    left = np.insert(np.diff(grid.nodes), 0, 2.0 * grid.nodes[0])
    return np.maximum(left, right)


def resolved_boundary_window(grid: AngularGrid, decades: float = 1.0) -> np.ndarray:
    """
    Mask of the innermost resolved boundary decade.

    The decade starts at the smallest distance d_res whose node is resolved
    and spans d in [d_res, 10**decades * d_res].

    Raises:
        DiagnosticError: If the window holds fewer than 3 nodes.
    """
    d = grid.distance
    resolved = local_spacing(grid) <= RESOLUTION_FRACTION * d
    if not np.any(resolved):
        raise DiagnosticError("no resolved boundary nodes on this grid")
    d_res = float(np.min(d[resolved]))
    mask = resolved & (d >= d_res) & (d <= d_res * 10.0**decades)
    if np.count_nonzero(mask) < 3:
        raise DiagnosticError(
            f"boundary decade [{d_res:.3g}, {d_res * 10 ** decades:.3g}] holds "
            f"{np.count_nonzero(mask)} resolved nodes, need 3"
        )
    return mask


def boundary_decay_slope(grid: AngularGrid, base: np.ndarray, values: np.ndarray) -> float:
    """Slope of log|values| against log(base) over the resolved boundary decade."""
    mask = resolved_boundary_window(grid)
    slope, _ = fit_power_law(np.asarray(base)[mask], np.asarray(values)[mask])
    return slope
