import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import ParameterError
from ..geometry.fitting import boundary_decay_slope, fit_power_law
from ..geometry.profile import BoundaryProfile
from ..cylinder.fields import CylinderField, cylinder_values
from ..expansion.terms import Expansion

logger = logging.getLogger(__name__)

# Relative level below which a sampled difference is treated as round-off.
DECAY_FLOOR = 1e-12


@dataclass(frozen=True)
class DecayFit:
    rate: float
    prefactor: float
    window: Tuple[float, float]
    floored: bool = False

    def to_dict(self):
        return {
            "rate": self.rate,
            "prefactor": self.prefactor,
            "window": list(self.window),
            "floored": self.floored,
        }


def difference_envelope(difference: np.ndarray, profile: BoundaryProfile) -> np.ndarray:
    """sup over phi (last node excluded) of rho^-s |difference| per t-row."""
    rho = profile.rho.values[:-1]
    s = profile.constants.s
    return np.max(np.abs(difference[:, :-1]) * rho ** (-s), axis=1)


def default_window(t0: float, t_max: float) -> Tuple[float, float]:
    """Middle half of the cylinder, away from both end layers."""
    length = t_max - t0
    return (t0 + 0.25 * length, t0 + 0.75 * length)


def decay_fit(
    v: CylinderField,
    vhat: Expansion,
    profile: BoundaryProfile,
    window: Optional[Tuple[float, float]] = None,
) -> DecayFit:
    """
    Fit sup_phi rho^-s |v - vhat| ~ C' e^{-rate t} over a t-window.

    Samples under the round-off floor are dropped with a warning; if fewer
    than three remain the rate is reported as infinite.

    Raises:
        ParameterError: If the window does not lie inside the grid.
    """
    grid = v.grid
    t = grid.t_nodes
    window = window or default_window(grid.t0, grid.t_max)
    if window[0] < grid.t0 - 1e-12 or window[1] > grid.t_max + 1e-12 or window[0] >= window[1]:
        raise ParameterError(f"fit window {window} is outside [{grid.t0}, {grid.t_max}]")
    values = cylinder_values(grid, v)
    reference = vhat.sample(t).values + profile.xi.values[None, :]
    envelope = difference_envelope(values - reference, profile)
    inside = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    scale = float(envelope.max(initial=0.0))
    usable = inside & (envelope > DECAY_FLOOR * scale)
    floored = bool(np.count_nonzero(usable) < np.count_nonzero(inside))
    if floored:
        logger.warning(
            "decay fit: %d of %d samples below the numeric floor",
            int(np.count_nonzero(inside & ~usable)),
            int(np.count_nonzero(inside)),
        )
    if np.count_nonzero(usable) < 3:
        return DecayFit(rate=math.inf, prefactor=0.0, window=tuple(window), floored=True)
    # log-linear fit in t, i.e. a power law in e^t
    slope, intercept = fit_power_law(np.exp(t[usable]), envelope[usable])
    return DecayFit(
        rate=float(-slope), prefactor=float(math.exp(intercept)), window=tuple(window), floored=floored
    )


def boundary_profile_slope(difference_row: np.ndarray, profile: BoundaryProfile) -> float:
    """Log-slope of |v - vhat| against rho at a fixed t (expected s)."""
    return boundary_decay_slope(profile.grid, profile.rho.values, difference_row)
