import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import ParameterError
from ..geometry.profile import BoundaryProfile
from ..cylinder.fields import CylinderField
from .residual import check_positive

logger = logging.getLogger(__name__)


class ConeSampler:
    """
    u(r, phi) = r^-beta v(-ln r, phi) on the cone near the vertex.

    v is interpolated linearly in t and by a cubic spline of log v in phi
    (clamped to zero slope on the axis). Radii are limited to
    [e^-T, e^-t0] and angles to [0, last node].
    """

    def __init__(self, v: CylinderField, profile: BoundaryProfile):
        check_positive(v.values)
        self.v = v
        self.profile = profile
        self.beta = profile.beta
        self.r_min = math.exp(-v.grid.t_max)
        self.r_max = math.exp(-v.grid.t0)
        self._splines = [
            CubicSpline(profile.grid.nodes, np.log(row), bc_type=((1, 0.0), "not-a-knot"))
            for row in v.values
        ]

    def _row_values(self, row: int, phi: np.ndarray) -> np.ndarray:
        return np.exp(self._splines[row](phi))

    def __call__(self, r: float, phi) -> np.ndarray:
        """
        Raises:
            ParameterError: If r or phi lies outside the sampled range.
        """
        r = float(r)
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        if not (self.r_min * (1 - 1e-12) <= r <= self.r_max * (1 + 1e-12)):
            raise ParameterError(f"radius {r} outside [{self.r_min:.6g}, {self.r_max:.6g}]")
        nodes = self.profile.grid.nodes
        if np.any(phi < 0.0) or np.any(phi > nodes[-1]):
            raise ParameterError(f"angles must lie in [0, {nodes[-1]:.6g}]")
        t_nodes = self.v.grid.t_nodes
        t = min(max(-math.log(r), t_nodes[0]), t_nodes[-1])
        k = min(int(np.searchsorted(t_nodes, t, side="right")) - 1, t_nodes.size - 2)
        frac = (t - t_nodes[k]) / (t_nodes[k + 1] - t_nodes[k])
        v = (1.0 - frac) * self._row_values(k, phi) + frac * self._row_values(k + 1, phi)
        return r ** (-self.beta) * v

    def log_radii(self, count: int) -> np.ndarray:
        """count radii log-spaced from e^-t0 down to e^-T."""
        return np.exp(-np.linspace(self.v.grid.t0, self.v.grid.t_max, count))

    def to_rows(self, radii: Sequence[float]) -> Tuple[List[str], List[Tuple[float, float, float]]]:
        nodes = self.profile.grid.nodes
        rows = []
        for r in radii:
            values = self(r, nodes)
            rows.extend((float(r), float(p), float(u)) for p, u in zip(nodes, values))
        return ["r", "phi", "u"], rows


def reconstruct_cone_solution(v: CylinderField, profile: BoundaryProfile) -> ConeSampler:
    """
    Raises:
        DomainError: If v is not positive.
    """
    if not v.grid.angular.same_as(profile.grid):
        raise ParameterError("solution and profile use different angular grids")
    return ConeSampler(v, profile)
