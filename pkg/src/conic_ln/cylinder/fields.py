import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ParameterError, ShapeError
from ..geometry.angular_grid import AngularGrid, gradient, second_derivative
from ..geometry.profile import BoundaryProfile

logger = logging.getLogger(__name__)

MIN_CYLINDER_LENGTH = 4.0
# ln(1e8): truncation makes the neglected mode weight e^{-(gamma_next - mu)(T - t0)} < 1e-8
TRUNCATION_LOG_TOLERANCE = 18.420680743952367


@dataclass(frozen=True, eq=False)
class CylinderGrid:
    t0: float
    t_max: float
    t_nodes: np.ndarray
    angular: AngularGrid

    @property
    def dt(self) -> float:
        return float(self.t_nodes[1] - self.t_nodes[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return (int(self.t_nodes.size), self.angular.node_count)

    def same_as(self, other: "CylinderGrid") -> bool:
        return (
            other is self
            or (
                self.shape == other.shape
                and self.t0 == other.t0
                and self.t_max == other.t_max
                and self.angular.same_as(other.angular)
            )
        )


def build_cylinder_grid(
    angular: AngularGrid, t0: float, t_max: float, dt: float = 0.05
) -> CylinderGrid:
    """
    Uniform t-grid on [t0, t_max]; the step is shrunk to divide the interval.

    Raises:
        ParameterError: If t_max - t0 < 4 or dt <= 0.
    """
    if dt <= 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if t_max - t0 < MIN_CYLINDER_LENGTH - 1e-12:
        raise ParameterError(
            f"cylinder [{t0}, {t_max}] is shorter than {MIN_CYLINDER_LENGTH}"
        )
    steps = int(math.ceil((t_max - t0) / dt - 1e-9))
    t_nodes = np.linspace(t0, t_max, steps + 1)
    t_nodes.setflags(write=False)
    return CylinderGrid(t0=float(t0), t_max=float(t_max), t_nodes=t_nodes, angular=angular)


def choose_truncation(
    t0: float, mu: float, gamma_next: Optional[float], t_max: Optional[float] = None
) -> float:
    """
    Truncation point T with e^{-(gamma_next - mu)(T - t0)} below 1e-8.

    The length is at least 4 and capped at t_max when one is given.
    """
    length = MIN_CYLINDER_LENGTH
    if gamma_next is not None and gamma_next > mu:
        length = max(length, TRUNCATION_LOG_TOLERANCE / (gamma_next - mu))
    T = t0 + length
    if t_max is not None and T > t_max:
        logger.warning("truncation T=%.4g capped at t_max=%.4g", T, t_max)
        T = max(t_max, t0 + MIN_CYLINDER_LENGTH)
    return float(T)


@dataclass(frozen=True, eq=False)
class CylinderField:
    """Grid function v(t, phi); rows are t-nodes, columns angular nodes."""

    grid: CylinderGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ShapeError(f"field shape {values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ShapeError("cylinder field has non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __add__(self, other: "CylinderField") -> "CylinderField":
        return CylinderField(self.grid, self.values + cylinder_values(self.grid, other))

    def __sub__(self, other: "CylinderField") -> "CylinderField":
        return CylinderField(self.grid, self.values - cylinder_values(self.grid, other))

    def __mul__(self, scalar: float) -> "CylinderField":
        return CylinderField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def to_rows(self) -> Tuple[List[str], List[Tuple[float, ...]]]:
        header = ["t"] + [f"{p:.17g}" for p in self.grid.angular.nodes]
        rows = [
            (float(t),) + tuple(float(x) for x in row)
            for t, row in zip(self.grid.t_nodes, self.values)
        ]
        return header, rows


def cylinder_values(grid: CylinderGrid, v) -> np.ndarray:
    if isinstance(v, CylinderField):
        if not v.grid.same_as(grid):
            raise ShapeError("field lives on a different cylinder grid")
        return v.values
    values = np.asarray(v, dtype=float)
    if values.shape != grid.shape:
        raise ShapeError(f"expected shape {grid.shape}, got {values.shape}")
    return values


def separable_field(
    grid: CylinderGrid, time_factor: np.ndarray, angular_factor: np.ndarray
) -> CylinderField:
    return CylinderField(grid, np.outer(time_factor, angular_factor))


@dataclass(frozen=True)
class WeightedNormSpec:
    """
    sup of e^{mu t} rho^{-s+j} |grad^j v| over j <= order.

    Only the weighted sup norms of v and its first two discrete derivatives
    are evaluated; Hoelder seminorms are not.
    """

    mu: float
    s: float
    order: int = 0

    def __post_init__(self) -> None:
        if self.mu <= 0:
            raise ParameterError(f"weighted norm rate must be positive, got {self.mu}")
        if self.order not in (0, 1, 2):
            raise ParameterError(f"weighted norm order must be 0, 1 or 2, got {self.order}")


def _t_derivatives(values: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    dv = np.gradient(values, dt, axis=0, edge_order=2)
    d2v = np.gradient(dv, dt, axis=0, edge_order=2)
    return dv, d2v


def _phi_derivatives(grid: AngularGrid, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d1 = np.array([gradient(grid, row).values for row in values])
    d2 = np.array([second_derivative(grid, row).values for row in values])
    return d1, d2


def weighted_profile(
    v, spec: WeightedNormSpec, profile: BoundaryProfile, grid: CylinderGrid
) -> np.ndarray:
    """Per-t-row sup of the weighted quantity (last angular node excluded)."""
    values = cylinder_values(grid, v)
    rho = profile.rho.values
    weight_t = np.exp(spec.mu * grid.t_nodes)[:, None]
    parts = [np.abs(values) * rho ** (-spec.s)]
    if spec.order >= 1:
        dt_v, dtt_v = _t_derivatives(values, grid.dt)
        dphi_v, dphiphi_v = _phi_derivatives(grid.angular, values)
        parts.append(np.maximum(np.abs(dt_v), np.abs(dphi_v)) * rho ** (1.0 - spec.s))
    if spec.order == 2:
        dtphi_v = np.gradient(dphi_v, grid.dt, axis=0, edge_order=2)
        second = np.maximum.reduce([np.abs(dtt_v), np.abs(dphiphi_v), np.abs(dtphi_v)])
        parts.append(second * rho ** (2.0 - spec.s))
    combined = np.maximum.reduce(parts) * weight_t
    return combined[:, :-1].max(axis=1)


def weighted_norm(
    v, spec: WeightedNormSpec, profile: BoundaryProfile, grid: Optional[CylinderGrid] = None
) -> float:
    """
    Weighted sup norm of v.

    Args:
        v: CylinderField (or raw array together with grid).
        spec: Rate, boundary power and derivative order.
        profile: Supplies rho.
        grid: Required when v is a raw array.

    Returns:
        The norm; zero iff v vanishes on the evaluated nodes.
    """
    if grid is None:
        if not isinstance(v, CylinderField):
            raise ShapeError("a raw array needs its cylinder grid")
        grid = v.grid
    return float(weighted_profile(v, spec, profile, grid).max())
