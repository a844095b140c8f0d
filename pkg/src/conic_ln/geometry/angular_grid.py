"""
Axisymmetric model of a geodesic cap {phi < phi_max} on the unit sphere.

Functions on the cap are sampled at cell-centred nodes that exclude the
boundary angle. The first node sits half a cell away from the axis so that
cot(phi) is never evaluated at zero; axis regularity f'(0) = 0 enters through a
reflected ghost value, which in flux form is a zero-area face at phi = 0.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import sparse

from ..errors import ParameterError, ShapeError

logger = logging.getLogger(__name__)

# Gauss-Legendre points per cell for the measure integrals.
_CELL_GAUSS_POINTS = 8

BOUNDARY_MODES = ("extrapolate", "dirichlet")


@dataclass(frozen=True, eq=False)
class AngularGrid:
    """
    Graded mesh on [0, phi_max) carrying the (sin phi)^(n-2) dphi measure.

    Attributes:
        dimension_n: Ambient dimension n.
        phi_max: Cap half-angle in radians.
        nodes: Strictly increasing sample angles, boundary excluded.
        weights: Quadrature weights; dual cells with the last cell closed at
            phi_max, so their sum is the exact measure of the cap.
        volumes: Control volumes of the flux-form Laplacian; the last cell
            ends at the midpoint between the last node and phi_max.
        grading_exponent: Clustering strength toward the boundary.
        faces: Cell faces, faces[0] = 0 and faces[-1] = phi_max.
    """

    dimension_n: int
    phi_max: float
    nodes: np.ndarray
    weights: np.ndarray
    volumes: np.ndarray
    grading_exponent: float
    faces: np.ndarray = field(repr=False)

    @property
    def node_count(self) -> int:
        return int(self.nodes.size)

    @property
    def distance(self) -> np.ndarray:
        """Distance to the boundary, phi_max - phi."""
        return self.phi_max - self.nodes

    def measure(self, phi: np.ndarray) -> np.ndarray:
        return np.sin(phi) ** (self.dimension_n - 2)

    def same_as(self, other: "AngularGrid") -> bool:
        if other is self:
            return True
        return (
            self.dimension_n == other.dimension_n
            and self.phi_max == other.phi_max
            and self.grading_exponent == other.grading_exponent
            and self.node_count == other.node_count
        )

    def to_rows(self) -> Tuple[List[str], List[Tuple[float, float]]]:
        """Rows of the `phi,weight` grid artifact, ordered by node index."""
        rows = [(float(p), float(w)) for p, w in zip(self.nodes, self.weights)]
        return ["phi", "weight"], rows


@dataclass(frozen=True, eq=False)
class AngularField:
    grid: AngularGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.node_count,):
            raise ShapeError(
                f"field has shape {values.shape}, grid has {self.grid.node_count} nodes"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __add__(self, other: "AngularField") -> "AngularField":
        return AngularField(self.grid, self.values + field_values(self.grid, other))

    def __sub__(self, other: "AngularField") -> "AngularField":
        return AngularField(self.grid, self.values - field_values(self.grid, other))

    def __mul__(self, scalar: float) -> "AngularField":
        return AngularField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "AngularField":
        return AngularField(self.grid, -self.values)


FieldLike = Union[AngularField, np.ndarray]


def field_values(grid: AngularGrid, f: FieldLike) -> np.ndarray:
    """
    Return the node values of f, checking that it lives on grid.

    Raises:
        ShapeError: If f belongs to another grid or has the wrong length.
    """
    if isinstance(f, AngularField):
        if not f.grid.same_as(grid):
            raise ShapeError("field lives on a different angular grid")
        return f.values
    values = np.asarray(f, dtype=float)
    if values.shape != (grid.node_count,):
        raise ShapeError(
            f"expected {grid.node_count} node values, got shape {values.shape}"
        )
    return values


def _cell_integrals(n: int, faces: np.ndarray) -> np.ndarray:
    x, w = leggauss(_CELL_GAUSS_POINTS)
    left, right = faces[:-1], faces[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    pts = mid[:, None] + half[:, None] * x[None, :]
    return half * (np.sin(pts) ** (n - 2) @ w)


def build_grid(
    n: int, phi_max: float, node_count: int, grading_exponent: float = 2.0
) -> AngularGrid:
    """
    Build a boundary-graded cell-centred grid on the cap.

    Nodes are phi_k = phi_max * (1 - (1 - u_k)^g) with u_k = (k + 1/2)/(N + 1/2),
    so the gap to the boundary scales like (1/N)^g.

    Args:
        n: Ambient dimension, at least 3.
        phi_max: Cap half-angle in (0, pi).
        node_count: Number of nodes, at least 16.
        grading_exponent: g >= 1; g = 1 gives a uniform grid.

    Returns:
        The grid.

    Raises:
        ParameterError: On any out-of-range argument.
    """
    if int(n) != n or n < 3:
        raise ParameterError(f"n must be an integer >= 3, got {n}")
    if not 0.0 < phi_max < np.pi:
        raise ParameterError(f"phi_max must lie in (0, pi), got {phi_max}")
    if int(node_count) != node_count or node_count < 16:
        raise ParameterError(f"node_count must be an integer >= 16, got {node_count}")
    if grading_exponent < 1.0:
        raise ParameterError(f"grading_exponent must be >= 1, got {grading_exponent}")

    n, size = int(n), int(node_count)
    u = (np.arange(size) + 0.5) / (size + 0.5)
    nodes = phi_max * (1.0 - (1.0 - u) ** grading_exponent)

    mids = 0.5 * (nodes[:-1] + nodes[1:])
    faces = np.concatenate(([0.0], mids, [phi_max]))
    weights = _cell_integrals(n, faces)

    fv_faces = faces.copy()
    fv_faces[-1] = 0.5 * (nodes[-1] + phi_max)
    volumes = _cell_integrals(n, fv_faces)

    for arr in (nodes, weights, volumes, faces):
        arr.setflags(write=False)
    logger.debug(
        "angular grid n=%d phi_max=%.6g N=%d g=%.3g", n, phi_max, size, grading_exponent
    )
    return AngularGrid(
        dimension_n=n,
        phi_max=float(phi_max),
        nodes=nodes,
        weights=weights,
        volumes=volumes,
        grading_exponent=float(grading_exponent),
        faces=faces,
    )


def boundary_value(grid: AngularGrid, values: np.ndarray, boundary: str) -> float:
    """Value assigned at phi_max: zero, or quadratic extrapolation."""
    if boundary == "dirichlet":
        return 0.0
    if boundary != "extrapolate":
        raise ParameterError(f"unknown boundary mode {boundary!r}")
    x = grid.nodes[-3:]
    coeffs = np.polyfit(x - grid.phi_max, values[-3:], 2)
    return float(coeffs[-1])


def face_coefficients(grid: AngularGrid) -> Tuple[np.ndarray, np.ndarray]:
    """
    Flux coefficients a/d of the second-order flux-form Laplacian.

    Returns:
        (interior, last): interior[k] couples nodes k and k+1 through the face
        between them; last couples the final node to the boundary value.
    """
    nodes = grid.nodes
    interior = grid.measure(0.5 * (nodes[:-1] + nodes[1:])) / np.diff(nodes)
    gap = grid.phi_max - nodes[-1]
    last = float(grid.measure(np.array(nodes[-1] + 0.5 * gap)) / gap)
    return interior, last


def stiffness_matrix(grid: AngularGrid) -> sparse.csr_matrix:
    """Symmetric tridiagonal Dirichlet stiffness K with f.K.f = sum a/d (df)^2."""
    interior, last = face_coefficients(grid)
    diag = np.zeros(grid.node_count)
    diag[:-1] += interior
    diag[1:] += interior
    diag[-1] += last
    return sparse.diags([-interior, diag, -interior], [-1, 0, 1], format="csr")


def laplace_matrix(grid: AngularGrid) -> sparse.csr_matrix:
    """Flux-form Dirichlet Laplacian as a sparse matrix (control volumes)."""
    return sparse.diags(-1.0 / grid.volumes) @ stiffness_matrix(grid)


def gradient_matrix(grid: AngularGrid) -> sparse.csr_matrix:
    """Matrix of `gradient` with the Dirichlet closure."""
    x = np.concatenate(([-grid.nodes[0]], grid.nodes, [grid.phi_max]))
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    lower = -h2 / (h1 * (h1 + h2))
    centre = (h2 - h1) / (h1 * h2)
    upper = h1 / (h2 * (h1 + h2))
    centre = centre.copy()
    # ghost value at -phi_0 reflects node 0
    centre[0] += lower[0]
    return sparse.diags([lower[1:], centre, upper[:-1]], [-1, 0, 1], format="csr")


def laplace_apply(
    grid: AngularGrid, f: FieldLike, boundary: str = "extrapolate"
) -> AngularField:
    """
    Apply the axisymmetric Laplace-Beltrami operator
    f'' + (n-2) cot(phi) f' in flux form sin^-(n-2) (sin^(n-2) f')'.

    Args:
        grid: The angular grid.
        f: Field on the grid.
        boundary: "extrapolate" closes the last cell with a one-sided
            quadratic extrapolation to phi_max; "dirichlet" uses f(phi_max) = 0.

    Returns:
        The discrete Laplacian at every node.
    """
    values = field_values(grid, f)
    interior, last = face_coefficients(grid)
    fluxes = interior * np.diff(values)
    out = np.zeros_like(values)
    out[:-1] += fluxes
    out[1:] -= fluxes
    out[-1] += last * (boundary_value(grid, values, boundary) - values[-1])
    return AngularField(grid, out / grid.volumes)


def _three_point(x: np.ndarray, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """First and second derivative at the middle of consecutive point triples."""
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    fm, f0, fp = f[:-2], f[1:-1], f[2:]
    d1 = (
        -h2 / (h1 * (h1 + h2)) * fm
        + (h2 - h1) / (h1 * h2) * f0
        + h1 / (h2 * (h1 + h2)) * fp
    )
    d2 = 2.0 * (fm / (h1 * (h1 + h2)) - f0 / (h1 * h2) + fp / (h2 * (h1 + h2)))
    return d1, d2


def _extended(grid: AngularGrid, values: np.ndarray, boundary: str):
    x = np.concatenate(([-grid.nodes[0]], grid.nodes, [grid.phi_max]))
    f = np.concatenate(
        ([values[0]], values, [boundary_value(grid, values, boundary)])
    )
    return x, f


def gradient(grid: AngularGrid, f: FieldLike, boundary: str = "dirichlet") -> AngularField:
    """
    Three-point nonuniform derivative d/dphi with axis reflection.

    Args:
        grid: The angular grid.
        f: Field on the grid.
        boundary: Closure at phi_max, see laplace_apply.

    Returns:
        The derivative at every node.
    """
    values = field_values(grid, f)
    x, ext = _extended(grid, values, boundary)
    d1, _ = _three_point(x, ext)
    return AngularField(grid, d1)


def second_derivative(
    grid: AngularGrid, f: FieldLike, boundary: str = "dirichlet"
) -> AngularField:
    values = field_values(grid, f)
    x, ext = _extended(grid, values, boundary)
    _, d2 = _three_point(x, ext)
    return AngularField(grid, d2)


def inner_product(grid: AngularGrid, f: FieldLike, g: FieldLike) -> float:
    """
    Weighted L2 pairing sum_k w_k f_k g_k.

    The weights integrate constants exactly; smooth functions converge at
    second order in the mesh size.
    """
    fv = field_values(grid, f)
    gv = field_values(grid, g)
    return float(np.sum(grid.weights * (fv * gv)))


def weighted_l2_norm(grid: AngularGrid, f: FieldLike) -> float:
    return float(np.sqrt(max(inner_product(grid, f, f), 0.0)))
