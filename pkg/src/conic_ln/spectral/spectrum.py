import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from ..errors import NumericError, ParameterError, ResolutionError
from ..geometry.angular_grid import AngularField, FieldLike
from ..geometry.fitting import boundary_decay_slope
from ..geometry.profile import BoundaryProfile
from .operator import SingularOperator

logger = logging.getLogger(__name__)

MULTIPLICITY_GAP = 1e-8
SIGN_THRESHOLD = 1e-6


@dataclass(frozen=True, eq=False)
class Spectrum:
    """
    Leading eigenpairs of -L with indicial exponents gamma_i = sqrt(lam_i + beta^2).

    vectors[:, i] holds eigenfield i+1; eigenfields are orthonormal in the
    weighted pairing of the grid.
    """

    profile: BoundaryProfile
    operator: SingularOperator
    kappa: float
    lambdas: np.ndarray
    gammas: np.ndarray
    vectors: np.ndarray

    @property
    def count(self) -> int:
        return int(self.lambdas.size)

    @property
    def beta(self) -> float:
        return self.profile.beta

    @property
    def eigenfields(self) -> List[AngularField]:
        return [AngularField(self.profile.grid, self.vectors[:, i]) for i in range(self.count)]

    def eigenfield(self, i: int) -> np.ndarray:
        """Values of phi_i, 1-based."""
        if not 1 <= i <= self.count:
            raise ParameterError(f"eigen index {i} outside 1..{self.count}")
        return self.vectors[:, i - 1]

    def clusters(self) -> List[List[int]]:
        """1-based index groups whose eigenvalues coincide within the gap rule."""
        groups: List[List[int]] = [[1]]
        for i in range(1, self.count):
            a, b = self.lambdas[i - 1], self.lambdas[i]
            if (b - a) <= MULTIPLICITY_GAP * abs(b):
                groups[-1].append(i + 1)
            else:
                groups.append([i + 1])
        return groups

    def summary(self) -> Dict[str, Any]:
        return {
            "kappa": self.kappa,
            "lambdas": [float(x) for x in self.lambdas],
            "gammas": [float(x) for x in self.gammas],
        }

    def to_rows(self) -> Tuple[List[str], List[Tuple[float, ...]]]:
        header = ["phi"] + [f"phi_{i + 1}" for i in range(self.count)]
        rows = [
            (float(p),) + tuple(float(v) for v in self.vectors[k])
            for k, p in enumerate(self.profile.grid.nodes)
        ]
        return header, rows


def _sign_normalize(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for i in range(out.shape[1]):
        col = out[:, i]
        big = np.flatnonzero(np.abs(col) > SIGN_THRESHOLD)
        if big.size and col[big[0]] < 0:
            out[:, i] = -col
    return out


def compute_spectrum(
    profile: BoundaryProfile, count: int, operator: Optional[SingularOperator] = None
) -> Spectrum:
    """
    Compute the lowest `count` eigenpairs of -L on the profile's grid.

    Args:
        profile: Solved boundary profile.
        count: Number of eigenpairs, 1 <= count <= node_count / 4.
        operator: Prebuilt operator for the profile, built when omitted.

    Returns:
        The spectrum, eigenvalues ascending and eigenfields sign-normalized.

    Raises:
        ParameterError: If count < 1.
        ResolutionError: If count exceeds node_count / 4.
        NumericError: On solver failure, nonpositive or non-simple lam_1.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    size = profile.grid.node_count
    if count > size // 4:
        raise ResolutionError(
            f"{count} eigenpairs need at least {4 * count} nodes, grid has {size}"
        )
    operator = operator or SingularOperator(profile)
    diag, off = operator.symmetric_tridiagonal()
    try:
        lambdas, y = eigh_tridiagonal(
            diag, off, select="i", select_range=(0, count - 1), lapack_driver="stebz"
        )
    except (LinAlgError, ValueError) as e:
        raise NumericError(f"tridiagonal eigensolver failed: {e}") from e
    if not np.all(np.isfinite(lambdas)):
        raise NumericError("eigensolver returned non-finite eigenvalues")

    order = np.argsort(lambdas)
    lambdas = lambdas[order]
    vectors = y[:, order] / np.sqrt(operator.mass)[:, None]
    vectors = _sign_normalize(vectors)
    vectors.setflags(write=False)
    lambdas.setflags(write=False)

    if lambdas[0] <= 0.0:
        raise NumericError(f"first eigenvalue {lambdas[0]:.6g} is not positive")
    if count > 1 and lambdas[1] - lambdas[0] <= MULTIPLICITY_GAP * abs(lambdas[1]):
        raise NumericError("first eigenvalue is not simple")

    beta = profile.beta
    gammas = np.sqrt(lambdas + beta**2)
    gammas.setflags(write=False)
    spectrum = Spectrum(
        profile=profile,
        operator=operator,
        kappa=profile.constants.kappa,
        lambdas=lambdas,
        gammas=gammas,
        vectors=vectors,
    )
    multiples = [g for g in spectrum.clusters() if len(g) > 1]
    if multiples:
        logger.warning("multiple eigenvalues detected at indices %s", multiples)
    logger.info("spectrum: gammas %s", np.array2string(gammas, precision=8))
    return spectrum


def eigen_decay_slope(
    spectrum: Spectrum, i: int, values: Optional[FieldLike] = None
) -> float:
    """
    Boundary decay slope of |phi_i| against rho (about s = (n+2)/2).

    Args:
        spectrum: Computed spectrum.
        i: 1-based eigen index.
        values: Optional field fitted in place of phi_i.

    Raises:
        DiagnosticError: If the boundary decade is not resolved.
    """
    grid = spectrum.profile.grid
    field = spectrum.eigenfield(i) if values is None else spectrum.operator.values(values)
    return boundary_decay_slope(grid, spectrum.profile.rho.values, field)


def project(spectrum: Spectrum, f: FieldLike, upto: int) -> np.ndarray:
    """
    Coefficients <f, phi_i> for i = 1..upto.

    Raises:
        ParameterError: If upto exceeds the computed count.
        ShapeError: If f does not live on the spectrum's grid.
    """
    if not 0 <= upto <= spectrum.count:
        raise ParameterError(f"upto={upto} outside 0..{spectrum.count}")
    values = spectrum.operator.values(f)
    weighted = spectrum.operator.mass * values
    return weighted @ spectrum.vectors[:, :upto]


def reconstruct(spectrum: Spectrum, coefficients: np.ndarray) -> np.ndarray:
    coefficients = np.asarray(coefficients, dtype=float)
    return spectrum.vectors[:, : coefficients.size] @ coefficients
