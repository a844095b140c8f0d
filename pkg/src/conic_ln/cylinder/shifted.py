import logging
from typing import List

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from ..errors import FredholmObstructionError
from ..geometry.angular_grid import AngularField, FieldLike, weighted_l2_norm
from ..spectral.index_set import resonance_tolerance
from ..spectral.spectrum import Spectrum

logger = logging.getLogger(__name__)


def resonant_indices(spectrum: Spectrum, gamma: float, epsilon_res: float) -> List[int]:
    """1-based indices i with |gamma_i - gamma| <= epsilon_res * max(1, gamma)."""
    tol = resonance_tolerance(epsilon_res, gamma)
    return [i + 1 for i, g in enumerate(spectrum.gammas) if abs(g - gamma) <= tol]


def shifted_angular_solve(
    spectrum: Spectrum,
    h: FieldLike,
    gamma: float,
    epsilon_res: float = 1e-8,
    orthogonality_tol: float = 1e-9,
) -> AngularField:
    """
    Solve (L + gamma^2 - beta^2) w = -h, the angular part of
    Lcal(e^{-gamma t} w) = e^{-gamma t} h.

    Away from resonance the system is solved directly. When gamma matches an
    eigen exponent within epsilon_res the data must be orthogonal to that
    eigenspace; the solution is then taken orthogonal to it as well (bordered
    system).

    Args:
        spectrum: Spectrum supplying L and the eigenfields.
        h: Right-hand side.
        gamma: Rate of the exponential factor.
        epsilon_res: Resonance tolerance on exponents.
        orthogonality_tol: Allowed |<h, phi_k>| relative to |h| at resonance.

    Raises:
        FredholmObstructionError: At resonance with non-orthogonal data.
    """
    op = spectrum.operator
    grid = op.grid
    rhs = op.values(h)
    shift = gamma**2 - op.constants.beta**2
    if not np.any(rhs):
        return AngularField(grid, np.zeros_like(rhs))
    resonant = resonant_indices(spectrum, gamma, epsilon_res)
    system = op.shifted_matrix(shift)
    if not resonant:
        w = spsolve(system, op.mass * rhs)
        return AngularField(grid, w)

    basis = np.column_stack([spectrum.eigenfield(i) for i in resonant])
    coefficients = (op.mass * rhs) @ basis
    scale = max(weighted_l2_norm(grid, rhs), np.finfo(float).tiny)
    obstruction = float(np.max(np.abs(coefficients)))
    if obstruction > orthogonality_tol * scale:
        raise FredholmObstructionError(
            f"gamma={gamma:.10g} is resonant with modes {resonant} and the data has "
            f"eigen component {obstruction:.3e}",
            obstruction=obstruction,
        )
    border = sparse.csc_matrix(op.mass[:, None] * basis)
    bordered = sparse.bmat([[system, border], [border.T, None]], format="csc")
    solution = spsolve(bordered, np.concatenate((op.mass * (rhs - basis @ coefficients), np.zeros(len(resonant)))))
    w = solution[: op.size]
    w = w - basis @ ((op.mass * w) @ basis)
    logger.debug("resonant shifted solve at gamma=%.10g, modes %s", gamma, resonant)
    return AngularField(grid, w)
