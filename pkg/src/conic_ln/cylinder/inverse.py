import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..errors import PreconditionError, RateError, ResolutionError
from ..geometry.profile import BoundaryProfile
from ..spectral.index_set import IndexChain, membership
from ..spectral.spectrum import Spectrum
from .complement import lower_modes, solve_complement
from .fields import CylinderField, WeightedNormSpec, cylinder_values, weighted_norm
from .mode_ode import solve_mode_ode, tail_rate
from .operator import apply_cyl_operator

logger = logging.getLogger(__name__)

# Allowed shortfall of the fitted forcing rate below mu.
RATE_SLACK = 0.1


@dataclass(frozen=True)
class InverseReport:
    mu: float
    lower_modes: int
    T: float
    residual_norms: Dict[str, float]
    norm_bound_C: float
    mode_rates: List[Optional[float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mu": self.mu,
            "I": self.lower_modes,
            "T": self.T,
            "residual_norms": dict(self.residual_norms),
            "norm_bound_C": self.norm_bound_C,
        }


def check_target_rate(spectrum: Spectrum, chain: IndexChain, mu: float) -> None:
    """
    Raises:
        PreconditionError: If mu <= gamma_1 or mu lies in the index set.
    """
    gamma1 = float(spectrum.gammas[0])
    if mu <= gamma1:
        raise PreconditionError(f"mu={mu} must exceed gamma_1={gamma1:.10g}")
    result = membership(chain, mu)
    if result.in_set:
        raise PreconditionError(
            f"mu={mu} lies in the index set (value {result.nearest:.10g}); choose another mu"
        )


def _forcing_rate(values: np.ndarray, t_nodes: np.ndarray) -> Optional[float]:
    return tail_rate(np.abs(values).max(axis=1), t_nodes)


def invert_cyl_operator(
    spectrum: Spectrum,
    chain: IndexChain,
    f,
    mu: float,
    orthogonality_tol: float = 1e-9,
    check_rate: bool = True,
) -> CylinderField:
    """Solve Lcal v = f on [t0, T]; see invert_with_report."""
    v, _ = invert_with_report(spectrum, chain, f, mu, orthogonality_tol, check_rate)
    return v


def invert_with_report(
    spectrum: Spectrum,
    chain: IndexChain,
    f,
    mu: float,
    orthogonality_tol: float = 1e-9,
    check_rate: bool = True,
):
    """
    Invert the cylinder operator on the mu-weighted space.

    f is split t-row by t-row into its projection on the eigenfields with
    exponent below mu, solved mode by mode with the decaying kernel, and the
    remainder, solved by the complement energy with zero end data. The mode
    solutions satisfy the three-point equation exactly at interior rows, so
    the assembled v satisfies the discrete equation at every interior row.

    Args:
        spectrum: Spectrum of the profile.
        chain: Index chain used to validate mu.
        f: Forcing on a cylinder grid [t0, T].
        mu: Target rate, above gamma_1 and outside the index set.
        orthogonality_tol: Passed to the complement solver.
        check_rate: Reject forcing decaying visibly slower than mu.

    Returns:
        (v, InverseReport).

    Raises:
        PreconditionError: If mu is not admissible.
        RateError: If f decays slower than e^{-mu t}.
        ResolutionError: If no computed eigen exponent exceeds mu.
    """
    check_target_rate(spectrum, chain, mu)
    grid = f.grid
    values = cylinder_values(grid, f)
    upto = lower_modes(spectrum, mu)
    if upto >= spectrum.count:
        raise ResolutionError(
            f"all {spectrum.count} computed exponents lie below mu={mu}; raise eigen_count"
        )
    if check_rate and np.any(values):
        rate = _forcing_rate(values, grid.t_nodes)
        if rate is not None and rate < mu - RATE_SLACK:
            raise RateError(f"forcing decays at rate {rate:.4g} < mu={mu}")

    mass = spectrum.operator.mass
    basis = spectrum.vectors[:, :upto]
    coefficients = (values * mass) @ basis
    remainder = values - coefficients @ basis.T

    out = np.zeros(grid.shape)
    rates: List[Optional[float]] = []
    # projections and remainders at round-off level are dropped
    floor = 1e-13 * float(np.max(np.abs(values), initial=0.0))
    for i in range(upto):
        gamma = float(spectrum.gammas[i])
        if float(np.max(np.abs(coefficients[:, i]))) <= floor:
            rates.append(None)
            continue
        mode = solve_mode_ode(gamma, coefficients[:, i], grid.t_nodes, scheme="discrete")
        rates.append(tail_rate(coefficients[:, i], grid.t_nodes))
        out += np.outer(mode, basis[:, i])
    if float(np.max(np.abs(remainder), initial=0.0)) > floor:
        out += solve_complement(
            spectrum,
            CylinderField(grid, remainder),
            mu,
            epsilon_res=chain.epsilon_res,
            orthogonality_tol=orthogonality_tol,
        ).values
    v = CylinderField(grid, out)

    profile: BoundaryProfile = spectrum.profile
    s = profile.constants.s
    residual = apply_cyl_operator(spectrum.operator, v).values - values
    residual[0] = residual[-1] = 0.0
    f_norm = weighted_norm(f, WeightedNormSpec(mu, s - 2.0, 0), profile)
    v_norm = weighted_norm(v, WeightedNormSpec(mu, s, 2), profile)
    res_norm = weighted_norm(residual, WeightedNormSpec(mu, s - 2.0, 0), profile, grid)
    report = InverseReport(
        mu=float(mu),
        lower_modes=upto,
        T=float(grid.t_max),
        residual_norms={
            "weighted": res_norm,
            "relative": res_norm / f_norm if f_norm > 0 else 0.0,
        },
        norm_bound_C=v_norm / f_norm if f_norm > 0 else 0.0,
        mode_rates=rates,
    )
    logger.debug("inverse: I=%d, residual %.3e, C=%.4g", upto, res_norm, report.norm_bound_C)
    return v, report
