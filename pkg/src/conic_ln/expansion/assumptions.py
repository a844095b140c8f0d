"""
Diagnostics for the hypotheses the fixed-point iteration relies on:

    |omega| + rho |grad omega| <= rho^s eps(t) with eps decreasing, and
    |N(vhat)| <= K rho^(s-2) e^{-mu t}.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..errors import DiagnosticError, ParameterError
from ..geometry.angular_grid import gradient
from ..geometry.fitting import fit_power_law
from ..geometry.profile import BoundaryProfile
from ..spectral.operator import SingularOperator
from ..contraction.residual import expansion_residual
from .terms import Expansion

logger = logging.getLogger(__name__)

WINDOW_SAMPLES = 201
# eps may rise by this fraction of its maximum between samples (round-off)
MONOTONE_SLACK = 1e-8
RATE_SLACK = 0.05


@dataclass(frozen=True)
class AssumptionReport:
    t: np.ndarray
    epsilon: np.ndarray
    epsilon_rate: Optional[float]
    decreasing: bool
    small: bool
    K: float
    residual_rate: Optional[float]
    mu: float

    @property
    def rate_ok(self) -> bool:
        return self.residual_rate is None or self.residual_rate >= self.mu - RATE_SLACK

    @property
    def passed(self) -> bool:
        return self.decreasing and self.small and math.isfinite(self.K) and self.rate_ok

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mu": self.mu,
            "window": [float(self.t[0]), float(self.t[-1])],
            "epsilon_t0": float(self.epsilon[0]),
            "epsilon_rate": self.epsilon_rate,
            "decreasing": self.decreasing,
            "small": self.small,
            "K": self.K,
            "residual_rate": self.residual_rate,
            "passed": self.passed,
        }


def _decay_rate(t: np.ndarray, values: np.ndarray) -> Optional[float]:
    scale = float(np.max(values, initial=0.0))
    keep = values > 1e-12 * scale
    if scale == 0.0 or np.count_nonzero(keep) < 3:
        return None
    try:
        slope, _ = fit_power_law(np.exp(t[keep]), values[keep])
    except DiagnosticError:
        return None
    return -slope


def assumption_check(
    expansion: Expansion,
    profile: BoundaryProfile,
    mu: float,
    t_window: Tuple[float, float],
    operator: Optional[SingularOperator] = None,
) -> AssumptionReport:
    """
    Measure eps(t) and K for vhat = xi + omega over t_window.

    The last angular node is excluded from every sup. eps uses the full
    cylinder gradient (d_t omega and d_phi omega), d_t by differences on a
    fine sample of the window.

    Raises:
        ParameterError: If the window is empty or the expansion lives on
            another grid.
    """
    start, stop = (float(x) for x in t_window)
    if not stop > start:
        raise ParameterError(f"empty assumption window {t_window}")
    if not expansion.grid.same_as(profile.grid):
        raise ParameterError("expansion and profile use different grids")
    operator = operator or SingularOperator(profile)
    const = profile.constants
    rho = profile.rho.values[:-1]
    t = np.linspace(start, stop, WINDOW_SAMPLES)
    omega = expansion.sample(t).values

    d_t = np.gradient(omega, t, axis=0, edge_order=2)
    d_phi = np.array([gradient(profile.grid, row, boundary="dirichlet").values for row in omega])
    grad = np.hypot(d_t, d_phi)
    eps = np.max((np.abs(omega) + profile.rho.values * grad)[:, :-1] * rho ** (-const.s), axis=1)
    decreasing = bool(np.all(np.diff(eps) <= MONOTONE_SLACK * max(float(eps.max()), 1e-300)))
    small = bool(np.all(np.abs(omega) < profile.xi.values[None, :]))

    if expansion.is_empty:
        K, residual_rate = 0.0, None
    else:
        residual = np.abs(expansion_residual(expansion, t, operator))[:, :-1] * rho ** (2.0 - const.s)
        envelope = residual.max(axis=1)
        K = float(np.max(envelope * np.exp(mu * t)))
        residual_rate = _decay_rate(t, envelope)
    report = AssumptionReport(
        t=t,
        epsilon=eps,
        epsilon_rate=_decay_rate(t, eps),
        decreasing=decreasing,
        small=small,
        K=K,
        residual_rate=residual_rate,
        mu=float(mu),
    )
    if not report.passed:
        logger.warning("assumption check failed: %s", report.to_dict())
    return report
