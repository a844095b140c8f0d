"""
Fixed-point iteration w -> Lcal^-1 [P(w) - N(vhat)] on the weighted space.

The starting t0 is raised by one (up to a limit) whenever the measured ball
condition C * Lip(P) <= ball_constant fails, positivity is lost, or the
iteration stops contracting.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..config import PicardOptions
from ..errors import ConvergenceError, DomainError, NonContractionError
from ..spectral.index_set import IndexChain
from ..spectral.spectrum import Spectrum
from ..cylinder.complement import lower_modes
from ..cylinder.fields import (
    CylinderField,
    CylinderGrid,
    WeightedNormSpec,
    build_cylinder_grid,
    choose_truncation,
    weighted_norm,
)
from ..cylinder.inverse import check_target_rate, invert_with_report
from ..expansion.terms import Expansion
from .decay import DecayFit, decay_fit
from .residual import expansion_residual, fixed_point_residual, perturbation_term

logger = logging.getLogger(__name__)

# Round-off in w is relative to its largest value; the e^{mu t} weight
# amplifies it by up to e^{mu (T - t0)}.
_NOISE_FACTOR = 100.0 * np.finfo(float).eps


@dataclass(frozen=True)
class BallTest:
    C: float
    B: float
    lipschitz: float
    theta: float
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "C": self.C,
            "B": self.B,
            "lipschitz": self.lipschitz,
            "theta": self.theta,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ContractionReport:
    """
    Outcome of picard_solve.

    Attributes:
        t0_used: Start of the cylinder of the accepted attempt.
        T: Truncation point.
        mu: Weight rate.
        iterates: Per iteration the weighted norm of w_k, of w_k - w_{k-1},
            and their ratio to the previous correction.
        final_residual: Weighted (mu, s-2) norm of Lcal w - P(w) + N(vhat).
        relative_residual: final_residual over the norm of N(vhat).
        contraction_factor: Largest late correction ratio.
        decay_fit: Fitted decay of rho^-s |v - vhat|.
        converged: Whether the correction fell under the tolerance.
        ball: Measured ball-mapping test of the accepted attempt.
        attempts: t0 values tried with their outcome.
    """

    t0_used: float
    T: float
    mu: float
    iterates: List[Dict[str, Optional[float]]]
    final_residual: float
    relative_residual: float
    contraction_factor: float
    decay_fit: Optional[DecayFit]
    converged: bool
    ball: Optional[BallTest] = None
    attempts: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t0_used": self.t0_used,
            "T": self.T,
            "mu": self.mu,
            "iterations": len(self.iterates),
            "iterates": self.iterates,
            "final_residual": self.final_residual,
            "relative_residual": self.relative_residual,
            "lambda": self.contraction_factor,
            "decay_fit": self.decay_fit.to_dict() if self.decay_fit else None,
            "converged": self.converged,
            "ball": self.ball.to_dict() if self.ball else None,
            "attempts": self.attempts,
        }


def assemble_solution(vhat: Expansion, w: CylinderField) -> CylinderField:
    """v = xi + omega + w on w's grid."""
    omega = vhat.sample(w.grid.t_nodes).values
    return CylinderField(w.grid, vhat.profile.xi.values[None, :] + omega + w.values)


def _lipschitz(vhat: Expansion, grid: CylinderGrid, mu: float, radius: float) -> float:
    """
    sup of kappa |(1 + x +- nu_B)^q - 1| with nu_B the relative size of a
    ball element of radius B, i.e. the Lipschitz constant of P from
    (mu, s) to (mu, s - 2).
    """
    profile = vhat.profile
    const = profile.constants
    xi = profile.xi.values[:-1]
    rho = profile.rho.values[:-1]
    x = vhat.sample(grid.t_nodes).values[:, :-1] / xi
    nu = radius * np.exp(-mu * grid.t_nodes)[:, None] * rho**const.s / xi
    worst = 0.0
    for sign in (1.0, -1.0):
        base = 1.0 + x + sign * nu
        if np.any(base <= 0.0):
            return math.inf
        worst = max(worst, float(np.max(np.abs(np.expm1(const.q * np.log(base))))))
    return const.kappa * worst


def _iterate(
    vhat: Expansion,
    spectrum: Spectrum,
    chain: IndexChain,
    mu: float,
    grid: CylinderGrid,
    opts: PicardOptions,
) -> Tuple[CylinderField, ContractionReport]:
    profile = vhat.profile
    operator = spectrum.operator
    s = profile.constants.s
    norm0 = WeightedNormSpec(mu, s, 0)
    omega = vhat.sample(grid.t_nodes).values
    base = expansion_residual(vhat, grid.t_nodes, operator)
    base_norm = weighted_norm(base, WeightedNormSpec(mu, s - 2.0, 0), profile, grid)
    amplification = math.exp(mu * (grid.t_max - grid.t0))

    w = CylinderField(grid, np.zeros(grid.shape))
    iterates: List[Dict[str, Optional[float]]] = []
    ball: Optional[BallTest] = None
    previous: Optional[float] = None
    streak = 0
    converged = False
    for k in range(opts.max_iterations):
        forcing = perturbation_term(w.values, omega, profile, opts.quadrature_points) - base
        new, inverse = invert_with_report(
            spectrum, chain, CylinderField(grid, forcing), mu, check_rate=False
        )
        correction = weighted_norm(new - w, norm0, profile)
        size = weighted_norm(new, norm0, profile)
        ratio = correction / previous if previous else None
        iterates.append({"norm": size, "correction": correction, "ratio": ratio})
        logger.debug(
            "picard %d: |w|=%.3e |dw|=%.3e ratio=%s",
            k,
            size,
            correction,
            "-" if ratio is None else f"{ratio:.3g}",
        )
        w = new
        if k == 0:
            radius = 2.0 * size
            lip = _lipschitz(vhat, grid, mu, radius)
            theta = inverse.norm_bound_C * lip if radius > 0 else 0.0
            ball = BallTest(inverse.norm_bound_C, radius, lip, theta, theta <= opts.ball_constant)
        floor = _NOISE_FACTOR * amplification * size
        if correction <= max(opts.tolerance, floor):
            if correction > opts.tolerance:
                logger.warning(
                    "picard stopped at the round-off floor %.3e (tolerance %.1e)",
                    floor,
                    opts.tolerance,
                )
            converged = True
            break
        streak = streak + 1 if (ratio is not None and ratio > 1.0) else 0
        if streak >= opts.non_monotone_window:
            raise NonContractionError(
                f"correction grew for {streak} consecutive iterations at t0={grid.t0}",
                last_iterate=w,
                history=[it["correction"] for it in iterates],
            )
        previous = correction
    if not converged:
        raise ConvergenceError(
            f"picard did not converge in {opts.max_iterations} iterations at t0={grid.t0}",
            last_iterate=w,
            history=[it["correction"] for it in iterates],
        )

    residual = fixed_point_residual(vhat, w, operator, opts.quadrature_points)
    final = weighted_norm(residual, WeightedNormSpec(mu, s - 2.0, 0), profile, grid)
    late = [it["ratio"] for it in iterates[-5:] if it["ratio"] is not None]
    report = ContractionReport(
        t0_used=grid.t0,
        T=grid.t_max,
        mu=float(mu),
        iterates=iterates,
        final_residual=final,
        relative_residual=final / base_norm if base_norm > 0 else 0.0,
        contraction_factor=float(max(late)) if late else 0.0,
        decay_fit=decay_fit(assemble_solution(vhat, w), vhat, profile),
        converged=True,
        ball=ball,
    )
    return w, report


def picard_solve(
    vhat: Expansion,
    spectrum: Spectrum,
    chain: IndexChain,
    mu: float,
    t0: float = 1.0,
    opts: Optional[PicardOptions] = None,
    dt: float = 0.05,
    t_max: Optional[float] = None,
) -> Tuple[CylinderField, ContractionReport]:
    """
    Upgrade the approximate solution vhat to an exact one, v = vhat + w.

    Args:
        vhat: Expansion of order at least mu.
        spectrum: Spectrum of the profile vhat lives on.
        chain: Index chain validating mu.
        mu: Weight rate, above gamma_1 and outside the index set.
        t0: First start of the cylinder tried.
        opts: Iteration options.
        dt: Step of the t-grid.
        t_max: Cap for the truncation point.

    Returns:
        (w, report) for the first t0 that contracts.

    Raises:
        PreconditionError: If mu is not admissible.
        NonContractionError: If no t0 up to the escalation limit contracts.
        DomainError: If positivity is lost at every t0 tried.
    """
    opts = opts or PicardOptions()
    check_target_rate(spectrum, chain, mu)
    upto = lower_modes(spectrum, mu)
    gamma_next = float(spectrum.gammas[upto]) if upto < spectrum.count else None
    attempts: List[Dict[str, Any]] = []
    last_error: Optional[Exception] = None
    for step in range(opts.t0_escalation_limit + 1):
        start = float(t0 + step)
        final_attempt = step == opts.t0_escalation_limit
        T = choose_truncation(start, mu, gamma_next, t_max)
        grid = build_cylinder_grid(spectrum.profile.grid, start, T, dt)
        try:
            w, report = _iterate(vhat, spectrum, chain, mu, grid, opts)
        except (ConvergenceError, DomainError) as exc:
            attempts.append({"t0": start, "outcome": type(exc).__name__})
            logger.warning("t0=%.4g failed (%s); escalating", start, exc)
            last_error = exc
            continue
        if report.ball is not None and not report.ball.passed and not final_attempt:
            attempts.append({"t0": start, "outcome": "ball_test"})
            logger.warning(
                "ball test failed at t0=%.4g (theta=%.3g); escalating", start, report.ball.theta
            )
            continue
        attempts.append({"t0": start, "outcome": "converged"})
        logger.info(
            "picard converged at t0=%.4g after %d iterations, lambda=%.3g",
            start,
            len(report.iterates),
            report.contraction_factor,
        )
        return w, replace(report, attempts=list(attempts))

    if isinstance(last_error, DomainError):
        raise last_error
    history = getattr(last_error, "history", [])
    raise NonContractionError(
        f"no contraction for t0 in [{t0}, {t0 + opts.t0_escalation_limit}]: {attempts}",
        last_iterate=getattr(last_error, "last_iterate", None),
        history=history,
    )

