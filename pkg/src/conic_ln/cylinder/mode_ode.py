"""
Scalar mode equations v'' - gamma^2 v = f on [t0, infinity).

The decaying solution is

    v(t) = (A(t) - B(t)) / (2 gamma),
    A(t) = int_t^inf e^{ gamma (s - t)} f(s) ds,
    B(t) = int_t^inf e^{-gamma (s - t)} f(s) ds,

which needs f to decay faster than e^{-gamma t}. Beyond the last sample, f is
continued by the exponential fitted to its tail and integrated in closed form.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from ..errors import ParameterError, RateError, ShapeError

logger = logging.getLogger(__name__)

TAIL_FRACTION = 0.1
TAIL_NOISE_FLOOR = 1e-13
MAX_DEMODULATION_EXPONENT = 500.0
_GAUSS_POINTS = 8
SCHEMES = ("integral", "discrete")


def _check(gamma: float, f: np.ndarray, t_nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    f = np.asarray(f, dtype=float)
    t = np.asarray(t_nodes, dtype=float)
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    if f.shape != t.shape or t.ndim != 1 or t.size < 4:
        raise ShapeError("forcing and t-nodes must be 1-D of equal length >= 4")
    steps = np.diff(t)
    h = float(steps[0])
    if h <= 0 or not np.allclose(steps, h, rtol=1e-9, atol=0.0):
        raise ParameterError("t-nodes must be uniform and increasing")
    return f, t, h


def tail_rate(f: np.ndarray, t_nodes: np.ndarray) -> Optional[float]:
    """
    Decay rate fitted to the last tenth of the samples, or None when the tail
    is below the noise floor (treated as identically zero).
    """
    f = np.abs(np.asarray(f, dtype=float))
    scale = float(f.max()) if f.size else 0.0
    count = max(4, int(np.ceil(TAIL_FRACTION * f.size)))
    tail_t, tail_f = t_nodes[-count:], f[-count:]
    keep = tail_f > TAIL_NOISE_FLOOR * scale
    if scale == 0.0 or np.count_nonzero(keep) < 2:
        return None
    slope, _ = np.polyfit(tail_t[keep], np.log(tail_f[keep]), 1)
    return float(-slope)


def _interval_integrals(
    f: np.ndarray, t: np.ndarray, gamma: float, rate: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    J_k = int e^{gamma (s - t_k)} f ds and K_k = int e^{-gamma (s - t_k)} f ds
    over [t_k, t_{k+1}].

    f is demodulated by e^{rate (s - T)} before spline interpolation so that
    exponential forcing is represented without interpolation error.
    """
    T = t[-1]
    demod = min(max(rate, 0.0), MAX_DEMODULATION_EXPONENT / (T - t[0]))
    spline = CubicSpline(t, f * np.exp(demod * (t - T)))
    x, w = leggauss(_GAUSS_POINTS)
    h = t[1] - t[0]
    local = 0.5 * h * (x + 1.0)
    s = t[:-1, None] + local[None, :]
    base = spline(s) * np.exp(-demod * (s - T))
    J = 0.5 * h * (base * np.exp(gamma * local)[None, :]) @ w
    K = 0.5 * h * (base * np.exp(-gamma * local)[None, :]) @ w
    return J, K


def _integral_solution(gamma: float, f: np.ndarray, t: np.ndarray, h: float) -> np.ndarray:
    if not np.any(f):
        return np.zeros_like(f)
    rate = tail_rate(f, t)
    if rate is None:
        A_end = B_end = 0.0
        rate = 0.0
    else:
        if rate <= gamma:
            raise RateError(
                f"forcing decays at rate {rate:.4g}, mode exponent is {gamma:.4g}; "
                "the kernel needs faster decay"
            )
        A_end = f[-1] / (rate - gamma)
        B_end = f[-1] / (rate + gamma)
    J, K = _interval_integrals(f, t, gamma, rate)
    size = f.size
    A = np.empty(size)
    B = np.empty(size)
    A[-1], B[-1] = A_end, B_end
    grow, shrink = np.exp(gamma * h), np.exp(-gamma * h)
    for k in range(size - 2, -1, -1):
        A[k] = J[k] + grow * A[k + 1]
        B[k] = K[k] + shrink * B[k + 1]
    return (A - B) / (2.0 * gamma)


def solve_mode_ode(
    gamma: float, f: np.ndarray, t_nodes: np.ndarray, scheme: str = "integral"
) -> np.ndarray:
    """
    Decaying solution of v'' - gamma^2 v = f sampled on t_nodes.

    Args:
        gamma: Mode exponent, positive.
        f: Forcing samples on the uniform t-grid.
        t_nodes: Uniform increasing t-grid, at least 4 nodes.
        scheme: "integral" evaluates the kernel formula; "discrete" seeds the
            last two samples from it and recurs backward so that the
            three-point discrete equation holds exactly at interior nodes.

    Returns:
        Samples of v.

    Raises:
        RateError: If the fitted tail rate of f does not exceed gamma.
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown mode ODE scheme {scheme!r}")
    f, t, h = _check(gamma, f, t_nodes)
    v = _integral_solution(gamma, f, t, h)
    if scheme == "discrete":
        diag = 2.0 + (gamma * h) ** 2
        for k in range(t.size - 2, 0, -1):
            v[k - 1] = h * h * f[k] - v[k + 1] + diag * v[k]
    return v


def solve_mode_ode_dirichlet(
    gamma: float,
    f: np.ndarray,
    t_nodes: np.ndarray,
    left: float = 0.0,
    right: float = 0.0,
) -> np.ndarray:
    """Finite-interval variant: discrete v'' - gamma^2 v = f with fixed ends."""
    f, t, h = _check(gamma, f, t_nodes)
    size = t.size - 2
    ab = np.zeros((3, size))
    ab[0, 1:] = 1.0
    ab[1, :] = -(2.0 + (gamma * h) ** 2)
    ab[2, :-1] = 1.0
    rhs = h * h * f[1:-1].copy()
    rhs[0] -= left
    rhs[-1] -= right
    interior = solve_banded((1, 1), ab, rhs)
    return np.concatenate(([left], interior, [right]))


def mode_residual(gamma: float, v: np.ndarray, f: np.ndarray, t_nodes: np.ndarray) -> np.ndarray:
    """Discrete residual at interior nodes."""
    f, t, h = _check(gamma, f, t_nodes)
    v = np.asarray(v, dtype=float)
    return (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2 - gamma**2 * v[1:-1] - f[1:-1]
