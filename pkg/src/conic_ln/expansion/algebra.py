"""
Symbolic action of the cylinder operator and of the nonlinearity on
poly-exponential sums.

With v = xi + omega and xi^(p-1) = rho^-2,

    N(xi + omega) = Lcal omega - c * sum_{k>=2} a_k rho^(k beta - 2 - beta) omega^k,

where a_k are the binomial coefficients of (1 + s)^p and c = n(n-2)/4.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import binom

from ..constants import structural_constants
from ..errors import DomainError, ParameterError
from ..geometry.profile import BoundaryProfile
from ..spectral.spectrum import Spectrum
from .terms import ExpTerm, Expansion, group_by_rate, merge_terms, multiply_terms

logger = logging.getLogger(__name__)

# Below this |s| the remainder function is summed from its Taylor series.
_SERIES_SWITCH = 1e-3
_SERIES_TERMS = 16


def taylor_coeffs(n: int, K: int) -> np.ndarray:
    """
    Coefficients a_2..a_K of (1 + s)^p, p = (n+2)/(n-2).

    Raises:
        ParameterError: If n < 3 or K < 2.
    """
    if K < 2:
        raise ParameterError(f"Taylor order must be >= 2, got {K}")
    p = structural_constants(n).p
    return np.array([binom(p, k) for k in range(2, K + 1)], dtype=float)


def remainder_h(s: np.ndarray, n: int) -> np.ndarray:
    """
    h(s) = c s^-2 [(1+s)^p - 1 - p s], evaluated without cancellation.

    Raises:
        DomainError: If some s <= -1.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s <= -1.0):
        bad = int(np.flatnonzero(np.ravel(s) <= -1.0)[0])
        raise DomainError("1 + s must stay positive in the nonlinearity", node=bad)
    const = structural_constants(n)
    out = np.empty_like(s)
    small = np.abs(s) < _SERIES_SWITCH
    if np.any(small):
        coeffs = taylor_coeffs(n, _SERIES_TERMS + 1)
        x = s[small]
        out[small] = np.polynomial.polynomial.polyval(x, coeffs)
    large = ~small
    if np.any(large):
        x = s[large]
        out[large] = (np.expm1(const.p * np.log1p(x)) - const.p * x) / (x * x)
    return const.c_nl * out


def quadratic_remainder(omega: np.ndarray, profile: BoundaryProfile) -> np.ndarray:
    """
    F(omega) = rho^((n-6)/2) omega^2 h(rho^beta omega), equal to
    c[(xi+omega)^p - xi^p] - kappa omega / rho^2.

    omega may be a single angular row or a (t, phi) array.
    """
    n = profile.grid.dimension_n
    rho = profile.rho.values
    omega = np.asarray(omega, dtype=float)
    relative = omega * rho**profile.beta
    return rho ** ((n - 6) / 2.0) * omega * omega * remainder_h(relative, n)


def linear_symbol(spectrum: Spectrum, terms: Sequence[ExpTerm], tol: float) -> List[ExpTerm]:
    """
    Lcal applied to a sum of terms, as terms.

    For each rate gamma with coefficients u_m of t^m e^{-gamma t}, the t^m
    coefficient of the image is
    (L + gamma^2 - beta^2) u_m - 2 gamma (m+1) u_{m+1} + (m+1)(m+2) u_{m+2}.
    """
    op = spectrum.operator
    beta2 = op.constants.beta**2
    out: List[ExpTerm] = []
    for gamma, family in group_by_rate(terms, tol).items():
        top = max(family)
        for m in range(top + 1):
            u = family.get(m)
            image = np.zeros(op.size)
            if u is not None:
                image += op.apply_L(u) + (gamma * gamma - beta2) * u
            if m + 1 in family:
                image -= 2.0 * gamma * (m + 1) * family[m + 1]
            if m + 2 in family:
                image += (m + 1) * (m + 2) * family[m + 2]
            out.append(ExpTerm(gamma, m, image))
    return merge_terms(out, tol)


@dataclass(frozen=True)
class RemainderCertificate:
    """
    Dropped residual families (rate >= mu) with bounds on their
    (mu, s - 2)-weighted sup norm for t >= t0, plus the size of the first
    neglected Taylor order.
    """

    mu: float
    t0: float
    taylor_order: int
    dropped: Tuple[Dict, ...] = field(default_factory=tuple)
    taylor_remainder: float = 0.0

    @property
    def bound(self) -> float:
        return float(sum(d["bound"] for d in self.dropped) + self.taylor_remainder)

    @property
    def min_dropped_rate(self) -> float:
        return min((d["gamma"] for d in self.dropped), default=math.inf)

    def to_dict(self) -> Dict:
        return {
            "mu": self.mu,
            "t0": self.t0,
            "taylor_order": self.taylor_order,
            "dropped": list(self.dropped),
            "taylor_remainder": self.taylor_remainder,
            "bound": self.bound,
        }


def _time_sup(gamma: float, j: int, mu: float, t0: float) -> float:
    """sup_{t >= t0} t^j e^{-(gamma - mu) t}."""
    delta = gamma - mu
    if delta <= 0:
        return 1.0 if (j == 0 and delta == 0) else math.inf
    if j == 0:
        return math.exp(-delta * t0)
    peak = j / delta
    t = max(peak, t0)
    return t**j * math.exp(-delta * t)


def _angular_sup(profile: BoundaryProfile, w: np.ndarray) -> float:
    s = profile.constants.s
    rho = profile.rho.values[:-1]
    return float(np.max(np.abs(w[:-1]) * rho ** (2.0 - s)))


def nonlinear_terms(
    expansion: Expansion, mu: float, taylor_order: int
) -> Tuple[List[ExpTerm], List[ExpTerm]]:
    """
    Residual families of the nonlinearity, split at rate mu.

    Returns:
        (kept, dropped): terms with rate < mu and terms with rate >= mu whose
        parent powers were kept.
    """
    profile = expansion.profile
    const = profile.constants
    tol = expansion.tolerance
    rho = profile.rho.values
    a = taylor_coeffs(const.n, taylor_order)
    omega = list(expansion.terms)
    kept: List[ExpTerm] = []
    dropped: List[ExpTerm] = []
    power = omega
    for k in range(2, taylor_order + 1):
        power = multiply_terms(power, omega, tol)
        below = [t for t in power if t.gamma < mu - tol]
        above = [t for t in power if t.gamma >= mu - tol]
        factor = -const.c_nl * a[k - 2] * rho ** (k * const.beta - 2.0 - const.beta)
        if a[k - 2] != 0.0:
            kept.extend(ExpTerm(t.gamma, t.j, factor * t.w) for t in below)
            dropped.extend(ExpTerm(t.gamma, t.j, factor * t.w) for t in above)
        power = below
        if not power:
            break
    return merge_terms(kept, tol), merge_terms(dropped, tol)


def nonlinear_residual_expansion(
    expansion: Expansion, mu: float, taylor_order: int = 0, t0: float = 1.0
) -> Tuple[Expansion, RemainderCertificate]:
    """
    Expand N(xi + omega) - Lcal omega into rate families.

    Args:
        expansion: Current omega.
        mu: Split rate; families with rate < mu are returned as terms.
        taylor_order: Highest power of omega kept; 0 picks ceil(mu/g) + 1 with
            g the smallest rate present.
        t0: Start of the cylinder for the certificate bounds.

    Returns:
        (residual terms as an Expansion, certificate for the rest).
    """
    profile = expansion.profile
    if expansion.is_empty:
        return Expansion((), profile, tolerance=expansion.tolerance), RemainderCertificate(mu, t0, 2)
    lowest = min(t.gamma for t in expansion.terms)
    K = taylor_order or int(math.ceil(mu / lowest)) + 1
    K = max(K, 2)
    kept, dropped = nonlinear_terms(expansion, mu, K)
    certificate = RemainderCertificate(
        mu=mu,
        t0=t0,
        taylor_order=K,
        dropped=tuple(
            {
                "gamma": t.gamma,
                "j": t.j,
                "bound": _angular_sup(profile, t.w) * _time_sup(t.gamma, t.j, mu, t0),
            }
            for t in dropped
        ),
        taylor_remainder=_taylor_remainder(expansion, mu, K, t0),
    )
    residual = Expansion(tuple(kept), profile, tolerance=expansion.tolerance)
    return residual, certificate


def _taylor_remainder(expansion: Expansion, mu: float, K: int, t0: float) -> float:
    profile = expansion.profile
    const = profile.constants
    a_next = abs(float(taylor_coeffs(const.n, K + 1)[-1]))
    if a_next == 0.0:
        return 0.0
    envelope = np.zeros(profile.grid.node_count)
    for term in expansion.terms:
        envelope += abs(float(term.time_factor(np.array(t0)))) * np.abs(term.w)
    rho = profile.rho.values
    family = const.c_nl * a_next * rho ** ((K + 1) * const.beta - 2.0 - const.beta) * envelope ** (K + 1)
    return _angular_sup(profile, family) * math.exp(mu * t0)
