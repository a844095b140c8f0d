import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..errors import CutoffError, ParameterError, PreconditionError
from ..geometry.angular_grid import weighted_l2_norm
from ..spectral.index_set import IndexChain, membership
from ..spectral.spectrum import Spectrum
from ..cylinder.shifted import resonant_indices, shifted_angular_solve
from .algebra import linear_symbol, nonlinear_residual_expansion, nonlinear_terms
from .terms import ExpTerm, Expansion, group_by_rate

logger = logging.getLogger(__name__)

MAX_TERMS = 4000
CANCELLATION_TOLERANCE = 1e-6


def free_data_modes(spectrum: Spectrum, chain: IndexChain, c: Sequence[float]) -> Expansion:
    """
    eta = sum_{i <= k1} c_i e^{-gamma_i t} phi_i.

    Raises:
        ParameterError: If len(c) != k1 or the spectrum holds fewer than k1 modes.
    """
    c = [float(x) for x in c]
    if len(c) != chain.k1:
        raise ParameterError(f"expected {chain.k1} free coefficients, got {len(c)}")
    if chain.k1 > spectrum.count:
        raise ParameterError(f"k1={chain.k1} exceeds the {spectrum.count} computed modes")
    terms = [
        ExpTerm(float(spectrum.gammas[i]), 0, ci * spectrum.vectors[:, i])
        for i, ci in enumerate(c)
        if ci != 0.0
    ]
    expansion = Expansion((), spectrum.profile, tolerance=chain.epsilon_res)
    return expansion.with_terms(terms)


def extend_free_data(
    expansion: Expansion,
    spectrum: Spectrum,
    chain: IndexChain,
    coefficients: Mapping[int, float],
) -> Expansion:
    """
    Add homogeneous modes c_i e^{-gamma_i t} phi_i for nonresonant i > k1.

    Args:
        coefficients: 1-based eigen index to coefficient.

    Raises:
        PreconditionError: For an index <= k1, beyond the spectrum, or resonant.
    """
    extra: List[ExpTerm] = []
    for index, value in sorted(coefficients.items()):
        index = int(index)
        if index <= chain.k1 or index > spectrum.count:
            raise PreconditionError(
                f"extra free data index {index} must lie in {chain.k1 + 1}..{spectrum.count}"
            )
        gamma = float(spectrum.gammas[index - 1])
        if chain.is_resonant(gamma):
            raise PreconditionError(f"mode {index} (gamma={gamma:.10g}) is resonant")
        if value:
            extra.append(ExpTerm(gamma, 0, float(value) * spectrum.eigenfield(index)))
    return expansion.with_terms(extra)


def solve_rate_family(
    spectrum: Spectrum,
    gamma: float,
    family: Mapping[int, np.ndarray],
    epsilon_res: float = 1e-8,
) -> Dict[int, np.ndarray]:
    """
    Solve Lcal(e^{-gamma t} sum_m t^m u_m) = -e^{-gamma t} sum_m t^m h_m.

    Matching powers of t gives a triangular system, solved for m descending:
        A u_m = -h_m + 2 gamma (m+1) u_{m+1} - (m+1)(m+2) u_{m+2},
    with A = L + gamma^2 - beta^2. At a resonance A annihilates phi_k; each
    u_m splits into a_m phi_k plus an orthogonal part, the eigen components
    obey
        a_{m+1} = (<h_m, phi_k> + (m+1)(m+2) a_{m+2}) / (2 gamma (m+1)),
    which raises the top t-power by one, and a_0 = 0 fixes the homogeneous
    freedom.

    Returns:
        {m: u_m}.
    """
    op = spectrum.operator
    top = max(family) if family else -1
    zero = np.zeros(op.size)
    h = {m: np.asarray(family.get(m, zero), dtype=float) for m in range(top + 1)}
    resonant = resonant_indices(spectrum, gamma, epsilon_res)
    basis = np.column_stack([spectrum.eigenfield(i) for i in resonant]) if resonant else None

    def project(x: np.ndarray) -> np.ndarray:
        return (op.mass * x) @ basis

    u: Dict[int, np.ndarray] = {}
    a: Dict[int, np.ndarray] = {}
    perp: Dict[int, np.ndarray] = {}
    if basis is not None:
        width = basis.shape[1]
        a[top + 2] = np.zeros(width)
        u[top + 2] = zero
        perp[top + 1] = zero
    else:
        u[top + 1] = zero
        u[top + 2] = zero

    for m in range(top, -1, -1):
        if basis is not None:
            eta = project(h[m])
            a[m + 1] = (eta + (m + 1) * (m + 2) * a[m + 2]) / (2.0 * gamma * (m + 1))
            u[m + 1] = basis @ a[m + 1] + perp[m + 1]
        rhs = -h[m] + 2.0 * gamma * (m + 1) * u[m + 1] - (m + 1) * (m + 2) * u[m + 2]
        if basis is not None:
            rhs = rhs - basis @ project(rhs)
            perp[m] = shifted_angular_solve(spectrum, -rhs, gamma, epsilon_res).values
        else:
            u[m] = shifted_angular_solve(spectrum, -rhs, gamma, epsilon_res).values
    if basis is not None:
        u[0] = perp[0]
    return {m: w for m, w in u.items() if np.any(w)}


def _family_norm(spectrum: Spectrum, family: Mapping[int, np.ndarray]) -> float:
    grid = spectrum.profile.grid
    return max((weighted_l2_norm(grid, w) for w in family.values()), default=0.0)


def _snap_rate(chain: IndexChain, rate: float) -> float:
    entry = chain.entry_near(rate)
    return entry.value if entry is not None else rate


def residual_families(
    expansion: Expansion, spectrum: Spectrum, mu: float, taylor_order: int
) -> Dict[float, Dict[int, np.ndarray]]:
    """Symbolic Lcal omega plus nonlinear families, grouped by rate (< mu)."""
    tol = expansion.tolerance
    kept, _ = nonlinear_terms(expansion, mu, taylor_order)
    linear = [t for t in linear_symbol(spectrum, expansion.terms, tol) if t.gamma < mu - tol]
    return group_by_rate(linear + kept, tol)


def correct_to_order(
    expansion: Expansion,
    chain: IndexChain,
    spectrum: Spectrum,
    mu: float,
    taylor_order: Optional[int] = None,
    t0: float = 1.0,
) -> Expansion:
    """
    Add correction terms until every residual family has rate >= mu.

    Rates are handled once each in increasing order. At each rate the
    current residual family is cancelled with solve_rate_family; corrections
    only create new nonlinear families at strictly larger rates.

    Args:
        expansion: Free-data expansion.
        chain: Index chain (validates mu, decides resonance).
        spectrum: Spectrum used for the angular solves.
        mu: Target order, outside the index set.
        taylor_order: Highest power of omega kept; ceil(mu / gamma_1) + 1
            when omitted.
        t0: Start of the cylinder, used for the remainder certificate.

    Returns:
        The corrected expansion with order_achieved >= mu and its certificate.

    Raises:
        NeedsLargerCutoffError: If mu exceeds the chain cutoff.
        PreconditionError: If mu lies in the index set.
        CutoffError: If the number of terms exceeds the budget.
    """
    result = membership(chain, mu)
    if result.in_set:
        raise PreconditionError(f"mu={mu} lies in the index set; choose another mu")
    gamma1 = float(spectrum.gammas[0])
    K = taylor_order or int(math.ceil(mu / gamma1)) + 1
    tol = expansion.tolerance
    for near in chain.near_resonances:
        if near.combo < mu:
            logger.warning(
                "correcting near a resonance (%.10g vs %.10g); angular solves are "
                "ill-conditioned",
                near.single,
                near.combo,
            )

    processed: List[float] = []
    current = expansion
    while True:
        kept, _ = nonlinear_terms(current, mu, K)
        pending = sorted(
            {t.gamma for t in kept if all(abs(t.gamma - r) > tol for r in processed)}
        )
        if not pending:
            break
        rate = _snap_rate(chain, pending[0])
        families = residual_families(current, spectrum, mu, K)
        family = next(
            (f for r, f in families.items() if abs(r - rate) <= tol), {}
        )
        before = _family_norm(spectrum, family)
        corrections = solve_rate_family(spectrum, rate, family, chain.epsilon_res)
        current = current.with_terms(ExpTerm(rate, m, w) for m, w in corrections.items())
        if len(current.terms) > MAX_TERMS:
            raise CutoffError(
                f"expansion exceeds {MAX_TERMS} terms below mu={mu}; choose a smaller mu"
            )
        after_families = residual_families(current, spectrum, rate + 2.0 * tol, K)
        after = _family_norm(
            spectrum,
            next((f for r, f in after_families.items() if abs(r - rate) <= tol), {}),
        )
        if before > 0 and after > CANCELLATION_TOLERANCE * before:
            logger.warning(
                "family at rate %.10g cancelled only to %.3e of %.3e", rate, after, before
            )
        powers = sorted(corrections)
        logger.info(
            "corrected rate %.10g (t-powers %s%s)",
            rate,
            powers,
            ", resonant" if chain.is_resonant(rate) else "",
        )
        processed.append(rate)

    _, certificate = nonlinear_residual_expansion(current, mu, K, t0)
    achieved = min(certificate.min_dropped_rate, (K + 1) * gamma1)
    return current.with_terms(
        (), order_achieved=float(achieved), certificate=certificate.to_dict()
    )
