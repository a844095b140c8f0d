"""
Poly-exponential terms t^j e^{-gamma t} w(phi) and finite sums of them.

The time factor is handled symbolically: sums, products and t-derivatives act
on (gamma, j) exactly, while the angular coefficients are grid arrays.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..geometry.angular_grid import AngularField, AngularGrid, gradient
from ..geometry.profile import BoundaryProfile

logger = logging.getLogger(__name__)

DEFAULT_MERGE_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class ExpTerm:
    gamma: float
    j: int
    w: np.ndarray

    def __post_init__(self) -> None:
        if self.gamma < 0 or self.j < 0:
            raise ValueError(f"invalid term key (gamma={self.gamma}, j={self.j})")
        w = np.array(self.w, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def as_field(self, grid: AngularGrid) -> AngularField:
        return AngularField(grid, self.w)

    def time_factor(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return t**self.j * np.exp(-self.gamma * t)

    def time_factor_tt(self, t: np.ndarray) -> np.ndarray:
        """d^2/dt^2 of t^j e^{-gamma t}."""
        t = np.asarray(t, dtype=float)
        g, j = self.gamma, self.j
        out = g * g * t**j
        if j >= 1:
            out = out - 2.0 * g * j * t ** (j - 1)
        if j >= 2:
            out = out + j * (j - 1) * t ** (j - 2)
        return out * np.exp(-g * t)


def merge_terms(terms: Iterable[ExpTerm], tol: float = DEFAULT_MERGE_TOLERANCE) -> List[ExpTerm]:
    """Combine terms whose rates agree within tol and whose t-powers match."""
    groups: List[Tuple[float, int, np.ndarray]] = []
    for term in sorted(terms, key=lambda x: (x.gamma, x.j)):
        for index, (gamma, j, w) in enumerate(groups):
            if j == term.j and abs(gamma - term.gamma) <= tol:
                groups[index] = (gamma, j, w + term.w)
                break
        else:
            groups.append((term.gamma, term.j, term.w.copy()))
    return [ExpTerm(g, j, w) for g, j, w in sorted(groups, key=lambda x: (x[0], x[1]))]


def multiply_terms(
    left: Sequence[ExpTerm], right: Sequence[ExpTerm], tol: float = DEFAULT_MERGE_TOLERANCE
) -> List[ExpTerm]:
    """Exact product: rates and t-powers add, angular factors multiply pointwise."""
    products = [
        ExpTerm(a.gamma + b.gamma, a.j + b.j, a.w * b.w) for a in left for b in right
    ]
    return merge_terms(products, tol)


def group_by_rate(terms: Sequence[ExpTerm], tol: float = DEFAULT_MERGE_TOLERANCE) -> Dict[float, Dict[int, np.ndarray]]:
    """{rate: {j: w}} with rates merged within tol."""
    grouped: Dict[float, Dict[int, np.ndarray]] = {}
    for term in terms:
        key = next((g for g in grouped if abs(g - term.gamma) <= tol), term.gamma)
        family = grouped.setdefault(key, {})
        family[term.j] = family.get(term.j, 0.0) + term.w
    return dict(sorted(grouped.items()))


@dataclass(frozen=True)
class SampledExpansion:
    """Expansion part omega and its exact second t-derivative on a cylinder grid."""

    values: np.ndarray
    tt: np.ndarray


@dataclass(frozen=True, eq=False)
class Expansion:
    """
    omega = sum of ExpTerms; the approximate solution is xi + omega.

    Attributes:
        terms: Merged terms, sorted by (gamma, j).
        profile: Profile the angular factors live on.
        order_achieved: Certified residual rate (0 before correction).
        tolerance: Rate merging tolerance.
        certificate: Bookkeeping of dropped terms (filled by the builder).
    """

    terms: Tuple[ExpTerm, ...]
    profile: BoundaryProfile
    order_achieved: float = 0.0
    tolerance: float = DEFAULT_MERGE_TOLERANCE
    certificate: Dict = field(default_factory=dict, compare=False)

    @property
    def grid(self) -> AngularGrid:
        return self.profile.grid

    @property
    def is_empty(self) -> bool:
        return not self.terms

    def with_terms(self, extra: Iterable[ExpTerm], **changes) -> "Expansion":
        merged = merge_terms(list(self.terms) + list(extra), self.tolerance)
        merged = [t for t in merged if np.any(t.w)]
        return Expansion(
            terms=tuple(merged),
            profile=self.profile,
            order_achieved=changes.get("order_achieved", self.order_achieved),
            tolerance=self.tolerance,
            certificate=changes.get("certificate", self.certificate),
        )

    def rates(self) -> List[float]:
        return sorted({t.gamma for t in self.terms})

    def omega(self, t: float) -> np.ndarray:
        out = np.zeros(self.grid.node_count)
        for term in self.terms:
            out += float(term.time_factor(np.array(t))) * term.w
        return out

    def sample(self, t_nodes: np.ndarray) -> SampledExpansion:
        t_nodes = np.asarray(t_nodes, dtype=float)
        values = np.zeros((t_nodes.size, self.grid.node_count))
        tt = np.zeros_like(values)
        for term in self.terms:
            values += np.outer(term.time_factor(t_nodes), term.w)
            tt += np.outer(term.time_factor_tt(t_nodes), term.w)
        return SampledExpansion(values=values, tt=tt)

    def omega_gradient(self, t: float) -> np.ndarray:
        return gradient(self.grid, self.omega(t), boundary="dirichlet").values

    def to_json(self) -> str:
        mass = self.grid.weights
        doc = {
            "order_achieved": self.order_achieved,
            "terms": [
                {
                    "gamma": term.gamma,
                    "j": term.j,
                    "norm": float(np.sqrt(np.sum(mass * term.w * term.w))),
                }
                for term in self.terms
            ],
            "certificate": self.certificate,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def to_rows(self) -> Tuple[List[str], List[Tuple[float, ...]]]:
        header = ["phi"] + [f"g{t.gamma:.10g}_j{t.j}" for t in self.terms]
        rows = [
            (float(p),) + tuple(float(t.w[k]) for t in self.terms)
            for k, p in enumerate(self.grid.nodes)
        ]
        return header, rows


def evaluate_expansion(
    expansion: Expansion, t: float, include_xi: bool = True
) -> AngularField:
    """
    Pointwise value of the expansion at time t, optionally plus xi.
    """
    values = expansion.omega(t)
    if include_xi:
        values = values + expansion.profile.xi.values
    return AngularField(expansion.grid, values)


def empty_expansion(profile: BoundaryProfile, tolerance: Optional[float] = None) -> Expansion:
    return Expansion(
        terms=(), profile=profile, tolerance=tolerance or DEFAULT_MERGE_TOLERANCE
    )
