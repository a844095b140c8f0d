"""
The index set: all finite combinations sum m_i gamma_i (m_i >= 0 integers).

Values are enumerated by bounded depth-first search, then merged when they
agree within epsilon_res * max(1, |value|). An entry is a "single" when it
is one of the input exponents, a "combo" when it needs at least two
exponents counted with multiplicity, and "both" (resonant) when it is each
at once.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import NeedsLargerCutoffError, ParameterError

logger = logging.getLogger(__name__)

NEAR_RESONANCE_TOLERANCE = 1e-4
MAX_MULTI_INDICES = 500_000

MultiIndex = Tuple[int, ...]


def resonance_tolerance(epsilon_res: float, value: float) -> float:
    """Coincidence tolerance at value: epsilon_res relative, absolute below 1."""
    return epsilon_res * max(1.0, abs(value))


@dataclass(frozen=True)
class ChainEntry:
    value: float
    kind: str
    certificates: Tuple[MultiIndex, ...]
    resonant: bool
    slots: Tuple[int, ...] = ()

    @property
    def is_single(self) -> bool:
        return self.kind in ("single", "both")

    @property
    def is_combo(self) -> bool:
        return self.kind in ("combo", "both")

    def to_dict(self) -> Dict:
        return {
            "value": self.value,
            "kind": self.kind,
            "resonant": self.resonant,
            "slots": list(self.slots),
            "certificates": [list(m) for m in self.certificates],
        }


@dataclass(frozen=True)
class NearResonance:
    single: float
    combo: float
    gap: float


@dataclass(frozen=True)
class MembershipResult:
    in_set: bool
    nearest: float
    distance: float


@dataclass(frozen=True)
class IndexChain:
    gammas_in: Tuple[float, ...]
    cutoff: float
    epsilon_res: float
    entries: Tuple[ChainEntry, ...]
    k1: int
    near_resonances: Tuple[NearResonance, ...] = field(default=())

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries])

    @property
    def first_combo(self) -> float:
        return 2.0 * self.gammas_in[0]

    def entry_near(self, value: float) -> Optional[ChainEntry]:
        for entry in self.entries:
            if abs(entry.value - value) <= resonance_tolerance(self.epsilon_res, value):
                return entry
        return None

    def is_resonant(self, value: float) -> bool:
        entry = self.entry_near(value)
        return bool(entry and entry.resonant)

    def resonant_values_upto(self, value: float) -> List[float]:
        return [
            e.value
            for e in self.entries
            if e.resonant and e.value <= value + resonance_tolerance(self.epsilon_res, value)
        ]

    def next_above(self, value: float) -> Optional[float]:
        for entry in self.entries:
            if entry.value > value + resonance_tolerance(self.epsilon_res, value):
                return entry.value
        return None

    def to_json(self) -> str:
        doc = {
            "gammas": list(self.gammas_in),
            "cutoff": self.cutoff,
            "epsilon_res": self.epsilon_res,
            "k1": self.k1,
            "entries": [e.to_dict() for e in self.entries],
            "near_resonances": [
                {"single": r.single, "combo": r.combo, "gap": r.gap}
                for r in self.near_resonances
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=2)


def _enumerate(gammas: Sequence[float], limit: float) -> List[Tuple[float, MultiIndex]]:
    size = len(gammas)
    found: List[Tuple[float, MultiIndex]] = []
    counts = [0] * size

    def visit(slot: int, value: float) -> None:
        if slot == size:
            if any(counts):
                found.append((value, tuple(counts)))
                if len(found) > MAX_MULTI_INDICES:
                    raise ParameterError(
                        f"more than {MAX_MULTI_INDICES} combinations below the "
                        "cutoff; lower the cutoff"
                    )
            return
        m = 0
        while value + m * gammas[slot] <= limit:
            counts[slot] = m
            visit(slot + 1, value + m * gammas[slot])
            m += 1
        counts[slot] = 0

    visit(0, 0.0)
    return found


def _merge(found: List[Tuple[float, MultiIndex]], eps: float) -> List[List[Tuple[float, MultiIndex]]]:
    found = sorted(found, key=lambda item: (item[0], item[1]))
    groups: List[List[Tuple[float, MultiIndex]]] = []
    for item in found:
        if groups and item[0] - groups[-1][-1][0] <= resonance_tolerance(eps, item[0]):
            groups[-1].append(item)
        else:
            groups.append([item])
    return groups


def _entry(group: List[Tuple[float, MultiIndex]]) -> ChainEntry:
    singles = [(v, m) for v, m in group if sum(m) == 1]
    combos = [(v, m) for v, m in group if sum(m) >= 2]
    if singles and combos:
        kind = "both"
    elif singles:
        kind = "single"
    else:
        kind = "combo"
    value = singles[0][0] if singles else min(v for v, _ in group)
    slots = tuple(sorted(m.index(1) + 1 for _, m in singles))
    certificates = tuple(sorted(m for _, m in group))
    return ChainEntry(
        value=float(value),
        kind=kind,
        certificates=certificates,
        resonant=kind == "both",
        slots=slots,
    )


def _near_resonances(entries: Sequence[ChainEntry], eps: float) -> List[NearResonance]:
    near: List[NearResonance] = []
    for i, a in enumerate(entries):
        for b in entries[i + 1 :]:
            gap = b.value - a.value
            if gap > NEAR_RESONANCE_TOLERANCE:
                break
            if gap <= resonance_tolerance(eps, b.value):
                continue
            if a.is_single and b.is_combo:
                near.append(NearResonance(a.value, b.value, gap))
            elif b.is_single and a.is_combo:
                near.append(NearResonance(b.value, a.value, gap))
    return near


def build_index_chain(
    gammas: Sequence[float], cutoff: float, epsilon_res: float = 1e-8
) -> IndexChain:
    """
    Enumerate the index set up to cutoff and merge it into an ordered chain.

    Args:
        gammas: Nondecreasing positive exponents; equal neighbours are kept as
            separate slots sharing one value.
        cutoff: Largest value enumerated, at least 2 * gammas[0].
        epsilon_res: Tolerance deciding coincidence of values, relative to
            max(1, |value|).

    Returns:
        The chain with kinds, certificates, resonance flags and k1.

    Raises:
        ParameterError: On an empty, nonpositive or decreasing exponent list,
            a negative tolerance, or a cutoff below 2 * gammas[0].
    """
    gammas = tuple(float(g) for g in gammas)
    if not gammas:
        raise ParameterError("exponent list is empty")
    if any(g <= 0 for g in gammas):
        raise ParameterError("exponents must be positive")
    if any(b < a for a, b in zip(gammas, gammas[1:])):
        raise ParameterError(f"exponents must be increasing, got {gammas}")
    if epsilon_res < 0:
        raise ParameterError("epsilon_res must be >= 0")
    if cutoff < 2.0 * gammas[0]:
        raise ParameterError(
            f"cutoff {cutoff} is below the first combination 2*gamma_1 = {2 * gammas[0]}"
        )

    limit = cutoff + resonance_tolerance(epsilon_res, cutoff)
    found = _enumerate(gammas, limit)
    entries = [_entry(group) for group in _merge(found, epsilon_res)]
    entries = [e for e in entries if e.value <= limit]
    first_combo = 2.0 * gammas[0]
    k1 = sum(1 for g in gammas if g < first_combo - resonance_tolerance(epsilon_res, first_combo))
    near = _near_resonances(entries, epsilon_res)
    for r in near:
        logger.warning(
            "near resonance: single %.10g vs combination %.10g (gap %.2e)",
            r.single,
            r.combo,
            r.gap,
        )
    return IndexChain(
        gammas_in=gammas,
        cutoff=float(cutoff),
        epsilon_res=float(epsilon_res),
        entries=tuple(entries),
        k1=k1,
        near_resonances=tuple(near),
    )


def membership(chain: IndexChain, mu: float) -> MembershipResult:
    """
    Decide whether mu lies in the index set within epsilon_res.

    Ties between two equally near values resolve to the larger one.

    Raises:
        NeedsLargerCutoffError: If mu exceeds the chain cutoff.
    """
    if mu > chain.cutoff + resonance_tolerance(chain.epsilon_res, chain.cutoff):
        raise NeedsLargerCutoffError(
            f"mu={mu} exceeds the chain cutoff {chain.cutoff}; rebuild with a larger cutoff"
        )
    values = chain.values
    distances = np.abs(values - mu)
    best = float(distances.min())
    candidates = values[distances <= best + 1e-12 * max(1.0, abs(mu))]
    nearest = float(candidates.max())
    return MembershipResult(
        in_set=best <= resonance_tolerance(chain.epsilon_res, mu), nearest=nearest, distance=best
    )
