import json
import logging
from typing import Any, Dict, List, Sequence

import numpy as np

from ...errors import NeedsLargerCutoffError, ParameterError
from ...expansion.assumptions import assumption_check
from ...expansion.builder import correct_to_order, extend_free_data, free_data_modes
from ...expansion.terms import Expansion, ExpTerm
from ...spectral.index_set import IndexChain
from ..base.base_stage import BaseStage, RunContext

logger = logging.getLogger(__name__)

# length of the t-window the approximate-solution hypotheses are measured on
ASSUMPTION_WINDOW = 8.0


def resolve_mu(context: RunContext) -> float:
    """
    The configured mu, or the midpoint between 2 gamma_1 and the next chain value.

    Raises:
        NeedsLargerCutoffError: If the chain ends at 2 gamma_1.
    """
    cfg = context.config
    if cfg.mu is not None:
        return float(cfg.mu)
    chain: IndexChain = context.results["indexset"]
    start = chain.first_combo
    following = chain.next_above(start)
    if following is None:
        raise NeedsLargerCutoffError(
            f"no chain value above 2*gamma_1={start:.10g} below cutoff {chain.cutoff}"
        )
    mu = 0.5 * (start + following)
    logger.info("mu not configured; using %.10g", mu)
    return mu


def free_data(c: Sequence[float], chain: IndexChain) -> List[float]:
    """
    Configured c_1.. padded with zeros up to k1.

    Raises:
        ParameterError: If more than k1 coefficients are given.
    """
    c = [float(x) for x in c]
    if len(c) > chain.k1:
        raise ParameterError(f"{len(c)} free coefficients given, k1={chain.k1}")
    if len(c) < chain.k1:
        logger.warning("free data c_%d..c_%d not configured; set to zero", len(c) + 1, chain.k1)
    return c + [0.0] * (chain.k1 - len(c))


class ExpandStage(BaseStage):
    """Approximate solution xi + omega of order mu."""

    name = "expand"
    requires = ("indexset", "spectrum")

    def run(self, context: RunContext) -> Expansion:
        cfg = context.config
        spectrum = context.results["spectrum"]
        chain = context.results["indexset"]
        mu = resolve_mu(context)
        expansion = free_data_modes(spectrum, chain, free_data(cfg.c, chain))
        if cfg.c_higher:
            expansion = extend_free_data(expansion, spectrum, chain, cfg.c_higher)
        return correct_to_order(expansion, chain, spectrum, mu, cfg.taylor_order, cfg.t0)

    def write_artifacts(self, result: Expansion, context: RunContext) -> Dict[str, Any]:
        mu = resolve_mu(context)
        document = json.loads(result.to_json())
        document["mu"] = mu
        context.write_json("expansion.json", document)
        context.write_csv("expansion.csv", *result.to_rows())
        t0 = context.config.t0
        report = assumption_check(
            result, result.profile, mu, (t0, t0 + ASSUMPTION_WINDOW)
        )
        context.write_json("assumptions.json", report.to_dict())
        return {
            "mu": mu,
            "terms": len(result.terms),
            "order_achieved": result.order_achieved,
            "assumptions_passed": report.passed,
        }

    def to_payload(self, result: Expansion) -> Dict[str, Any]:
        return {
            "terms": [{"gamma": t.gamma, "j": t.j, "w": t.w} for t in result.terms],
            "order_achieved": result.order_achieved,
            "tolerance": result.tolerance,
            "certificate": result.certificate,
        }

    def from_payload(self, payload: Dict[str, Any], context: RunContext) -> Expansion:
        terms = tuple(
            ExpTerm(float(t["gamma"]), int(t["j"]), np.array(t["w"], dtype=float))
            for t in payload["terms"]
        )
        return Expansion(
            terms=terms,
            profile=context.results["profile"],
            order_achieved=float(payload["order_achieved"]),
            tolerance=float(payload["tolerance"]),
            certificate=payload["certificate"],
        )

    def get_capabilities(self) -> List[str]:
        return ["expansion.json", "expansion.csv", "assumptions.json"]
