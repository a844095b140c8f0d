import json
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ...config import RunConfig
from ...spectral.index_set import IndexChain, build_index_chain
from ..base.base_stage import BaseStage, RunContext

logger = logging.getLogger(__name__)


def default_cutoff(gammas: Sequence[float], mu: Optional[float]) -> float:
    """Cover mu (or the first combination 2 gamma_1) plus one more gamma_1."""
    first_combo = 2.0 * gammas[0]
    return max(first_combo, mu or first_combo) + gammas[0]


class IndexSetStage(BaseStage):
    """Index set chain of the computed (or overridden) exponents."""

    name = "indexset"
    requires = ("spectrum",)

    def run(self, context: RunContext) -> IndexChain:
        cfg = context.config
        if cfg.gammas_override is not None:
            gammas = list(cfg.gammas_override)
        else:
            gammas = [float(g) for g in context.results["spectrum"].gammas]
        cutoff = cfg.cutoff if cfg.cutoff is not None else default_cutoff(gammas, cfg.mu)
        return build_index_chain(gammas, cutoff, cfg.epsilon_res)

    def prerequisites(self, config: RunConfig) -> Tuple[str, ...]:
        # an explicit exponent list makes the eigen solve unnecessary
        return () if config.gammas_override is not None else self.requires

    def write_artifacts(self, result: IndexChain, context: RunContext) -> Dict[str, Any]:
        context.write_json("indexset.json", json.loads(result.to_json()))
        return {
            "k1": result.k1,
            "cutoff": result.cutoff,
            "resonant": [e.value for e in result.entries if e.resonant],
        }

    def get_capabilities(self) -> List[str]:
        return ["indexset.json"]
