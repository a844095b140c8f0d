import logging
from typing import Any, Dict, List

import numpy as np

from ...errors import DiagnosticError
from ...spectral.operator import SingularOperator
from ...spectral.spectrum import Spectrum, compute_spectrum, eigen_decay_slope
from ..base.base_stage import BaseStage, RunContext

logger = logging.getLogger(__name__)


class SpectrumStage(BaseStage):
    """Leading eigenpairs of the singular angular operator."""

    name = "spectrum"
    requires = ("profile",)

    def run(self, context: RunContext) -> Spectrum:
        return compute_spectrum(context.results["profile"], context.config.eigen_count)

    def write_artifacts(self, result: Spectrum, context: RunContext) -> Dict[str, Any]:
        header, rows = result.to_rows()
        context.write_csv("spectrum.csv", header, rows)
        summary = result.summary()
        try:
            summary["decay_slope_1"] = eigen_decay_slope(result, 1)
        except DiagnosticError as e:
            logger.warning("eigenfield decay slope skipped: %s", e)
            summary["decay_slope_1"] = None
        summary["clusters"] = result.clusters()
        context.write_json("spectrum.json", summary)
        return {"gammas": [float(g) for g in result.gammas]}

    def to_payload(self, result: Spectrum) -> Dict[str, Any]:
        return {"lambdas": result.lambdas, "vectors": result.vectors}

    def from_payload(self, payload: Dict[str, Any], context: RunContext) -> Spectrum:
        profile = context.results["profile"]
        lambdas = np.array(payload["lambdas"], dtype=float)
        vectors = np.array(payload["vectors"], dtype=float)
        gammas = np.sqrt(lambdas + profile.beta**2)
        for arr in (lambdas, vectors, gammas):
            arr.setflags(write=False)
        return Spectrum(
            profile=profile,
            operator=SingularOperator(profile),
            kappa=profile.constants.kappa,
            lambdas=lambdas,
            gammas=gammas,
            vectors=vectors,
        )

    def get_capabilities(self) -> List[str]:
        return ["spectrum.csv", "spectrum.json"]
