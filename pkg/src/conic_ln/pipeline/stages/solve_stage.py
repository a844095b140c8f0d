import logging
from dataclasses import dataclass
from typing import Any, Dict, List

import numpy as np

from ...contraction.cone import reconstruct_cone_solution
from ...contraction.picard import assemble_solution, picard_solve
from ...cylinder.fields import CylinderField, build_cylinder_grid
from ..base.base_stage import BaseStage, RunContext
from .expand_stage import resolve_mu

logger = logging.getLogger(__name__)

CONE_RADII = 9


def _grid_step(w: CylinderField) -> float:
    """Step that rebuilds w's t-grid through build_cylinder_grid."""
    return (w.grid.t_max - w.grid.t0) / (w.grid.shape[0] - 1)


@dataclass(frozen=True)
class SolveResult:
    """Correction w, the assembled solution v = vhat + w and the report."""

    w: CylinderField
    v: CylinderField
    report: Dict[str, Any]

    @property
    def t0_used(self) -> float:
        return self.w.grid.t0

    @property
    def T(self) -> float:
        return self.w.grid.t_max


class SolveStage(BaseStage):
    """Exact solution v = vhat + w by fixed-point iteration."""

    name = "solve"
    requires = ("expand", "indexset", "spectrum")

    def run(self, context: RunContext) -> SolveResult:
        cfg = context.config
        vhat = context.results["expand"]
        w, report = picard_solve(
            vhat,
            context.results["spectrum"],
            context.results["indexset"],
            resolve_mu(context),
            t0=cfg.t0,
            opts=cfg.picard,
            dt=cfg.dt,
            t_max=cfg.t_max,
        )
        return SolveResult(w=w, v=assemble_solution(vhat, w), report=report.to_dict())

    def write_artifacts(self, result: SolveResult, context: RunContext) -> Dict[str, Any]:
        context.write_csv("solution.csv", *result.v.to_rows())
        context.write_json("contraction.json", result.report)
        sampler = reconstruct_cone_solution(result.v, context.results["profile"])
        context.write_csv("cone.csv", *sampler.to_rows(sampler.log_radii(CONE_RADII)))
        return {
            "t0_used": result.t0_used,
            "T": result.T,
            "lambda": result.report["lambda"],
            "final_residual": result.report["final_residual"],
            "decay_fit": result.report["decay_fit"],
        }

    def to_payload(self, result: SolveResult) -> Dict[str, Any]:
        return {
            "t0": result.t0_used,
            "T": result.T,
            "dt": _grid_step(result.w),
            "w": result.w.values,
            "report": result.report,
        }

    def from_payload(self, payload: Dict[str, Any], context: RunContext) -> SolveResult:
        profile = context.results["profile"]
        grid = build_cylinder_grid(
            profile.grid, float(payload["t0"]), float(payload["T"]), float(payload["dt"])
        )
        w = CylinderField(grid, np.array(payload["w"], dtype=float))
        return SolveResult(
            w=w, v=assemble_solution(context.results["expand"], w), report=payload["report"]
        )

    def get_capabilities(self) -> List[str]:
        return ["solution.csv", "contraction.json", "cone.csv"]
