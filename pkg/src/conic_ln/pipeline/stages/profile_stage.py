import logging
from typing import Any, Dict, List

import numpy as np

from ...constants import structural_constants
from ...geometry.angular_grid import AngularField, build_grid
from ...geometry.profile import BoundaryProfile, blowup_rate_check, solve_profile
from ...errors import DiagnosticError
from ..base.base_stage import BaseStage, RunContext

logger = logging.getLogger(__name__)


def profile_grid(context: RunContext):
    cfg = context.config
    return build_grid(cfg.n, cfg.phi_max, cfg.node_count, cfg.grading_exponent)


class ProfileStage(BaseStage):
    """Boundary defining function rho and blow-up profile xi."""

    name = "profile"

    def run(self, context: RunContext) -> BoundaryProfile:
        return solve_profile(profile_grid(context), context.config.newton)

    def write_artifacts(self, result: BoundaryProfile, context: RunContext) -> Dict[str, Any]:
        header, rows = result.to_rows()
        context.write_csv("profile.csv", header, rows)
        context.write_csv("grid.csv", *result.grid.to_rows())
        sidecar = result.sidecar()
        try:
            report = blowup_rate_check(result)
            sidecar["blowup"] = {"slope": report.slope, "c1": report.c1, "c2": report.c2}
        except DiagnosticError as e:
            logger.warning("blow-up rate check skipped: %s", e)
            sidecar["blowup"] = None
        slope_ok = abs(abs(result.boundary_slope) - 1.0) <= context.config.tolerance("boundary_slope")
        if not slope_ok:
            logger.warning("boundary slope %.8f is not within tolerance of -1", result.boundary_slope)
        sidecar["boundary_slope_ok"] = slope_ok
        context.write_json("profile.json", sidecar)
        return {"boundary_slope": result.boundary_slope, "residual_norm": result.residual_norm}

    def to_payload(self, result: BoundaryProfile) -> Dict[str, Any]:
        return {
            "rho": result.rho.values,
            "boundary_slope": result.boundary_slope,
            "residual_norm": result.residual_norm,
            "history": result.history,
        }

    def from_payload(self, payload: Dict[str, Any], context: RunContext) -> BoundaryProfile:
        grid = profile_grid(context)
        rho = np.array(payload["rho"], dtype=float)
        const = structural_constants(grid.dimension_n)
        history: List[float] = [float(x) for x in payload["history"]]
        return BoundaryProfile(
            grid=grid,
            rho=AngularField(grid, rho),
            xi=AngularField(grid, rho ** (-const.beta)),
            beta=const.beta,
            S_const=const.S,
            boundary_slope=float(payload["boundary_slope"]),
            residual_norm=float(payload["residual_norm"]),
            iterations=len(history) - 1,
            history=history,
        )

    def get_capabilities(self) -> List[str]:
        return ["profile.csv", "grid.csv", "profile.json"]
