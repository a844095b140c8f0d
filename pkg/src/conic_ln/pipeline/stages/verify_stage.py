import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from ...contraction.decay import boundary_profile_slope, decay_fit
from ...contraction.oracle import direct_solve_oracle
from ...errors import DiagnosticError, OracleError
from ..base.base_stage import BaseStage, RunContext
from .expand_stage import resolve_mu

logger = logging.getLogger(__name__)

# the oracle comparison is restricted to nodes at least this far from the boundary
ORACLE_RHO_MIN = 0.1
BOUNDARY_SLOPE_TOLERANCE = 0.1
MAX_CONTRACTION_FACTOR = 0.9


@dataclass
class VerifyResult:
    checks: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check["passed"] for check in self.checks.values())

    def failed(self) -> List[str]:
        return sorted(name for name, check in self.checks.items() if not check["passed"])


def oracle_difference(v: np.ndarray, oracle: np.ndarray, rho: np.ndarray) -> float:
    """Largest relative difference on interior rows where rho > ORACLE_RHO_MIN."""
    columns = rho > ORACLE_RHO_MIN
    a = v[1:-1][:, columns]
    b = oracle[1:-1][:, columns]
    return float(np.max(np.abs(a - b) / np.abs(b)))


def verification_checks(context: RunContext) -> VerifyResult:
    """
    Check the solved v against the oracle, its decay rate, the boundary
    slope of v - vhat, the contraction factor and the final residual.

    Raises:
        OracleError: If the oracle Newton solve itself fails.
    """
    cfg = context.config
    profile = context.results["profile"]
    vhat = context.results["expand"]
    solved = context.results["solve"]
    mu = resolve_mu(context)
    result = VerifyResult()

    oracle = direct_solve_oracle(
        profile, solved.v, solved.t0_used, solved.T, vhat=vhat, opts=cfg.newton
    )
    difference = oracle_difference(solved.v.values, oracle.values, profile.rho.values)
    result.checks["oracle"] = {
        "relative_difference": difference,
        "tolerance": cfg.tolerance("oracle"),
        "passed": difference <= cfg.tolerance("oracle"),
    }

    fit = decay_fit(solved.v, vhat, profile)
    result.checks["decay_rate"] = {
        **fit.to_dict(),
        "mu": mu,
        "passed": fit.rate >= mu - cfg.tolerance("decay_rate"),
    }

    s = profile.constants.s
    rows = solved.v.values - vhat.sample(solved.v.grid.t_nodes).values - profile.xi.values
    try:
        slope = boundary_profile_slope(rows[rows.shape[0] // 2], profile)
    except DiagnosticError as e:
        logger.warning("boundary slope of v - vhat skipped: %s", e)
        slope = math.nan
    result.checks["rho_slope"] = {
        "slope": slope,
        "expected": s,
        "passed": bool(abs(slope - s) <= BOUNDARY_SLOPE_TOLERANCE),
    }

    report = solved.report
    result.checks["contraction"] = {
        "lambda": report["lambda"],
        "converged": report["converged"],
        "passed": bool(report["converged"] and report["lambda"] <= MAX_CONTRACTION_FACTOR),
    }
    result.checks["residual"] = {
        "final_residual": report["final_residual"],
        "relative_residual": report["relative_residual"],
        "tolerance": cfg.tolerance("final_residual"),
        "passed": bool(report["relative_residual"] <= cfg.tolerance("final_residual")),
    }
    return result


class VerifyStage(BaseStage):
    """Independent checks of the solution: oracle solve, decay rate and boundary slope."""

    name = "verify"
    requires = ("solve", "expand")

    def run(self, context: RunContext) -> VerifyResult:
        return verification_checks(context)

    def write_artifacts(self, result: VerifyResult, context: RunContext) -> Dict[str, Any]:
        context.write_json("verify.json", {"checks": result.checks, "passed": result.passed})
        if not result.passed:
            raise OracleError(f"verification failed: {', '.join(result.failed())}")
        return {"passed": True}

    def get_capabilities(self) -> List[str]:
        return ["verify.json"]
