import logging
from typing import Any, Dict, List

from ...errors import OracleError
from ..base.base_stage import BaseStage, RunContext
from ..suite import HEADER, SuiteResult, run_suite

logger = logging.getLogger(__name__)


class SuiteStage(BaseStage):
    """Acceptance checks run against the configured problem."""

    name = "suite"
    requires = ("solve",)

    def run(self, context: RunContext) -> SuiteResult:
        return run_suite(context)

    def write_artifacts(self, result: SuiteResult, context: RunContext) -> Dict[str, Any]:
        context.write_csv("suite.csv", HEADER, [row.as_row() for row in result.rows])
        context.write_json("suite.json", result.to_dict())
        for row in result.rows:
            logger.info("criterion %2d %-32s %s", row.criterion, row.name, "pass" if row.passed else "FAIL")
        if not result.passed:
            raise OracleError(f"acceptance checks failed: {', '.join(result.failed())}")
        return {"passed": True, "checks": len(result.rows)}

    def get_capabilities(self) -> List[str]:
        return ["suite.csv", "suite.json"]
