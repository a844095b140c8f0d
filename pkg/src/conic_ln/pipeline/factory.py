from typing import Dict, Type

from .base.base_stage import BaseStage
from .stages.expand_stage import ExpandStage
from .stages.indexset_stage import IndexSetStage
from .stages.profile_stage import ProfileStage
from .stages.solve_stage import SolveStage
from .stages.spectrum_stage import SpectrumStage
from .stages.suite_stage import SuiteStage
from .stages.verify_stage import VerifyStage


class StageFactory:
    """
    Factory class for creating pipeline stage instances.
    """

    _stage_classes: Dict[str, Type[BaseStage]] = {
        "profile": ProfileStage,
        "spectrum": SpectrumStage,
        "indexset": IndexSetStage,
        "expand": ExpandStage,
        "solve": SolveStage,
        "verify": VerifyStage,
        "suite": SuiteStage,
    }

    @classmethod
    def create_stage(cls, stage_type: str) -> BaseStage:
        """
        Create a stage instance.

        Args:
            stage_type: The command name of the stage.

        Returns:
            An instance of the specified stage.

        Raises:
            ValueError: If the stage is not registered.
        """
        if stage_type not in cls._stage_classes:
            raise ValueError(f"Unknown stage: {stage_type}")

        stage_class = cls._stage_classes[stage_type]
        return stage_class()

    @classmethod
    def get_available_stages(cls) -> Dict[str, str]:
        """
        Get a dictionary of available stages and their descriptions.

        Returns:
            A dictionary mapping stage names to descriptions.
        """
        return {
            "profile": "境界定義関数 rho と爆発解 xi を計算するステージ",
            "spectrum": "特異角度作用素の固有対と指数 gamma を計算するステージ",
            "indexset": "指数集合の鎖と共鳴を判定するステージ",
            "expand": "自由データから mu 次の近似解を構成するステージ",
            "solve": "不動点反復で厳密解を求めるステージ",
            "verify": "ニュートン法による独立解との照合と減衰率を検証するステージ",
            "suite": "受け入れ基準をまとめて実行するステージ",
        }
