import hashlib
import json
import math
import os
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

DEFAULT_TOLERANCES: Dict[str, float] = {
    "profile_residual": 1e-11,
    "boundary_slope": 1e-3,
    "orthogonality": 1e-9,
    "linear_residual": 1e-6,
    "picard": 1e-10,
    "final_residual": 1e-6,
    "decay_rate": 0.05,
    "oracle": 1e-3,
}


def env_default(name: str, fallback: str) -> str:
    """Read a default from the environment (populated from .env by the CLI)."""
    return os.getenv(name, fallback)


class NewtonOptions(BaseModel):
    """減衰ニュートン法の設定モデル"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    max_iterations: int = Field(default=60, ge=1, description="最大反復回数")
    tolerance: float = Field(default=1e-11, gt=0.0, description="残差の収束判定値")
    min_damping: float = Field(
        default=2.0**-20, gt=0.0, le=1.0, description="直線探索で許す最小の減衰率"
    )
    positivity_floor: float = Field(
        default=1e-12, gt=0.0, description="反復中に rho を切り上げる下限値"
    )


class PicardOptions(BaseModel):
    """不動点反復 (Picard) の設定モデル"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    max_iterations: int = Field(default=60, ge=1, description="最大反復回数")
    tolerance: float = Field(default=1e-10, gt=0.0, description="補正量ノルムの収束判定値")
    non_monotone_window: int = Field(
        default=5, ge=1, description="比が1を超え続けたら非縮小と判定する連続回数"
    )
    t0_escalation_limit: int = Field(
        default=4, ge=0, description="t0 を 1 ずつ増やす最大回数"
    )
    quadrature_points: int = Field(default=8, ge=2, description="Q(w) の τ 積分のガウス点数")
    ball_constant: float = Field(
        default=0.5, gt=0.0, description="経験的な球写像条件の右辺"
    )


class RunConfig(BaseModel):
    """1 回の実行全体を表す設定モデル（未知のキーは拒否）"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n: int = Field(ge=3, description="空間次元 n")
    phi_max: float = Field(gt=0.0, lt=math.pi, description="球面キャップの半角 (ラジアン)")
    node_count: int = Field(default=240, ge=16, description="角度方向の格子点数")
    grading_exponent: float = Field(default=2.0, ge=1.0, description="境界への格子集中度")
    eigen_count: int = Field(default=6, ge=1, description="計算する固有対の数")
    cutoff: Optional[float] = Field(
        default=None, ge=0.0, description="指数集合の打ち切り値 (省略時は mu から決定)"
    )
    epsilon_res: float = Field(default=1e-8, ge=0.0, description="共鳴判定の許容誤差")
    mu: Optional[float] = Field(default=None, gt=0.0, description="目標の減衰率 mu")
    c: List[float] = Field(default_factory=list, description="自由データ c_1..c_k1")
    c_higher: Dict[int, float] = Field(
        default_factory=dict, description="非共鳴な高次モードへの追加自由データ"
    )
    gammas_override: Optional[List[float]] = Field(
        default=None, description="指数集合を固有値計算なしで作るための γ 列"
    )
    taylor_order: Optional[int] = Field(default=None, ge=2, description="非線形項の展開次数")
    t0: float = Field(default=1.0, ge=0.0, description="円柱の始点 t0")
    t_max: Optional[float] = Field(default=None, description="円柱の打ち切り T (省略時は自動)")
    dt: float = Field(default=0.05, gt=0.0, description="t 方向の刻み幅")
    tolerances: Dict[str, float] = Field(default_factory=dict, description="許容誤差の上書き")
    newton: NewtonOptions = Field(default_factory=NewtonOptions)
    picard: PicardOptions = Field(default_factory=PicardOptions)
    output_dir: str = Field(
        default_factory=lambda: env_default("CONIC_LN_OUTPUT_DIR", "out"),
        description="成果物の出力先",
    )
    cache_dir: str = Field(
        default_factory=lambda: env_default("CONIC_LN_CACHE_DIR", ".cache"),
        description="キャッシュの保存先",
    )
    seed: int = Field(default=0, ge=0, lt=2**64, description="乱数シード")

    @model_validator(mode="after")
    def _check_cross_fields(self) -> "RunConfig":
        if self.eigen_count > self.node_count // 4:
            raise ValueError(
                f"eigen_count {self.eigen_count} exceeds node_count/4 "
                f"= {self.node_count // 4}"
            )
        if self.t_max is not None and self.t_max - self.t0 < 4.0:
            raise ValueError("t_max - t0 must be at least 4")
        unknown = sorted(set(self.tolerances) - set(DEFAULT_TOLERANCES))
        if unknown:
            raise ValueError(f"unknown tolerance names {unknown}")
        if any(not (v > 0.0) for v in self.tolerances.values()):
            raise ValueError("tolerances must be positive")
        if self.gammas_override is not None:
            g = self.gammas_override
            if not g or any(x <= 0 for x in g) or any(b < a for a, b in zip(g, g[1:])):
                raise ValueError("gammas_override must be nonempty, positive, increasing")
        return self

    def tolerance(self, name: str) -> float:
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def effective(self) -> str:
        """Canonical JSON of the fully defaulted configuration."""
        data = self.model_dump(mode="json")
        data["tolerances"] = {**DEFAULT_TOLERANCES, **self.tolerances}
        # directories do not influence results
        data.pop("output_dir")
        data.pop("cache_dir")
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.effective().encode("utf-8")).hexdigest()


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate a JSON run configuration.

    Args:
        text: JSON document.

    Returns:
        The validated configuration with defaults filled in.

    Raises:
        ConfigError: On malformed JSON, unknown keys, type mismatches, or
            violated preconditions; carries the offending key path.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        path = ".".join(str(p) for p in first.get("loc", ()))
        raise ConfigError(first.get("msg", str(e)), key_path=path) from e
