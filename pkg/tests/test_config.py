import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from conic_ln.config import DEFAULT_TOLERANCES, RunConfig, parse_config
from conic_ln.errors import ConfigError

MINIMAL = {"n": 3, "phi_max": 1.0}


def config_text(**changes):
    return json.dumps({**MINIMAL, **changes})


class TestParseConfig:
    """設定ファイルの解析と検証"""

    def test_defaults_filled(self):
        config = parse_config(config_text())
        assert config.node_count == 240
        assert config.eigen_count == 6
        assert config.t0 == 1.0
        assert config.tolerance("oracle") == DEFAULT_TOLERANCES["oracle"]

    def test_tolerance_override(self):
        config = parse_config(config_text(tolerances={"oracle": 1e-2}))
        assert config.tolerance("oracle") == 1e-2
        assert config.tolerance("picard") == DEFAULT_TOLERANCES["picard"]

    def test_malformed_json(self):
        with pytest.raises(ConfigError):
            parse_config("{not json")

    def test_not_an_object(self):
        with pytest.raises(ConfigError):
            parse_config("[1, 2]")

    def test_unknown_key_reports_path(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config(config_text(colour="blue"))
        assert excinfo.value.key_path == "colour"

    def test_nested_key_path(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config(config_text(picard={"max_iterations": "many"}))
        assert excinfo.value.key_path.startswith("picard")

    @pytest.mark.parametrize(
        "changes",
        [
            {"n": 2},
            {"phi_max": 3.5},
            {"node_count": 8},
            {"eigen_count": 70},
            {"t0": 1.0, "t_max": 3.0},
            {"tolerances": {"bogus": 1.0}},
            {"tolerances": {"oracle": 0.0}},
            {"gammas_override": [2.0, 1.0]},
            {"gammas_override": []},
            {"dt": 0.0},
        ],
    )
    def test_rejected(self, changes):
        with pytest.raises(ConfigError):
            parse_config(config_text(**changes))

    def test_config_error_exit_code(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config(config_text(n=2))
        assert excinfo.value.exit_code == 2


class TestConfigHash:
    def test_hash_ignores_directories(self):
        a = RunConfig(**MINIMAL, output_dir="a", cache_dir="x")
        b = RunConfig(**MINIMAL, output_dir="b", cache_dir="y")
        assert a.config_hash() == b.config_hash()

    def test_hash_sees_numerics(self):
        a = RunConfig(**MINIMAL)
        b = RunConfig(**MINIMAL, dt=0.1)
        assert a.config_hash() != b.config_hash()

    def test_explicit_default_tolerance_same_hash(self):
        a = RunConfig(**MINIMAL)
        b = RunConfig(**MINIMAL, tolerances={"oracle": DEFAULT_TOLERANCES["oracle"]})
        assert a.config_hash() == b.config_hash()

    def test_effective_is_canonical(self):
        effective = json.loads(RunConfig(**MINIMAL).effective())
        assert "output_dir" not in effective
        assert effective["tolerances"] == DEFAULT_TOLERANCES

    def test_frozen(self):
        config = RunConfig(**MINIMAL)
        with pytest.raises(ValidationError):
            config.n = 4


def test_environment_default_directory(monkeypatch):
    # 環境変数から出力先を決める
    monkeypatch.setenv("CONIC_LN_OUTPUT_DIR", "/tmp/conic-out")
    assert RunConfig(**MINIMAL).output_dir == "/tmp/conic-out"


@pytest.mark.parametrize("name", ["hemisphere_n3.json", "hemisphere_n4.json", "cap_pi3.json"])
def test_bundled_configs_parse(name):
    path = Path(__file__).resolve().parent.parent / "configs" / name
    config = parse_config(path.read_text(encoding="utf-8"))
    assert config.n in (3, 4)
