import json
import tempfile
import unittest
from pathlib import Path
from unittest.mock import MagicMock, patch

from conic_ln.cli import build_parser, load_config, main
from conic_ln.errors import ConfigError, ConvergenceError, OracleError, StageError


class TestCli(unittest.TestCase):
    """コマンドラインのテスト"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.config_path = self.root / "run.json"
        self.config_path.write_text(
            json.dumps({"n": 3, "phi_max": 1.0, "node_count": 64, "eigen_count": 4}), encoding="utf-8"
        )

    def tearDown(self):
        self.tmp.cleanup()

    def test_list_stages(self):
        with patch("builtins.print") as mock_print:
            self.assertEqual(main(["stages"]), 0)

        # アサーション
        printed = [call.args[0] for call in mock_print.call_args_list]
        self.assertTrue(printed[0].startswith("profile"))
        self.assertIn("profile.csv, grid.csv, profile.json", printed[1])
        self.assertIn("suite.csv, suite.json", printed[-1])

    def test_missing_config(self):
        self.assertEqual(main(["profile"]), 2)

    def test_invalid_config(self):
        bad = self.root / "bad.json"
        bad.write_text('{"n": 2, "phi_max": 1.0}', encoding="utf-8")
        self.assertEqual(main(["profile", "--config", str(bad)]), 2)

    def test_unreadable_config(self):
        self.assertEqual(main(["profile", "--config", str(self.root / "missing.json")]), 2)

    def test_unknown_command(self):
        with self.assertRaises(SystemExit):
            build_parser().parse_args(["plot"])

    @patch("conic_ln.cli.PipelineManager")
    def test_stage_failure_exit_code(self, mock_manager_cls):
        # モックの戻り値を設定
        mock_manager = MagicMock()
        mock_manager.run_command.side_effect = StageError("solve", ConvergenceError("no contraction"))
        mock_manager_cls.return_value = mock_manager

        status = main(["solve", "--config", str(self.config_path), "--out", str(self.root / "out"), "--no-cache"])

        # アサーション
        self.assertEqual(status, 4)
        mock_manager.run_command.assert_called_once_with("solve")
        _, out_dir, cache_dir = mock_manager_cls.call_args[0]
        self.assertEqual(out_dir, self.root / "out")
        self.assertIsNone(cache_dir)

    @patch("conic_ln.cli.PipelineManager")
    def test_suite_failure_prints_table(self, mock_manager_cls):
        out_dir = self.root / "out"
        out_dir.mkdir()
        (out_dir / "suite.csv").write_text(
            "# config_hash: abc\ncriterion,check,value,threshold,result,note\n1,constants_n3,0,== 0,pass,\n",
            encoding="utf-8",
        )
        # モックの戻り値を設定
        mock_manager_cls.return_value.run_command.side_effect = StageError("suite", OracleError("2 checks failed"))

        with patch("builtins.print") as mock_print:
            status = main(["suite", "--config", str(self.config_path), "--out", str(out_dir)])

        # アサーション
        self.assertEqual(status, 5)
        printed = [call.args[0] for call in mock_print.call_args_list]
        self.assertTrue(printed[0].startswith("criterion"))
        self.assertIn("constants_n3", printed[1])

    @patch("conic_ln.cli.PipelineManager")
    def test_cache_option(self, mock_manager_cls):
        main(["profile", "--config", str(self.config_path), "--out", str(self.root), "--cache", str(self.root / "c")])
        _, _, cache_dir = mock_manager_cls.call_args[0]
        self.assertEqual(cache_dir, self.root / "c")


class TestLoadConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "run.json"
        self.path.write_text('{"n": 4, "phi_max": 1.2, "seed": 3}', encoding="utf-8")

    def tearDown(self):
        self.tmp.cleanup()

    def test_seed_override(self):
        self.assertEqual(load_config(self.path, None).seed, 3)
        config = load_config(self.path, 11)
        self.assertEqual(config.seed, 11)
        self.assertEqual(config.n, 4)

    def test_seed_range(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(self.path, -1)
        self.assertEqual(ctx.exception.key_path, "seed")
