import json
import logging
import math
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from conic_ln.artifacts import (
    ArtifactCache,
    cache_key,
    canonical_json,
    csv_text,
    format_cell,
    read_csv,
    to_plain,
    write_csv,
    write_text_atomic,
)


class TestArtifacts(unittest.TestCase):
    """成果物の書き出しのテスト"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_atomic_write_creates_parents(self):
        path = write_text_atomic(self.root / "a" / "b.txt", "hello")
        self.assertEqual(path.read_text(encoding="utf-8"), "hello")

    @patch("conic_ln.artifacts.os.replace")
    def test_atomic_write_failure_leaves_no_files(self, mock_replace):
        # モックの戻り値を設定
        mock_replace.side_effect = OSError("disk full")

        with self.assertRaises(OSError):
            write_text_atomic(self.root / "out.txt", "data")

        # アサーション
        mock_replace.assert_called_once()
        self.assertEqual(os.listdir(self.root), [])

    def test_csv_round_trip_text(self):
        path = write_csv(self.root / "t.csv", ["x", "y"], [(0.1, 1), (1.0 / 3.0, 2)])
        rows = read_csv(path)
        self.assertEqual(rows[0], ["x", "y"])
        self.assertEqual(float(rows[2][0]), 1.0 / 3.0)

    def test_cache_store_and_load(self):
        cache = ArtifactCache(self.root)
        key = cache_key("profile", {"n": 3})
        cache.store(key, {"rho": np.array([1.0, 0.5])})
        self.assertEqual(cache.load(key), {"rho": [1.0, 0.5]})

    def test_cache_miss(self):
        cache = ArtifactCache(self.root)
        self.assertIsNone(cache.load(cache_key("profile", {"n": 4})))

    def test_corrupt_entry_is_a_miss(self):
        cache = ArtifactCache(self.root)
        key = cache_key("profile", {"n": 3})
        path = cache.store(key, {"rho": [1.0]})
        entry = json.loads(path.read_text(encoding="utf-8"))
        entry["payload"]["rho"] = [2.0]
        path.write_text(json.dumps(entry), encoding="utf-8")

        with self.assertLogs("conic_ln.artifacts", level=logging.WARNING) as logs:
            self.assertIsNone(cache.load(key))
        self.assertIn("corrupt cache entry", logs.output[0])

    def test_truncated_entry_is_a_miss(self):
        cache = ArtifactCache(self.root)
        key = cache_key("spectrum", {"n": 3})
        path = cache.store(key, {"lambdas": [1.0]})
        path.write_text("{\"checksum\":", encoding="utf-8")
        with self.assertLogs("conic_ln.artifacts", level=logging.WARNING):
            self.assertIsNone(cache.load(key))


def test_to_plain_handles_numpy_and_non_finite():
    value = {"a": np.float64(1.5), "b": np.int64(2), "c": [math.inf, -math.inf, math.nan], "d": np.bool_(True)}
    assert to_plain(value) == {"a": 1.5, "b": 2, "c": ["inf", "-inf", "nan"], "d": True}


def test_canonical_json_is_sorted_and_stable():
    a = canonical_json({"b": 1, "a": [1.0, 2.0]})
    b = canonical_json({"a": [1.0, 2.0], "b": 1})
    assert a == b
    assert a.endswith("\n")
    assert list(json.loads(a)) == ["a", "b"]


def test_cache_key_depends_on_stage_and_inputs():
    assert cache_key("profile", {"n": 3}) != cache_key("spectrum", {"n": 3})
    assert cache_key("profile", {"n": 3}) != cache_key("profile", {"n": 4})
    assert cache_key("profile", {"n": 3}) == cache_key("profile", {"n": 3})


@pytest.mark.parametrize(
    "value,expected",
    [
        (0.1, "0.10000000000000001"),
        (np.float64(2.0), "2"),
        (3, "3"),
        ("x", "x"),
    ],
)
def test_format_cell(value, expected):
    assert format_cell(value) == expected


def test_csv_text_layout():
    assert csv_text(["a", "b"], [(1.0, 2.0)]) == "a,b\n1,2\n"
