"""
入力検証のテスト
"""
import sys
from pathlib import Path

import numpy as np

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core import resolve_config, rescale_collection
from input_validator import validate_histogram_matrix, validate_inputs_match, validate_solver_config
from metric_build import as_ground_metric
from models import SolverConfig

LINE3 = as_ground_metric(np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]))


def test_valid_matrix():
    ok, error, warning = validate_histogram_matrix(np.array([[0.2, 0.3, 0.0], [0.1, 0.1, 0.1]]))
    assert ok and error is None and warning is None


def test_invalid_matrices():
    ok, error, _ = validate_histogram_matrix(np.zeros((0, 0)))
    assert not ok and "1件も" in error
    ok, error, _ = validate_histogram_matrix(np.array([[0.5, -0.1, 0.0]]))
    assert not ok and "1行目 2列目" in error
    ok, error, _ = validate_histogram_matrix(np.array([[np.nan, 0.0]]))
    assert not ok and "NaN" in error
    ok, error, _ = validate_histogram_matrix(np.zeros((2, 3)))
    assert not ok


def test_zero_row_warns():
    ok, error, warning = validate_histogram_matrix(np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]))
    assert ok and error is None
    assert "1 行" in warning


def test_inputs_match():
    assert validate_inputs_match(np.ones((2, 3)), LINE3) == (True, None)
    ok, error = validate_inputs_match(np.ones((2, 4)), LINE3)
    assert not ok and "4" in error


def test_solver_config_checks():
    c = rescale_collection([[0.5, 0.0, 0.2], [0.0, 0.3, 0.4]])
    ok, error, _ = validate_solver_config(SolverConfig(), LINE3)
    assert not ok and error
    ok, error, warning = validate_solver_config(resolve_config(SolverConfig(), LINE3, c), LINE3)
    assert ok and error is None and warning is None, "既定値では警告なし"
    ok, _, warning = validate_solver_config(resolve_config(SolverConfig(lam=1000.0), LINE3, c), LINE3)
    assert ok and "対数領域" in warning
