"""
Kantorovich平均 - 入力検証
ヒストグラム行列・距離行列・ソルバー設定の事前チェックとメッセージ生成
"""
from typing import Optional, Tuple

import numpy as np

from core import offdiag_values
from models import GroundMetric, SolverConfig

# λ·max(M̂) がこれを超えると exp(-λC) がアンダーフローしやすい
LOG_DOMAIN_HINT = 700.0


def validate_histogram_matrix(X: np.ndarray) -> Tuple[bool, Optional[str], Optional[str]]:
    """
    N×d のヒストグラム行列を検証

    Args:
        X: 読み込んだ行列

    Returns:
        Tuple[bool, Optional[str], Optional[str]]: (検証成功, エラーメッセージ, 警告メッセージ)
            - 検証成功: (True, None, None または警告メッセージ)
            - 検証失敗: (False, エラーメッセージ, None)
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        return False, "ヒストグラムが1件もありません。1行1被験者のCSVを指定してください。", None
    if not np.all(np.isfinite(X)):
        return False, "NaN/Infが含まれています。", None
    if np.any(X < 0):
        j, i = np.argwhere(X < 0)[0]
        return False, f"負の値が含まれています（{j + 1}行目 {i + 1}列目: {X[j, i]}）。", None

    masses = X.sum(axis=1)
    if np.all(masses == 0):
        return False, "全ての行の質量が0です。", None

    warning_message = None
    zero_rows = int(np.sum(masses == 0))
    if zero_rows:
        warning_message = f"⚠️ 質量0の行が {zero_rows} 行あります（仮想点のみの分布として扱います）。"
    return True, None, warning_message


def validate_inputs_match(X: np.ndarray, D: GroundMetric) -> Tuple[bool, Optional[str]]:
    """
    ヒストグラムの長さと距離行列のサイズが一致するか

    Returns:
        Tuple[bool, Optional[str]]: (検証成功, エラーメッセージ)
    """
    d = np.asarray(X).shape[-1]
    if d != D.d:
        return False, f"ヒストグラムの長さ {d} と距離行列のサイズ {D.d} が一致しません。"
    return True, None


def validate_solver_config(cfg: SolverConfig, D: GroundMetric) -> Tuple[bool, Optional[str], Optional[str]]:
    """
    解決済みのソルバー設定を検証（数値的に厳しい組み合わせは警告のみ）

    Args:
        cfg: resolve_config 後の設定
        D: 距離行列

    Returns:
        Tuple[bool, Optional[str], Optional[str]]: (検証成功, エラーメッセージ, 警告メッセージ)
    """
    if not cfg.is_resolved:
        return False, "λ・ステップ幅・ρ が未解決です。", None

    warnings = []
    lam = float(cfg.lam)
    top = float(offdiag_values(D).max())
    if cfg.delta is not None:
        top = max(top, max(cfg.delta))
    if lam * top ** cfg.p > LOG_DOMAIN_HINT:
        warnings.append(
            f"⚠️ λ·max(M̂^p) = {lam * top ** cfg.p:.3g} が大きいため、Sinkhornは対数領域で計算されます（低速）。"
        )
    if float(cfg.step_c) * top ** cfg.p > 50.0:
        warnings.append("⚠️ ステップ幅が大きく、指数勾配の更新が不安定になる可能性があります。")

    return True, None, "\n".join(warnings) if warnings else None
