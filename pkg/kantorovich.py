"""
Kantorovich平均 - 仮想点による拡張と Kantorovich距離
質量の異なるヒストグラム間の距離 K_{pΔ}（不足分を仮想点 ω に運ぶ）
"""
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

import errors
from core import quantile_offdiag
from models import AdmissibilityReport, AugmentedCost, GroundMetric, Histogram, Marker
from sinkhorn import GibbsKernel, sinkhorn_solve
from utils import exact_mass, get_logger

logger = get_logger(__name__)

MASS_SLACK = 1e-12


# ==================== Δ の許容条件 ====================
def admissibility(M: GroundMetric, delta: np.ndarray) -> AdmissibilityReport:
    """
    Δ がノルム条件・距離条件を満たすかを調べる

    Args:
        M: 距離行列
        delta: 長さ d の仮想点距離

    Returns:
        AdmissibilityReport: 条件ごとのフラグと最大違反量
    """
    D = M.D
    delta = np.asarray(delta, dtype=float)
    tol = 1e-12 * max(1.0, float(D.max()), float(delta.max()))

    row_max = D.max(axis=1)
    row_violation = float(np.max(np.maximum(row_max - delta, 0.0)))
    lipschitz = np.abs(delta[:, None] - delta[None, :]) - D
    lipschitz_violation = float(np.max(np.maximum(lipschitz, 0.0)))
    off = ~np.eye(M.d, dtype=bool)
    metric_gap = (D - (delta[:, None] + delta[None, :]))[off]
    metric_violation = float(np.max(np.maximum(metric_gap, 0.0))) if metric_gap.size else 0.0

    return AdmissibilityReport(
        strict_norm=row_violation <= tol and lipschitz_violation <= tol,
        metric_ok=metric_violation <= tol,
        max_row_violation=row_violation,
        max_lipschitz_violation=lipschitz_violation,
        max_metric_violation=metric_violation,
    )


def build_augmented(
    M: GroundMetric,
    delta: Optional[Union[float, Sequence[float], np.ndarray]] = None,
    q: Optional[float] = None,
    p: float = 1.0,
) -> AugmentedCost:
    """
    M̂ = [[M, Δ], [Δᵀ, 0]] を作り要素ごとに p 乗する

    Args:
        M: 距離行列
        delta: Δ（スカラーなら定数ベクトル）。None の場合は q から作る
        q: Δ = quantile_offdiag(M, q)·1 に使う分位点
        p: 指数 p ≥ 1

    Returns:
        AugmentedCost: (d+1)×(d+1) コストと許容条件
    """
    if p < 1:
        raise ValueError(f"p は1以上で指定してください（実際: {p}）")
    d = M.d
    if delta is None:
        if q is None:
            raise ValueError("delta か q のどちらかを指定してください")
        delta_vec = np.full(d, quantile_offdiag(M, q))
    else:
        delta_vec = np.asarray(delta, dtype=float)
        if delta_vec.ndim == 0:
            delta_vec = np.full(d, float(delta_vec))
        if delta_vec.shape != (d,):
            raise ValueError(f"Δ の長さは {d} である必要があります（実際: {delta_vec.shape}）")
        q = None
    if not np.all(np.isfinite(delta_vec)) or np.any(delta_vec <= 0):
        raise errors.NonPositiveDelta(f"min(Δ) = {float(np.min(delta_vec))}")

    mhat = np.zeros((d + 1, d + 1))
    mhat[:d, :d] = M.D
    mhat[:d, d] = delta_vec
    mhat[d, :d] = delta_vec

    report = admissibility(M, delta_vec)
    if not report.strict_norm:
        logger.warning(
            f"Δ がノルム条件を満たしません（行最大の超過 {report.max_row_violation:.4g}, "
            f"Lipschitz超過 {report.max_lipschitz_violation:.4g}）"
        )
    if not report.metric_ok:
        logger.warning(f"2·min(Δ) < max(M) のため M̂ は距離行列ではありません（超過 {report.max_metric_violation:.4g}）")

    return AugmentedCost(mhat_p=mhat ** p, delta=delta_vec, p=p, q=q, admissibility=report)


# ==================== ヒストグラムの拡張 ====================
def augment_histogram(a: Union[Histogram, Sequence[float], np.ndarray]) -> np.ndarray:
    """
    [a; 1 − |a|₁] を返す（不足分を仮想ビンに置く）

    Args:
        a: S_d の要素

    Returns:
        np.ndarray: 長さ d+1、総和1
    """
    values = a.values if isinstance(a, Histogram) else np.asarray(a, dtype=float)
    bad = ~np.isfinite(values) | (values < 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise errors.NegativeOrNonFiniteEntry(i, float(values[i]))
    mass = exact_mass(values)
    if mass > 1.0 + MASS_SLACK:
        raise errors.MassExceedsOne(f"|a|₁ = {mass!r}")
    return np.append(values, max(0.0, 1.0 - mass))


# ==================== 距離 ====================
def _root(kp: float, p: float) -> float:
    # 正則化した値はエントロピー分だけ負になりうる
    return float(np.sign(kp) * abs(kp) ** (1.0 / p))


def kantorovich_distance(
    a: Union[Histogram, np.ndarray],
    b: Union[Histogram, np.ndarray],
    aug: AugmentedCost,
    lam: Union[float, Marker],
    tol: float = 1e-9,
    max_iter: int = 10000,
    kernel: Optional[GibbsKernel] = None,
) -> Dict[str, Any]:
    """
    K_{pΔ}(a, b)^p = OT([a; α], [b; β], M̂^p)

    Args:
        a, b: S_d の要素
        aug: 拡張コスト
        lam: λ、または Marker.EXACT（厳密OT）
        tol, max_iter: Sinkhorn の停止条件
        kernel: 共有カーネル（任意）

    Returns:
        Dict[str, Any]: {"kp", "k", "converged", "mode"}
    """
    a_aug = augment_histogram(a)
    b_aug = augment_histogram(b)
    if a_aug.shape[0] != aug.d + 1 or b_aug.shape[0] != aug.d + 1:
        raise ValueError(f"ヒストグラムの長さは {aug.d} である必要があります")

    if lam == Marker.EXACT:
        from oracle import exact_ot

        kp = exact_ot(a_aug, b_aug, aug.mhat_p).value
        return {"kp": kp, "k": _root(kp, aug.p), "converged": True, "mode": "exact"}

    sol = sinkhorn_solve(
        a_aug, b_aug, None if kernel is not None else aug.mhat_p, float(lam),
        tol=tol, max_iter=max_iter, kernel=kernel,
    )
    if not sol.converged:
        logger.warning(f"Sinkhornが収束しませんでした（周辺誤差 {sol.marginal_err:.3e}）")
    return {"kp": sol.value, "k": _root(sol.value, aug.p), "converged": sol.converged, "mode": "sinkhorn"}


def delta_sensitivity(
    a: Union[Histogram, np.ndarray],
    b: Union[Histogram, np.ndarray],
    M: GroundMetric,
    gammas: Sequence[float],
    p: float = 1.0,
    lam: Union[float, Marker] = Marker.EXACT,
) -> List[Dict[str, float]]:
    """
    Δ = γ·1 を動かしたときの距離の変化（γ が大きいと K^p/γ^p は質量差に近づく）

    Args:
        a, b: S_d の要素
        M: 距離行列
        gammas: 調べる γ の列
        p: 指数
        lam: λ または EXACT

    Returns:
        List[Dict[str, float]]: γ ごとの {gamma, kp, kp_over_gamma, mass_gap}
    """
    values_a = a.values if isinstance(a, Histogram) else np.asarray(a, dtype=float)
    values_b = b.values if isinstance(b, Histogram) else np.asarray(b, dtype=float)
    gap = abs(exact_mass(values_a) - exact_mass(values_b))
    rows = []
    for gamma in gammas:
        aug = build_augmented(M, delta=float(gamma), p=p)
        kp = kantorovich_distance(values_a, values_b, aug, lam)["kp"]
        rows.append({"gamma": float(gamma), "kp": kp, "kp_over_gamma": kp / float(gamma) ** p, "mass_gap": gap})
    return rows
