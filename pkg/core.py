"""
Kantorovich平均 - コア処理
生データの S_d への正規化、質量計算、距離行列の統計量（分位点・λの自動設定）
"""
from typing import Optional, Sequence, Union

import numpy as np

import errors
from models import GroundMetric, HistogramCollection, Marker, SolverConfig
from utils import exact_mass, get_logger

logger = get_logger(__name__)

# s がこの範囲で1に近い場合は1.0とみなす（再正規化を冪等にする）
_UNIT_SCALE_TOL = 1e-15


def rescale_collection(raw: Union[Sequence[Sequence[float]], np.ndarray]) -> HistogramCollection:
    """
    N個の非負ベクトルを最大質量で割って S_d に写す

    Args:
        raw: N×d の非負データ

    Returns:
        HistogramCollection: rows = raw / s、s = max_j |raw_j|₁
    """
    arr = np.asarray(raw, dtype=float)
    if arr.size == 0 or arr.shape[0] == 0:
        raise errors.EmptyCollection()
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise errors.EmptyCollection(f"2次元データが必要です（実際: {arr.ndim}次元）")

    bad = ~np.isfinite(arr) | (arr < 0)
    if np.any(bad):
        j, i = (int(x) for x in np.argwhere(bad)[0])
        raise errors.NegativeOrNonFiniteEntry((j, i), float(arr[j, i]))

    masses = [exact_mass(row) for row in arr]
    scale = max(masses)
    if scale <= 0.0:
        raise errors.AllZeroCollection()
    if abs(scale - 1.0) <= _UNIT_SCALE_TOL:
        scale = 1.0

    rows = arr / scale
    logger.debug(f"正規化: N={arr.shape[0]}, d={arr.shape[1]}, s={scale!r}")
    return HistogramCollection(rows=rows, scale=scale)


def unrescale(vector: Union[Sequence[float], np.ndarray], scale: float) -> np.ndarray:
    """S_d 上のベクトルを元データの単位に戻す"""
    return np.asarray(vector, dtype=float) * float(scale)


def offdiag_values(D: GroundMetric) -> np.ndarray:
    """狭義上三角の成分（d(d−1)/2 個）"""
    if D.d < 2:
        raise errors.DegenerateMetric(f"d={D.d}")
    iu = np.triu_indices(D.d, k=1)
    return D.D[iu]


def linear_quantile(values: np.ndarray, q: float) -> float:
    """
    順序統計量の線形補間による分位点（h = (n−1)·q/100）

    Args:
        values: 値の配列
        q: パーセンテージ (0, 100]

    Returns:
        float: 分位点
    """
    if not (0.0 < q <= 100.0):
        raise ValueError(f"q は (0,100] の範囲で指定してください（実際: {q}）")
    return float(np.quantile(np.asarray(values, dtype=float), q / 100.0, method="linear"))


def quantile_offdiag(D: GroundMetric, q: float) -> float:
    """
    非対角成分の q% 分位点

    Args:
        D: 距離行列
        q: パーセンテージ (0, 100]

    Returns:
        float: 分位点（q=100 なら最大値）
    """
    return linear_quantile(offdiag_values(D), q)


def auto_lambda(D: GroundMetric) -> float:
    """λ = 100 / median（非対角成分）"""
    median = quantile_offdiag(D, 50.0)
    if median <= 0.0:
        raise errors.ZeroMedianMetric()
    return 100.0 / median


def mean_mass(c: HistogramCollection) -> float:
    """行ごとの質量の算術平均 ρ"""
    return exact_mass(c.masses) / c.n


def resolve_config(
    cfg: SolverConfig,
    D: GroundMetric,
    c: Optional[HistogramCollection] = None,
) -> SolverConfig:
    """
    AUTO / MEAN マーカーを具体的な値に置き換えた設定を返す

    Args:
        cfg: 元の設定
        D: 距離行列
        c: コレクション（rho=MEAN の解決に必要）

    Returns:
        SolverConfig: マーカーを含まない設定
    """
    updates = {}
    if cfg.lam == Marker.AUTO:
        updates["lam"] = auto_lambda(D)
    if cfg.step_c == Marker.AUTO:
        # p や --delta によらず c = 1/quantile_offdiag(M, q)
        reference = quantile_offdiag(D, cfg.q)
        if reference <= 0.0:
            raise errors.NonPositiveDelta("ステップ幅を決める基準距離が0です")
        updates["step_c"] = 1.0 / reference
    if cfg.rho == Marker.MEAN:
        if c is None:
            raise ValueError("rho=MEAN の解決にはコレクションが必要です")
        updates["rho"] = mean_mass(c)

    resolved = cfg.model_copy(update=updates)
    if updates:
        logger.info(
            f"パラメータ解決: λ={resolved.lam}, c={resolved.step_c}, ρ={resolved.rho}, "
            f"p={resolved.p}, q={resolved.q}"
        )
    return resolved
