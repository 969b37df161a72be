"""
Kantorovich平均 - 比較用ベースライン
算術平均（Mean）と、距離行列上のガウス平滑化後の平均（Mean (S)）
"""
import math
from typing import Optional, Sequence

import numpy as np

import errors
from models import GroundMetric, SmoothingKernel
from utils import get_logger, ordered_mean, parallel_map

logger = get_logger(__name__)

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def euclidean_mean(raw: Sequence[Sequence[float]]) -> np.ndarray:
    """
    成分ごとの算術平均（元データ単位）

    Args:
        raw: N本の同じ長さのベクトル

    Returns:
        np.ndarray: (1/N)Σ_j x_j
    """
    rows = [np.asarray(r, dtype=float) for r in raw]
    if not rows:
        raise errors.EmptyCollection()
    lengths = {r.shape for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"ベクトルの長さが揃っていません: {sorted(s[0] for s in lengths)}")
    return ordered_mean(rows)


def smoothing_kernel(D: GroundMetric, fwhm_mm: float) -> SmoothingKernel:
    """
    列正規化したガウスカーネル W（各列の和が1）

    Args:
        D: 距離行列（メッシュなら測地距離）
        fwhm_mm: 半値全幅

    Returns:
        SmoothingKernel: W と σ
    """
    if not fwhm_mm > 0:
        raise ValueError(f"FWHM は正の値で指定してください（実際: {fwhm_mm}）")
    sigma = fwhm_mm * FWHM_TO_SIGMA
    w = np.exp(-(D.D ** 2) / (2.0 * sigma ** 2))
    W = w / w.sum(axis=0, keepdims=True)
    return SmoothingKernel(W=W, fwhm_mm=fwhm_mm, sigma_mm=sigma)


def gaussian_smooth(
    b: Sequence[float],
    D: GroundMetric,
    fwhm_mm: float,
    kernel: Optional[SmoothingKernel] = None,
) -> np.ndarray:
    """
    ガウス平滑化（列正規化なので総質量は保存される）

    Args:
        b: 長さ d のベクトル
        D: 距離行列
        fwhm_mm: 半値全幅
        kernel: 作成済みのカーネル（省略時は作成）

    Returns:
        np.ndarray: W @ b
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (D.d,):
        raise ValueError(f"ベクトルの長さ {b.shape[0]} と距離行列のサイズ {D.d} が一致しません")
    if kernel is None:
        kernel = smoothing_kernel(D, fwhm_mm)
    return kernel.W @ b


def smoothed_mean(
    raw: Sequence[Sequence[float]],
    D: GroundMetric,
    fwhm_mm: float,
    threads: int = 1,
) -> np.ndarray:
    """
    被験者ごとに平滑化してから算術平均（Mean (S)）

    Args:
        raw: N本のベクトル
        D: 距離行列
        fwhm_mm: 半値全幅
        threads: 平滑化のワーカー数

    Returns:
        np.ndarray: 平滑化後の平均
    """
    if len(raw) == 0:
        raise errors.EmptyCollection()
    kernel = smoothing_kernel(D, fwhm_mm)
    logger.info(f"ガウス平滑化: N={len(raw)}, FWHM={fwhm_mm}mm, σ={kernel.sigma_mm:.4g}mm")
    smoothed = parallel_map(lambda r: gaussian_smooth(r, D, fwhm_mm, kernel=kernel), list(raw), threads)
    return euclidean_mean(smoothed)
