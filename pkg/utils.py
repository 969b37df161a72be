"""
Kantorovich平均 - ユーティリティ関数
ロガー生成、補償付き総和、並列マップなどの共通処理
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

import numpy as np

from config import get_settings

T = TypeVar("T")
R = TypeVar("R")

_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def get_logger(name: str) -> logging.Logger:
    """
    モジュール用ロガーを取得（ハンドラーは1度だけ追加）

    Args:
        name: ロガー名（通常は __name__）

    Returns:
        logging.Logger: 設定済みロガー
    """
    logger = logging.getLogger(name)
    level = getattr(logging, get_settings().log_level, logging.INFO)
    logger.setLevel(level)

    # コンソールハンドラーを追加（既に設定されていない場合）
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setLevel(level)
        handler.setFormatter(logging.Formatter(_LOG_FORMAT))
        logger.addHandler(handler)
        logger.propagate = False
    return logger


def set_log_level(level: str) -> None:
    """
    生成済みの全ロガーのレベルを変更（CLIの --log-level 用）

    Args:
        level: "DEBUG" / "INFO" / "WARNING" など
    """
    value = getattr(logging, level.upper(), logging.INFO)
    for logger in logging.Logger.manager.loggerDict.values():
        if isinstance(logger, logging.Logger) and logger.handlers:
            logger.setLevel(value)
            for handler in logger.handlers:
                handler.setLevel(value)


def exact_mass(values: Iterable[float]) -> float:
    """
    補償付き総和（math.fsum）で質量を計算

    Args:
        values: 非負ベクトル

    Returns:
        float: 正確に丸められた総和
    """
    return math.fsum(float(x) for x in np.asarray(values, dtype=float).ravel())


def ordered_mean(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """
    固定の添字順 j = 1..N でベクトルの平均を取る（スレッド数に依存しない）

    Args:
        vectors: 同じ長さのベクトル列

    Returns:
        np.ndarray: 平均ベクトル
    """
    if len(vectors) == 0:
        raise ValueError("平均を取るベクトルがありません")
    total = np.zeros_like(np.asarray(vectors[0], dtype=float))
    for v in vectors:
        total = total + np.asarray(v, dtype=float)
    return total / len(vectors)


def parallel_map(func: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """
    入力順を保ったまま関数を適用（threads > 1 ならスレッドプール）

    Args:
        func: 各要素に適用する関数
        items: 入力列
        threads: ワーカー数

    Returns:
        List[R]: 入力と同じ順序の結果
    """
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
