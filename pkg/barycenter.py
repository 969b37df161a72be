"""
Kantorovich平均 - 質量制約付き重心
指数勾配法（固定ステップ）と質量射影による p-Kantorovich 重心の計算
"""
import math
from typing import List, Optional

import numpy as np

import errors
from core import resolve_config, unrescale
from kantorovich import augment_histogram, build_augmented
from models import AugmentedCost, BarycenterReport, BarycenterState, GroundMetric, HistogramCollection, SolverConfig
from sinkhorn import GibbsKernel, gibbs_kernel, sinkhorn_solve
from utils import exact_mass, get_logger, ordered_mean, parallel_map

logger = get_logger(__name__)


def project_mass(a: np.ndarray, rho: float) -> np.ndarray:
    """
    実在ビンの質量を ρ に、仮想ビンを 1−ρ にする

    Args:
        a: 長さ d+1
        rho: 目標質量 (0, 1]

    Returns:
        np.ndarray: 射影後のベクトル（総和1）
    """
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"ρ は (0,1] の範囲で指定してください（実際: {rho}）")
    a = np.asarray(a, dtype=float)
    real = a[:-1]
    total = exact_mass(real)
    if total <= 0.0:
        raise errors.ZeroRealMass()
    return np.append(rho * real / total, 1.0 - rho)


def exponentiated_step(a: np.ndarray, grad: np.ndarray, step_c: float, rho: float) -> np.ndarray:
    """a ← a ∘ exp(−c·grad) のあと質量射影（grad の定数ずれは射影で消える）"""
    with np.errstate(divide="ignore"):
        z = np.log(np.asarray(a, dtype=float)[:-1]) - step_c * np.asarray(grad, dtype=float)[:-1]
    top = float(np.max(z))
    if not np.isfinite(top):
        raise errors.ZeroRealMass()
    real = np.exp(z - top)
    return project_mass(np.append(real, 0.0), rho)


def _solve_all(
    a: np.ndarray,
    targets: List[np.ndarray],
    kernel: GibbsKernel,
    cfg: SolverConfig,
    warm: List[Optional[np.ndarray]],
    threads: int,
):
    def solve(j: int):
        return sinkhorn_solve(
            a, targets[j], None, kernel.lam,
            tol=cfg.tol_sinkhorn, max_iter=cfg.max_sinkhorn,
            kernel=kernel, init_dual_b=warm[j],
        )

    return parallel_map(solve, list(range(len(targets))), threads)


def objective(
    a: np.ndarray,
    c: HistogramCollection,
    aug: AugmentedCost,
    lam: float,
    tol: float = 1e-9,
    max_iter: int = 10000,
    kernel: Optional[GibbsKernel] = None,
) -> float:
    """
    (1/N) Σ_j OT_λ(a, [b^j; β^j], M̂^p)（j の順に和を取る）

    Args:
        a: 長さ d+1、総和1
        c: コレクション
        aug: 拡張コスト
        lam: λ

    Returns:
        float: 目的関数値
    """
    if kernel is None:
        kernel = gibbs_kernel(aug.mhat_p, lam)
    values = [
        sinkhorn_solve(a, augment_histogram(row), None, lam, tol=tol, max_iter=max_iter, kernel=kernel).value
        for row in c.rows
    ]
    return math.fsum(values) / len(values)


def kantorovich_mean(
    c: HistogramCollection,
    M: GroundMetric,
    cfg: SolverConfig,
    threads: Optional[int] = None,
    history: Optional[List[BarycenterState]] = None,
) -> BarycenterReport:
    """
    Kantorovich平均（質量 ρ の重心）を計算

    Args:
        c: 正規化済みコレクション
        M: 距離行列
        cfg: ソルバー設定（AUTO/MEAN は内部で解決）
        threads: N個の双対問題を解くワーカー数（Noneなら設定値）
        history: 渡された場合、射影後の各反復状態を追加する

    Returns:
        BarycenterReport: 元データ単位の重心と反復の記録（未収束なら射影後の反復のうち目的関数が最小のもの）
    """
    if c.d != M.d:
        raise ValueError(f"ヒストグラムの長さ {c.d} と距離行列のサイズ {M.d} が一致しません")
    cfg = resolve_config(cfg, M, c)
    rho, lam, step_c = float(cfg.rho), float(cfg.lam), float(cfg.step_c)
    workers = threads if threads is not None else cfg.threads

    if cfg.delta is not None:
        aug = build_augmented(M, delta=cfg.delta, p=cfg.p)
    else:
        aug = build_augmented(M, q=cfg.q, p=cfg.p)
    kernel = gibbs_kernel(aug.mhat_p, lam)
    targets = [augment_histogram(row) for row in c.rows]
    d = c.d
    logger.info(f"Kantorovich平均を開始: N={c.n}, d={d}, λ={lam:.6g}, c={step_c:.6g}, ρ={rho:.6g}")

    a = np.full(d + 1, 1.0 / (d + 1))
    warm: List[Optional[np.ndarray]] = [None] * c.n
    objectives: List[float] = []
    changes: List[float] = []
    inner_total = 0
    inner_failed = 0
    converged = False
    iteration = 0
    best_a, best_iteration = a, -1

    while iteration < cfg.max_outer:
        sols = _solve_all(a, targets, kernel, cfg, warm, workers)
        inner_total += sum(s.iterations for s in sols)
        inner_failed += sum(1 for s in sols if not s.converged)
        warm = [s.dual_b for s in sols]
        objectives.append(math.fsum(s.value for s in sols) / c.n)
        # 初期値は質量射影前なので候補にしない
        if iteration > 0 and (best_iteration < 0 or objectives[-1] < objectives[best_iteration]):
            best_a, best_iteration = a, iteration

        grad = ordered_mean([s.dual_a for s in sols])
        a_next = exponentiated_step(a, grad, step_c, rho)
        change = float(np.sum(np.abs(a_next - a)))
        a = a_next
        iteration += 1
        changes.append(change)
        if history is not None:
            history.append(BarycenterState(a=a.copy(), iter=iteration, objective=objectives[-1], last_change=change))
        logger.debug(f"反復 {iteration}: 目的関数={objectives[-1]:.10g}, 変化量={change:.3e}")
        if change <= cfg.tol_outer:
            converged = True
            break

    # 最終反復での目的関数
    final = _solve_all(a, targets, kernel, cfg, warm, workers)
    inner_total += sum(s.iterations for s in final)
    inner_failed += sum(1 for s in final if not s.converged)
    objectives.append(math.fsum(s.value for s in final) / c.n)
    if converged or best_iteration < 0 or objectives[-1] < objectives[best_iteration]:
        best_a, best_iteration = a, iteration

    if inner_failed:
        logger.warning(f"収束しなかったSinkhorn求解が {inner_failed} 回ありました")
    if converged:
        logger.info(f"Kantorovich平均が収束しました: 反復={iteration}, 目的関数={objectives[-1]:.10g}")
    else:
        logger.warning(
            f"Kantorovich平均が {cfg.max_outer} 反復で収束しませんでした（最終変化量 {changes[-1]:.3e}）。"
            f"目的関数が最小の反復 {best_iteration} を返します"
        )

    return BarycenterReport(
        barycenter=unrescale(best_a[:d], c.scale).tolist(),
        rho_scaled=rho * c.scale,
        objective_trajectory=objectives,
        change_trajectory=changes,
        iterations=iteration,
        converged=converged,
        config_resolved=cfg,
        delta_value=aug.delta.tolist(),
        scale=c.scale,
        inner_iterations_total=inner_total,
        inner_not_converged=inner_failed,
        returned_iteration=best_iteration,
        admissibility=aug.admissibility,
    )
