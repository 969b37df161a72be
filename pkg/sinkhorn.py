"""
Kantorovich平均 - エントロピー正則化最適輸送（Sinkhorn）
値・輸送計画・中心化した双対ポテンシャルを返す。スケーリングが発散しそうな場合は対数領域に切り替える
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp, xlogy

import errors
from models import SinkhornSolution
from utils import exact_mass, get_logger

logger = get_logger(__name__)

MASS_TOL = 1e-9
STAB_THRESHOLD = 1e100
CHECK_EVERY = 10


@dataclass(frozen=True)
class GibbsKernel:
    """共有カーネル K = exp(−λC)（全ての求解で読み取り専用として共有）"""
    C: np.ndarray
    lam: float
    K: np.ndarray


def gibbs_kernel(C: np.ndarray, lam: float) -> GibbsKernel:
    """
    コスト行列からカーネルを1度だけ計算

    Args:
        C: n×n 非負コスト
        lam: 正則化 λ > 0

    Returns:
        GibbsKernel: 読み取り専用のカーネル
    """
    C = np.array(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"正方行列が必要です（実際: {C.shape}）")
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise errors.NegativeOrNonFiniteEntry("C", float(np.min(C)))
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"λ は正の数で指定してください（実際: {lam}）")
    scaled = lam * C
    if not np.all(np.isfinite(scaled)):
        raise errors.NonFiniteKernel(f"λ·max(C) = {lam * float(C.max())}")
    K = np.exp(-scaled)
    C.setflags(write=False)
    K.setflags(write=False)
    return GibbsKernel(C=C, lam=float(lam), K=K)


def _check_marginal(x: np.ndarray, name: str) -> None:
    bad = ~np.isfinite(x) | (x < 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise errors.NegativeOrNonFiniteEntry(f"{name}[{i}]", float(x[i]))


def _scaling_loop(
    Kb: np.ndarray,
    a_s: np.ndarray,
    b_s: np.ndarray,
    v: np.ndarray,
    tol: float,
    max_iter: int,
    threshold: float,
    history: List[float],
) -> Tuple[Optional[np.ndarray], np.ndarray, int, float, bool]:
    """
    通常領域のスケーリング反復

    Returns:
        (u, v, 反復数, 誤差, 収束)。安定域を外れた場合 u は None、v は外れる直前の値
    """
    lo, hi = 1.0 / threshold, threshold
    u = np.ones_like(a_s)
    err = np.inf
    it = 0
    while it < max_iter:
        it += 1
        v_prev = v
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            u = a_s / (Kb @ v)
            v = b_s / (Kb.T @ u)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))) or (
            u.min() < lo or u.max() > hi or v.min() < lo or v.max() > hi
        ):
            logger.debug(f"スケーリングが安定域を外れたため対数領域に切り替えます（{it}反復目）")
            return None, v_prev, it - 1, err, False
        if it % CHECK_EVERY == 0 or it == max_iter:
            err = float(np.sum(np.abs(u * (Kb @ v) - a_s)))
            history.append(err)
            if err <= tol:
                return u, v, it, err, True
    return u, v, it, err, False


def _log_loop(
    logK: np.ndarray,
    la: np.ndarray,
    lb: np.ndarray,
    a_s: np.ndarray,
    g: np.ndarray,
    lam: float,
    tol: float,
    start: int,
    max_iter: int,
    history: List[float],
) -> Tuple[np.ndarray, np.ndarray, int, float, bool]:
    """対数領域の反復（f, g はポテンシャル、T = exp(logK + λ(f ⊕ g))）"""
    f = np.zeros_like(a_s)
    err = np.inf
    it = start
    while it < max_iter:
        it += 1
        f = (la - logsumexp(logK + lam * g[None, :], axis=1)) / lam
        g = (lb - logsumexp(logK + lam * f[:, None], axis=0)) / lam
        if it % CHECK_EVERY == 0 or it == max_iter:
            rows = np.exp(logsumexp(logK + lam * (f[:, None] + g[None, :]), axis=1))
            err = float(np.sum(np.abs(rows - a_s)))
            history.append(err)
            if err <= tol:
                return f, g, it, err, True
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise errors.NonFiniteKernel("対数領域のポテンシャルが非有限になりました")
    return f, g, it, err, False


def sinkhorn_solve(
    a: np.ndarray,
    b: np.ndarray,
    C: Optional[np.ndarray],
    lam: float,
    tol: float = 1e-9,
    max_iter: int = 10000,
    want_plan: bool = False,
    kernel: Optional[GibbsKernel] = None,
    init_dual_b: Optional[np.ndarray] = None,
    stab_threshold: float = STAB_THRESHOLD,
) -> SinkhornSolution:
    """
    OT_λ(a, b, C) = min ⟨T,C⟩ − H(T)/λ を交互スケーリングで解く

    Args:
        a, b: 長さ n の周辺分布（総質量が一致）
        C: n×n コスト（kernel を渡す場合は None でよい）
        lam: 正則化 λ
        tol: a 側周辺の ℓ1 誤差しきい値
        max_iter: 反復上限
        want_plan: 輸送計画を返すか
        kernel: 共有カーネル（gibbs_kernel の結果）
        init_dual_b: b 側ポテンシャルの初期値（前回の解、定数ずれは無関係）
        stab_threshold: スケーリングの安定域 [1/τ, τ]

    Returns:
        SinkhornSolution: 値・中心化した双対・収束情報
    """
    if kernel is None:
        kernel = gibbs_kernel(C, lam)
    elif C is not None and C is not kernel.C and not np.array_equal(C, kernel.C):
        raise ValueError("kernel と C が一致しません")
    if kernel.lam != float(lam):
        raise ValueError(f"kernel の λ ({kernel.lam}) と引数 λ ({lam}) が一致しません")

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = kernel.C.shape[0]
    if a.shape != (n,) or b.shape != (n,):
        raise ValueError(f"周辺分布の長さは {n} である必要があります")
    _check_marginal(a, "a")
    _check_marginal(b, "b")
    mass_a, mass_b = exact_mass(a), exact_mass(b)
    if abs(mass_a - mass_b) > MASS_TOL:
        raise errors.MassMismatch(f"|a|₁={mass_a}, |b|₁={mass_b}")

    sa = a > 0
    sb = b > 0
    Ia = np.flatnonzero(sa)
    Ib = np.flatnonzero(sb)
    if Ia.size == 0 or Ib.size == 0:
        # 質量0同士（輸送するものがない）
        return SinkhornSolution(
            value=0.0, dual_a=np.zeros(n), dual_b=np.zeros(n), support_a=sa, support_b=sb,
            plan=np.zeros((n, n)) if want_plan else None, iterations=0, marginal_err=0.0, converged=True,
        )
    a_s, b_s = a[Ia], b[Ib]
    Cb = kernel.C[np.ix_(Ia, Ib)]
    Kb = kernel.K[np.ix_(Ia, Ib)]

    history: List[float] = []
    log_domain = False
    g0 = None if init_dual_b is None else np.asarray(init_dual_b, dtype=float)[Ib]

    # 通常領域の初期値（カーネルの行/列が全て0なら最初から対数領域）
    start_in_log = bool(np.any(Kb.sum(axis=1) == 0) or np.any(Kb.sum(axis=0) == 0))
    if g0 is not None:
        v0 = np.exp(lam * (g0 - g0.max()))
        if v0.min() < 1.0 / stab_threshold:
            start_in_log = True
    else:
        v0 = np.ones_like(b_s)

    u = None
    it = 0
    if not start_in_log:
        u, v, it, err, converged = _scaling_loop(Kb, a_s, b_s, v0, tol, max_iter, stab_threshold, history)

    if u is None:
        log_domain = True
        if start_in_log:
            g = g0 if g0 is not None else np.zeros_like(b_s)
        else:
            # スケーリングをポテンシャルに吸収
            g = np.log(v) / lam
        logK = -lam * Cb
        f, g, it, err, converged = _log_loop(
            logK, np.log(a_s), np.log(b_s), a_s, g, lam, tol, it, max_iter, history
        )
        plan_s = np.exp(logK + lam * (f[:, None] + g[None, :]))
    else:
        f = np.log(u) / lam
        g = np.log(v) / lam
        plan_s = u[:, None] * Kb * v[None, :]

    value = float(np.sum(plan_s * Cb) + np.sum(xlogy(plan_s, plan_s)) / lam)

    dual_a = np.zeros(n)
    dual_b = np.zeros(n)
    if Ia.size:
        dual_a[Ia] = f - np.mean(f)
    if Ib.size:
        dual_b[Ib] = g - np.mean(g)

    plan = None
    if want_plan:
        plan = np.zeros((n, n))
        plan[np.ix_(Ia, Ib)] = plan_s

    if not converged:
        logger.debug(f"Sinkhornが収束しませんでした: 反復={it}, 周辺誤差={err:.3e}")

    return SinkhornSolution(
        value=value,
        dual_a=dual_a,
        dual_b=dual_b,
        support_a=sa,
        support_b=sb,
        plan=plan,
        iterations=it,
        marginal_err=float(err),
        converged=bool(converged),
        log_domain=log_domain,
        err_history=history,
    )


def ot_lambda_value(a: np.ndarray, b: np.ndarray, C: np.ndarray, lam: float, **kwargs) -> float:
    """OT_λ の値のみ（輸送計画は作らない）"""
    return sinkhorn_solve(a, b, C, lam, want_plan=False, **kwargs).value


def dual_gradient(a: np.ndarray, b: np.ndarray, C: np.ndarray, lam: float, **kwargs) -> np.ndarray:
    """
    a に関する OT_λ の勾配（中心化した双対ポテンシャル α）

    Args:
        a: 全成分が正の第1周辺分布
        b, C, lam: sinkhorn_solve と同じ

    Returns:
        np.ndarray: 長さ n の α（和は0）
    """
    a = np.asarray(a, dtype=float)
    zero = np.flatnonzero(~(a > 0))
    if zero.size:
        raise errors.ZeroEntryInFirstMarginal(f"位置 {zero.tolist()}")
    return sinkhorn_solve(a, b, C, lam, want_plan=False, **kwargs).dual_a
