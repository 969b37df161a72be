"""
Kantorovich平均 - 厳密ソルバー（小規模の正解データ用）
輸送シンプレックス法（北西隅法 + Blandの規則）、厳密Kantorovich距離、格子探索による重心
"""
import itertools
from collections import deque
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

import errors
from kantorovich import augment_histogram, build_augmented
from models import ExactSolution, GroundMetric, HistogramCollection
from utils import exact_mass, get_logger

logger = get_logger(__name__)

SIZE_LIMIT = 64
MASS_TOL = 1e-10
MAX_PIVOTS = 200000

Cell = Tuple[int, int]


# ==================== 輸送シンプレックス法 ====================
def _northwest_corner(a: np.ndarray, b: np.ndarray) -> Dict[Cell, float]:
    """m+n−1 個の基底セルを持つ階段状の初期解（行と列が同時に尽きたら行を進める）"""
    m, n = len(a), len(b)
    row = a.copy()
    col = b.copy()
    basis: Dict[Cell, float] = {}
    i = j = 0
    while True:
        x = min(row[i], col[j])
        basis[(i, j)] = x
        row[i] -= x
        col[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1 or row[i] <= col[j]:
            i += 1
        else:
            j += 1
    return basis


def _adjacency(basis: Dict[Cell, float], m: int, n: int) -> List[List[int]]:
    # ノード: 行 0..m-1、列 m..m+n-1
    adj: List[List[int]] = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _duals(basis: Dict[Cell, float], C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """u_i + v_j = C_ij（基底セル）を u_0 = 0 から木をたどって解く"""
    m, n = C.shape
    adj = _adjacency(basis, m, n)
    u = np.zeros(m)
    v = np.zeros(n)
    seen = [False] * (m + n)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other in adj[node]:
            if seen[other]:
                continue
            seen[other] = True
            if node < m:
                v[other - m] = C[node, other - m] - u[node]
            else:
                u[other] = C[other, node - m] - v[node - m]
            queue.append(other)
    return u, v


def _tree_path(basis: Dict[Cell, float], m: int, n: int, start: int, goal: int) -> List[int]:
    """基底木の上で start から goal までのノード列"""
    adj = _adjacency(basis, m, n)
    parent = {start: -1}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for other in adj[node]:
            if other not in parent:
                parent[other] = node
                queue.append(other)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def exact_ot(a: np.ndarray, b: np.ndarray, C: np.ndarray, n: Optional[int] = None) -> ExactSolution:
    """
    輸送シンプレックス法による厳密OT

    Args:
        a: 長さ m の供給
        b: 長さ n の需要（総和は a と一致）
        C: m×n コスト
        n: サイズの上限チェック用（省略時は C の大きさ）

    Returns:
        ExactSolution: 最適値・最適輸送計画・双対
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    m, k = C.shape
    size = max(m, k) if n is None else n
    if size > SIZE_LIMIT:
        raise errors.SizeGuard(f"n={size} > {SIZE_LIMIT}")
    if a.shape != (m,) or b.shape != (k,):
        raise ValueError("周辺分布とコスト行列の大きさが一致しません")
    if np.any(a < 0) or np.any(b < 0):
        raise errors.NegativeOrNonFiniteEntry("a/b", float(min(a.min(), b.min())))
    if abs(exact_mass(a) - exact_mass(b)) > MASS_TOL:
        raise errors.MassMismatch(f"|a|₁={exact_mass(a)}, |b|₁={exact_mass(b)}")

    basis = _northwest_corner(a, b)
    tol = 1e-12 * max(1.0, float(np.abs(C).max()))
    pivots = 0
    while True:
        u, v = _duals(basis, C)
        reduced = C - u[:, None] - v[None, :]
        # Bland: 添字 i·n+j が最小の負の被約費用
        candidates = np.flatnonzero(reduced.ravel() < -tol)
        candidates = [c for c in candidates if (int(c) // k, int(c) % k) not in basis]
        if not candidates:
            break
        if pivots >= MAX_PIVOTS:
            raise errors.NotConverged(f"ピボット回数が上限 {MAX_PIVOTS} に達しました")
        ei, ej = divmod(int(candidates[0]), k)

        # 閉路: 入るセル(+)、木の経路上のセルは −,+,−,... の順
        nodes = _tree_path(basis, m, k, ei, m + ej)
        cells: List[Cell] = []
        for x, y in zip(nodes[:-1], nodes[1:]):
            cells.append((x, y - m) if x < m else (y, x - m))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(basis[c] for c in minus)
        leaving = min((c for c in minus if basis[c] == theta), key=lambda c: c[0] * k + c[1])

        for c in plus:
            basis[c] += theta
        for c in minus:
            basis[c] -= theta
        del basis[leaving]
        basis[(ei, ej)] = theta
        pivots += 1

    plan = np.zeros((m, k))
    for (i, j), x in basis.items():
        plan[i, j] = max(x, 0.0)
    value = float(np.sum(plan * C))
    logger.debug(f"輸送シンプレックス: ピボット={pivots}, 値={value}")
    return ExactSolution(value=value, plan=plan, basis_size=len(basis), pivots=pivots, dual_row=u, dual_col=v)


def exact_kantorovich(a: np.ndarray, b: np.ndarray, M: GroundMetric, delta, p: float = 1.0) -> float:
    """
    厳密な K_{pΔ}(a, b)^p

    Args:
        a, b: S_d の要素
        M: 距離行列
        delta: Δ（スカラーまたは長さ d）
        p: 指数

    Returns:
        float: K^p
    """
    aug = build_augmented(M, delta=delta, p=p)
    return exact_ot(augment_histogram(a), augment_histogram(b), aug.mhat_p).value


# ==================== 格子探索による重心 ====================
def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    """total を parts 個の非負整数に分ける（辞書式順）"""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def grid_barycenter_oracle(
    c: HistogramCollection,
    M: GroundMetric,
    delta,
    p: float,
    rho: float,
    grid_step: float,
) -> Dict[str, object]:
    """
    {a ≥ 0, |a|₁ = ρ} の格子上で (1/N)Σ 厳密K^p を最小化

    Args:
        c: コレクション
        M: 距離行列（d ≤ 3）
        delta: Δ
        p: 指数
        rho: 目標質量
        grid_step: 格子幅（≤ 0.01ρ）

    Returns:
        Dict[str, object]: {"a_best", "value_best", "points"}
    """
    d = M.d
    if d > 3:
        raise errors.SizeGuard(f"格子探索は d ≤ 3 のみ対応しています（d={d}）")
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"ρ は (0,1] の範囲で指定してください（実際: {rho}）")
    if grid_step <= 0 or grid_step > 0.01 * rho * (1 + 1e-12):
        raise ValueError(f"grid_step は 0.01ρ 以下で指定してください（実際: {grid_step}）")

    aug = build_augmented(M, delta=delta, p=p)
    targets = [augment_histogram(row) for row in c.rows]
    K = max(1, int(round(rho / grid_step)))
    step = rho / K

    best_value = np.inf
    best: Optional[np.ndarray] = None
    points = 0
    for counts in _compositions(K, d):
        a = np.asarray(counts, dtype=float) * step
        a_aug = np.append(a, 1.0 - rho)
        total = 0.0
        for b_aug in targets:
            total += exact_ot(a_aug, b_aug, aug.mhat_p).value
        value = total / len(targets)
        points += 1
        # 同値（丸め誤差内）なら辞書式で先の点を残す
        if value < best_value - 1e-12 * max(1.0, abs(best_value)):
            best_value = value
            best = a
    logger.info(f"格子探索: {points}点, 最小値={best_value:.6g}")
    return {"a_best": best, "value_best": float(best_value), "points": points}


def enumerate_vertices(a: np.ndarray, b: np.ndarray, C: np.ndarray) -> float:
    """
    U(a,b) の頂点を全列挙した最小値（n ≤ 4 の検算用）

    基底（m+n−1 セルの全域木）ごとに一意な解を求め、実行可能なものの最小値を返す
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = C.shape
    cells = [(i, j) for i in range(m) for j in range(n)]
    best = np.inf
    for chosen in itertools.combinations(cells, m + n - 1):
        A = np.zeros((m + n, m + n - 1))
        for col, (i, j) in enumerate(chosen):
            A[i, col] = 1.0
            A[m + j, col] = 1.0
        rhs = np.concatenate([a, b])
        if np.linalg.matrix_rank(A) < m + n - 1:
            continue
        x, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        if np.any(x < -1e-12) or np.max(np.abs(A @ x - rhs)) > 1e-9:
            continue
        best = min(best, float(sum(x[t] * C[i, j] for t, (i, j) in enumerate(chosen))))
    return best
