"""
Kantorovich平均 - 距離行列の構築
ボクセル格子（ユークリッド距離）と三角形メッシュ（辺グラフ上の測地距離）、距離の公理チェック
"""
from typing import List, Optional

import numpy as np
from pydantic import ValidationError
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial.distance import cdist

import errors
from config import get_settings
from models import GridSpec, GroundMetric, TriMesh, ValidationReport
from utils import get_logger, parallel_map

logger = get_logger(__name__)

# Dijkstra を何始点ずつまとめて実行するか
_DIJKSTRA_CHUNK = 64


def _check_size(d: int, cap: Optional[int]) -> None:
    limit = cap if cap is not None else get_settings().metric_cap
    if d > limit:
        raise errors.MetricTooLarge(f"d={d} > 上限 {limit}", d=d, cap=limit)
    if d < 2:
        raise errors.DegenerateMetric(f"d={d}")


def as_ground_metric(D: np.ndarray) -> GroundMetric:
    """
    行列を GroundMetric に変換（公理違反は InvalidMetric）

    Args:
        D: d×d 行列

    Returns:
        GroundMetric: 検証済み距離行列
    """
    try:
        return GroundMetric(D=D)
    except ValidationError as e:
        raise errors.InvalidMetric(e.errors()[0].get("msg", str(e))) from e


def grid_metric(g: GridSpec, cap: Optional[int] = None) -> GroundMetric:
    """
    ボクセル中心間のユークリッド距離（mm）

    Args:
        g: 格子定義
        cap: d の上限（Noneなら設定値）

    Returns:
        GroundMetric: d×d 距離行列
    """
    if g.mask is not None:
        mask = np.asarray(g.mask, dtype=np.int64)
        if mask.size and (mask.min() < 0 or mask.max() >= g.n_voxels):
            raise errors.InvalidMask(f"インデックスは 0〜{g.n_voxels - 1} の範囲で指定してください")
        if np.any(np.diff(mask) <= 0):
            raise errors.InvalidMask("インデックスは狭義単調増加である必要があります")
    _check_size(g.d, cap)

    centers = g.centers_mm()
    D = cdist(centers, centers)
    np.fill_diagonal(D, 0.0)
    D = 0.5 * (D + D.T)
    logger.info(f"格子距離を構築しました: d={g.d}, shape={g.shape}")
    return GroundMetric(D=D)


def edge_graph(m: TriMesh) -> sparse.csr_matrix:
    """辺の長さを重みとする無向隣接行列（重複辺は1本にまとめる）"""
    edges = m.edges()
    n = m.n_vertices
    if edges.shape[0] == 0:
        return sparse.csr_matrix((n, n))
    lengths = np.linalg.norm(m.vertices[edges[:, 0]] - m.vertices[edges[:, 1]], axis=1)
    i = np.concatenate([edges[:, 0], edges[:, 1]])
    j = np.concatenate([edges[:, 1], edges[:, 0]])
    w = np.concatenate([lengths, lengths])
    return sparse.csr_matrix((w, (i, j)), shape=(n, n))


def mesh_geodesic_metric(m: TriMesh, cap: Optional[int] = None, threads: int = 1) -> GroundMetric:
    """
    辺グラフ上の最短路距離（辺の重み = ユークリッド長）

    Args:
        m: 三角形メッシュ
        cap: d の上限（Noneなら設定値）
        threads: Dijkstra を並列に実行するワーカー数

    Returns:
        GroundMetric: d×d 距離行列
    """
    d = m.n_vertices
    _check_size(d, cap)

    graph = edge_graph(m)
    n_components, labels = connected_components(graph, directed=False)
    if n_components > 1:
        sizes = sorted((int(x) for x in np.bincount(labels)), reverse=True)
        raise errors.DisconnectedMesh(sizes)

    # 各行は始点ごとに独立（スレッド数に依存しない）
    chunks: List[np.ndarray] = [
        np.arange(start, min(start + _DIJKSTRA_CHUNK, d)) for start in range(0, d, _DIJKSTRA_CHUNK)
    ]
    rows = parallel_map(lambda idx: dijkstra(graph, directed=False, indices=idx), chunks, threads)
    D = np.vstack(rows)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    logger.info(f"測地距離を構築しました: d={d}, 辺数={graph.nnz // 2}")
    return GroundMetric(D=D)


def validate_metric(D, check_triangle: bool = True, triangle_cap: Optional[int] = None) -> ValidationReport:
    """
    距離の公理をチェック（レポートのみ、例外は出さない）

    Args:
        D: GroundMetric または d×d 行列
        check_triangle: 三角不等式もチェックするか
        triangle_cap: 三角不等式をチェックする最大 d

    Returns:
        ValidationReport: 各違反量の最大値
    """
    A = np.asarray(D.D if isinstance(D, GroundMetric) else D, dtype=float)
    d = int(A.shape[0])
    finite = bool(np.all(np.isfinite(A)))

    sym = float(np.max(np.abs(A - A.T))) if d else 0.0
    neg = float(max(0.0, -A.min())) if d else 0.0
    diag = float(np.max(np.abs(np.diag(A)))) if d else 0.0

    limit = triangle_cap if triangle_cap is not None else get_settings().triangle_cap
    tri: Optional[float] = None
    checked = bool(check_triangle and d <= limit and finite)
    if checked:
        tri = 0.0 if d else None
        for k in range(d):
            viol = float(np.max(A - (A[:, k][:, None] + A[k, :][None, :])))
            tri = max(tri, viol)
    elif check_triangle:
        logger.warning(f"d={d} が上限 {limit} を超えるため三角不等式のチェックを省略しました")

    scale = max(1.0, float(np.max(np.abs(A)))) if d and finite else 1.0
    is_metric = (
        finite
        and sym <= 1e-12 * scale
        and neg == 0.0
        and diag == 0.0
        and (tri is None or tri <= 1e-9)
    )
    return ValidationReport(
        d=d,
        max_symmetry_violation=sym,
        max_negative_entry=neg,
        max_diagonal_magnitude=diag,
        triangle_checked=checked,
        max_triangle_violation=tri,
        is_metric=bool(is_metric),
    )
