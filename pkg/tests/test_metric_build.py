"""
距離行列構築のテスト: 格子距離・測地距離・公理チェック
"""
import itertools
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import errors
from metric_build import as_ground_metric, grid_metric, mesh_geodesic_metric, validate_metric
from models import GridSpec, TriMesh


def _brute_force_geodesic(mesh: TriMesh) -> np.ndarray:
    """単純パスを全列挙して最短路を求める（8頂点以下）"""
    n = mesh.n_vertices
    length = {}
    for i, j in mesh.edges():
        w = float(np.linalg.norm(mesh.vertices[i] - mesh.vertices[j]))
        length[(int(i), int(j))] = w
        length[(int(j), int(i))] = w
    D = np.full((n, n), np.inf)
    np.fill_diagonal(D, 0.0)
    for i, j in itertools.permutations(range(n), 2):
        others = [k for k in range(n) if k not in (i, j)]
        for r in range(len(others) + 1):
            for middle in itertools.permutations(others, r):
                path = (i, *middle, j)
                steps = list(zip(path[:-1], path[1:]))
                if all(s in length for s in steps):
                    D[i, j] = min(D[i, j], sum(length[s] for s in steps))
    return D


def test_grid_two_voxels():
    D = grid_metric(GridSpec(shape=(2, 1, 1), voxel_size_mm=(3, 3, 3)))
    np.testing.assert_allclose(D.D, [[0, 3], [3, 0]])


def test_grid_diagonal_neighbors():
    D = grid_metric(GridSpec(shape=(2, 2, 1), voxel_size_mm=(1, 1, 1)))
    # 線形インデックス: (0,0,0)=0, (1,1,0)=3
    assert D.D[0, 3] == pytest.approx(math.sqrt(2))


def test_grid_mask_restricted():
    D = grid_metric(GridSpec(shape=(3, 1, 1), voxel_size_mm=(2, 2, 2), mask=[0, 2]))
    np.testing.assert_allclose(D.D, [[0, 4], [4, 0]])


def test_grid_anisotropic_voxels():
    D = grid_metric(GridSpec(shape=(1, 2, 2), voxel_size_mm=(1, 2, 3)))
    # (0,1,1) は index 3
    assert D.D[0, 3] == pytest.approx(math.sqrt(4 + 9))


def test_grid_invalid_mask():
    with pytest.raises(errors.InvalidMask):
        grid_metric(GridSpec(shape=(2, 1, 1), voxel_size_mm=(1, 1, 1), mask=[0, 5]))
    with pytest.raises(errors.InvalidMask):
        grid_metric(GridSpec(shape=(3, 1, 1), voxel_size_mm=(1, 1, 1), mask=[2, 0]))


def test_grid_too_large():
    with pytest.raises(errors.MetricTooLarge):
        grid_metric(GridSpec(shape=(10, 10, 1), voxel_size_mm=(1, 1, 1)), cap=50)


def test_grid_satisfies_triangle_inequality():
    D = grid_metric(GridSpec(shape=(3, 3, 2), voxel_size_mm=(1.5, 1, 2)))
    report = validate_metric(D, check_triangle=True)
    assert report.is_metric, f"格子距離は距離の公理を満たすべき: {report}"


def test_mesh_single_triangle():
    mesh = TriMesh(vertices=[[0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]], faces=[[0, 1, 2]])
    D = mesh_geodesic_metric(mesh)
    off = D.D[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, 1.0)


def test_mesh_collinear_strip():
    mesh = TriMesh(
        vertices=[[0, 0, 0], [1, 0, 0], [2, 0, 0], [1, 1, 0]],
        faces=[[0, 1, 3], [1, 2, 3]],
    )
    D = mesh_geodesic_metric(mesh)
    assert D.D[0, 2] == pytest.approx(2.0)


def test_mesh_square_follows_edges():
    mesh = TriMesh(vertices=[[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], faces=[[0, 1, 2], [0, 2, 3]])
    D = mesh_geodesic_metric(mesh)
    assert D.D[1, 3] == pytest.approx(2.0), "対角線で結ばれない角同士は境界を回る"
    assert D.D[0, 2] == pytest.approx(math.sqrt(2))


def test_mesh_matches_brute_force():
    rng = np.random.default_rng(3)
    vertices = rng.random((6, 3))
    faces = [[0, 1, 2], [1, 2, 3], [2, 3, 4], [3, 4, 5], [0, 4, 5]]
    mesh = TriMesh(vertices=vertices, faces=faces)
    np.testing.assert_allclose(mesh_geodesic_metric(mesh).D, _brute_force_geodesic(mesh), atol=1e-12)


def test_mesh_permutation_consistency():
    rng = np.random.default_rng(4)
    vertices = rng.random((5, 3))
    faces = np.array([[0, 1, 2], [1, 2, 3], [2, 3, 4]])
    perm = rng.permutation(5)
    inv = np.argsort(perm)
    # 新しい頂点 perm[i] = 元の頂点 i
    permuted = TriMesh(vertices=vertices[inv], faces=perm[faces])
    D = mesh_geodesic_metric(TriMesh(vertices=vertices, faces=faces)).D
    Dp = mesh_geodesic_metric(permuted).D
    np.testing.assert_allclose(Dp[np.ix_(perm, perm)], D, atol=1e-12)


def test_mesh_disconnected():
    mesh = TriMesh(
        vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0], [9, 9, 9]],
        faces=[[0, 1, 2], [3, 4, 5]],
    )
    with pytest.raises(errors.DisconnectedMesh) as exc:
        mesh_geodesic_metric(mesh)
    assert exc.value.component_sizes == [3, 3, 1]


def test_mesh_thread_count_does_not_change_result():
    from simulate import icosphere

    mesh = icosphere(2, 50.0)
    one = mesh_geodesic_metric(mesh, threads=1).D
    four = mesh_geodesic_metric(mesh, threads=4).D
    assert np.array_equal(one, four), "スレッド数によらず同一の結果であるべき"
    report = validate_metric(one)
    assert report.max_triangle_violation <= 1e-9


def test_validate_metric_reports():
    ok = validate_metric(np.array([[0, 5], [5, 0]]))
    assert ok.is_metric and ok.max_symmetry_violation == 0.0
    bad = validate_metric(np.array([[0, 1], [2, 0]]))
    assert bad.max_symmetry_violation == 1.0
    assert not bad.is_metric


def test_validate_metric_detects_triangle_violation():
    report = validate_metric(np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]]))
    assert report.max_triangle_violation == pytest.approx(3.0)
    assert not report.is_metric


def test_validate_metric_skips_triangle_above_cap():
    report = validate_metric(np.zeros((4, 4)), check_triangle=True, triangle_cap=3)
    assert not report.triangle_checked
    assert report.max_triangle_violation is None


def test_as_ground_metric_rejects_asymmetric():
    with pytest.raises(errors.InvalidMetric):
        as_ground_metric(np.array([[0, 1], [2, 0]]))
