"""
Kantorovich平均 - シミュレーション
2つのラベル領域に局在した正の信号を被験者ごとに生成し、Mean / Mean (S) / Kantorovich平均を比較
"""
import math
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np

import errors
from baselines import euclidean_mean, smoothed_mean
from barycenter import kantorovich_mean
from core import rescale_collection
from metric_build import grid_metric, mesh_geodesic_metric
from models import GridSpec, GroundMetric, Label, MethodSummary, SimConfig, SimulationReport, TriMesh
from utils import exact_mass, get_logger, parallel_map

logger = get_logger(__name__)

MAX_SUBDIVISIONS = 5
METHOD_MEAN = "Mean"
METHOD_SMOOTHED = "Mean (S)"
METHOD_KANTOROVICH = "Kantorovich"

_PHI = (1.0 + math.sqrt(5.0)) / 2.0
_ICOSAHEDRON_VERTICES = [
    [-1.0, _PHI, 0.0], [1.0, _PHI, 0.0], [-1.0, -_PHI, 0.0], [1.0, -_PHI, 0.0],
    [0.0, -1.0, _PHI], [0.0, 1.0, _PHI], [0.0, -1.0, -_PHI], [0.0, 1.0, -_PHI],
    [_PHI, 0.0, -1.0], [_PHI, 0.0, 1.0], [-_PHI, 0.0, -1.0], [-_PHI, 0.0, 1.0],
]
_ICOSAHEDRON_FACES = [
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [5, 4, 9], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
]


# ==================== 球面メッシュ ====================
def icosphere(subdivisions: int, radius_mm: float = 30.0) -> TriMesh:
    """
    正二十面体を細分割して球面に射影したメッシュ

    Args:
        subdivisions: 細分割回数（0〜5）
        radius_mm: 半径

    Returns:
        TriMesh: 頂点数 10·4^k + 2
    """
    if not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise errors.SubdivisionOutOfRange(f"subdivisions={subdivisions}")
    vertices = [np.asarray(v) / np.linalg.norm(v) for v in _ICOSAHEDRON_VERTICES]
    faces = [tuple(f) for f in _ICOSAHEDRON_FACES]

    for _ in range(subdivisions):
        midpoint_cache = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in midpoint_cache:
                m = vertices[i] + vertices[j]
                vertices.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(vertices) - 1
            return midpoint_cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = refined

    return TriMesh(vertices=np.asarray(vertices) * radius_mm, faces=np.asarray(faces, dtype=np.int64))


# ==================== 信号生成 ====================
def subject_rng(seed: int, index: int) -> np.random.Generator:
    """被験者 index 専用の乱数列（PCG64、SeedSequence の spawn_key で分岐）"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def truncated_gaussian(rng: np.random.Generator, mean: float, std: float) -> float:
    """
    正規分布 N(mean, std²) を 0 で切断（正の値が出るまで棄却）

    Args:
        rng: 乱数生成器
        mean: 平均
        std: 標準偏差（> 0）

    Returns:
        float: 正の値
    """
    if not std > 0:
        raise ValueError(f"標準偏差は正の値で指定してください（実際: {std}）")
    while True:
        x = float(rng.normal(mean, std))
        if x > 0.0:
            return x


def _check_labels(labels: Sequence[Label], d: int) -> None:
    if not labels:
        raise errors.InvalidLabel("ラベルが1つもありません")
    seen: Set[int] = set()
    for label in labels:
        if label.vertex_ids[-1] >= d:
            raise errors.InvalidLabel(f"{label.name}: 頂点 {label.vertex_ids[-1]} は範囲外です（d={d}）")
        if seen.intersection(label.vertex_ids):
            raise errors.InvalidLabel(f"{label.name}: 他のラベルと重なっています")
        seen.update(label.vertex_ids)


def generate_subject(
    labels: Sequence[Label],
    rng: np.random.Generator,
    amp_mean: float,
    amp_std: float,
    d: int,
) -> np.ndarray:
    """
    ラベルごとに一様に選んだ1頂点へ切断ガウス振幅を置いた信号

    Returns:
        np.ndarray: 非ゼロ成分がラベル数だけあるベクトル
    """
    x = np.zeros(d)
    for label in labels:
        vertex = label.vertex_ids[int(rng.integers(len(label.vertex_ids)))]
        x[vertex] = truncated_gaussian(rng, amp_mean, amp_std)
    return x


# ==================== ラベルと近傍 ====================
def default_cap_centers(D: GroundMetric) -> Tuple[int, int]:
    """頂点0と、頂点0からの距離が最大距離の半分に最も近い頂点"""
    row = D.D[0]
    target = 0.5 * float(row.max())
    return 0, int(np.argmin(np.abs(row - target)))


def cap_labels(
    D: GroundMetric,
    centers: Sequence[int],
    size: int,
    names: Optional[Sequence[str]] = None,
) -> List[Label]:
    """
    中心に近い順（同距離は番号順）に size 個の頂点を集めたラベル

    Args:
        D: 距離行列
        centers: 中心頂点
        size: 各ラベルの頂点数
        names: ラベル名（省略時は ROI1, ROI2, ...）

    Returns:
        List[Label]: 互いに重ならないラベル
    """
    if size < 1 or size > D.d:
        raise errors.InvalidLabel(f"size={size}（d={D.d}）")
    names = list(names) if names is not None else [f"ROI{k + 1}" for k in range(len(centers))]
    order = np.arange(D.d)
    labels = []
    for name, center in zip(names, centers):
        nearest = np.lexsort((order, D.D[center]))[:size]
        labels.append(Label(name=name, vertex_ids=[int(v) for v in nearest]))
    _check_labels(labels, D.d)
    return labels


def mesh_neighbors(mesh: TriMesh) -> List[Set[int]]:
    neighbors: List[Set[int]] = [set() for _ in range(mesh.n_vertices)]
    for i, j in mesh.edges():
        neighbors[int(i)].add(int(j))
        neighbors[int(j)].add(int(i))
    return neighbors


def grid_neighbors(grid: GridSpec) -> List[Set[int]]:
    """面で接するボクセル（マスク内の位置で表す）"""
    nx, ny, nz = grid.shape
    idx = grid.voxel_indices()
    position = {int(v): k for k, v in enumerate(idx)}
    neighbors: List[Set[int]] = [set() for _ in range(len(idx))]
    for k, v in enumerate(idx):
        x, y, z = int(v) % nx, (int(v) // nx) % ny, int(v) // (nx * ny)
        for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
            X, Y, Z = x + dx, y + dy, z + dz
            if 0 <= X < nx and 0 <= Y < ny and 0 <= Z < nz:
                other = position.get(X + nx * (Y + ny * Z))
                if other is not None:
                    neighbors[k].add(other)
    return neighbors


def ring_dilate(ids: Sequence[int], neighbors: Sequence[Set[int]]) -> Set[int]:
    """頂点集合を1リング分広げる"""
    out = set(int(i) for i in ids)
    for i in ids:
        out.update(neighbors[int(i)])
    return out


# ==================== 比較 ====================
def _summarize(name: str, vector: np.ndarray, inside: Set[int], dilated: Set[int]) -> MethodSummary:
    peak_index = int(np.argmax(vector))
    total = exact_mass(vector)
    near = exact_mass(vector[sorted(dilated)]) if dilated else 0.0
    return MethodSummary(
        name=name,
        peak=float(vector[peak_index]),
        peak_index=peak_index,
        peak_in_labels=peak_index in inside,
        total_mass=total,
        label_mass_fraction=near / total if total > 0 else 0.0,
        vector=[float(x) for x in vector],
    )


def _run_protocol(
    cfg: SimConfig,
    D: GroundMetric,
    neighbors: Sequence[Set[int]],
    threads: int,
) -> SimulationReport:
    labels = list(cfg.labels) if cfg.labels is not None else cap_labels(D, default_cap_centers(D), cfg.label_size)
    _check_labels(labels, D.d)

    subjects = parallel_map(
        lambda i: generate_subject(labels, subject_rng(cfg.seed, i), cfg.amp_mean, cfg.amp_std, D.d),
        list(range(cfg.n_subjects)),
        threads,
    )
    raw = np.vstack(subjects)
    logger.info(f"被験者データを生成しました: N={cfg.n_subjects}, d={D.d}, seed={cfg.seed}")

    mean = euclidean_mean(raw)
    smooth = smoothed_mean(raw, D, cfg.fwhm_mm, threads=threads)
    report = kantorovich_mean(rescale_collection(raw), D, cfg.solver, threads=threads)

    inside = set().union(*(lab.vertex_ids for lab in labels))
    dilated = ring_dilate(sorted(inside), neighbors)
    methods = [
        _summarize(METHOD_MEAN, mean, inside, dilated),
        _summarize(METHOD_SMOOTHED, smooth, inside, dilated),
        _summarize(METHOD_KANTOROVICH, np.asarray(report.barycenter), inside, dilated),
    ]
    for m in methods:
        logger.info(f"{m.name}: ピーク={m.peak:.4g}（頂点 {m.peak_index}）, ラベル内質量比={m.label_mass_fraction:.4f}")

    return SimulationReport(
        config=cfg,
        d=D.d,
        labels=labels,
        methods=methods,
        subject_peak_mean=math.fsum(float(s.max()) for s in subjects) / len(subjects),
        mean_subject_mass=math.fsum(exact_mass(s) for s in subjects) / len(subjects),
        barycenter=report,
    )


def run_simulation(cfg: SimConfig, mesh: Optional[TriMesh] = None, threads: Optional[int] = None) -> SimulationReport:
    """
    球面メッシュ上のシミュレーション

    Args:
        cfg: シミュレーション設定
        mesh: 使用するメッシュ（省略時は icosphere(cfg.subdivisions, cfg.radius_mm)）
        threads: ワーカー数（Noneなら cfg.solver.threads）

    Returns:
        SimulationReport: 3手法の比較結果
    """
    workers = threads if threads is not None else cfg.solver.threads
    if mesh is None:
        mesh = icosphere(cfg.subdivisions, cfg.radius_mm)
    D = mesh_geodesic_metric(mesh, threads=workers)
    return _run_protocol(cfg, D, mesh_neighbors(mesh), workers)


def run_grid_simulation(cfg: SimConfig, grid: GridSpec, threads: Optional[int] = None) -> SimulationReport:
    """
    ボクセル格子（ユークリッド距離）上の同じ手順。ラベルは距離の球

    Args:
        cfg: シミュレーション設定
        grid: 格子定義
        threads: ワーカー数

    Returns:
        SimulationReport: 3手法の比較結果
    """
    workers = threads if threads is not None else cfg.solver.threads
    D = grid_metric(grid)
    return _run_protocol(cfg, D, grid_neighbors(grid), workers)
