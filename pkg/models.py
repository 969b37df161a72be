"""
Kantorovich平均 - データモデル定義
Pydantic v2対応、numpy配列は読み取り専用で保持
"""
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils import exact_mass

MASS_SLACK = 1e-12
SYMMETRY_TOL = 1e-12


# ==================== Enum定義 ====================
class Marker(str, Enum):
    """自動決定パラメータのマーカー"""
    AUTO = "auto"    # λ, step_c をデータから決める
    MEAN = "mean"    # ρ = 平均質量
    EXACT = "exact"  # 厳密OT（正則化なし）


def _frozen_array(value: Any, dtype: Any = float, ndim: Optional[int] = None) -> np.ndarray:
    arr = np.array(value, dtype=dtype, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{ndim}次元配列が必要です（実際: {arr.ndim}次元）")
    arr.setflags(write=False)
    return arr


class FrozenModel(BaseModel):
    """numpy配列を持つ不変モデルの共通設定"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# ==================== core ====================
class Histogram(FrozenModel):
    """S_d の要素（非負、質量 ≤ 1）"""
    values: np.ndarray = Field(..., description="長さ d の非負ベクトル")

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v: Any) -> np.ndarray:
        arr = _frozen_array(v, ndim=1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("NaN/Infが含まれています")
        if np.any(arr < 0):
            raise ValueError("負の成分が含まれています")
        if exact_mass(arr) > 1.0 + MASS_SLACK:
            raise ValueError(f"質量 {exact_mass(arr)} が1を超えています")
        return arr

    @property
    def d(self) -> int:
        return int(self.values.shape[0])

    @property
    def mass(self) -> float:
        return exact_mass(self.values)


class HistogramCollection(FrozenModel):
    """共通の d を持つ N 個のヒストグラムとスケール s"""
    rows: np.ndarray = Field(..., description="N×d 行列（各行が S_d の要素）")
    scale: float = Field(..., gt=0.0, description="元データ = rows × scale")

    @field_validator("rows", mode="before")
    @classmethod
    def validate_rows(cls, v: Any) -> np.ndarray:
        arr = _frozen_array(v, ndim=2)
        if arr.shape[0] < 1:
            raise ValueError("ヒストグラムが1件もありません")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("負の値または非有限値が含まれています")
        for j in range(arr.shape[0]):
            if exact_mass(arr[j]) > 1.0 + MASS_SLACK:
                raise ValueError(f"{j}行目の質量が1を超えています")
        return arr

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def d(self) -> int:
        return int(self.rows.shape[1])

    @property
    def masses(self) -> List[float]:
        return [exact_mass(row) for row in self.rows]


class GroundMetric(FrozenModel):
    """対称・対角0・非負・有限の d×d 距離行列 M"""
    D: np.ndarray = Field(..., description="d×d 距離行列（mm単位など）")

    @field_validator("D", mode="before")
    @classmethod
    def validate_matrix(cls, v: Any) -> np.ndarray:
        arr = _frozen_array(v, ndim=2)
        if arr.shape[0] != arr.shape[1]:
            raise ValueError(f"正方行列が必要です（実際: {arr.shape}）")
        if not np.all(np.isfinite(arr)):
            raise ValueError("NaN/Infが含まれています")
        if np.any(arr < 0):
            raise ValueError("負の距離が含まれています")
        if np.any(np.diag(arr) != 0.0):
            raise ValueError("対角成分が0ではありません")
        scale = max(1.0, float(arr.max())) if arr.size else 1.0
        if arr.size and float(np.max(np.abs(arr - arr.T))) > SYMMETRY_TOL * scale:
            raise ValueError("行列が対称ではありません")
        return arr

    @property
    def d(self) -> int:
        return int(self.D.shape[0])


class SolverConfig(BaseModel):
    """重心計算のパラメータ（AUTO/MEAN は求解前に解決する）"""
    p: float = Field(default=1.0, ge=1.0, description="コストの指数 p")
    lam: Union[float, Marker] = Field(default=Marker.AUTO, description="エントロピー正則化 λ（AUTO = 100/median）")
    q: float = Field(default=95.0, gt=0.0, le=100.0, description="Δ を決める分位点（%）")
    step_c: Union[float, Marker] = Field(default=Marker.AUTO, description="指数勾配のステップ幅 c")
    tol_outer: float = Field(default=1e-6, gt=0.0, description="外側反復の ℓ1 変化量しきい値")
    max_outer: int = Field(default=500, ge=1, description="外側反復の上限")
    tol_sinkhorn: float = Field(default=1e-9, gt=0.0, description="Sinkhornの周辺誤差しきい値")
    max_sinkhorn: int = Field(default=10000, ge=1, description="Sinkhorn反復の上限")
    rho: Union[float, Marker] = Field(default=Marker.MEAN, description="目標質量 ρ（MEAN = 平均質量）")
    delta: Optional[List[float]] = Field(default=None, description="Δ を直接与える場合のベクトル（Noneなら分位点）")
    threads: int = Field(default=1, ge=1, exclude=True, description="N個の双対問題を解くワーカー数（レポートには出さない）")

    @field_validator("lam", "step_c")
    @classmethod
    def validate_positive_or_auto(cls, v: Union[float, Marker]) -> Union[float, Marker]:
        if isinstance(v, Marker):
            if v != Marker.AUTO:
                raise ValueError("AUTO または正の数を指定してください")
            return v
        if not np.isfinite(v) or v <= 0:
            raise ValueError("正の数を指定してください")
        return float(v)

    @field_validator("rho")
    @classmethod
    def validate_rho(cls, v: Union[float, Marker]) -> Union[float, Marker]:
        if isinstance(v, Marker):
            if v != Marker.MEAN:
                raise ValueError("MEAN または (0,1] の数を指定してください")
            return v
        if not (0.0 < v <= 1.0):
            raise ValueError("ρ は (0,1] の範囲で指定してください")
        return float(v)

    @property
    def is_resolved(self) -> bool:
        return not any(isinstance(x, Marker) for x in (self.lam, self.step_c, self.rho))


# ==================== metric_build ====================
class GridSpec(BaseModel):
    """ボクセル格子（x が最速で変わる線形インデックス）"""
    shape: Tuple[int, int, int] = Field(..., description="(nx, ny, nz)")
    voxel_size_mm: Tuple[float, float, float] = Field(..., description="(dx, dy, dz) mm")
    mask: Optional[List[int]] = Field(default=None, description="残すボクセルの線形インデックス（昇順）")

    @field_validator("shape")
    @classmethod
    def validate_shape(cls, v: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(n < 1 for n in v):
            raise ValueError("shape は正の整数で指定してください")
        return v

    @field_validator("voxel_size_mm")
    @classmethod
    def validate_voxel_size(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(not np.isfinite(x) or x <= 0 for x in v):
            raise ValueError("voxel_size_mm は正の数で指定してください")
        return v

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    @property
    def d(self) -> int:
        return len(self.mask) if self.mask is not None else self.n_voxels

    def voxel_indices(self) -> np.ndarray:
        if self.mask is not None:
            return np.asarray(self.mask, dtype=np.int64)
        return np.arange(self.n_voxels, dtype=np.int64)

    def centers_mm(self) -> np.ndarray:
        """残したボクセルの中心座標（(index + 0.5) × size）"""
        nx, ny, _ = self.shape
        idx = self.voxel_indices()
        x = idx % nx
        y = (idx // nx) % ny
        z = idx // (nx * ny)
        grid = np.stack([x, y, z], axis=1).astype(float) + 0.5
        return grid * np.asarray(self.voxel_size_mm, dtype=float)


class TriMesh(FrozenModel):
    """三角形メッシュ（頂点座標 mm、面は頂点インデックスの3つ組）"""
    vertices: np.ndarray = Field(..., description="(nv, 3) 頂点座標")
    faces: np.ndarray = Field(..., description="(nf, 3) 面")

    @field_validator("vertices", mode="before")
    @classmethod
    def validate_vertices(cls, v: Any) -> np.ndarray:
        arr = _frozen_array(v, ndim=2)
        if arr.shape[1] != 3:
            raise ValueError("頂点は3次元座標で指定してください")
        if not np.all(np.isfinite(arr)):
            raise ValueError("頂点座標に非有限値が含まれています")
        return arr

    @field_validator("faces", mode="before")
    @classmethod
    def validate_faces(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.int64).reshape(-1, 3)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def check_faces(self) -> "TriMesh":
        nv = self.vertices.shape[0]
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= nv:
                raise ValueError("面の頂点インデックスが範囲外です")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("同じ頂点を繰り返す退化した面があります")
        return self

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    def edges(self) -> np.ndarray:
        """重複のない無向辺 (i < j) の一覧"""
        f = self.faces
        if f.size == 0:
            return np.zeros((0, 2), dtype=np.int64)
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
        pairs = np.sort(pairs, axis=1)
        return np.unique(pairs, axis=0)


class Label(BaseModel):
    """頂点集合のラベル（例: BA45, MT の代替）"""
    name: str = Field(..., description="ラベル名")
    vertex_ids: List[int] = Field(..., description="頂点インデックス（重複なし、昇順）")

    @field_validator("vertex_ids")
    @classmethod
    def validate_ids(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("vertex_ids が空です")
        if len(set(v)) != len(v):
            raise ValueError("vertex_ids に重複があります")
        if min(v) < 0:
            raise ValueError("vertex_ids に負の値があります")
        return sorted(v)


class ValidationReport(BaseModel):
    """距離の公理チェック結果"""
    d: int
    max_symmetry_violation: float
    max_negative_entry: float = Field(..., description="最も負の成分の大きさ（負がなければ0）")
    max_diagonal_magnitude: float
    triangle_checked: bool
    max_triangle_violation: Optional[float] = Field(default=None, description="max D[i][j] − D[i][k] − D[k][j]")
    is_metric: bool


# ==================== kantorovich ====================
class AdmissibilityReport(BaseModel):
    """Δ の許容条件"""
    strict_norm: bool = Field(..., description="Δ_i ≥ max_j m_ij かつ |Δ_i − Δ_j| ≤ m_ij")
    metric_ok: bool = Field(..., description="m_ij ≤ Δ_i + Δ_j（M̂ が距離行列）")
    max_row_violation: float = Field(..., description="max_i (max_j m_ij − Δ_i)_+")
    max_lipschitz_violation: float = Field(..., description="max_ij (|Δ_i − Δ_j| − m_ij)_+")
    max_metric_violation: float = Field(..., description="max_ij (m_ij − Δ_i − Δ_j)_+")


class AugmentedCost(FrozenModel):
    """仮想点を加えた (d+1)×(d+1) のコスト M̂^p"""
    mhat_p: np.ndarray = Field(..., description="M̂ の要素ごとの p 乗")
    delta: np.ndarray = Field(..., description="仮想点への距離 Δ（長さ d）")
    p: float = Field(..., ge=1.0)
    q: Optional[float] = Field(default=None, description="Δ を分位点から作った場合の q")
    admissibility: AdmissibilityReport

    @field_validator("mhat_p", "delta", mode="before")
    @classmethod
    def freeze(cls, v: Any) -> np.ndarray:
        return _frozen_array(v)

    @property
    def d(self) -> int:
        return int(self.delta.shape[0])


# ==================== sinkhorn / oracle ====================
class SinkhornSolution(FrozenModel):
    """エントロピー正則化OTの解"""
    value: float = Field(..., description="OT_λ = ⟨T,C⟩ − H(T)/λ")
    dual_a: np.ndarray = Field(..., description="中心化した双対ポテンシャル α（台の外は0）")
    dual_b: np.ndarray = Field(..., description="中心化した双対ポテンシャル β（台の外は0）")
    support_a: np.ndarray = Field(..., description="a の台（bool）")
    support_b: np.ndarray = Field(..., description="b の台（bool）")
    plan: Optional[np.ndarray] = Field(default=None, description="n×n 輸送計画")
    iterations: int
    marginal_err: float = Field(..., description="a 側周辺の ℓ1 誤差")
    converged: bool
    log_domain: bool = Field(default=False, description="吸収（対数領域）に切り替えたか")
    err_history: List[float] = Field(default_factory=list, description="10反復ごとの周辺誤差")


class ExactSolution(FrozenModel):
    """輸送シンプレックス法による厳密解"""
    value: float
    plan: np.ndarray
    basis_size: int
    pivots: int = 0
    dual_row: Optional[np.ndarray] = Field(default=None, description="行ポテンシャル u（u_0 = 0）")
    dual_col: Optional[np.ndarray] = Field(default=None, description="列ポテンシャル v")


# ==================== barycenter ====================
class BarycenterState(FrozenModel):
    """外側反復の状態（射影後）"""
    a: np.ndarray = Field(..., description="長さ d+1（最後が仮想ビン）")
    iter: int
    objective: float
    last_change: float


class BarycenterReport(BaseModel):
    """Kantorovich平均の結果"""
    barycenter: List[float] = Field(..., description="元データ単位の重心（長さ d）")
    rho_scaled: float = Field(..., description="元データ単位の質量 ρ·s")
    objective_trajectory: List[float] = Field(default_factory=list)
    change_trajectory: List[float] = Field(default_factory=list, description="射影後反復の ℓ1 変化量")
    iterations: int
    converged: bool
    config_resolved: SolverConfig
    delta_value: List[float] = Field(..., description="使用した Δ（元の距離単位）")
    scale: float = Field(..., description="コレクションのスケール s")
    inner_iterations_total: int = 0
    returned_iteration: int = Field(default=0, description="返した重心の反復番号（未収束時は射影後の反復のうち目的関数が最小のもの）")
    inner_not_converged: int = 0
    admissibility: Optional[AdmissibilityReport] = None


# ==================== baselines ====================
class SmoothingKernel(FrozenModel):
    """列正規化したガウスカーネル"""
    W: np.ndarray
    fwhm_mm: float = Field(..., gt=0.0)
    sigma_mm: float = Field(..., gt=0.0)

    @field_validator("W", mode="before")
    @classmethod
    def freeze(cls, v: Any) -> np.ndarray:
        return _frozen_array(v, ndim=2)


# ==================== simulate ====================
class SimConfig(BaseModel):
    """シミュレーション設定"""
    n_subjects: int = Field(default=20, ge=1, description="被験者数")
    amp_mean: float = Field(default=5.0, description="振幅の平均")
    amp_std: float = Field(default=1.0, gt=0.0, description="振幅の標準偏差")
    labels: Optional[List[Label]] = Field(default=None, description="未指定なら2つの測地キャップを生成")
    fwhm_mm: float = Field(default=8.0, gt=0.0)
    seed: int = Field(default=42, ge=0, lt=2**64)
    subdivisions: int = Field(default=3, ge=0, le=5)
    radius_mm: float = Field(default=30.0, gt=0.0, description="球面の半径（icosphere(3) で頂点間隔が約4〜5mm）")
    label_size: int = Field(default=25, ge=1, description="生成するキャップの頂点数")
    solver: SolverConfig = Field(default_factory=SolverConfig)

    @model_validator(mode="after")
    def check_labels(self) -> "SimConfig":
        if self.labels is not None:
            seen: set = set()
            for label in self.labels:
                if seen.intersection(label.vertex_ids):
                    raise ValueError("ラベル同士が重なっています")
                seen.update(label.vertex_ids)
        return self


class MethodSummary(BaseModel):
    """手法ごとの要約（Mean / Mean (S) / Kantorovich）"""
    name: str
    peak: float
    peak_index: int
    peak_in_labels: bool
    total_mass: float
    label_mass_fraction: float = Field(..., description="1リング膨張したラベル内の質量比")
    vector: List[float]


class SimulationReport(BaseModel):
    """シミュレーション結果"""
    config: SimConfig
    d: int
    labels: List[Label]
    methods: List[MethodSummary]
    subject_peak_mean: float = Field(..., description="被験者ごとのピーク振幅の平均")
    mean_subject_mass: float
    barycenter: BarycenterReport

    def method(self, name: str) -> MethodSummary:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)


# ==================== 実行メタ情報 ====================
class RunReport(BaseModel):
    """CLI実行ごとのレポート（再実行に十分な情報）"""
    command: str
    argv: List[str]
    parameters: Dict[str, Any] = Field(default_factory=dict, description="AUTOを解決した全パラメータ")
    versions: Dict[str, str] = Field(default_factory=dict)
    timings: Dict[str, float] = Field(default_factory=dict, description="段階ごとの所要時間（秒）")
    outputs: List[str] = Field(default_factory=list)
    exit_code: int = 0
    error: Optional[Dict[str, Any]] = None
