"""
シミュレーションのテスト: 球面メッシュ・乱数・ラベル・3手法の比較
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import errors
from metric_build import mesh_geodesic_metric
from models import GridSpec, GroundMetric, Label, SimConfig, SolverConfig
from simulate import (
    METHOD_KANTOROVICH,
    METHOD_MEAN,
    METHOD_SMOOTHED,
    cap_labels,
    default_cap_centers,
    generate_subject,
    grid_neighbors,
    icosphere,
    mesh_neighbors,
    ring_dilate,
    run_grid_simulation,
    run_simulation,
    subject_rng,
    truncated_gaussian,
)

FAST_SOLVER = SolverConfig(max_outer=60)


# ==================== 球面メッシュ ====================
@pytest.mark.parametrize("k,nv", [(0, 12), (1, 42), (2, 162), (3, 642), (4, 2562)])
def test_icosphere_counts(k, nv):
    mesh = icosphere(k, 50.0)
    assert mesh.n_vertices == nv
    assert len(mesh.faces) == 20 * 4 ** k
    assert len(mesh.edges()) == 30 * 4 ** k
    np.testing.assert_allclose(np.linalg.norm(mesh.vertices, axis=1), 50.0, rtol=1e-12)


def test_icosphere_out_of_range():
    with pytest.raises(errors.SubdivisionOutOfRange):
        icosphere(6)
    with pytest.raises(errors.SubdivisionOutOfRange):
        icosphere(-1)


# ==================== 乱数 ====================
def test_truncated_gaussian_is_positive_and_centered():
    rng = subject_rng(7, 0)
    draws = np.array([truncated_gaussian(rng, 5.0, 1.0) for _ in range(100000)])
    assert draws.min() > 0
    assert 4.97 <= draws.mean() <= 5.03
    heavy = subject_rng(7, 1)
    assert all(truncated_gaussian(heavy, 0.0, 1.0) > 0 for _ in range(200))


def test_subject_streams_are_reproducible():
    a = subject_rng(42, 3).random(5)
    b = subject_rng(42, 3).random(5)
    c = subject_rng(42, 4).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c), "被験者ごとに別の乱数列であるべき"


def test_truncated_gaussian_rejects_bad_std():
    with pytest.raises(ValueError):
        truncated_gaussian(subject_rng(0, 0), 5.0, 0.0)


def test_generate_subject_places_one_spike_per_label():
    labels = [Label(name="A", vertex_ids=[0, 1, 2]), Label(name="B", vertex_ids=[5, 6])]
    for i in range(20):
        x = generate_subject(labels, subject_rng(11, i), 5.0, 1.0, 8)
        nonzero = np.flatnonzero(x)
        assert len(nonzero) == 2
        assert nonzero[0] in (0, 1, 2) and nonzero[1] in (5, 6)
        assert np.all(x >= 0)


# ==================== ラベルと近傍 ====================
def test_cap_labels_nearest_vertices():
    mesh = icosphere(2, 50.0)
    D = mesh_geodesic_metric(mesh)
    i, j = default_cap_centers(D)
    assert i == 0
    assert abs(D.D[0, j] - 0.5 * D.D[0].max()) == pytest.approx(np.abs(D.D[0] - 0.5 * D.D[0].max()).min())
    labels = cap_labels(D, (i, j), 10)
    assert [lab.name for lab in labels] == ["ROI1", "ROI2"]
    for lab, center in zip(labels, (i, j)):
        assert len(lab.vertex_ids) == 10
        assert center in lab.vertex_ids
        outside = np.setdiff1d(np.arange(D.d), lab.vertex_ids)
        assert D.D[center, lab.vertex_ids].max() <= D.D[center, outside].min()
    assert not set(labels[0].vertex_ids) & set(labels[1].vertex_ids)


def test_cap_labels_overlap_is_rejected():
    D = GroundMetric(D=np.abs(np.subtract.outer(np.arange(6.0), np.arange(6.0))))
    with pytest.raises(errors.InvalidLabel):
        cap_labels(D, (2, 3), 2)


def test_ring_dilate_and_mesh_neighbors():
    mesh = icosphere(0, 1.0)
    neighbors = mesh_neighbors(mesh)
    assert all(len(n) == 5 for n in neighbors), "正二十面体の各頂点は5近傍"
    assert ring_dilate([0], neighbors) == {0} | neighbors[0]


def test_grid_neighbors_face_adjacent():
    full = grid_neighbors(GridSpec(shape=(2, 2, 1), voxel_size_mm=(1, 1, 1)))
    assert full == [{1, 2}, {0, 3}, {0, 3}, {1, 2}]
    masked = grid_neighbors(GridSpec(shape=(3, 1, 1), voxel_size_mm=(1, 1, 1), mask=[0, 2]))
    assert masked == [set(), set()]


# ==================== 3手法の比較 ====================
def _small_config(**kw):
    base = dict(n_subjects=6, subdivisions=1, label_size=5, seed=3, solver=FAST_SOLVER)
    base.update(kw)
    return SimConfig(**base)


def test_run_simulation_masses_and_labels():
    report = run_simulation(_small_config())
    mean = report.method(METHOD_MEAN)
    smooth = report.method(METHOD_SMOOTHED)
    kmean = report.method(METHOD_KANTOROVICH)
    assert [m.name for m in report.methods] == [METHOD_MEAN, METHOD_SMOOTHED, METHOD_KANTOROVICH]
    assert smooth.total_mass == pytest.approx(mean.total_mass, abs=1e-9)
    assert kmean.total_mass == pytest.approx(report.mean_subject_mass, rel=1e-9)
    assert mean.total_mass == pytest.approx(report.mean_subject_mass, rel=1e-12)
    assert mean.peak_in_labels, "算術平均のピークはラベル内にあるはず"
    assert mean.label_mass_fraction == pytest.approx(1.0)
    assert len(report.labels) == 2
    assert report.d == 42
    assert 0 < report.subject_peak_mean
    assert report.barycenter.config_resolved.is_resolved


def test_run_simulation_is_deterministic():
    cfg = _small_config()
    first = run_simulation(cfg, threads=1)
    second = run_simulation(cfg, threads=3)
    assert first.model_dump() == second.model_dump(), "同じ設定なら同一の結果になるべき"


def test_run_simulation_with_given_labels():
    labels = [Label(name="A", vertex_ids=[0, 1]), Label(name="B", vertex_ids=[20, 21])]
    report = run_simulation(_small_config(labels=labels))
    assert [lab.name for lab in report.labels] == ["A", "B"]
    bad = [Label(name="A", vertex_ids=[0, 100])]
    with pytest.raises(errors.InvalidLabel):
        run_simulation(_small_config(labels=bad))


def test_run_grid_simulation():
    grid = GridSpec(shape=(6, 6, 1), voxel_size_mm=(3.0, 3.0, 3.0))
    report = run_grid_simulation(_small_config(label_size=4, fwhm_mm=6.0), grid)
    assert report.d == 36
    mean = report.method(METHOD_MEAN)
    assert report.method(METHOD_SMOOTHED).total_mass == pytest.approx(mean.total_mass, abs=1e-9)
    assert report.method(METHOD_KANTOROVICH).total_mass == pytest.approx(report.mean_subject_mass, rel=1e-9)


def test_default_radius_spacing_is_cortical_scale():
    mesh = icosphere(SimConfig().subdivisions, SimConfig().radius_mm)
    edges = np.asarray(mesh.edges())
    lengths = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
    assert 3.5 <= lengths.mean() <= 5.0, f"平均辺長 {lengths.mean():.3f} mm"


@pytest.mark.slow
def test_kantorovich_mean_keeps_foci_sharper_than_smoothing():
    # icosphere(2)・半径15mm は既定（icosphere(3)・半径30mm）とほぼ同じ頂点間隔
    cfg = SimConfig(n_subjects=8, subdivisions=2, radius_mm=15.0, label_size=7, seed=42, fwhm_mm=8.0)
    report = run_simulation(cfg, threads=2)
    smooth = report.method(METHOD_SMOOTHED)
    kmean = report.method(METHOD_KANTOROVICH)
    assert kmean.peak >= 2.0 * smooth.peak, f"ピーク: Kantorovich {kmean.peak:.4g} / 平滑化平均 {smooth.peak:.4g}"
    assert kmean.label_mass_fraction >= smooth.label_mass_fraction, (
        f"ラベル内質量比: Kantorovich {kmean.label_mass_fraction:.6f} / 平滑化平均 {smooth.label_mass_fraction:.6f}"
    )
    assert kmean.peak_in_labels
