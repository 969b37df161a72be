"""
受け入れチェック: 番号付きの受け入れ基準をフル回数で実行
単体テストより遅いため、scripts/ から手動で実行する

使い方:
    python scripts/acceptance_check.py            # 1〜9, 11, 12
    python scripts/acceptance_check.py --scale    # 10（大規模・目安）も実行
    python scripts/acceptance_check.py --only 6 7
"""
import argparse
import math
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from barycenter import kantorovich_mean
from core import auto_lambda, mean_mass, rescale_collection
from file_io import read_matrix_csv, read_metric_cache, write_matrix_csv, write_metric_cache
from kantorovich import augment_histogram, build_augmented
from metric_build import as_ground_metric
from models import BarycenterState, GroundMetric, HistogramCollection, SimConfig, SolverConfig
from oracle import exact_kantorovich, exact_ot, grid_barycenter_oracle
from simulate import METHOD_KANTOROVICH, METHOD_SMOOTHED, run_simulation
from sinkhorn import dual_gradient, ot_lambda_value

LINE3 = GroundMetric(D=[[0, 1, 2], [1, 0, 1], [2, 1, 0]])


def _random_metric(rng: np.random.Generator, d: int) -> GroundMetric:
    pts = rng.random((d, 2)) * 10.0
    return GroundMetric(D=np.linalg.norm(pts[:, None] - pts[None, :], axis=2))


def _random_histogram(rng: np.random.Generator, d: int, mass: Optional[float] = None) -> np.ndarray:
    x = rng.random(d) + 1e-3
    target = rng.uniform(0.1, 0.95) if mass is None else mass
    return x / x.sum() * target


def _median(M: GroundMetric) -> float:
    return float(np.median(M.D[np.triu_indices(M.d, 1)]))


# ==================== 1〜5: 距離 ====================
def check_1_entropic_sandwich() -> bool:
    rng = np.random.default_rng(1)
    worst = 0.0
    for t in range(200):
        d = int(rng.integers(2, 7))
        M = _random_metric(rng, d)
        aug = build_augmented(M, q=95)
        a, b = augment_histogram(_random_histogram(rng, d)), augment_histogram(_random_histogram(rng, d))
        lam = (10.0 if t % 2 == 0 else 100.0) / _median(M)
        exact = exact_ot(a, b, aug.mhat_p).value
        smooth = ot_lambda_value(a, b, aug.mhat_p, lam, tol=1e-12, max_iter=100000)
        lower = exact - 2.0 * math.log(d + 1) / lam
        if not (lower <= smooth <= exact + 1e-9):
            print(f"  ❌ 事例{t}: {lower:.6g} ≤ {smooth:.6g} ≤ {exact:.6g} を満たしません")
            return False
        worst = max(worst, smooth - exact)
    print(f"  OT_λ − OT の最大値: {worst:.3e}")
    return True


def check_2_gradient() -> bool:
    rng = np.random.default_rng(2)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 11))
        M = _random_metric(rng, n)
        C = M.D
        lam = 20.0 / _median(M)
        a = _random_histogram(rng, n, 1.0)
        b = _random_histogram(rng, n, 1.0)
        alpha = dual_gradient(a, b, C, lam, tol=1e-14, max_iter=200000)
        for _ in range(20):
            v = rng.normal(size=n)
            v -= v.mean()
            v *= 0.1 * a.min() / np.abs(v).max()
            f_plus = ot_lambda_value(a + h * v, b, C, lam, tol=1e-14, max_iter=200000)
            f_minus = ot_lambda_value(a - h * v, b, C, lam, tol=1e-14, max_iter=200000)
            fd = (f_plus - f_minus) / (2 * h)
            g = float(alpha @ v)
            scale = max(abs(g), np.linalg.norm(alpha) * np.linalg.norm(v))
            worst = max(worst, abs(fd - g) / scale)
    print(f"  最大相対誤差: {worst:.3e}")
    return worst <= 1e-4


def check_3_metric_axioms() -> bool:
    rng = np.random.default_rng(3)
    for _ in range(100):
        d = int(rng.integers(2, 6))
        M = _random_metric(rng, d)
        delta = float(M.D.max())
        a, b, c = (_random_histogram(rng, d) for _ in range(3))
        k = lambda x, y: exact_kantorovich(x, y, M, delta, p=1.0)
        ab, ba, bc, ac = k(a, b), k(b, a), k(b, c), k(a, c)
        if abs(ab - ba) > 1e-12 or abs(k(a, a)) > 1e-12 or ac > ab + bc + 1e-9:
            print(f"  ❌ K(a,b)={ab}, K(b,a)={ba}, K(a,c)={ac}, K(b,c)={bc}")
            return False
    return True


def check_4_mass_gap() -> bool:
    rng = np.random.default_rng(4)
    for t in range(100):
        d = int(rng.integers(2, 6))
        M = _random_metric(rng, d)
        gamma = float(M.D.max()) * (1.0 if t % 2 == 0 else 10.0)
        a, b = _random_histogram(rng, d), _random_histogram(rng, d)
        gap = abs(a.sum() - b.sum())
        kp = exact_kantorovich(a, b, M, gamma, p=1.0)
        if kp < gamma * gap - 1e-9:
            print(f"  ❌ K={kp:.6g} < γ·gap={gamma * gap:.6g}")
            return False
    return True


def check_5_equal_mass() -> bool:
    rng = np.random.default_rng(5)
    worst = 0.0
    for t in range(100):
        d = int(rng.integers(2, 6))
        M = _random_metric(rng, d)
        p = 1.0 if t % 2 == 0 else 2.0
        mass = rng.uniform(0.2, 1.0)
        a, b = _random_histogram(rng, d, mass), _random_histogram(rng, d, mass)
        kp = exact_kantorovich(a, b, M, float(M.D.max()), p=p)
        direct = exact_ot(a, b, M.D ** p).value
        worst = max(worst, abs(kp - direct))
    print(f"  最大差: {worst:.3e}")
    return worst <= 1e-10


# ==================== 6〜8: 重心 ====================
def _oracle_runs(threads: int) -> List[str]:
    rng = np.random.default_rng(6)
    dumps = []
    for rep in range(20):
        raw = rng.random((2, 3)) * rng.uniform(0.3, 1.0, size=(2, 1))
        c = rescale_collection(raw)
        report = kantorovich_mean(c, LINE3, SolverConfig(lam=auto_lambda(LINE3), threads=threads))
        dumps.append(report.model_dump_json())
        if threads != 1:
            continue
        rho = mean_mass(c)
        a = np.array(report.barycenter) / c.scale
        value = float(np.mean([exact_kantorovich(a, row, LINE3, report.delta_value) for row in c.rows]))
        oracle = grid_barycenter_oracle(c, LINE3, delta=report.delta_value, p=1.0, rho=rho, grid_step=0.005 * rho)
        ratio = value / oracle["value_best"] if oracle["value_best"] > 0 else 1.0
        print(f"  反復{rep}: 目的関数 {value:.6g} / 格子最小 {oracle['value_best']:.6g}（比 {ratio:.4f}）")
        if value > 1.02 * oracle["value_best"] + 1e-12:
            raise AssertionError(f"格子探索の最小値から2%以上離れています（反復{rep}）")
    return dumps


def check_6_barycenter_oracle() -> bool:
    _oracle_runs(threads=1)
    return True


def _fixed_point_runs(threads: int) -> List[str]:
    rng = np.random.default_rng(7)
    M = _random_metric(rng, 5)
    b = _random_histogram(rng, 5, 0.8)
    c = HistogramCollection(rows=[b] * 4, scale=1.0)
    dists, dumps = [], []
    for factor in (500.0, 1000.0):
        report = kantorovich_mean(c, M, SolverConfig(lam=factor / _median(M), rho=0.8, threads=threads))
        dists.append(float(np.abs(np.array(report.barycenter) - b).sum()))
        dumps.append(report.model_dump_json())
    print(f"  ℓ1距離: λ=500/median → {dists[0]:.4g}, λ=1000/median → {dists[1]:.4g}")
    if dists[0] > 0.05 * 0.8 or dists[1] >= dists[0]:
        raise AssertionError("コピーの重心が元のヒストグラムに近づいていません")
    return dumps


def check_7_fixed_point() -> bool:
    _fixed_point_runs(threads=1)
    return True


def _invariant_runs(threads: int) -> List[str]:
    rng = np.random.default_rng(8)
    dumps = []
    for _ in range(5):
        d = int(rng.integers(3, 8))
        M = _random_metric(rng, d)
        c = rescale_collection(rng.random((4, d)) * rng.uniform(0.2, 1.0, size=(4, 1)))
        history: List[BarycenterState] = []
        report = kantorovich_mean(c, M, SolverConfig(threads=threads), history=history)
        rho = float(report.config_resolved.rho)
        for state in history:
            assert abs(math.fsum(state.a[:-1]) - rho) <= 1e-12, "実ビンの質量がρと一致しません"
            assert abs(state.a[-1] - (1.0 - rho)) <= 1e-12, "仮想ビンが1−ρと一致しません"
            assert np.all(state.a > 0), "反復が正ではありません"
        traj = report.objective_trajectory
        assert traj[-1] <= traj[0] + 1e-12, "目的関数が初期値より大きくなりました"
        dumps.append(report.model_dump_json())
    return dumps


def check_8_invariants() -> bool:
    from barycenter import exponentiated_step, project_mass

    _invariant_runs(threads=1)
    rng = np.random.default_rng(80)
    for _ in range(100):
        a = project_mass(rng.random(7) + 0.05, 0.6)
        g = rng.normal(size=7)
        diff = np.abs(exponentiated_step(a, g, 0.5, 0.6) - exponentiated_step(a, g + rng.normal() * 10, 0.5, 0.6))
        assert diff.max() <= 1e-12, "勾配のずらしで更新が変わりました"
    return True


# ==================== 9〜10: シミュレーション ====================
def _simulation(threads: int, subdivisions: int = 3, n: int = 20) -> str:
    cfg = SimConfig(n_subjects=n, subdivisions=subdivisions, seed=42, fwhm_mm=8.0)
    report = run_simulation(cfg, threads=threads)
    kant, smooth = report.method(METHOD_KANTOROVICH), report.method(METHOD_SMOOTHED)
    print(f"  ピーク: Kantorovich {kant.peak:.4g} / 平滑化平均 {smooth.peak:.4g}")
    print(f"  ラベル内質量比: Kantorovich {kant.label_mass_fraction:.4f} / 平滑化平均 {smooth.label_mass_fraction:.4f}")
    if subdivisions == 3:
        assert kant.peak >= 2.0 * smooth.peak, "Kantorovich平均のピークが平滑化平均の2倍未満です"
        assert kant.label_mass_fraction >= smooth.label_mass_fraction, "ラベルへの集中度が平滑化平均より低いです"
    return report.model_dump_json()


def check_9_simulation() -> bool:
    _simulation(threads=1)
    return True


def check_10_scale() -> bool:
    start = time.perf_counter()
    _simulation(threads=4, subdivisions=4, n=8)
    elapsed = time.perf_counter() - start
    print(f"  所要時間: {elapsed / 60:.1f} 分（目安 15 分）")
    if elapsed > 15 * 60:
        print("  ⚠️ 目安を超えました（失敗扱いにはしません）")
    return True


# ==================== 11〜12: 再現性・入出力 ====================
def check_11_determinism() -> bool:
    for name, run in (("6", _oracle_runs), ("7", _fixed_point_runs), ("8", _invariant_runs)):
        first, second, parallel = run(1), run(1), run(4)
        if not (first == second == parallel):
            print(f"  ❌ 基準{name}の結果がビット単位で一致しません")
            return False
    sim = [_simulation(1), _simulation(1), _simulation(4)]
    return sim[0] == sim[1] == sim[2]


def check_12_round_trips() -> bool:
    rng = np.random.default_rng(12)
    for _ in range(50):
        d = int(rng.integers(2, 12))
        M = as_ground_metric(_random_metric(rng, d).D)
        data = write_metric_cache(M)
        if write_metric_cache(read_metric_cache(data)) != data:
            print("  ❌ 距離キャッシュがビット単位で一致しません")
            return False
        X = rng.random((int(rng.integers(1, 6)), d)) * 10.0 ** rng.integers(-8, 8)
        if not np.array_equal(read_matrix_csv(write_matrix_csv(X)), X):
            print("  ❌ CSVの値が一致しません")
            return False
    return True


CHECKS: Dict[int, Callable[[], bool]] = {
    1: check_1_entropic_sandwich,
    2: check_2_gradient,
    3: check_3_metric_axioms,
    4: check_4_mass_gap,
    5: check_5_equal_mass,
    6: check_6_barycenter_oracle,
    7: check_7_fixed_point,
    8: check_8_invariants,
    9: check_9_simulation,
    10: check_10_scale,
    11: check_11_determinism,
    12: check_12_round_trips,
}


def main():
    """メイン実行"""
    parser = argparse.ArgumentParser(description="受け入れ基準のチェック")
    parser.add_argument("--only", type=int, nargs="+", default=None, help="実行する基準番号")
    parser.add_argument("--scale", action="store_true", help="基準10（大規模・目安）も実行")
    args = parser.parse_args()

    numbers = args.only or [k for k in CHECKS if k != 10 or args.scale]
    results = []
    for k in numbers:
        print("\n" + "=" * 60)
        print(f"基準 {k}: {CHECKS[k].__name__}")
        print("=" * 60)
        start = time.perf_counter()
        try:
            ok = CHECKS[k]()
        except AssertionError as e:
            print(f"  ❌ {e}")
            ok = False
        print(f"  {'✅' if ok else '❌'} {time.perf_counter() - start:.1f}秒")
        results.append((k, ok))

    print("\n" + "=" * 60)
    print("受け入れチェック結果")
    print("=" * 60)
    for k, ok in results:
        print(f"基準 {k}: {'✅ 成功' if ok else '❌ 失敗'}")
    return 0 if all(ok for _, ok in results) else 1


if __name__ == "__main__":
    exit(main())
