"""
Sinkhornのテスト: 閉形式の解・挟み込み評価・勾配・対数領域との一致
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import errors
from oracle import exact_ot
from sinkhorn import dual_gradient, gibbs_kernel, ot_lambda_value, sinkhorn_solve

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def _random_instance(rng, n):
    pts = rng.random((n, 2))
    C = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    a = rng.random(n) + 0.05
    b = rng.random(n) + 0.05
    return a / a.sum(), b / b.sum(), C


def _median_offdiag(C):
    return float(np.median(C[np.triu_indices(C.shape[0], k=1)]))


def test_single_point():
    sol = sinkhorn_solve(np.array([1.0]), np.array([1.0]), np.zeros((1, 1)), 1.0, want_plan=True)
    assert sol.value == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(sol.plan, [[1.0]])
    assert sol.converged


def test_two_point_closed_form():
    lam = 1.0
    t = 0.5 / (1.0 + math.e)
    expected = 2 * t + (2 * (0.5 - t) * math.log(0.5 - t) + 2 * t * math.log(t)) / lam
    sol = sinkhorn_solve(np.array([0.5, 0.5]), np.array([0.5, 0.5]), SWAP, lam, tol=1e-14, want_plan=True)
    np.testing.assert_allclose(sol.plan, [[0.5 - t, t], [t, 0.5 - t]], atol=1e-12)
    assert sol.value == pytest.approx(expected, rel=1e-12)

    # 格子探索でも同じ t が最小
    grid = np.linspace(1e-6, 0.5 - 1e-6, 200001)
    obj = 2 * grid + (2 * (0.5 - grid) * np.log(0.5 - grid) + 2 * grid * np.log(grid)) / lam
    assert abs(grid[np.argmin(obj)] - t) < 1e-5


def test_singleton_polytope():
    for lam in (0.5, 10.0, 1000.0):
        sol = sinkhorn_solve(np.array([1.0, 0.0]), np.array([0.0, 1.0]), SWAP, lam, want_plan=True)
        np.testing.assert_allclose(sol.plan, [[0.0, 1.0], [0.0, 0.0]], atol=1e-15)
        assert sol.value == pytest.approx(1.0)
        assert list(sol.support_a) == [True, False]
        assert sol.dual_a[1] == 0.0, "台の外の双対は0"


def test_plan_marginals():
    rng = np.random.default_rng(10)
    a, b, C = _random_instance(rng, 5)
    sol = sinkhorn_solve(a, b, C, 5.0, tol=1e-10, want_plan=True)
    assert sol.converged
    assert np.all(sol.plan >= 0)
    assert np.sum(np.abs(sol.plan.sum(axis=1) - a)) <= 1e-10
    assert np.sum(np.abs(sol.plan.sum(axis=0) - b)) <= 1e-10


def test_symmetry_of_value():
    rng = np.random.default_rng(11)
    _, _, C = _random_instance(rng, 2)
    a = np.array([0.3, 0.7])
    b = np.array([0.6, 0.4])
    forward = ot_lambda_value(a, b, C, 3.0, tol=1e-13)
    backward = ot_lambda_value(b, a, C, 3.0, tol=1e-13)
    assert forward == pytest.approx(backward, abs=1e-10)


def test_entropic_sandwich():
    rng = np.random.default_rng(12)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        a, b, C = _random_instance(rng, n)
        lam = 10.0 / _median_offdiag(C)
        exact = exact_ot(a, b, C).value
        smooth = ot_lambda_value(a, b, C, lam, tol=1e-12, max_iter=200000)
        assert exact - 2 * math.log(n) / lam <= smooth <= exact + 1e-9, (
            f"OT_λ が [OT − 2ln(n)/λ, OT] の外にあります: {smooth} vs {exact}"
        )


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(13)
    a, b, C = _random_instance(rng, 4)
    lam = 20.0
    alpha = dual_gradient(a, b, C, lam, tol=1e-13, max_iter=200000)
    assert abs(alpha.sum()) < 1e-12, "双対は中心化されているべき"
    h = 1e-6
    for i, j in [(0, 1), (1, 3), (2, 0), (3, 2)]:
        e = np.zeros(4)
        e[i], e[j] = 1.0, -1.0
        plus = ot_lambda_value(a + h * e, b, C, lam, tol=1e-13, max_iter=200000)
        minus = ot_lambda_value(a - h * e, b, C, lam, tol=1e-13, max_iter=200000)
        fd = (plus - minus) / (2 * h)
        assert float(alpha @ e) == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_symmetric_gradient_is_zero():
    alpha = dual_gradient(np.array([0.5, 0.5]), np.array([0.5, 0.5]), SWAP, 1.0, tol=1e-14)
    assert abs(alpha[0] - alpha[1]) < 1e-10


def test_gradient_of_reversed_problem():
    rng = np.random.default_rng(14)
    a, _, C = _random_instance(rng, 4)
    forward = sinkhorn_solve(a, a, C, 8.0, tol=1e-13)
    backward = sinkhorn_solve(a, a, C.T, 8.0, tol=1e-13)
    # 対称な問題では行の双対と逆問題の列の双対が一致
    np.testing.assert_allclose(forward.dual_a, backward.dual_b, atol=1e-8)


def test_gradient_requires_positive_first_marginal():
    with pytest.raises(errors.ZeroEntryInFirstMarginal):
        dual_gradient(np.array([1.0, 0.0]), np.array([0.5, 0.5]), SWAP, 1.0)


def test_mass_mismatch():
    with pytest.raises(errors.MassMismatch):
        sinkhorn_solve(np.array([0.5, 0.5]), np.array([0.5, 0.4]), SWAP, 1.0)


def test_log_domain_matches_scaling_domain():
    rng = np.random.default_rng(15)
    a, b, C = _random_instance(rng, 6)
    plain = sinkhorn_solve(a, b, C, 10.0, tol=1e-12)
    forced = sinkhorn_solve(a, b, C, 10.0, tol=1e-12, stab_threshold=1.0)
    assert not plain.log_domain
    assert forced.log_domain
    assert forced.value == pytest.approx(plain.value, rel=1e-8)
    np.testing.assert_allclose(forced.dual_a, plain.dual_a, atol=1e-8)


def test_large_lambda_underflow_uses_log_domain():
    C = np.array([[0.0, 10.0, 20.0], [10.0, 0.0, 10.0], [20.0, 10.0, 0.0]])
    a = np.array([0.6, 0.4, 0.0])
    b = np.array([0.0, 0.0, 1.0])
    # exp(−λC) は全て 0 にアンダーフロー
    sol = sinkhorn_solve(a, b, C, 500.0, want_plan=True)
    assert sol.log_domain
    assert sol.converged
    entropy = 0.6 * math.log(0.6) + 0.4 * math.log(0.4)
    assert sol.value == pytest.approx(0.6 * 20 + 0.4 * 10 + entropy / 500.0, rel=1e-12)


def test_cost_shift():
    rng = np.random.default_rng(16)
    a, b, C = _random_instance(rng, 5)
    base = sinkhorn_solve(a, b, C, 4.0, tol=1e-13)
    shifted = sinkhorn_solve(a, b, C + 0.7, 4.0, tol=1e-13)
    assert shifted.value == pytest.approx(base.value + 0.7, abs=1e-10)
    np.testing.assert_allclose(shifted.dual_a, base.dual_a, atol=1e-10)


def test_marginal_error_is_monotone():
    rng = np.random.default_rng(17)
    a, b, C = _random_instance(rng, 6)
    sol = sinkhorn_solve(a, b, C, 20.0, tol=1e-14, max_iter=500)
    hist = sol.err_history
    assert len(hist) >= 2
    for prev, cur in zip(hist, hist[1:]):
        assert cur <= prev * (1 + 1e-9) + 1e-15, f"周辺誤差が増加しました: {hist}"


def test_not_converged_is_flagged():
    rng = np.random.default_rng(18)
    a, b, C = _random_instance(rng, 6)
    sol = sinkhorn_solve(a, b, C, 50.0, tol=1e-15, max_iter=3)
    assert not sol.converged
    assert sol.iterations == 3


def test_shared_kernel_and_warm_start():
    rng = np.random.default_rng(19)
    a, b, C = _random_instance(rng, 5)
    kernel = gibbs_kernel(C, 6.0)
    cold = sinkhorn_solve(a, b, None, 6.0, tol=1e-12, kernel=kernel)
    warm = sinkhorn_solve(a, b, None, 6.0, tol=1e-12, kernel=kernel, init_dual_b=cold.dual_b + 3.0)
    assert warm.iterations <= cold.iterations
    assert warm.value == pytest.approx(cold.value, abs=1e-10)
