import math

import numpy as np
import pytest

from selections.bridge_solver import (
    FitResult,
    RegressionProblem,
    SearchOptions,
    SolverOptions,
    attach_estimates,
    debias,
    fit_amp,
    fit_coordinate_descent,
    gamma_hat,
    kkt_residual,
    kkt_tolerance,
    lambda_grid,
    lasso_path,
    objective,
    tau_hat,
    tune_lambda,
)
from selections.exceptions import DegenerateFitError, DomainError


@pytest.fixture
def orthogonal_problem():
    """X = I₄ の回帰問題。"""
    return RegressionProblem(np.eye(4), np.array([2.0, -0.3, 1.0, -3.0]))


@pytest.fixture
def random_problem():
    """n=80, p=40、X の成分が N(0, 1/n) で、非ゼロ係数 6 個の回帰問題。"""
    rng = np.random.default_rng(2024)
    n, p = 80, 40
    design = rng.standard_normal((n, p)) / math.sqrt(n)
    beta = np.zeros(p)
    beta[:6] = [3.0, -2.0, 2.5, 1.5, -3.0, 2.0]
    y = design @ beta + 0.5 * rng.standard_normal(n)
    return RegressionProblem(design, y)


class TestRegressionProblem:
    """
    RegressionProblem のテストクラス。
    """

    def test_properties(self, orthogonal_problem):
        """
        n, p, 列の二乗ノルム、‖Xᵀy‖∞ を確認。
        """
        # Then: X = I の値
        assert (orthogonal_problem.n, orthogonal_problem.p) == (4, 4)
        np.testing.assert_allclose(orthogonal_problem.column_norms2, np.ones(4))
        assert orthogonal_problem.xty_inf == pytest.approx(3.0)

    @pytest.mark.parametrize(
        ("design", "y"),
        [
            (np.ones((3, 2)), np.ones(4)),
            (np.ones(3), np.ones(3)),
            (np.array([[1.0, np.nan]]), np.ones(1)),
        ],
    )
    def test_invalid(self, design, y):
        """
        次元の不一致と非有限値は DomainError になることを確認。
        """
        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            RegressionProblem(design, y)


class TestCoordinateDescent:
    """
    fit_coordinate_descent のテストクラス。
    """

    def test_orthogonal_lasso(self, orthogonal_problem):
        """
        X = I の LASSO がソフトしきい値 η₁(y; λ) に一致することを確認。
        """
        # When: λ=0.5 で解く
        fit = fit_coordinate_descent(orthogonal_problem, 1.0, 0.5)

        # Then: ソフトしきい値
        np.testing.assert_allclose(fit.beta, [1.5, 0.0, 0.5, -2.5], atol=1e-12)
        assert fit.converged
        assert fit.support_size == 3
        assert fit.kkt_residual <= kkt_tolerance(orthogonal_problem)

    def test_orthogonal_ridge(self, orthogonal_problem):
        """
        X = I、q=2 の解が y / (1 + 2λ) に一致することを確認。
        """
        # When: λ=0.5 で解く
        fit = fit_coordinate_descent(orthogonal_problem, 2.0, 0.5)

        # Then: y/2
        np.testing.assert_allclose(fit.beta, orthogonal_problem.y / 2.0, atol=1e-12)

    def test_infinite_lambda(self, orthogonal_problem):
        """
        λ = inf では β̂ = 0 を返すことを確認。
        """
        # When: λ=inf で解く
        fit = fit_coordinate_descent(orthogonal_problem, 1.5, math.inf)

        # Then: すべて 0
        assert not fit.beta.any()
        assert fit.passes == 0

    @pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 3.0])
    def test_kkt_and_monotone_objective(self, random_problem, q):
        """
        ランダムな計画行列で KKT 残差が上限以下、目的関数がパスごとに増えないことを確認。
        """
        # When: λ=0.3 で解く
        fit = fit_coordinate_descent(random_problem, q, 0.3)

        # Then: KKT 残差と目的関数の列
        assert fit.converged
        assert fit.kkt_residual <= kkt_tolerance(random_problem)
        trace = fit.objective_trace
        assert all(b <= a + 1e-10 * (1.0 + abs(a)) for a, b in zip(trace, trace[1:], strict=False))
        assert trace[-1] == pytest.approx(objective(random_problem, fit.beta, q, 0.3))

    def test_warm_start_reaches_same_solution(self, random_problem):
        """
        ウォームスタートしても同じ解に収束することを確認。
        """
        # Given: 別の λ の解
        warm = fit_coordinate_descent(random_problem, 1.5, 1.0).beta

        # When: λ=0.3 をコールドとウォームで解く
        cold = fit_coordinate_descent(random_problem, 1.5, 0.3)
        warmed = fit_coordinate_descent(random_problem, 1.5, 0.3, SolverOptions(warm_start=warm))

        # Then: 一致する
        np.testing.assert_allclose(warmed.beta, cold.beta, atol=1e-7)

    def test_invalid_arguments(self, orthogonal_problem):
        """
        q < 1、λ < 0、長さの違う初期値は DomainError になることを確認。
        """
        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            fit_coordinate_descent(orthogonal_problem, 0.5, 1.0)
        with pytest.raises(DomainError):
            fit_coordinate_descent(orthogonal_problem, 1.0, -1.0)
        with pytest.raises(DomainError):
            fit_coordinate_descent(
                orthogonal_problem, 1.0, 1.0, SolverOptions(warm_start=np.zeros(3))
            )


class TestKktResidual:
    """
    kkt_residual のテストクラス。
    """

    def test_zero_vector_lasso(self, orthogonal_problem):
        """
        β=0 の LASSO の残差が max(‖Xᵀy‖∞ - λ, 0) であることを確認。
        """
        # When & Then: 3 - 1 = 2、λ ≥ 3 なら 0
        assert kkt_residual(orthogonal_problem, np.zeros(4), 1.0, 1.0) == pytest.approx(2.0)
        assert kkt_residual(orthogonal_problem, np.zeros(4), 1.0, 3.0) == 0.0


class TestAmp:
    """
    fit_amp のテストクラス。
    """

    def test_matches_coordinate_descent(self, random_problem):
        """
        AMP の極限が、記録した λ での座標降下法の解とほぼ一致することを確認。
        """
        # When: α=1.5 の AMP
        amp = fit_amp(random_problem, 1.0, 1.5, SolverOptions(tol=1e-10, max_passes=2000))

        # Then: 同じ λ の LASSO の解に近い
        cd = fit_coordinate_descent(random_problem, 1.0, amp.lam)
        assert amp.converged
        assert amp.lam > 0
        assert amp.alpha == 1.5
        np.testing.assert_allclose(amp.beta, cd.beta, atol=1e-3)

    def test_invalid_alpha(self, random_problem):
        """
        α ≤ 0 は DomainError になることを確認。
        """
        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            fit_amp(random_problem, 1.0, 0.0)

    def test_zero_response(self):
        """
        y = 0 なら反復せずに β̂ = 0 を返すことを確認。
        """
        # When: y = 0 で実行
        fit = fit_amp(RegressionProblem(np.eye(3), np.zeros(3)), 1.5, 1.0)

        # Then: すべて 0
        assert not fit.beta.any()
        assert fit.passes == 0


class TestEstimates:
    """
    gamma_hat / tau_hat / attach_estimates / debias のテストクラス。
    """

    def test_tau_hat_lasso(self, orthogonal_problem):
        """
        X = I、λ=0.5 の LASSO で τ̂ = √(0.84/4)/(1 - 3/4) を確認。
        """
        # Given: ソフトしきい値の解
        fit = fit_coordinate_descent(orthogonal_problem, 1.0, 0.5)

        # When: τ̂ を計算
        value = tau_hat(orthogonal_problem, fit)

        # Then: 自由度 3 で補正した値
        assert value == pytest.approx(math.sqrt(0.21) / 0.25, rel=1e-10)

    def test_tau_hat_infinite_lambda(self, orthogonal_problem):
        """
        λ = inf では df=0 で τ̂ = ‖y‖/√n になることを確認。
        """
        # Given: β̂ = 0 の解
        fit = fit_coordinate_descent(orthogonal_problem, 1.0, math.inf)

        # When & Then: ‖y‖/√n
        expected = float(np.linalg.norm(orthogonal_problem.y)) / 2.0
        assert tau_hat(orthogonal_problem, fit) == pytest.approx(expected)

    def test_tau_hat_saturated(self, orthogonal_problem):
        """
        1 - df/n ≤ 0 では τ̂ = inf になることを確認。
        """
        # Given: λ=0 のリッジ（df = p = n）
        fit = fit_coordinate_descent(orthogonal_problem, 2.0, 0.0)

        # When & Then: inf
        assert tau_hat(orthogonal_problem, fit) == math.inf

    def test_gamma_hat_ridge(self):
        """
        q=2、n=p では 2γ² - 2λγ - λ = 0 の正の根になることを確認。
        """
        # Given: 係数に依らず f = p/(1 + 2γ) となる q=2 の解
        fit = FitResult(
            beta=np.array([1.0, -2.0, 0.5, 3.0]), q=2.0, lam=0.5, passes=1, kkt_residual=0.0
        )

        # When: γ̂ を計算
        value = gamma_hat(fit, 0.5, 4)

        # Then: (1 + √5)/4
        assert value == pytest.approx((1.0 + math.sqrt(5.0)) / 4.0, rel=1e-10)

    def test_gamma_hat_lasso(self, orthogonal_problem):
        """
        q=1 の γ̂ は DomainError になることを確認。
        """
        # Given: LASSO の解
        fit = fit_coordinate_descent(orthogonal_problem, 1.0, 0.5)

        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            gamma_hat(fit, 0.5, 4)

    def test_attach_estimates(self, random_problem):
        """
        q>1 では τ̂ と γ̂ の両方が付くことを確認。
        """
        # Given: q=1.5 の解
        fit = fit_coordinate_descent(random_problem, 1.5, 0.3)

        # When: 推定量を付ける
        attached = attach_estimates(random_problem, fit)

        # Then: 両方とも正の有限値
        assert attached.gamma_hat is not None and attached.gamma_hat > 0
        assert attached.tau_hat is not None and 0 < attached.tau_hat < math.inf
        assert fit.tau_hat is None

    def test_debias_lasso(self, orthogonal_problem):
        """
        X = I、λ=0.5 の LASSO で β† = β̂ + r/(1 - 3/4) になることを確認。
        """
        # Given: ソフトしきい値の解
        fit = fit_coordinate_descent(orthogonal_problem, 1.0, 0.5)

        # When: デバイアス
        result = debias(orthogonal_problem, fit)

        # Then: 残差を 4 倍して足した値
        np.testing.assert_allclose(result, [3.5, -1.2, 2.5, -4.5], atol=1e-10)

    def test_debias_infinite_lambda_is_sis(self, random_problem):
        """
        λ = inf のデバイアス推定量が Xᵀy に一致することを確認。
        """
        # Given: β̂ = 0 の解
        fit = fit_coordinate_descent(random_problem, 1.0, math.inf)

        # When & Then: Xᵀy
        np.testing.assert_allclose(
            debias(random_problem, fit), random_problem.X.T @ random_problem.y, atol=1e-12
        )

    def test_debias_degenerate(self, orthogonal_problem):
        """
        1 - df/n が 0 に潰れると DegenerateFitError になることを確認。
        """
        # Given: λ=0 のリッジ
        fit = fit_coordinate_descent(orthogonal_problem, 2.0, 0.0)

        # When & Then: DegenerateFitError が発生
        with pytest.raises(DegenerateFitError):
            debias(orthogonal_problem, fit)


class TestTuneLambda:
    """
    tune_lambda のテストクラス。
    """

    def test_returns_finite_tau(self, random_problem):
        """
        探索結果の λ̂ が正で、その解に有限の τ̂ が付いていることを確認。
        """
        # When: q=1 で探索
        lam, fit = tune_lambda(random_problem, 1.0)

        # Then: λ̂ と解が対応する
        assert lam > 0
        assert fit.lam == lam
        assert fit.tau_hat is not None and math.isfinite(fit.tau_hat)

    def test_returns_minimum_over_grid(self, random_problem):
        """
        λ̂ の τ̂ が初期区間のグリッドのいずれの点の τ̂ 以下であることを確認。
        """
        # Given: 区間あたり 7 点の設定
        opts = SearchOptions(grid_size=7)

        # When: q=1.5 で探索
        lam, fit = tune_lambda(random_problem, 1.5, opts)

        # Then: 初期区間の各点の τ̂ 以上にはならない
        top = 0.5 * random_problem.xty_inf
        for value in np.linspace(0.1, top, 7):
            other = attach_estimates(
                random_problem, fit_coordinate_descent(random_problem, 1.5, float(value))
            )
            assert fit.tau_hat <= other.tau_hat + 1e-8

    def test_zero_correlation(self):
        """
        Xᵀy = 0 では DomainError になることを確認。
        """
        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            tune_lambda(RegressionProblem(np.eye(3), np.zeros(3)), 1.0)


class TestLassoPath:
    """
    lasso_path / lambda_grid のテストクラス。
    """

    def test_descending_path(self, random_problem):
        """
        λ 降順に並び、‖Xᵀy‖∞ 以上の λ では β̂ = 0 となることを確認。
        """
        # Given: 昇順に並べた λ
        grid = lambda_grid(random_problem, 5, ratio=0.05)

        # When: 逆順で渡してパスを計算
        fits = lasso_path(random_problem, list(grid[::-1]))

        # Then: 降順で、先頭はゼロ解
        lams = [fit.lam for fit in fits]
        assert lams == sorted(lams, reverse=True)
        assert fits[0].support_size == 0
        assert fits[-1].support_size > 0
        assert all(fit.tau_hat is not None for fit in fits)

    def test_lambda_grid(self, orthogonal_problem):
        """
        ‖Xᵀy‖∞ から ratio 倍までの等比数列を確認。
        """
        # When: 3 点のグリッド
        grid = lambda_grid(orthogonal_problem, 3, ratio=0.01)

        # Then: 3, 0.3, 0.03
        np.testing.assert_allclose(grid, [3.0, 0.3, 0.03])
