import math

import numpy as np
import pytest

from selections.constants import NoiseScaling
from selections.exceptions import DomainError
from selections.prior import SignalPrior
from selections.state_evolution import (
    ModelParams,
    SEFixedPoint,
    amse_at_lambda,
    fixed_point_tau,
    optimal_tuning,
    ridge_optimal_alpha,
    risk,
    scan_golden_minimize,
    solve_given_lambda,
)


@pytest.fixture
def dense_prior():
    """ε=0.4、G=8 の事前分布（E B² = 25.6）。"""
    return SignalPrior.point_mass(0.4, 8.0)


class TestModelParams:
    """
    ModelParams のテストクラス。
    """

    @pytest.mark.parametrize(
        ("delta", "sigma", "q"), [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.9)]
    )
    def test_invalid(self, delta, sigma, q):
        """
        δ ≤ 0、σ < 0、q < 1 は DomainError になることを確認。
        """
        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            ModelParams(delta=delta, sigma=sigma, q=q)

    def test_large_sample_scaling(self):
        """
        large_sample ではノイズの標準偏差が σ/√δ になることを確認。
        """
        # When: スケーリングしたモデルを作成
        plain = ModelParams.scaled(4.0, 1.0, 1.0, NoiseScaling.PLAIN)
        scaled = ModelParams.scaled(4.0, 1.0, 1.0, NoiseScaling.LARGE_SAMPLE)

        # Then: σ だけが変わる
        assert plain.sigma == 1.0
        assert scaled.sigma == pytest.approx(0.5)
        assert scaled.delta == 4.0

    def test_chi(self):
        """
        SEFixedPoint.chi が ατ^{2-q} であることを確認。
        """
        # Given: 解
        se = SEFixedPoint(q=1.5, alpha=2.0, tau=4.0, lam=1.0, amse=0.1)

        # When & Then: 2·4^{0.5} = 4
        assert se.chi == pytest.approx(4.0)


class TestRisk:
    """
    risk のテストクラス。
    """

    def test_infinite_penalty(self, dense_prior):
        """
        α → ∞ で推定量が 0 になり、リスクが E B² に近づくことを確認。
        """
        # When: 非常に大きな α でリスクを計算
        result = risk(1e8, 1.0, dense_prior, 2.0)

        # Then: E B² = 25.6
        assert result == pytest.approx(25.6, rel=1e-6)

    def test_ridge_closed_form(self, dense_prior):
        """
        q=2 のリスクが (2α/(1+2α))² E B² + τ²/(1+2α)² に一致することを確認。
        """
        # Given: α=1/3、τ²=17.07
        alpha, tau2 = 1.0 / 3.0, 17.07

        # When: リスクを計算
        result = risk(alpha, math.sqrt(tau2), dense_prior, 2.0)

        # Then: 閉形式と一致する
        shrink = 1.0 + 2.0 * alpha
        expected = (2.0 * alpha / shrink) ** 2 * 25.6 + tau2 / shrink**2
        assert result == pytest.approx(expected, rel=1e-10)
        assert result == pytest.approx(10.24, abs=0.01)

    def test_infinite_alpha(self, dense_prior):
        """
        α = inf のリスクはちょうど E B² であることを確認。
        """
        # When & Then: E B²
        assert risk(math.inf, 1.0, dense_prior, 1.5) == pytest.approx(25.6)


class TestFixedPointTau:
    """
    fixed_point_tau のテストクラス。
    """

    def test_zero_estimator(self, dense_prior):
        """
        α → ∞ ではリスクが E B² に張り付き、τ² = E B²/δ になることを確認。
        """
        # Given: δ=0.6、σ=0
        model = ModelParams(delta=0.6, sigma=0.0, q=2.0)

        # When: 不動点を計算
        tau = fixed_point_tau(1e8, model, dense_prior)

        # Then: τ² ≈ 25.6/0.6
        assert tau**2 == pytest.approx(25.6 / 0.6, rel=1e-6)

    def test_ridge_fixed_point(self, dense_prior):
        """
        q=2, α=1/3 の不動点が τ² = 4.096/0.24 ≈ 17.07 になることを確認。
        """
        # Given: δ=0.6、σ=0
        model = ModelParams(delta=0.6, sigma=0.0, q=2.0)

        # When: 不動点を計算
        tau = fixed_point_tau(1.0 / 3.0, model, dense_prior)

        # Then: 二次方程式の解と一致する
        assert tau**2 == pytest.approx(4.096 / 0.24, rel=1e-8)


class TestOptimalTuning:
    """
    optimal_tuning のテストクラス。
    """

    def test_ridge_matches_closed_form(self, dense_prior):
        """
        q=2, δ=0.6, σ=0 の最適な AMSE が 10.24、α* が閉形式と一致することを確認。
        """
        # Given: δ=0.6、σ=0 のモデル
        model = ModelParams(delta=0.6, sigma=0.0, q=2.0)

        # When: 最適なチューニングを求める
        se = optimal_tuning(model, dense_prior)

        # Then: AMSE ≈ 10.24、α* = 1/3
        assert se.amse == pytest.approx(10.24, rel=1e-4)
        assert se.alpha == pytest.approx(ridge_optimal_alpha(model, dense_prior), rel=1e-4)
        assert se.tau**2 == pytest.approx(17.0667, rel=1e-4)

    @pytest.mark.parametrize(
        ("q", "expected"), [(1.0, 14.9), (1.2, 12.2), (2.0, 10.2), (4.0, 11.6)]
    )
    def test_noiseless_table(self, dense_prior, q, expected):
        """
        δ=0.6, σ=0 の最適な AMSE が q ごとの既知の値と ±0.15 で一致し、E B² を下回ることを確認。
        """
        # Given: δ=0.6、σ=0 のモデル
        model = ModelParams(delta=0.6, sigma=0.0, q=q)

        # When: 最適なチューニングを求める
        se = optimal_tuning(model, dense_prior)

        # Then: 既知の値に一致し、推定量 0 の AMSE（25.6）より小さい
        assert se.amse == pytest.approx(expected, abs=0.15)
        assert se.amse < dense_prior.second_moment
        assert 0.0 < se.alpha < math.inf
        assert se.q == q

    @pytest.mark.parametrize("sigma", [0.15, 0.22, 0.5])
    def test_lasso_interior_minimum(self, sigma):
        """
        q=1, δ=0.8, ε=0.3, G=1 で α* が有限の内点になり、AMSE が E B² を下回ることを確認。
        """
        # Given: δ=0.8 のモデル
        prior = SignalPrior.point_mass(0.3, 1.0)
        model = ModelParams(delta=0.8, sigma=sigma, q=1.0)

        # When: 最適なチューニングを求める
        se = optimal_tuning(model, prior)

        # Then: α* と λ* は有限で、AMSE は 0.3 より小さく τ の方程式を満たす
        assert 0.0 < se.alpha < math.inf
        assert 0.0 < se.lam < math.inf
        assert se.amse < prior.second_moment
        assert se.tau**2 == pytest.approx(sigma**2 + se.amse / 0.8, rel=1e-6)

        # Then: λ* の前後より AMSE が小さい
        assert se.amse <= amse_at_lambda(0.8 * se.lam, model, prior) + 1e-9
        assert se.amse <= amse_at_lambda(1.25 * se.lam, model, prior) + 1e-9

    def test_tuning_beats_fixed_lambda(self):
        """
        最適な λ* の AMSE は他の λ の AMSE 以下であることを確認。
        """
        # Given: δ=2、σ=0.5、ε=0.3、G=1
        prior = SignalPrior.point_mass(0.3, 1.0)
        model = ModelParams(delta=2.0, sigma=0.5, q=1.5)

        # When: 最適な解と λ* の前後の AMSE を計算
        se = optimal_tuning(model, prior)
        lower = amse_at_lambda(0.5 * se.lam, model, prior)
        upper = amse_at_lambda(2.0 * se.lam, model, prior)

        # Then: λ* の AMSE が最小
        assert se.amse <= lower + 1e-9
        assert se.amse <= upper + 1e-9


class TestSolveGivenLambda:
    """
    solve_given_lambda / amse_at_lambda のテストクラス。
    """

    def test_huge_lambda(self):
        """
        λ が非常に大きいと推定量が 0 になり、τ² = σ² + E B²/δ、AMSE = E B² になることを確認。
        """
        # Given: δ=0.8、σ=1、ε=0.3、G=1
        prior = SignalPrior.point_mass(0.3, 1.0)
        model = ModelParams(delta=0.8, sigma=1.0, q=1.0)

        # When: λ=1e9 で解く
        se = solve_given_lambda(1e9, model, prior)

        # Then: τ² ≈ 1.375、AMSE ≈ 0.3
        assert se.tau**2 == pytest.approx(1.375, rel=1e-6)
        assert se.amse == pytest.approx(0.3, rel=1e-6)
        assert se.lam == 1e9

    def test_round_trip(self):
        """
        λ から求めた (α, τ) の λ(α, τ) が元の λ に戻ることを確認。
        """
        # Given: δ=2、σ=0.5、ε=0.2、G=1 のリッジ
        prior = SignalPrior.point_mass(0.2, 1.0)
        model = ModelParams(delta=2.0, sigma=0.5, q=2.0)

        # When: λ=0.3 で解く
        se = solve_given_lambda(0.3, model, prior)

        # Then: q=2 では λ = ατ^0 (1 - 1/((1+2α)δ))
        shrink = 1.0 / (1.0 + 2.0 * se.alpha)
        assert se.alpha * (1.0 - shrink / model.delta) == pytest.approx(0.3, rel=1e-8)

    def test_infinite_lambda(self):
        """
        amse_at_lambda(inf) は E B² を返すことを確認。
        """
        # Given: ε=0.3、G=2
        prior = SignalPrior.point_mass(0.3, 2.0)
        model = ModelParams(delta=0.8, sigma=1.0, q=1.0)

        # When & Then: 0.3·4
        assert amse_at_lambda(math.inf, model, prior) == pytest.approx(1.2)

    @pytest.mark.parametrize("lam", [0.0, -1.0, math.inf])
    def test_invalid_lambda(self, lam):
        """
        λ ≤ 0 と λ = inf は solve_given_lambda では DomainError になることを確認。
        """
        # Given: モデル
        prior = SignalPrior.point_mass(0.3, 1.0)
        model = ModelParams(delta=0.8, sigma=1.0, q=1.0)

        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            solve_given_lambda(lam, model, prior)


class TestRidgeOptimalAlpha:
    """
    ridge_optimal_alpha のテストクラス。
    """

    def test_noiseless(self, dense_prior):
        """
        σ=0 では α* = (1/δ - 1)/2 になることを確認。
        """
        # When: δ=0.6 で計算
        alpha = ridge_optimal_alpha(ModelParams(delta=0.6, sigma=0.0, q=2.0), dense_prior)

        # Then: 1/3
        assert alpha == pytest.approx(1.0 / 3.0)

    def test_null_signal(self):
        """
        E B² = 0 では α* = inf になることを確認。
        """
        # When & Then: inf
        prior = SignalPrior.point_mass(0.0, 1.0)
        assert ridge_optimal_alpha(ModelParams(delta=1.0, sigma=1.0, q=2.0), prior) == math.inf


class TestScanGoldenMinimize:
    """
    scan_golden_minimize のテストクラス。
    """

    def test_interior_minimum(self):
        """
        グリッドの点の間にある最小点を黄金分割法で絞り込むことを確認。
        """
        # Given: 最小点 0.33 の二次関数と刻み 0.1 のグリッド
        points = np.linspace(-2.0, 2.0, 41)

        # When: 最小化
        x, value = scan_golden_minimize(lambda t: (t - 0.33) ** 2 + 1.0, points)

        # Then: 0.33 と最小値 1
        assert x == pytest.approx(0.33, abs=1e-6)
        assert value == pytest.approx(1.0, abs=1e-10)

    def test_minimum_at_grid_edge(self):
        """
        最小値がグリッドの端にある場合はその端点を返すことを確認。
        """
        # Given: 単調増加の関数
        points = np.linspace(0.0, 1.0, 11)

        # When: 最小化
        x, value = scan_golden_minimize(lambda t: t, points)

        # Then: 左端
        assert (x, value) == (0.0, 0.0)

    def test_nan_treated_as_infinite(self):
        """
        NaN を返す点は最小点の候補から外れることを確認。
        """
        # Given: 負の側で NaN を返す関数
        points = np.linspace(-1.0, 1.0, 21)

        def objective(t):
            return math.nan if t < 0.0 else (t - 0.5) ** 2

        # When: 最小化
        x, _ = scan_golden_minimize(objective, points)

        # Then: 0.5
        assert x == pytest.approx(0.5, abs=1e-6)
