import csv
import math
from unittest.mock import patch

import numpy as np
import pytest
from scipy.stats import kstest

from selections import pipeline
from selections.bridge_solver import (
    FitResult,
    RegressionProblem,
    attach_estimates,
    debias,
    fit_coordinate_descent,
)
from selections.constants import DesignKind, Method, NoiseScaling, StreamPurpose, Tuning
from selections.exceptions import DesignError, DomainError, UnsupportedRegimeError
from selections.pipeline import (
    KNOCKOFF_CSV_HEADER,
    REPORT_CSV_HEADER,
    DesignSpec,
    EmpiricalCurve,
    ExperimentConfig,
    MethodSpec,
    empirical_curve,
    generate_data,
    interpolate_fdp,
    knockoff_features,
    knockoff_select,
    knockoff_statistics,
    knockoff_threshold,
    path_curve,
    rng_for,
    run_experiment,
    run_knockoff_experiment,
    write_knockoff_csv,
    write_report_csv,
)
from selections.prior import SignalPrior
from selections.state_evolution import optimal_tuning


@pytest.fixture
def prior():
    """ε=0.2、G=3 の事前分布。"""
    return SignalPrior.point_mass(0.2, 3.0)


@pytest.fixture
def small_config(prior):
    """p=20、δ=1、反復 2 回、λ を固定した 4 手法の実験設定。"""
    return ExperimentConfig(
        p=20,
        delta=1.0,
        prior=prior,
        sigma=0.5,
        methods=(
            MethodSpec(Method.LASSO, 1.0, Tuning.TUNED),
            MethodSpec(Method.TWO_STAGE, 1.5, 0.5),
            MethodSpec(Method.DEBIASED_TWO_STAGE, 1.0, 0.5),
            MethodSpec(Method.SIS, 1.0, Tuning.TUNED),
        ),
        replicates=2,
        seed=11,
        atpp_grid=(0.2, 0.5, 0.8),
        lasso_path_size=8,
    )


class TestConfig:
    """
    ExperimentConfig / DesignSpec / MethodSpec のテストクラス。
    """

    def test_derived_values(self, prior):
        """
        n = round(δp) と large_sample のノイズ σ/√δ を確認。
        """
        # Given: δ=0.25, p=30 の設定
        config = ExperimentConfig(
            p=30,
            delta=0.25,
            prior=prior,
            sigma=1.0,
            methods=(),
            noise_scaling=NoiseScaling.LARGE_SAMPLE,
        )

        # Then: n=8、ノイズの標準偏差は 2
        assert config.n == 8
        assert config.noise_sd == pytest.approx(2.0)
        assert config.model(1.5).sigma == pytest.approx(2.0)

    @pytest.mark.parametrize(
        "kwargs",
        [{"p": 5}, {"replicates": 0}, {"delta": 0.0}, {"sigma": -1.0}, {"fdr_target": 1.0}],
    )
    def test_invalid_config(self, prior, kwargs):
        """
        範囲外の p、反復回数、δ、σ、fdr_target は DomainError になることを確認。
        """
        # Given: 正しい設定に不正な値を 1 つ混ぜる
        values = {"p": 20, "delta": 1.0, "prior": prior, "sigma": 0.5, "methods": ()}
        values.update(kwargs)

        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            ExperimentConfig(**values)

    @pytest.mark.parametrize(
        ("kind", "corr_rho", "t_nu"),
        [
            (DesignKind.IID_GAUSSIAN, 0.5, None),
            (DesignKind.TOEPLITZ_CORRELATED, None, None),
            (DesignKind.STUDENT_T, None, 2.0),
        ],
    )
    def test_invalid_design(self, kind, corr_rho, t_nu):
        """
        種類と合わないパラメータ、ν ≤ 2 は DomainError になることを確認。
        """
        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            DesignSpec(kind, corr_rho, t_nu)

    def test_method_label(self):
        """
        手法のラベルに手法名、q、チューニングが入ることを確認。
        """
        # When & Then: ラベル
        assert MethodSpec(Method.TWO_STAGE, 1.5, Tuning.OPTIMAL).label == (
            "two_stage(q=1.5, tuning=optimal)"
        )


class TestGenerateData:
    """
    rng_for / generate_data のテストクラス。
    """

    def test_rng_streams(self):
        """
        同じ (seed, 反復, 用途) は同じ乱数列、用途が違えば別の乱数列になることを確認。
        """
        # When: 乱数を生成
        first = rng_for(3, 1, StreamPurpose.NOISE).standard_normal(5)
        again = rng_for(3, 1, StreamPurpose.NOISE).standard_normal(5)
        other = rng_for(3, 1, StreamPurpose.DESIGN).standard_normal(5)

        # Then: 再現し、用途ごとに独立
        np.testing.assert_array_equal(first, again)
        assert not np.array_equal(first, other)

    def test_reproducible(self, small_config):
        """
        同じ設定と反復番号では同じデータ、反復番号が違えば別のデータになることを確認。
        """
        # When: データを生成
        problem, beta = generate_data(small_config, 0)
        again, beta_again = generate_data(small_config, 0)
        other, _ = generate_data(small_config, 1)

        # Then: 形と再現性
        assert problem.X.shape == (20, 20)
        np.testing.assert_array_equal(problem.X, again.X)
        np.testing.assert_array_equal(problem.y, again.y)
        np.testing.assert_array_equal(beta, beta_again)
        assert not np.array_equal(problem.X, other.X)

    @pytest.mark.parametrize(
        "design",
        [
            DesignSpec(DesignKind.TOEPLITZ_CORRELATED, corr_rho=0.5),
            DesignSpec(DesignKind.STUDENT_T, t_nu=5.0),
        ],
    )
    def test_other_designs(self, prior, design):
        """
        Toeplitz 相関と t 分布の計画行列でも n×p のデータが作れることを確認。
        """
        # Given: 計画行列の種類を変えた設定
        config = ExperimentConfig(
            p=12, delta=2.0, prior=prior, sigma=0.5, methods=(), design=design
        )

        # When: データを生成
        problem, beta = generate_data(config, 0)

        # Then: 形が合う
        assert problem.X.shape == (24, 12)
        assert beta.shape == (12,)

    def test_toeplitz_invalid_rho(self, prior):
        """
        ρ ≥ 1 の Toeplitz 行列は DesignError になることを確認。
        """
        # Given: ρ=1 の設定
        config = ExperimentConfig(
            p=12,
            delta=2.0,
            prior=prior,
            sigma=0.5,
            methods=(),
            design=DesignSpec(DesignKind.TOEPLITZ_CORRELATED, corr_rho=1.0),
        )

        # When & Then: DesignError が発生
        with pytest.raises(DesignError):
            generate_data(config, 0)


class TestEmpiricalCurve:
    """
    empirical_curve / path_curve / interpolate_fdp のテストクラス。
    """

    def test_threshold_sweep(self):
        """
        |β̂| のしきい値を掃引した (s, TPP, FDP) と MSE を確認。
        """
        # Given: 真の信号は 0, 1 番目
        estimate = [3.0, 0.0, -1.0, 0.5]
        beta = [1.0, 1.0, 0.0, 0.0]

        # When: 曲線を作成
        curve = empirical_curve(estimate, beta)

        # Then: s=0.5 は s=0 と同じ点なので省かれる
        assert curve.points == (
            (0.0, 0.5, pytest.approx(2.0 / 3.0)),
            (1.0, 0.5, 0.5),
            (3.0, 0.5, 0.0),
            (math.inf, 0.0, 0.0),
        )
        assert curve.mse == pytest.approx(1.5625)
        assert curve.max_tpp == 0.5

    def test_length_mismatch(self):
        """
        長さが違うと DomainError になることを確認。
        """
        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            empirical_curve([1.0, 2.0], [1.0])

    def test_path_curve(self):
        """
        LASSO の解の列から λ 昇順の曲線を作り、MSE は τ̂ 最小の解のものを使うことを確認。
        """
        # Given: λ=2（β̂=0）と λ=1（1 つ選択）の解
        fits = [
            FitResult(np.zeros(4), 1.0, 2.0, 1, 0.0, tau_hat=3.0),
            FitResult(np.array([1.0, 0.0, 0.0, 0.0]), 1.0, 1.0, 1, 0.0, tau_hat=1.0),
        ]

        # When: 曲線を作成
        curve = path_curve(fits, [1.0, 1.0, 0.0, 0.0])

        # Then: λ=inf の点は λ=2 と同じなので省かれる
        assert curve.points == ((1.0, 0.5, 0.0), (2.0, 0.0, 0.0))
        assert curve.mse == pytest.approx(0.25)

    def test_interpolate(self):
        """
        TPP について区分線形に補間し、最大 TPP を超える点は nan になることを確認。
        """
        # Given: 3 点の曲線
        curve = EmpiricalCurve(((0.0, 0.8, 0.6), (1.0, 0.4, 0.2), (math.inf, 0.0, 0.0)), 0.0)

        # When: 補間
        result = interpolate_fdp(curve, [0.2, 0.6, 0.9])

        # Then: 線形補間と nan
        np.testing.assert_allclose(result[:2], [0.1, 0.4])
        assert math.isnan(result[2])

    def test_interpolate_uses_lowest_fdp(self):
        """
        同じ TPP の点では FDP の最小値を使うことを確認。
        """
        # Given: TPP=0.5 に 3 点ある曲線
        curve = empirical_curve([3.0, 0.0, -1.0, 0.5], [1.0, 1.0, 0.0, 0.0])

        # When & Then: TPP=0.5 の FDP は 0
        np.testing.assert_allclose(interpolate_fdp(curve, [0.25, 0.5]), [0.0, 0.0])


class TestRunExperiment:
    """
    run_experiment / write_report_csv のテストクラス。
    """

    def test_deterministic(self, small_config):
        """
        同じシードで 2 回実行すると同じ集計になることを確認。
        """
        # When: 2 回実行
        first = run_experiment(small_config)
        second = run_experiment(small_config)

        # Then: 手法ごとの集計が一致する
        assert first.succeeded == 2
        assert len(first.summaries) == 4
        for left, right in zip(first.summaries, second.summaries, strict=True):
            np.testing.assert_array_equal(left.mean_fdp, right.mean_fdp)
            np.testing.assert_array_equal(left.std_fdp, right.std_fdp)
            assert left.mean_mse == right.mean_mse
            assert left.replicates_used == 2

    def test_summary_ranges(self, small_config):
        """
        平均 FDP が [0, 1]（届かない点は nan）、MSE が 0 以上であることを確認。
        """
        # When: 実行
        report = run_experiment(small_config)

        # Then: 値の範囲
        for summary in report.summaries:
            assert summary.mean_fdp.shape == (3,)
            finite = summary.mean_fdp[~np.isnan(summary.mean_fdp)]
            assert ((finite >= 0.0) & (finite <= 1.0)).all()
            assert summary.mean_mse >= 0.0

    def test_failed_replicates(self, small_config):
        """
        反復の中の BridgeLabError は失敗として記録され、集計から除かれることを確認。
        """
        # Given: データ生成が必ず失敗する
        with patch.object(pipeline, "generate_data", side_effect=DesignError("分解できません")):
            # When: 実行
            report = run_experiment(small_config)

        # Then: 2 回とも失敗し、集計は nan
        assert report.succeeded == 0
        assert [failure.index for failure in report.failures] == [0, 1]
        assert "DesignError" in report.failures[0].message
        assert all(np.isnan(summary.mean_fdp).all() for summary in report.summaries)
        assert all(math.isnan(summary.mean_mse) for summary in report.summaries)

    def test_write_report(self, small_config, tmp_path):
        """
        手法 × グリッドの行が書き出されることを確認。
        """
        # Given: 実行結果
        report = run_experiment(small_config)

        # When: CSV を書き出す
        path = write_report_csv(report, tmp_path / "report.csv")

        # Then: ヘッダーと 4 × 3 行
        with path.open(encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == REPORT_CSV_HEADER
        assert len(rows) == 1 + 4 * 3
        assert [row[0] for row in rows[1::3]] == ["lasso", "two_stage", "debiased_two_stage", "sis"]


class TestKnockoff:
    """
    ノックオフ関連の関数のテストクラス。
    """

    def test_features_preserve_gram(self):
        """
        X̃ᵀX̃ = XᵀX、XᵀX̃ の非対角成分が XᵀX と一致することを確認。
        """
        # Given: n=30, p=10 の計画行列
        design = np.random.default_rng(5).standard_normal((30, 10))

        # When: ノックオフを作成
        knockoff = knockoff_features(design)

        # Then: 相関構造が保たれる
        gram = design.T @ design
        np.testing.assert_allclose(knockoff.T @ knockoff, gram, atol=1e-8)
        cross = design.T @ knockoff
        off_diagonal = ~np.eye(10, dtype=bool)
        np.testing.assert_allclose(cross[off_diagonal], gram[off_diagonal], atol=1e-8)
        assert (np.diag(cross) <= np.diag(gram) + 1e-8).all()

    def test_features_require_tall_design(self):
        """
        n < 2p は UnsupportedRegimeError になることを確認。
        """
        # When & Then: UnsupportedRegimeError が発生
        with pytest.raises(UnsupportedRegimeError):
            knockoff_features(np.ones((15, 10)))

    def test_statistics(self):
        """
        W_j = max(|β̂_j|, |β̃_j|)·sgn(|β̂_j| - |β̃_j|) を確認。
        """
        # When & Then: 期待値
        np.testing.assert_array_equal(
            knockoff_statistics([3.0, -1.0, 0.0], [1.0, 2.0, 0.0]), [3.0, -2.0, 0.0]
        )

    @pytest.mark.parametrize(("target", "expected"), [(0.5, 1.0), (0.3, 2.0), (0.1, math.inf)])
    def test_threshold(self, target, expected):
        """
        (1 + #{W ≤ -t}) / (#{W ≥ t} ∨ 1) ≤ ρ を満たす最小の t を確認。
        """
        # Given: W 統計量
        w = [5.0, 4.0, -1.0, 3.0, 2.0, -0.5]

        # When & Then: しきい値
        assert knockoff_threshold(w, target) == expected

    def test_select(self):
        """
        強い信号の変数が選ばれ、選ばれた変数の W がしきい値以上であることを確認。
        """
        # Given: n=60, p=10、最初の 3 変数が強い信号
        rng = np.random.default_rng(9)
        design = rng.standard_normal((60, 10)) / math.sqrt(60)
        beta = np.zeros(10)
        beta[:3] = 8.0
        problem = RegressionProblem(design, design @ beta + 0.1 * rng.standard_normal(60))

        # When: λ=0.05 で選択
        selection = knockoff_select(problem, 1.0, 0.05, 0.5)

        # Then: 選ばれた変数の W はしきい値以上
        assert selection.lam == 0.05
        assert len(selection.statistics) == 10
        assert all(selection.statistics[j] >= selection.threshold for j in selection.selected)

    @pytest.mark.parametrize(("lam", "target"), [(Tuning.OPTIMAL, 0.2), (0.1, 1.0)])
    def test_select_invalid(self, lam, target):
        """
        tuning=optimal と範囲外の ρ は DomainError になることを確認。
        """
        # Given: n=30, p=10 の問題
        design = np.random.default_rng(1).standard_normal((30, 10))
        problem = RegressionProblem(design, design[:, 0])

        # When & Then: DomainError が発生
        with pytest.raises(DomainError):
            knockoff_select(problem, 1.0, lam, target)

    def test_experiment(self, prior, tmp_path):
        """
        ノックオフの実験を実行し、集計を CSV に書き出せることを確認。
        """
        # Given: p=10、δ=3 の設定
        config = ExperimentConfig(
            p=10,
            delta=3.0,
            prior=prior,
            sigma=0.5,
            methods=(MethodSpec(Method.LASSO, 1.0, 0.1), MethodSpec(Method.TWO_STAGE, 1.5, 0.1)),
            replicates=2,
            seed=4,
            fdr_target=0.2,
        )

        # When: 実行して CSV に書き出す
        report = run_knockoff_experiment(config)
        path = write_knockoff_csv(report, tmp_path / "knockoff.csv")

        # Then: 集計と行数
        assert report.succeeded == 2
        for summary in report.summaries:
            assert 0.0 <= summary.mean_fdp <= 1.0
            assert 0.0 <= summary.mean_tpp <= 1.0
            assert summary.replicates_used == 2
        with path.open(encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == KNOCKOFF_CSV_HEADER
        assert len(rows) == 3

    @pytest.mark.parametrize(
        ("delta", "fdr_target", "spec", "error"),
        [
            (3.0, None, MethodSpec(Method.LASSO, 1.0, 0.1), DomainError),
            (3.0, 0.2, MethodSpec(Method.SIS, 1.0, 0.1), DomainError),
            (3.0, 0.2, MethodSpec(Method.LASSO, 1.0, Tuning.OPTIMAL), DomainError),
            (1.5, 0.2, MethodSpec(Method.LASSO, 1.0, 0.1), UnsupportedRegimeError),
        ],
    )
    def test_experiment_rejected(self, prior, delta, fdr_target, spec, error):
        """
        fdr_target が無い、対応しない手法、tuning=optimal、n < 2p の設定を拒否することを確認。
        """
        # Given: 設定
        config = ExperimentConfig(
            p=10, delta=delta, prior=prior, sigma=0.5, methods=(spec,), fdr_target=fdr_target
        )

        # When & Then: 例外が発生
        with pytest.raises(error):
            run_knockoff_experiment(config)

    def test_fdr_control(self, prior):
        """
        p=200, n=600 のノックオフで 50 回の FDP の平均が目標の FDR + 0.03 以下であることを確認。
        """
        # Given: ε=0.2、G=3、σ=1、λ を固定した LASSO
        config = ExperimentConfig(
            p=200,
            delta=3.0,
            prior=prior,
            sigma=1.0,
            methods=(MethodSpec(Method.LASSO, 1.0, 0.5),),
            replicates=50,
            seed=2024,
            fdr_target=0.2,
        )

        # When: 実行
        report = run_knockoff_experiment(config)

        # Then: FDP の平均が目標 + 0.03 以下
        assert report.succeeded == 50
        assert report.summaries[0].mean_fdp <= 0.2 + 0.03


class TestDebiasedErrors:
    """
    デバイアス推定量の標準化誤差のテストクラス。
    """

    @pytest.mark.parametrize("q", [1.0, 2.0])
    def test_standard_normal(self, q):
        """
        λ* で当てはめたデバイアス推定量の (β† - β)/τ̂ が標準正規分布に近いことを確認。
        """
        # Given: p=1000、δ=0.8、ε=0.3、G=1、σ=0.5 の 2 回分のデータ
        config = ExperimentConfig(
            p=1000,
            delta=0.8,
            prior=SignalPrior.point_mass(0.3, 1.0),
            sigma=0.5,
            methods=(MethodSpec(Method.DEBIASED_TWO_STAGE, q, Tuning.OPTIMAL),),
            replicates=2,
            seed=7,
        )
        lam = optimal_tuning(config.model(q), config.prior).lam

        # When: 反復ごとに当てはめ、標準化した誤差をまとめる
        errors = []
        for replicate in range(config.replicates):
            problem, beta = generate_data(config, replicate)
            fit = attach_estimates(problem, fit_coordinate_descent(problem, q, lam))
            errors.append((debias(problem, fit) - beta) / fit.tau_hat)
        z = np.concatenate(errors)

        # Then: 標準偏差が 1 に近く、正規分布との Kolmogorov 距離が小さい
        assert abs(float(np.std(z)) - 1.0) <= 0.06
        assert kstest(z, "norm").statistic <= 0.045
