"""
データ生成、モンテカルロ実験、経験的な FDP / TPP 曲線、ノックオフによる選択を扱うモジュール。

このモジュールは以下の処理を提供します:
1. generate_data: (seed, 反復番号, 用途) ごとに独立した Philox の乱数列から、
   計画行列（i.i.d. 正規 / Toeplitz 相関 / t 分布）、係数、ノイズを生成する。
2. empirical_curve: 推定値の |β̂| をしきい値として掃引し、(s, TPP, FDP) の列を作る。
3. run_experiment: 反復を joblib で並列に実行し、ATPP のグリッド上で FDP を平均する。
4. knockoff_select / run_knockoff_experiment: 等相関の fixed-X ノックオフと
   W 統計量のしきい値 (1 + #{W ≤ -t}) / (#{W ≥ t} ∨ 1) ≤ ρ による選択。
5. write_report_csv / write_knockoff_csv: 集計結果の CSV を書き出す。

使用例:
    config = ExperimentConfig(p=200, delta=0.8, prior=prior, sigma=0.15, methods=methods, ...)
    report = run_experiment(config, n_jobs=4)
    write_report_csv(report, Path("results/report.csv"))

エラー処理:
    - Toeplitz 行列の Cholesky 分解に失敗した場合は DesignError。
    - n < 2p でノックオフを作ろうとした場合は UnsupportedRegimeError。
    - 反復の中で起きた BridgeLabError はその反復の失敗として記録し、集計から除外する。
"""

import csv
import logging
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import toeplitz

from selections.bridge_solver import (
    FitResult,
    RegressionProblem,
    attach_estimates,
    debias,
    fit_coordinate_descent,
    lambda_grid,
    lasso_path,
    tune_lambda,
)
from selections.constants import (
    CSV_FLOAT_FORMAT,
    DEFAULT_ATPP_GRID,
    DesignKind,
    Method,
    NoiseScaling,
    StreamPurpose,
    Tuning,
)
from selections.exceptions import (
    BridgeLabError,
    DesignError,
    DomainError,
    UnsupportedRegimeError,
)
from selections.prior import SignalPrior
from selections.state_evolution import ModelParams, optimal_tuning

logger = logging.getLogger("selections")

REPORT_CSV_HEADER = ("method", "q", "atpp", "mean_fdp", "std_fdp", "mean_mse")
KNOCKOFF_CSV_HEADER = (
    "method",
    "q",
    "fdr_target",
    "mean_fdp",
    "std_fdp",
    "mean_tpp",
    "mean_selected",
)
KNOCKOFF_METHODS = (Method.LASSO, Method.TWO_STAGE)


@dataclass(frozen=True)
class DesignSpec:
    """
    計画行列の種類とそのパラメータ。

    Attributes:
        kind (DesignKind): 種類。
        corr_rho (float | None): Toeplitz 行列 Σ_ij = ρ^{|i-j|} の ρ（toeplitz_correlated のみ）。
        t_nu (float | None): t 分布の自由度 ν > 2（student_t のみ）。
    """

    kind: DesignKind = DesignKind.IID_GAUSSIAN
    corr_rho: float | None = None
    t_nu: float | None = None

    def __post_init__(self) -> None:
        correlated = self.kind == DesignKind.TOEPLITZ_CORRELATED
        heavy = self.kind == DesignKind.STUDENT_T
        if correlated != (self.corr_rho is not None):
            raise DomainError(f"corr_rho は toeplitz_correlated でのみ指定します: kind={self.kind}")
        if heavy != (self.t_nu is not None):
            raise DomainError(f"t_nu は student_t でのみ指定します: kind={self.kind}")
        if self.t_nu is not None and not (math.isfinite(self.t_nu) and self.t_nu > 2):
            raise DomainError(f"t_nu は 2 より大きい必要があります: t_nu={self.t_nu}")


@dataclass(frozen=True)
class MethodSpec:
    """
    実験で比較する手法。

    Attributes:
        method (Method): 手法。
        q (float): ブリッジ指数。
        tuning (Tuning | float): optimal（状態発展の λ*）、tuned（τ̂ 最小）、または λ の値。
    """

    method: Method
    q: float = 1.0
    tuning: Tuning | float = Tuning.OPTIMAL

    @property
    def label(self) -> str:
        return f"{self.method.value}(q={self.q:g}, tuning={self.tuning})"


@dataclass(frozen=True)
class ExperimentConfig:
    """
    モンテカルロ実験の設定。

    Attributes:
        p (int): 変数の数（10 以上）。
        delta (float): n = round(δp) を決めるサンプル比。
        prior (SignalPrior): 係数の事前分布。
        sigma (float): ノイズの標準偏差。
        noise_scaling (NoiseScaling): plain なら分散 σ²、large_sample なら σ²/δ。
        design (DesignSpec): 計画行列。
        methods (tuple[MethodSpec, ...]): 比較する手法。
        replicates (int): 反復回数（1 以上）。
        seed (int): 64 ビットの乱数シード。
        atpp_grid (tuple[float, ...]): FDP を平均する ATPP のグリッド。
        fdr_target (float | None): ノックオフの目標 FDR ρ ∈ (0, 1)。
        lasso_path_size (int): LASSO の経験曲線に使う λ の点数。
    """

    p: int
    delta: float
    prior: SignalPrior
    sigma: float
    methods: tuple[MethodSpec, ...]
    replicates: int = 1
    seed: int = 0
    noise_scaling: NoiseScaling = NoiseScaling.PLAIN
    design: DesignSpec = field(default_factory=DesignSpec)
    atpp_grid: tuple[float, ...] = DEFAULT_ATPP_GRID
    fdr_target: float | None = None
    lasso_path_size: int = 40

    def __post_init__(self) -> None:
        if self.p < 10:
            raise DomainError(f"p は 10 以上である必要があります: p={self.p}")
        if self.replicates < 1:
            raise DomainError(f"replicates は 1 以上である必要があります: {self.replicates}")
        if not math.isfinite(self.delta) or self.delta <= 0:
            raise DomainError(f"δ は正の有限値である必要があります: delta={self.delta}")
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise DomainError(f"σ は 0 以上の有限値である必要があります: sigma={self.sigma}")
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed は 64 ビットの非負整数である必要があります: seed={self.seed}")
        if self.fdr_target is not None and not 0.0 < self.fdr_target < 1.0:
            raise DomainError(f"fdr_target は (0, 1) の範囲である必要があります: {self.fdr_target}")
        if self.lasso_path_size < 2:
            raise DomainError(f"lasso_path_size は 2 以上である必要があります: {self.lasso_path_size}")

    @property
    def n(self) -> int:
        return max(1, int(round(self.delta * self.p)))

    @property
    def noise_sd(self) -> float:
        if self.noise_scaling == NoiseScaling.LARGE_SAMPLE:
            return self.sigma / math.sqrt(self.delta)
        return self.sigma

    def model(self, q: float) -> ModelParams:
        """状態発展で使うモデル（ノイズのスケーリング込み）。"""
        return ModelParams.scaled(self.delta, self.sigma, q, self.noise_scaling)


@dataclass(frozen=True)
class EmpiricalCurve:
    """
    1 回の反復の経験的なトレードオフ曲線。

    Attributes:
        points (tuple[tuple[float, float, float], ...]): (s, TPP, FDP) の列（s 昇順）。
        mse (float): ‖β̂ - β‖² / p。
    """

    points: tuple[tuple[float, float, float], ...]
    mse: float

    @property
    def max_tpp(self) -> float:
        return max(tpp for _, tpp, _ in self.points)


@dataclass(frozen=True, eq=False)
class MethodSummary:
    """
    手法ごとの集計。

    Attributes:
        spec (MethodSpec): 手法。
        atpp_grid (tuple[float, ...]): ATPP のグリッド。
        mean_fdp (NDArray[np.float64]): グリッド上の FDP の平均（届かない点は nan）。
        std_fdp (NDArray[np.float64]): 標本標準偏差（有効な反復が 1 回なら 0）。
        mean_mse (float): MSE の平均。
        replicates_used (int): 集計に使った反復の数。
    """

    spec: MethodSpec
    atpp_grid: tuple[float, ...]
    mean_fdp: NDArray[np.float64]
    std_fdp: NDArray[np.float64]
    mean_mse: float
    replicates_used: int


@dataclass(frozen=True)
class ReplicateFailure:
    """失敗した反復の番号と理由。"""

    index: int
    message: str


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """
    run_experiment の結果。

    Attributes:
        config (ExperimentConfig): 実験の設定。
        summaries (tuple[MethodSummary, ...]): 手法ごとの集計（設定の順）。
        failures (tuple[ReplicateFailure, ...]): 失敗した反復（番号順）。
    """

    config: ExperimentConfig
    summaries: tuple[MethodSummary, ...]
    failures: tuple[ReplicateFailure, ...] = ()

    @property
    def succeeded(self) -> int:
        return self.config.replicates - len(self.failures)


@dataclass(frozen=True)
class KnockoffSelection:
    """
    ノックオフによる選択。

    Attributes:
        selected (tuple[int, ...]): 選ばれた変数の番号（昇順）。
        statistics (tuple[float, ...]): W 統計量。
        threshold (float): しきい値（該当なしは inf）。
        lam (float): 2p 列の当てはめに使った λ。
    """

    selected: tuple[int, ...]
    statistics: tuple[float, ...]
    threshold: float
    lam: float


@dataclass(frozen=True)
class KnockoffSummary:
    """手法ごとのノックオフの集計（FDP の平均と標準偏差、TPP と選択数の平均）。"""

    spec: MethodSpec
    fdr_target: float
    mean_fdp: float
    std_fdp: float
    mean_tpp: float
    mean_selected: float
    replicates_used: int


@dataclass(frozen=True)
class KnockoffReport:
    """run_knockoff_experiment の結果。"""

    config: ExperimentConfig
    summaries: tuple[KnockoffSummary, ...]
    failures: tuple[ReplicateFailure, ...] = ()

    @property
    def succeeded(self) -> int:
        return self.config.replicates - len(self.failures)


def rng_for(seed: int, replicate: int, purpose: StreamPurpose) -> np.random.Generator:
    """
    (seed, 反復番号, 用途) で決まる Philox の乱数生成器。

    Args:
        seed (int): 実験のシード。
        replicate (int): 反復番号。
        purpose (StreamPurpose): 用途（計画行列、係数、ノイズ）。

    Returns:
        np.random.Generator: 他の組と独立な乱数生成器。
    """
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(replicate, int(purpose)))
    return np.random.Generator(np.random.Philox(sequence))


@lru_cache(maxsize=8)
def _toeplitz_factor(p: int, rho: float) -> NDArray[np.float64]:
    if not 0.0 <= rho < 1.0:
        raise DesignError(f"Toeplitz 行列の ρ は [0, 1) の範囲である必要があります: rho={rho}")
    sigma = toeplitz(rho ** np.arange(p, dtype=float))
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as e:
        logger.error(f"Toeplitz 行列の Cholesky 分解に失敗しました: p={p}, rho={rho}", exc_info=True)
        raise DesignError(f"Toeplitz 行列の Cholesky 分解に失敗しました: rho={rho}") from e


def _design(config: ExperimentConfig, rng: np.random.Generator) -> NDArray[np.float64]:
    n, p = config.n, config.p
    spec = config.design
    if spec.t_nu is not None:
        nu = spec.t_nu
        return rng.standard_t(nu, size=(n, p)) * math.sqrt((nu - 2.0) / (n * nu))
    base = rng.standard_normal((n, p)) / math.sqrt(n)
    if spec.corr_rho is not None:
        # 行の共分散が Σ/n になる
        return base @ _toeplitz_factor(p, spec.corr_rho).T
    return base


def generate_data(
    config: ExperimentConfig, replicate: int
) -> tuple[RegressionProblem, NDArray[np.float64]]:
    """
    1 回の反復のデータ y = Xβ + w を生成する。

    Toeplitz 相関の計画行列は X₀Lᵀ（Σ = LLᵀ）で作るので、y = X₀Σ^{1/2}β + w の形になる。

    Args:
        config (ExperimentConfig): 実験の設定。
        replicate (int): 反復番号。

    Returns:
        tuple[RegressionProblem, NDArray[np.float64]]: 回帰問題と真の係数 β。

    Raises:
        DesignError: Toeplitz 行列を分解できない場合。
    """
    design = _design(config, rng_for(config.seed, replicate, StreamPurpose.DESIGN))
    beta = config.prior.sample(rng_for(config.seed, replicate, StreamPurpose.SIGNAL), config.p)
    noise = rng_for(config.seed, replicate, StreamPurpose.NOISE).standard_normal(config.n)
    y = design @ beta + config.noise_sd * noise
    return RegressionProblem(design, y), beta


def _rates(selected: NDArray[np.bool_], beta_true: NDArray[np.float64]) -> tuple[float, float]:
    signal = beta_true != 0.0
    chosen = int(np.count_nonzero(selected))
    true_positive = int(np.count_nonzero(selected & signal))
    tpp = true_positive / max(int(np.count_nonzero(signal)), 1)
    fdp = (chosen - true_positive) / max(chosen, 1)
    return tpp, fdp


def _dedupe(points: list[tuple[float, float, float]]) -> tuple[tuple[float, float, float], ...]:
    kept: list[tuple[float, float, float]] = []
    for point in points:
        if not kept or kept[-1][1:] != point[1:]:
            kept.append(point)
    return tuple(kept)


def empirical_curve(estimate: ArrayLike, beta_true: ArrayLike) -> EmpiricalCurve:
    """
    推定値を |β̂_j| ≥ s でしきい値処理したときの (s, TPP, FDP) を掃引する。

    s は 0、|β̂| の相異なる非ゼロ値、inf を昇順に取る。β̂_j = 0 の変数は選ばない。
    選択がない点の FDP は 0 とし、(TPP, FDP) が直前と同じ点は省く。

    Args:
        estimate (ArrayLike): 推定値。
        beta_true (ArrayLike): 真の係数。

    Returns:
        EmpiricalCurve: 曲線と MSE。

    Raises:
        DomainError: 長さが異なる場合。
    """
    est = np.asarray(estimate, dtype=float)
    beta = np.asarray(beta_true, dtype=float)
    if est.shape != beta.shape:
        raise DomainError(f"推定値と真の係数の長さが一致しません: {est.shape} != {beta.shape}")
    magnitude = np.abs(est)
    nonzero = magnitude > 0.0
    thresholds = [0.0, *np.unique(magnitude[nonzero]).tolist(), math.inf]
    points = []
    for s in thresholds:
        tpp, fdp = _rates(nonzero & (magnitude >= s), beta)
        points.append((float(s), tpp, fdp))
    mse = float(np.mean((est - beta) ** 2))
    return EmpiricalCurve(_dedupe(points), mse)


def path_curve(fits: Sequence[FitResult], beta_true: ArrayLike) -> EmpiricalCurve:
    """
    LASSO の解の列から、各 λ の台の (λ, TPP, FDP) を並べた曲線を作る。

    MSE は τ̂ が最小の解のもの。

    Args:
        fits (Sequence[FitResult]): lasso_path の結果。
        beta_true (ArrayLike): 真の係数。

    Returns:
        EmpiricalCurve: λ 昇順の曲線（λ = inf の空の選択を含む）。
    """
    beta = np.asarray(beta_true, dtype=float)
    points = [(math.inf, 0.0, 0.0)]
    for fit in fits:
        tpp, fdp = _rates(fit.beta != 0.0, beta)
        points.append((fit.lam, tpp, fdp))
    points.sort(key=lambda point: point[0])
    best = min(fits, key=lambda fit: math.inf if fit.tau_hat is None else fit.tau_hat)
    return EmpiricalCurve(_dedupe(points), float(np.mean((best.beta - beta) ** 2)))


def interpolate_fdp(curve: EmpiricalCurve, atpp_grid: Sequence[float]) -> NDArray[np.float64]:
    """
    曲線を TPP について区分線形に補間し、グリッド上の FDP を返す。

    同じ TPP の点は FDP の最小値を使い、曲線の最大 TPP を超える点は nan。

    Args:
        curve (EmpiricalCurve): 曲線。
        atpp_grid (Sequence[float]): TPP のグリッド。

    Returns:
        NDArray[np.float64]: グリッド上の FDP。
    """
    tpp = np.array([point[1] for point in curve.points])
    fdp = np.array([point[2] for point in curve.points])
    order = np.lexsort((fdp, tpp))
    tpp, fdp = tpp[order], fdp[order]
    knots, first = np.unique(tpp, return_index=True)
    grid = np.asarray(atpp_grid, dtype=float)
    return np.interp(grid, knots, fdp[first], left=math.nan, right=math.nan)


def _resolve_lambdas(config: ExperimentConfig) -> tuple[float | None, ...]:
    """optimal の λ* を状態発展から一度だけ求める（tuned と LASSO・SIS は None）。"""
    resolved: list[float | None] = []
    for spec in config.methods:
        if spec.method in (Method.LASSO, Method.SIS) or spec.tuning == Tuning.TUNED:
            resolved.append(None)
        elif spec.tuning == Tuning.OPTIMAL:
            se = optimal_tuning(config.model(spec.q), config.prior)
            logger.info(f"状態発展の λ*: {spec.label}, lam={se.lam}, amse={se.amse}")
            resolved.append(se.lam)
        else:
            resolved.append(float(spec.tuning))
    return tuple(resolved)


def _first_stage(problem: RegressionProblem, spec: MethodSpec, lam: float | None) -> FitResult:
    if lam is None:
        _, fit = tune_lambda(problem, spec.q)
        return fit
    return attach_estimates(problem, fit_coordinate_descent(problem, spec.q, lam))


def method_curve(
    problem: RegressionProblem,
    beta_true: NDArray[np.float64],
    spec: MethodSpec,
    lam: float | None,
    path_size: int = 40,
) -> EmpiricalCurve:
    """
    1 つの手法について経験的な曲線を作る。

    - LASSO: λ の列を掃引する。
    - two_stage: β̂(q, λ) を |β̂| でしきい値処理する。
    - debiased_two_stage: β† を |β†| でしきい値処理する（MSE は第一段階のもの）。
    - SIS: Xᵀy を |·| でしきい値処理する（MSE は β̂ = 0 のもの）。

    Args:
        problem (RegressionProblem): 回帰問題。
        beta_true (NDArray[np.float64]): 真の係数。
        spec (MethodSpec): 手法。
        lam (float | None): 第一段階の λ（None なら tune_lambda で決める）。
        path_size (int): LASSO の λ の点数。

    Returns:
        EmpiricalCurve: 曲線。
    """
    if spec.method == Method.LASSO:
        return path_curve(lasso_path(problem, lambda_grid(problem, path_size)), beta_true)
    if spec.method == Method.SIS:
        fit = fit_coordinate_descent(problem, 1.0, math.inf)
    else:
        fit = _first_stage(problem, spec, lam)
    first_mse = float(np.mean((fit.beta - beta_true) ** 2))
    if spec.method == Method.TWO_STAGE:
        return empirical_curve(fit.beta, beta_true)
    return replace(empirical_curve(debias(problem, fit), beta_true), mse=first_mse)


@dataclass(frozen=True, eq=False)
class _ReplicateOutcome:
    index: int
    fdp: tuple[NDArray[np.float64], ...] = ()
    mse: tuple[float, ...] = ()
    error: str | None = None


def _run_replicate(
    config: ExperimentConfig, lambdas: tuple[float | None, ...], index: int
) -> _ReplicateOutcome:
    try:
        problem, beta = generate_data(config, index)
        curves = [
            method_curve(problem, beta, spec, lam, config.lasso_path_size)
            for spec, lam in zip(config.methods, lambdas, strict=True)
        ]
    except BridgeLabError as e:
        logger.warning(f"反復 {index} が失敗しました: {type(e).__name__}: {e}")
        return _ReplicateOutcome(index, error=f"{type(e).__name__}: {e}")
    return _ReplicateOutcome(
        index,
        fdp=tuple(interpolate_fdp(curve, config.atpp_grid) for curve in curves),
        mse=tuple(curve.mse for curve in curves),
    )


def _mean_std(rows: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """列ごとの nan を除いた平均と標本標準偏差（有効な値が 1 つ以下の列の標準偏差は 0）。"""
    counts = np.sum(~np.isnan(rows), axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(rows, axis=0)
        std = np.nanstd(rows, axis=0, ddof=1)
    return mean, np.where(counts > 1, std, np.where(counts == 1, 0.0, math.nan))


def _failures(outcomes: Sequence[_ReplicateOutcome]) -> tuple[ReplicateFailure, ...]:
    return tuple(
        ReplicateFailure(outcome.index, outcome.error)
        for outcome in outcomes
        if outcome.error is not None
    )


def run_experiment(config: ExperimentConfig, n_jobs: int = 1) -> ExperimentReport:
    """
    モンテカルロ実験を実行し、手法ごとに ATPP のグリッド上の FDP と MSE を集計する。

    集計は反復番号の順に行うので、並列実行の順序に依存しない。

    Args:
        config (ExperimentConfig): 実験の設定。
        n_jobs (int): joblib のワーカー数。

    Returns:
        ExperimentReport: 集計結果と失敗した反復。
    """
    logger.info(
        f"START 実験: p={config.p}, n={config.n}, 反復={config.replicates}, "
        f"手法={[spec.label for spec in config.methods]}, n_jobs={n_jobs}"
    )
    lambdas = _resolve_lambdas(config)
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_run_replicate)(config, lambdas, index) for index in range(config.replicates)
    )
    outcomes = sorted(outcomes, key=lambda outcome: outcome.index)
    succeeded = [outcome for outcome in outcomes if outcome.error is None]

    summaries = []
    grid_size = len(config.atpp_grid)
    for position, spec in enumerate(config.methods):
        rows = np.array([outcome.fdp[position] for outcome in succeeded]).reshape(-1, grid_size)
        mean, std = _mean_std(rows)
        mse = [outcome.mse[position] for outcome in succeeded]
        summaries.append(
            MethodSummary(
                spec=spec,
                atpp_grid=config.atpp_grid,
                mean_fdp=mean,
                std_fdp=std,
                mean_mse=float(np.mean(mse)) if mse else math.nan,
                replicates_used=len(succeeded),
            )
        )
    failures = _failures(outcomes)
    logger.info(f"END   実験: 成功={len(succeeded)}, 失敗={len(failures)}")
    return ExperimentReport(config, tuple(summaries), failures)


def knockoff_features(design: ArrayLike) -> NDArray[np.float64]:
    """
    等相関の fixed-X ノックオフ X̃ を作る。

    列を正規化した X で Σ = XᵀX、s = min(2λ_min(Σ), 1) とし、
    X̃ = X(I - sΣ⁻¹) + ŨC（ŨᵀX = 0、CᵀC = 2sI - s²Σ⁻¹）を元の列ノルムに戻す。
    X̃ᵀX̃ = XᵀX、XᵀX̃ = XᵀX - s·diag(‖x_j‖²) を満たす。

    Args:
        design (ArrayLike): n×p の計画行列。

    Returns:
        NDArray[np.float64]: n×p のノックオフ。

    Raises:
        UnsupportedRegimeError: n < 2p の場合。
        DesignError: X の列が一次従属な場合。
    """
    x = np.asarray(design, dtype=float)
    n, p = x.shape
    if n < 2 * p:
        raise UnsupportedRegimeError(f"fixed-X ノックオフには n ≥ 2p が必要です: n={n}, p={p}")
    norms = np.linalg.norm(x, axis=0)
    if np.any(norms == 0.0):
        raise DesignError("ノルムが 0 の列があります")
    normalized = x / norms
    gram = normalized.T @ normalized
    s = min(2.0 * float(np.linalg.eigvalsh(gram)[0]), 1.0)
    if s <= 0.0:
        raise DesignError(f"計画行列の列が一次従属です: λ_min={s / 2.0:.3e}")
    s_gram_inv = np.linalg.solve(gram, s * np.eye(p))
    s_gram_inv = 0.5 * (s_gram_inv + s_gram_inv.T)
    eigenvalues, vectors = np.linalg.eigh(2.0 * s * np.eye(p) - s * s_gram_inv)
    c = (vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ vectors.T
    q_full, _ = np.linalg.qr(normalized, mode="complete")
    orthogonal = q_full[:, p : 2 * p]
    knockoffs = normalized - normalized @ s_gram_inv + orthogonal @ c
    return knockoffs * norms


def knockoff_statistics(original: ArrayLike, knockoff: ArrayLike) -> NDArray[np.float64]:
    """W_j = max(|β̂_j|, |β̃_j|)·sgn(|β̂_j| - |β̃_j|)。"""
    a = np.abs(np.asarray(original, dtype=float))
    b = np.abs(np.asarray(knockoff, dtype=float))
    return np.maximum(a, b) * np.sign(a - b)


def knockoff_threshold(statistics: ArrayLike, fdr_target: float) -> float:
    """
    (1 + #{W_j ≤ -t}) / (#{W_j ≥ t} ∨ 1) ≤ ρ を満たす最小の t > 0。

    候補は |W_j| の正の値。満たす t がなければ inf。

    Args:
        statistics (ArrayLike): W 統計量。
        fdr_target (float): ρ ∈ (0, 1)。

    Returns:
        float: しきい値。
    """
    w = np.asarray(statistics, dtype=float)
    candidates = np.unique(np.abs(w[w != 0.0]))
    for t in candidates:
        ratio = (1 + int(np.sum(w <= -t))) / max(int(np.sum(w >= t)), 1)
        if ratio <= fdr_target:
            return float(t)
    return math.inf


def knockoff_select(
    problem: RegressionProblem, q: float, lam: float | Tuning, fdr_target: float
) -> KnockoffSelection:
    """
    [X, X̃] の 2p 列でブリッジ回帰を解き、W 統計量のしきい値で変数を選ぶ。

    Args:
        problem (RegressionProblem): 回帰問題。
        q (float): ブリッジ指数。
        lam (float | Tuning): λ の値、または Tuning.TUNED（2p 列の問題で τ̂ を最小化）。
        fdr_target (float): 目標 FDR ρ ∈ (0, 1)。

    Returns:
        KnockoffSelection: 選ばれた変数と W。

    Raises:
        UnsupportedRegimeError: n < 2p の場合。
        DomainError: ρ が (0, 1) の外、または lam に Tuning.OPTIMAL を渡した場合。
    """
    if not 0.0 < fdr_target < 1.0:
        raise DomainError(f"fdr_target は (0, 1) の範囲である必要があります: {fdr_target}")
    if lam == Tuning.OPTIMAL:
        raise DomainError("ノックオフでは tuning=optimal を使えません（λ の値か tuned）")
    p = problem.p
    augmented = RegressionProblem(np.hstack([problem.X, knockoff_features(problem.X)]), problem.y)
    if lam == Tuning.TUNED:
        value, fit = tune_lambda(augmented, q)
    else:
        value = float(lam)
        fit = fit_coordinate_descent(augmented, q, value)
    w = knockoff_statistics(fit.beta[:p], fit.beta[p:])
    threshold = knockoff_threshold(w, fdr_target)
    selected = tuple(int(j) for j in np.flatnonzero(w >= threshold))
    logger.debug(f"ノックオフ: q={q}, lam={value}, しきい値={threshold}, 選択数={len(selected)}")
    return KnockoffSelection(selected, tuple(float(v) for v in w), threshold, value)


def _knockoff_replicate(
    config: ExperimentConfig, fdr_target: float, index: int
) -> _ReplicateOutcome:
    try:
        problem, beta = generate_data(config, index)
        rows = []
        for spec in config.methods:
            selection = knockoff_select(problem, spec.q, spec.tuning, fdr_target)
            chosen = np.zeros(config.p, dtype=bool)
            chosen[list(selection.selected)] = True
            tpp, fdp = _rates(chosen, beta)
            rows.append(np.array([fdp, tpp, float(len(selection.selected))]))
    except BridgeLabError as e:
        logger.warning(f"反復 {index} が失敗しました: {type(e).__name__}: {e}")
        return _ReplicateOutcome(index, error=f"{type(e).__name__}: {e}")
    return _ReplicateOutcome(index, fdp=tuple(rows))


def run_knockoff_experiment(config: ExperimentConfig, n_jobs: int = 1) -> KnockoffReport:
    """
    ノックオフによる選択を反復し、手法ごとに FDP・TPP・選択数を集計する。

    Args:
        config (ExperimentConfig): 実験の設定（fdr_target が必要）。
        n_jobs (int): joblib のワーカー数。

    Returns:
        KnockoffReport: 集計結果と失敗した反復。

    Raises:
        DomainError: fdr_target が無い、または LASSO・two_stage 以外の手法がある場合。
        UnsupportedRegimeError: n < 2p の場合。
    """
    if config.fdr_target is None:
        raise DomainError("ノックオフには fdr_target が必要です")
    for spec in config.methods:
        if spec.method not in KNOCKOFF_METHODS:
            raise DomainError(f"ノックオフで使える手法は lasso と two_stage です: {spec.method}")
        if spec.tuning == Tuning.OPTIMAL:
            raise DomainError("ノックオフでは tuning=optimal を使えません（λ の値か tuned）")
    if config.n < 2 * config.p:
        raise UnsupportedRegimeError(
            f"fixed-X ノックオフには n ≥ 2p が必要です: n={config.n}, p={config.p}"
        )
    logger.info(
        f"START ノックオフ実験: p={config.p}, n={config.n}, ρ={config.fdr_target}, "
        f"反復={config.replicates}"
    )
    target = config.fdr_target
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_knockoff_replicate)(config, target, index) for index in range(config.replicates)
    )
    outcomes = sorted(outcomes, key=lambda outcome: outcome.index)
    succeeded = [outcome for outcome in outcomes if outcome.error is None]

    summaries = []
    for position, spec in enumerate(config.methods):
        rows = np.array([outcome.fdp[position] for outcome in succeeded]).reshape(-1, 3)
        mean, std = _mean_std(rows)
        summaries.append(
            KnockoffSummary(
                spec=spec,
                fdr_target=config.fdr_target,
                mean_fdp=float(mean[0]),
                std_fdp=float(std[0]),
                mean_tpp=float(mean[1]),
                mean_selected=float(mean[2]),
                replicates_used=len(succeeded),
            )
        )
    failures = _failures(outcomes)
    logger.info(f"END   ノックオフ実験: 成功={len(succeeded)}, 失敗={len(failures)}")
    return KnockoffReport(config, tuple(summaries), failures)


def _fmt(value: float) -> str:
    return CSV_FLOAT_FORMAT.format(value)


def write_report_csv(report: ExperimentReport, path: Path) -> Path:
    """
    実験の集計を `method,q,atpp,mean_fdp,std_fdp,mean_mse` の CSV に書き出す。

    Args:
        report (ExperimentReport): 集計結果。
        path (Path): 出力先。

    Returns:
        Path: 書き出したファイルのパス。
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_CSV_HEADER)
        for summary in report.summaries:
            for atpp, mean, std in zip(
                summary.atpp_grid, summary.mean_fdp, summary.std_fdp, strict=True
            ):
                writer.writerow(
                    [
                        summary.spec.method.value,
                        _fmt(summary.spec.q),
                        _fmt(atpp),
                        _fmt(float(mean)),
                        _fmt(float(std)),
                        _fmt(summary.mean_mse),
                    ]
                )
    return path


def write_knockoff_csv(report: KnockoffReport, path: Path) -> Path:
    """
    ノックオフの集計を `method,q,fdr_target,mean_fdp,std_fdp,mean_tpp,mean_selected` の CSV に書き出す。

    Args:
        report (KnockoffReport): 集計結果。
        path (Path): 出力先。

    Returns:
        Path: 書き出したファイルのパス。
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(KNOCKOFF_CSV_HEADER)
        for summary in report.summaries:
            writer.writerow(
                [
                    summary.spec.method.value,
                    _fmt(summary.spec.q),
                    _fmt(summary.fdr_target),
                    _fmt(summary.mean_fdp),
                    _fmt(summary.std_fdp),
                    _fmt(summary.mean_tpp),
                    _fmt(summary.mean_selected),
                ]
            )
    return path
