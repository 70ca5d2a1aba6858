"""
有限標本でブリッジ回帰 ½‖y - Xβ‖² + λ‖β‖_q^q を解き、τ̂・γ̂・デバイアス推定量を計算するモジュール。

このモジュールは以下の処理を提供します:
1. fit_coordinate_descent: 近接作用素による巡回座標降下法（q=1 は活性集合の反復つき）。
   パスごとに目的関数を記録し、KKT 残差を証明として返す。
2. fit_amp: 近似メッセージ伝搬（τ_t は ‖z^t‖/√n の経験値）。
3. tau_hat / gamma_hat: 自由度の補正 1 - df/n による τ̂ と、λ/γ = 1 - f(β̂, γ)/n の根 γ̂。
4. debias: β† = β̂ + Xᵀ(y - Xβ̂) / (1 - df/n)。
5. tune_lambda: τ̂ を最小にする λ の適応グリッド探索（降順・ウォームスタート）。
6. lasso_path: 降順の λ 列に対する LASSO の解の列。

使用例:
    problem = RegressionProblem(X, y)
    lam, fit = tune_lambda(problem, q=1.0)
    beta_dagger = debias(problem, fit)

エラー処理:
    - 座標降下法で目的関数が増えた場合は NumericError。
    - AMP の τ_t が初期値の 1e6 倍を超えた場合は InstabilityError。
    - デバイアスの分母 1 - df/n が 1e-6 未満なら DegenerateFitError。
    - グリッド探索が規定回数で落ち着かなければ SearchFailureError（訪問履歴つき）。
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq

from selections.exceptions import (
    DegenerateFitError,
    DomainError,
    InstabilityError,
    NumericError,
    SearchFailureError,
)
from selections.prox import prox_bridge_array, prox_deriv_u_array, prox_scalar

logger = logging.getLogger("selections")

KKT_RTOL = 1e-6
OBJECTIVE_SLACK = 1e-10
AMP_BLOWUP = 1e6
DEBIAS_FLOOR = 1e-6
GAMMA_BRACKET = (1e-8, 1e8)
GAMMA_EXPAND_MAX = 20


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """
    回帰問題 y = Xβ + w の観測。

    Attributes:
        X (NDArray[np.float64]): n×p の計画行列。
        y (NDArray[np.float64]): 長さ n の応答。
    """

    X: NDArray[np.float64]
    y: NDArray[np.float64]

    def __post_init__(self) -> None:
        design = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if design.ndim != 2 or y.ndim != 1 or design.shape[0] != y.shape[0]:
            raise DomainError(f"X と y の次元が一致しません: X={design.shape}, y={y.shape}")
        if design.shape[0] == 0 or design.shape[1] == 0:
            raise DomainError(f"空の問題は扱えません: X={design.shape}")
        if not (np.all(np.isfinite(design)) and np.all(np.isfinite(y))):
            raise DomainError("X または y に非有限値が含まれています")
        object.__setattr__(self, "X", design)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    @cached_property
    def columns(self) -> NDArray[np.float64]:
        """列ごとの走査が連続アクセスになるよう Fortran 順に並べた X。"""
        return np.asfortranarray(self.X)

    @cached_property
    def column_norms2(self) -> NDArray[np.float64]:
        """各列の二乗ノルム ‖x_j‖²。"""
        return np.einsum("ij,ij->j", self.X, self.X)

    @cached_property
    def xty_inf(self) -> float:
        """‖Xᵀy‖∞。"""
        return float(np.max(np.abs(self.X.T @ self.y)))


@dataclass(frozen=True, eq=False)
class SolverOptions:
    """
    座標降下法・AMP の設定。

    Attributes:
        tol (float): 停止条件の相対許容誤差。
        max_passes (int): 最大のパス（AMP では反復）回数。
        warm_start (NDArray[np.float64] | None): 初期値。
    """

    tol: float = 1e-10
    max_passes: int = 5000
    warm_start: NDArray[np.float64] | None = None


@dataclass(frozen=True)
class SearchOptions:
    """
    λ のグリッド探索の設定。

    Attributes:
        lower (float): 初期区間の下端 a。
        grid_size (int): 区間あたりの点数 m。
        stability (float): 連続する最適値の差がこれ以下なら止める閾値 ε₀。
        max_moves (int): 区間を動かす最大回数。
    """

    lower: float = 0.1
    grid_size: int = 15
    stability: float = 1e-4
    max_moves: int = 30
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass(frozen=True, eq=False)
class FitResult:
    """
    ブリッジ回帰の解。

    Attributes:
        beta (NDArray[np.float64]): β̂(q, λ)。
        q (float): ブリッジ指数。
        lam (float): λ（λ=inf は β̂=0 の規約）。
        passes (int): 実行したパス（反復）回数。
        kkt_residual (float): KKT 条件の残差。
        converged (bool): 停止条件を満たしたか。
        degenerate (bool): q=1 で非ゼロ成分の数が n を超えたか。
        objective_trace (tuple[float, ...]): パスごとの目的関数値。
        alpha (float): AMP で使った α（座標降下法では nan）。
        tau_hat (float | None): τ̂（attach_estimates で付与）。
        gamma_hat (float | None): γ̂（q>1 で attach_estimates により付与）。
    """

    beta: NDArray[np.float64]
    q: float
    lam: float
    passes: int
    kkt_residual: float
    converged: bool = True
    degenerate: bool = False
    objective_trace: tuple[float, ...] = ()
    alpha: float = math.nan
    tau_hat: float | None = None
    gamma_hat: float | None = None

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.beta))


def _check_q_lambda(q: float, lam: float) -> None:
    if not math.isfinite(q) or q < 1:
        raise DomainError(f"q は 1 以上である必要があります: q={q}")
    if math.isnan(lam) or lam < 0:
        raise DomainError(f"λ は 0 以上である必要があります: lam={lam}")


def _penalty(beta: NDArray[np.float64], q: float) -> float:
    return float(np.sum(np.abs(beta) ** q))


def objective(problem: RegressionProblem, beta: ArrayLike, q: float, lam: float) -> float:
    """
    目的関数 ½‖y - Xβ‖² + λ‖β‖_q^q。

    Args:
        problem (RegressionProblem): 回帰問題。
        beta (ArrayLike): 係数。
        q (float): ブリッジ指数。
        lam (float): λ ≥ 0。

    Returns:
        float: 目的関数の値。
    """
    b = np.asarray(beta, dtype=float)
    r = problem.y - problem.X @ b
    penalty = _penalty(b, q) if lam > 0 else 0.0
    return 0.5 * float(r @ r) + lam * penalty


def kkt_residual(problem: RegressionProblem, beta: ArrayLike, q: float, lam: float) -> float:
    """
    KKT 条件の残差。

    q > 1 では ‖Xᵀ(Xβ - y) + λq sgn(β)|β|^{q-1}‖∞、
    q = 1 では非ゼロ成分で |x_jᵀr - λ sgn(β_j)|、ゼロ成分で max(|x_jᵀr| - λ, 0) の最大値。

    Args:
        problem (RegressionProblem): 回帰問題。
        beta (ArrayLike): 係数。
        q (float): ブリッジ指数。
        lam (float): λ ≥ 0。

    Returns:
        float: 残差の最大ノルム。
    """
    b = np.asarray(beta, dtype=float)
    correlation = problem.X.T @ (problem.y - problem.X @ b)
    if q > 1.0 or lam == 0.0:
        gradient = -correlation + lam * q * np.sign(b) * np.abs(b) ** (q - 1.0)
        return float(np.max(np.abs(gradient)))
    active = b != 0.0
    gap = np.where(
        active,
        np.abs(correlation - lam * np.sign(b)),
        np.maximum(np.abs(correlation) - lam, 0.0),
    )
    return float(np.max(gap))


def kkt_tolerance(problem: RegressionProblem) -> float:
    """返す解に課す KKT 残差の上限 1e-6·(1 + ‖Xᵀy‖∞)。"""
    return KKT_RTOL * (1.0 + problem.xty_inf)


def _zero_fit(
    problem: RegressionProblem, q: float, lam: float, alpha: float = math.nan
) -> FitResult:
    beta = np.zeros(problem.p)
    residual = 0.0 if math.isinf(lam) else kkt_residual(problem, beta, q, lam)
    return FitResult(
        beta=beta,
        q=q,
        lam=lam,
        passes=0,
        kkt_residual=residual,
        objective_trace=(0.5 * float(problem.y @ problem.y),),
        alpha=alpha,
    )


def _sweep(
    problem: RegressionProblem,
    beta: NDArray[np.float64],
    r: NDArray[np.float64],
    q: float,
    lam: float,
    indices: NDArray[np.intp],
) -> float:
    """指定した座標を一巡し、係数の最大変化量を返す（beta と r はその場で更新）。"""
    columns = problem.columns
    norms = problem.column_norms2
    largest = 0.0
    for j in indices:
        nj = norms[j]
        if nj == 0.0:
            continue
        xj = columns[:, j]
        old = beta[j]
        new = prox_scalar(old + float(xj @ r) / nj, lam / nj, q)
        if new != old:
            r -= (new - old) * xj
            beta[j] = new
            largest = max(largest, abs(new - old))
    return largest


def fit_coordinate_descent(
    problem: RegressionProblem, q: float, lam: float, opts: SolverOptions | None = None
) -> FitResult:
    """
    巡回座標降下法で β̂(q, λ) を求める。

    各座標を β_j ← η_q(β_j + x_jᵀr/‖x_j‖²; λ/‖x_j‖²) で更新し、残差 r をその場で更新する。
    最大変化量が tol·(1 + ‖β‖∞) 以下になったら止める。q=1 では非ゼロ成分だけを回して
    落ち着いてから全座標を一巡して確認する。

    Args:
        problem (RegressionProblem): 回帰問題。
        q (float): ブリッジ指数 q ≥ 1。
        lam (float): λ ≥ 0（inf なら β̂=0）。
        opts (SolverOptions | None): 設定。

    Returns:
        FitResult: 解と KKT 残差。

    Raises:
        DomainError: q, λ が定義域外、または初期値の長さが p と異なる場合。
        NumericError: パスの前後で目的関数が増えた場合。
    """
    _check_q_lambda(q, lam)
    opts = opts or SolverOptions()
    if math.isinf(lam):
        return _zero_fit(problem, q, lam)

    if opts.warm_start is None:
        beta = np.zeros(problem.p)
    else:
        beta = np.array(opts.warm_start, dtype=float)
        if beta.shape != (problem.p,):
            raise DomainError(f"初期値の長さが p と一致しません: {beta.shape}, p={problem.p}")
    r = problem.y - problem.X @ beta
    everything = np.arange(problem.p)
    trace = [objective(problem, beta, q, lam)]
    converged = False
    passes = 0
    while passes < opts.max_passes:
        active = np.flatnonzero(beta) if q == 1.0 and passes > 0 else everything
        change = _sweep(problem, beta, r, q, lam, active)
        passes += 1
        if active.size < problem.p and change <= opts.tol * (1.0 + np.max(np.abs(beta))):
            change = _sweep(problem, beta, r, q, lam, everything)
            passes += 1
        value = objective(problem, beta, q, lam)
        if value > trace[-1] + OBJECTIVE_SLACK * (1.0 + abs(trace[-1])):
            logger.error(f"座標降下法で目的関数が増加しました: {trace[-1]} -> {value}")
            raise NumericError("座標降下法で目的関数が増加しました", residual=value - trace[-1])
        trace.append(value)
        if change <= opts.tol * (1.0 + np.max(np.abs(beta))):
            converged = True
            break

    residual = kkt_residual(problem, beta, q, lam)
    support = int(np.count_nonzero(beta))
    degenerate = q == 1.0 and support > problem.n
    if not converged or residual > kkt_tolerance(problem):
        logger.warning(
            f"座標降下法が収束しませんでした: q={q}, lam={lam}, パス={passes}, KKT={residual:.3e}"
        )
    if degenerate:
        logger.warning(f"非ゼロ成分の数が n を超えました: 非ゼロ={support}, n={problem.n}")
    logger.debug(f"座標降下法: q={q}, lam={lam}, パス={passes}, KKT={residual:.3e}")
    return FitResult(
        beta=beta,
        q=q,
        lam=lam,
        passes=passes,
        kkt_residual=residual,
        converged=converged,
        degenerate=degenerate,
        objective_trace=tuple(trace),
    )


def fit_amp(
    problem: RegressionProblem, q: float, alpha: float, opts: SolverOptions | None = None
) -> FitResult:
    """
    近似メッセージ伝搬でブリッジ推定量を求める。

        β^{t+1} = η_q(Xᵀz^t + β^t; ατ_t^{2-q})
        z^{t+1} = y - Xβ^{t+1} + z^t ⟨∂₁η_q⟩ / δ

    τ_t は ‖z^t‖/√n で置き換える。収束した点での λ = χ(1 - ⟨∂₁η_q⟩/δ) を lam に記録する。

    Args:
        problem (RegressionProblem): 回帰問題。
        q (float): ブリッジ指数 q ≥ 1。
        alpha (float): α > 0。
        opts (SolverOptions | None): 設定（max_passes を反復回数の上限に使う）。

    Returns:
        FitResult: 極限の係数と対応する λ。

    Raises:
        DomainError: α ≤ 0 の場合。
        InstabilityError: τ_t が初期値の 1e6 倍を超えた場合。
    """
    if not math.isfinite(alpha) or alpha <= 0:
        raise DomainError(f"α は正の有限値である必要があります: alpha={alpha}")
    _check_q_lambda(q, 0.0)
    opts = opts or SolverOptions(tol=1e-8, max_passes=500)
    n, p = problem.n, problem.p
    delta = n / p
    tau0 = math.sqrt(float(problem.y @ problem.y) / n)
    if tau0 == 0.0:
        return _zero_fit(problem, q, 0.0, alpha)

    beta = np.zeros(p)
    z = problem.y.copy()
    chi, mean_deriv = alpha * tau0 ** (2.0 - q), 0.0
    converged = False
    iterations = 0
    for iterations in range(1, opts.max_passes + 1):
        tau = math.sqrt(float(z @ z) / n)
        if tau > AMP_BLOWUP * tau0 or not math.isfinite(tau):
            logger.error(f"AMP が発散しました: 反復={iterations}, tau={tau}, 初期値={tau0}")
            raise InstabilityError("AMP が発散しました", residual=tau / tau0)
        if tau == 0.0:
            converged = True
            break
        chi = alpha * tau ** (2.0 - q)
        u = problem.X.T @ z + beta
        new_beta = prox_bridge_array(u, chi, q)
        mean_deriv = float(np.mean(prox_deriv_u_array(u, chi, q)))
        z = problem.y - problem.X @ new_beta + z * mean_deriv / delta
        change = float(np.linalg.norm(new_beta - beta)) / math.sqrt(p)
        beta = new_beta
        if change <= opts.tol:
            converged = True
            break

    if not converged:
        logger.warning(f"AMP が {iterations} 回で収束しませんでした: q={q}, alpha={alpha}")
    lam = chi * (1.0 - mean_deriv / delta)
    logger.debug(f"AMP: q={q}, alpha={alpha}, 反復={iterations}, lam={lam}")
    return FitResult(
        beta=beta,
        q=q,
        lam=lam,
        passes=iterations,
        kkt_residual=kkt_residual(problem, beta, q, max(lam, 0.0)),
        converged=converged,
        objective_trace=(objective(problem, beta, q, max(lam, 0.0)),),
        alpha=alpha,
    )


def _degrees_of_freedom(beta: NDArray[np.float64], q: float, gamma: float) -> float:
    """f(β, γ) = Σ 1 / (1 + γq(q-1)|β_i|^{q-2})。"""
    with np.errstate(divide="ignore"):
        curvature = gamma * q * (q - 1.0) * np.abs(beta) ** (q - 2.0)
    return float(np.sum(1.0 / (1.0 + curvature)))


def gamma_hat(fit: FitResult, lam: float, n: int) -> float:
    """
    λ/γ = 1 - f(β̂, γ)/n の正の根 γ̂ を求める。

    左辺は γ について狭義減少、右辺は狭義増加なので根は一意。

    Args:
        fit (FitResult): q > 1 の解。
        lam (float): λ > 0。
        n (int): 標本数。

    Returns:
        float: γ̂。

    Raises:
        DomainError: q = 1、または λ ≤ 0 の場合。
        NumericError: 区間を広げても符号が変わらない場合（ゼロ成分が n 個以上ある q > 2 の解など）。
    """
    if fit.q <= 1.0:
        raise DomainError(f"γ̂ は q > 1 でのみ定義されます: q={fit.q}")
    if not math.isfinite(lam) or lam <= 0:
        raise DomainError(f"λ は正の有限値である必要があります: lam={lam}")

    def gap(gamma: float) -> float:
        return lam / gamma - 1.0 + _degrees_of_freedom(fit.beta, fit.q, gamma) / n

    lo, hi = lam * GAMMA_BRACKET[0], lam * GAMMA_BRACKET[1]
    for _ in range(GAMMA_EXPAND_MAX):
        if gap(lo) > 0.0:
            break
        lo *= 1e-4
    for _ in range(GAMMA_EXPAND_MAX):
        if gap(hi) < 0.0:
            break
        hi *= 1e4
    else:
        logger.error(f"γ̂ の区間で符号が変わりません: lam={lam}, n={n}")
        raise NumericError("γ̂ の区間で符号が変わりません", residual=gap(hi))
    return float(brentq(gap, lo, hi, xtol=1e-300, rtol=1e-14, maxiter=500))


def _df(problem: RegressionProblem, fit: FitResult) -> float:
    if math.isinf(fit.lam):
        return 0.0
    if fit.q == 1.0:
        return float(fit.support_size)
    if fit.lam == 0.0:
        return float(problem.p)
    gamma = fit.gamma_hat if fit.gamma_hat is not None else gamma_hat(fit, fit.lam, problem.n)
    return _degrees_of_freedom(fit.beta, fit.q, gamma)


def tau_hat(problem: RegressionProblem, fit: FitResult) -> float:
    """
    τ̂ = √(‖y - Xβ̂‖² / n) / (1 - df/n)。

    df は q=1 で ‖β̂‖₀、q>1 で f(β̂(q, λ), γ̂)。

    Args:
        problem (RegressionProblem): 回帰問題。
        fit (FitResult): 解。

    Returns:
        float: τ̂（1 - df/n ≤ 0 なら inf）。
    """
    shrink = 1.0 - _df(problem, fit) / problem.n
    if shrink <= 0.0:
        return math.inf
    r = problem.y - problem.X @ fit.beta
    return math.sqrt(float(r @ r) / problem.n) / shrink


def attach_estimates(problem: RegressionProblem, fit: FitResult) -> FitResult:
    """
    解に τ̂ と（q > 1 なら）γ̂ を付けたコピーを返す。

    Args:
        problem (RegressionProblem): 回帰問題。
        fit (FitResult): 解。

    Returns:
        FitResult: tau_hat / gamma_hat を埋めた解。
    """
    gamma = None
    if fit.q > 1.0 and 0.0 < fit.lam < math.inf:
        gamma = gamma_hat(fit, fit.lam, problem.n)
    with_gamma = replace(fit, gamma_hat=gamma)
    return replace(with_gamma, tau_hat=tau_hat(problem, with_gamma))


def debias(problem: RegressionProblem, fit: FitResult) -> NDArray[np.float64]:
    """
    デバイアス推定量 β† = β̂ + Xᵀ(y - Xβ̂) / (1 - df/n)。

    λ = inf の解（β̂ = 0, df = 0）では β† = Xᵀy となり SIS と一致する。

    Args:
        problem (RegressionProblem): 回帰問題。
        fit (FitResult): 解。

    Returns:
        NDArray[np.float64]: β†。

    Raises:
        DegenerateFitError: 1 - df/n < 1e-6 の場合。
    """
    shrink = 1.0 - _df(problem, fit) / problem.n
    if shrink < DEBIAS_FLOOR:
        raise DegenerateFitError(f"デバイアスの分母が 0 に潰れました: 1 - df/n={shrink:.3e}")
    r = problem.y - problem.X @ fit.beta
    return fit.beta + problem.X.T @ r / shrink


def _tau(fit: FitResult) -> float:
    return math.inf if fit.tau_hat is None else fit.tau_hat


def _scan(
    problem: RegressionProblem,
    q: float,
    grid: NDArray[np.float64],
    solver: SolverOptions,
    visited: dict[float, FitResult],
) -> float:
    """降順のグリッドをウォームスタートで解き、この区間で τ̂ が最小の λ を返す。"""
    warm: NDArray[np.float64] | None = None
    best_lam, best_tau = float(grid[0]), math.inf
    for value in grid:
        lam = float(value)
        fit = fit_coordinate_descent(problem, q, lam, replace(solver, warm_start=warm))
        fit = attach_estimates(problem, fit)
        if fit.degenerate:
            fit = replace(fit, tau_hat=math.inf)
        visited[lam] = fit
        warm = fit.beta
        if _tau(fit) < best_tau:
            best_lam, best_tau = lam, _tau(fit)
    return best_lam


def tune_lambda(
    problem: RegressionProblem, q: float, opts: SearchOptions | None = None
) -> tuple[float, FitResult]:
    """
    τ̂ を最小にする λ̂ を適応的なグリッドで探す。

    初期区間は [a, b] = [0.1, ½‖Xᵀy‖∞]、移動幅は Δ = ½‖Xᵀy‖∞。
    区間内の最小点が端にあれば [a/10, a] か [b, b + Δ] に移り、内点なら止める。
    連続する区間の最小点の差が ε₀ 以下になっても止める。返す λ̂ は訪問した全点での最小点。

    Args:
        problem (RegressionProblem): 回帰問題。
        q (float): ブリッジ指数。
        opts (SearchOptions | None): 探索の設定。

    Returns:
        tuple[float, FitResult]: λ̂ と、τ̂ を付けたその解。

    Raises:
        DomainError: Xᵀy = 0 の場合。
        SearchFailureError: 規定回数で止まらない、または全点で τ̂ = inf の場合。
    """
    opts = opts or SearchOptions()
    if problem.xty_inf == 0.0:
        raise DomainError("Xᵀy = 0 のため λ の探索区間を作れません")
    window = 0.5 * problem.xty_inf
    a, b = opts.lower, window
    if b <= a:
        a = b / 10.0
    logger.debug(f"START λ 探索: q={q}, 区間=[{a}, {b}], Δ={window}")

    visited: dict[float, FitResult] = {}
    previous: float | None = None
    stopped = False
    for move in range(opts.max_moves):
        grid = np.linspace(a, b, opts.grid_size)[::-1]
        lam_hat = _scan(problem, q, grid, opts.solver, visited)
        interior = a < lam_hat < b
        settled = previous is not None and abs(lam_hat - previous) <= opts.stability
        logger.debug(f"λ 探索 {move + 1} 回目: 区間=[{a:.6g}, {b:.6g}], 最小点={lam_hat:.6g}")
        if interior or settled:
            stopped = True
            break
        previous = lam_hat
        if lam_hat == float(grid[-1]):
            a, b = a / 10.0, a
        else:
            a, b = b, b + window

    trace = sorted((lam, _tau(fit)) for lam, fit in visited.items())
    best = min(visited, key=lambda lam: (_tau(visited[lam]), lam))
    best_fit = visited[best]
    if not stopped or math.isinf(_tau(best_fit)):
        logger.error(f"λ の探索が落ち着きませんでした: q={q}, 訪問数={len(trace)}")
        raise SearchFailureError("λ の探索が落ち着きませんでした", trace)
    logger.debug(f"END   λ 探索: q={q}, λ̂={best}, τ̂={best_fit.tau_hat}")
    return best, best_fit


def lasso_path(
    problem: RegressionProblem, lambdas: Sequence[float], opts: SolverOptions | None = None
) -> list[FitResult]:
    """
    降順に並べた λ の列について LASSO をウォームスタートで解く。

    Args:
        problem (RegressionProblem): 回帰問題。
        lambdas (Sequence[float]): λ の列（順序は問わない）。
        opts (SolverOptions | None): 設定。

    Returns:
        list[FitResult]: λ 降順の解（τ̂ つき、非ゼロ成分が n を超えた点は τ̂ = inf）。
    """
    opts = opts or SolverOptions()
    fits: list[FitResult] = []
    warm: NDArray[np.float64] | None = None
    for lam in sorted((float(v) for v in lambdas), reverse=True):
        fit = fit_coordinate_descent(problem, 1.0, lam, replace(opts, warm_start=warm))
        fit = attach_estimates(problem, fit)
        if fit.degenerate:
            fit = replace(fit, tau_hat=math.inf)
        fits.append(fit)
        warm = fit.beta
    return fits


def lambda_grid(
    problem: RegressionProblem, size: int, ratio: float = 1e-3
) -> NDArray[np.float64]:
    """
    ‖Xᵀy‖∞ から ratio·‖Xᵀy‖∞ までの等比の λ 列（降順）。

    Args:
        problem (RegressionProblem): 回帰問題。
        size (int): 点数。
        ratio (float): 最小値と最大値の比。

    Returns:
        NDArray[np.float64]: λ の列。
    """
    top = problem.xty_inf if problem.xty_inf > 0 else 1.0
    return np.geomspace(top, top * ratio, size)
