"""
ブリッジ推定量の状態発展方程式を解くモジュール。

    τ² = σ² + E(η_q(B + τZ; ατ^{2-q}) - B)² / δ
    λ  = ατ^{2-q} (1 - E ∂₁η_q(B + τZ; ατ^{2-q}) / δ)

このモジュールは以下の処理を提供します:
1. risk: 固定 (α, τ) でのリスク E(η_q(B + τZ; ατ^{2-q}) - B)²。
   q=1 と q=2 は閉形式、それ以外は Gauss–Hermite 求積。
2. fixed_point_tau: 固定 α での τ の不動点（単調な反復、収束しなければ brentq）。
3. optimal_tuning: min_α のリスクで τ を更新する外側の反復と、log α のグリッド走査で挟んでから
   黄金分割法で絞り込む内側の最小化。
4. solve_given_lambda: α ↦ λ(α, τ(α)) の単調性を使った brentq。
5. ridge_optimal_alpha: q=2 の α* の閉形式。

使用例:
    model = ModelParams(delta=0.6, sigma=0.0, q=2.0)
    prior = SignalPrior.point_mass(epsilon=0.4, m=8.0)
    optimal_tuning(model, prior).amse  # -> 10.24

エラー処理:
    - τ が発散する、または σ=0 で τ=0 に潰れる場合は NoFixedPointError。
    - 目標の λ が到達可能な範囲の外なら RangeError（到達可能な区間つき）。
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq, minimize_scalar
from scipy.stats import norm

from selections.constants import NoiseScaling
from selections.exceptions import DomainError, NoFixedPointError, RangeError
from selections.prior import QuadratureRule, SignalPrior, expect_prior
from selections.prox import prox_bridge_array, prox_deriv_u_array

logger = logging.getLogger("selections")

RISK_ORDER = 121
TAU2_CAP = 1e12
TAU2_FLOOR = 1e-300
FIXED_POINT_ITER = 60
FIXED_POINT_RTOL = 1e-12
OUTER_MAX_ITER = 50
OUTER_RTOL = 1e-10
LOG_ALPHA_GRID = np.linspace(math.log(1e-10), math.log(1e10), 201)
GOLDEN_XTOL = 1e-10
ENDPOINT_RTOL = 1e-12
ALPHA_SCAN_CAP = 1e12
ALPHA_SCAN_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """
    漸近モデルのパラメータ。

    Attributes:
        delta (float): サンプル比 δ = lim n/p > 0。
        sigma (float): ノイズの標準偏差 σ ≥ 0。
        q (float): ブリッジ指数 q ≥ 1。
    """

    delta: float
    sigma: float
    q: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.delta) or self.delta <= 0:
            raise DomainError(f"δ は正の有限値である必要があります: delta={self.delta}")
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise DomainError(f"σ は 0 以上の有限値である必要があります: sigma={self.sigma}")
        if not math.isfinite(self.q) or self.q < 1:
            raise DomainError(f"q は 1 以上である必要があります: q={self.q}")

    @classmethod
    def scaled(
        cls, delta: float, sigma: float, q: float, noise_scaling: NoiseScaling
    ) -> "ModelParams":
        """
        ノイズのスケーリングを反映したモデル（large_sample ではノイズ分散を σ²/δ にする）。
        """
        if noise_scaling == NoiseScaling.LARGE_SAMPLE:
            sigma = sigma / math.sqrt(delta)
        return cls(delta=delta, sigma=sigma, q=q)


@dataclass(frozen=True)
class SEFixedPoint:
    """
    状態発展方程式の解。

    Attributes:
        q (float): ブリッジ指数。
        alpha (float): α（推定量が恒等的に 0 になる場合は inf）。
        tau (float): τ > 0。
        lam (float): 対応する λ（α=inf なら inf）。
        amse (float): AMSE = E(η_q(B + τZ; ατ^{2-q}) - B)²。
    """

    q: float
    alpha: float
    tau: float
    lam: float
    amse: float

    @property
    def chi(self) -> float:
        """第一段階の近接作用素に渡す重み χ = ατ^{2-q}。"""
        return self.alpha * self.tau ** (2.0 - self.q)


def _risk_rule() -> QuadratureRule:
    return QuadratureRule.gauss_hermite(RISK_ORDER)


def _soft_threshold_risk(mu: NDArray[np.float64], alpha: float) -> NDArray[np.float64]:
    # E(η₁(μ + Z; α) - μ)² の閉形式
    tails = norm.cdf(mu - alpha) + norm.cdf(-mu - alpha)
    return (
        (1.0 + alpha**2 - mu**2) * tails
        - (alpha + mu) * norm.pdf(alpha - mu)
        - (alpha - mu) * norm.pdf(alpha + mu)
        + mu**2
    )


def _mixture(prior: SignalPrior, values: NDArray[np.float64], null: float) -> float:
    return float((1.0 - prior.epsilon) * null + prior.epsilon * np.dot(prior.weights, values))


def risk(alpha: float, tau: float, prior: SignalPrior, q: float) -> float:
    """
    E(η_q(B + τZ; ατ^{2-q}) - B)² を計算する。

    Args:
        alpha (float): α ≥ 0（inf なら推定量は 0 でリスクは E B²）。
        tau (float): τ > 0。
        prior (SignalPrior): 事前分布。
        q (float): ブリッジ指数 q ≥ 1。

    Returns:
        float: リスク（0 以上）。

    Raises:
        DomainError: α < 0 または τ ≤ 0 の場合。
    """
    if math.isnan(alpha) or alpha < 0:
        raise DomainError(f"α は 0 以上である必要があります: alpha={alpha}")
    if not math.isfinite(tau) or tau <= 0:
        raise DomainError(f"τ は正の有限値である必要があります: tau={tau}")
    if math.isinf(alpha):
        return prior.second_moment
    if alpha == 0.0:
        return tau**2
    if q == 1.0:
        mu = prior.atoms / tau
        null = float(_soft_threshold_risk(np.zeros(1), alpha)[0])
        return tau**2 * _mixture(prior, _soft_threshold_risk(mu, alpha), null)
    if q == 2.0:
        shrink = 1.0 / (1.0 + 2.0 * alpha)
        return (2.0 * alpha * shrink) ** 2 * prior.second_moment + (tau * shrink) ** 2

    chi = alpha * tau ** (2.0 - q)

    def integrand(b: NDArray[np.float64], z: NDArray[np.float64]) -> NDArray[np.float64]:
        return (prox_bridge_array(b + tau * z, chi, q) - b) ** 2

    return max(expect_prior(integrand, prior, rule=_risk_rule()), 0.0)


def mean_prox_derivative(alpha: float, tau: float, prior: SignalPrior, q: float) -> float:
    """
    E ∂₁η_q(B + τZ; ατ^{2-q}) を計算する（q=1 では選択確率 P(|B + τZ| > ατ)）。
    """
    if math.isinf(alpha):
        return 0.0
    if alpha == 0.0:
        return 1.0
    if q == 1.0:
        mu = prior.atoms / tau
        active = norm.cdf(mu - alpha) + norm.cdf(-mu - alpha)
        return _mixture(prior, active, 2.0 * float(norm.cdf(-alpha)))
    if q == 2.0:
        return 1.0 / (1.0 + 2.0 * alpha)

    chi = alpha * tau ** (2.0 - q)

    def integrand(b: NDArray[np.float64], z: NDArray[np.float64]) -> NDArray[np.float64]:
        return prox_deriv_u_array(b + tau * z, chi, q)

    return expect_prior(integrand, prior, rule=_risk_rule())


def lambda_from_alpha(alpha: float, tau: float, model: ModelParams, prior: SignalPrior) -> float:
    """
    λ = ατ^{2-q} (1 - E ∂₁η_q / δ) を計算する。

    Args:
        alpha (float): α ≥ 0。
        tau (float): τ > 0。
        model (ModelParams): モデルのパラメータ。
        prior (SignalPrior): 事前分布。

    Returns:
        float: λ（α=0 なら 0、α=inf なら inf）。
    """
    if alpha == 0.0:
        return 0.0
    if math.isinf(alpha):
        return math.inf
    q = model.q
    slope = mean_prox_derivative(alpha, tau, prior, q)
    return alpha * tau ** (2.0 - q) * (1.0 - slope / model.delta)


def _starting_tau2(model: ModelParams, prior: SignalPrior) -> float:
    start = model.sigma**2 + prior.second_moment / model.delta
    return start if start > 0 else 1.0


def fixed_point_tau(alpha: float, model: ModelParams, prior: SignalPrior) -> float:
    """
    固定した α について τ² = σ² + risk(α, τ)/δ を満たす τ を求める。

    τ² ↦ σ² + risk/δ は単調増加なので、上から反復すると最大の不動点に単調に近づく。
    規定回数で収束しなければ brentq に切り替える。

    Args:
        alpha (float): α ≥ 0。
        model (ModelParams): モデルのパラメータ。
        prior (SignalPrior): 事前分布。

    Returns:
        float: τ > 0。

    Raises:
        NoFixedPointError: τ² が 1e12 を超えて発散する、または 0 に潰れる場合。
    """
    sigma2 = model.sigma**2

    def update(t2: float) -> float:
        return sigma2 + risk(alpha, math.sqrt(t2), prior, model.q) / model.delta

    t2 = _starting_tau2(model, prior)
    for _ in range(FIXED_POINT_ITER):
        nxt = update(t2)
        if nxt > TAU2_CAP:
            raise NoFixedPointError(f"τ² が発散しました: alpha={alpha}", residual=nxt)
        if nxt < TAU2_FLOOR:
            raise NoFixedPointError(f"τ² が 0 に潰れました: alpha={alpha}", residual=nxt)
        if abs(nxt - t2) <= FIXED_POINT_RTOL * nxt:
            return math.sqrt(nxt)
        t2 = nxt

    logger.debug(f"不動点反復が {FIXED_POINT_ITER} 回で収束しないため brentq に切り替えます")
    return math.sqrt(_bracketed_root(update, t2, sigma2, f"alpha={alpha}"))


def _bracketed_root(
    update: Callable[[float], float], t2: float, sigma2: float, label: str
) -> float:
    def gap(x: float) -> float:
        return update(x) - x

    hi = t2
    while gap(hi) > 0:
        hi *= 4.0
        if hi > TAU2_CAP:
            raise NoFixedPointError(f"τ² が発散しました: {label}", residual=hi)
    lo = sigma2 if sigma2 > 0 else hi
    while gap(lo) <= 0:
        lo *= 1e-3
        if lo < TAU2_FLOOR:
            raise NoFixedPointError(f"τ² が 0 に潰れました: {label}", residual=lo)
    if lo == hi:
        return hi
    return float(brentq(gap, lo, hi, xtol=TAU2_FLOOR, rtol=4 * np.finfo(float).eps))


@dataclass(frozen=True)
class _InnerMinimum:
    alpha: float
    value: float


def scan_golden_minimize(
    objective: Callable[[float], float], points: NDArray[np.float64]
) -> tuple[float, float]:
    """
    粗いグリッドで最小点を挟み、両隣のセルの中を黄金分割法で絞り込む。

    グリッドの最小点が端にある、または両隣より厳密に小さくない場合は、その点をそのまま返す。

    Args:
        objective (Callable[[float], float]): 最小化する一変数関数。
        points (NDArray[np.float64]): 昇順のグリッド。

    Returns:
        tuple[float, float]: (最小点, 最小値)。
    """
    values = np.array([objective(float(x)) for x in points])
    values[np.isnan(values)] = np.inf
    i = int(np.argmin(values))
    best = (float(points[i]), float(values[i]))
    if i == 0 or i == len(points) - 1:
        return best
    if not (values[i] < values[i - 1] and values[i] < values[i + 1]):
        return best

    # golden の停止条件は相対誤差なので、変数を 1 以上にずらして 0 の近くを避ける
    shift = 1.0 - float(points[0])
    try:
        result = minimize_scalar(
            lambda t: objective(t - shift),
            bracket=(points[i - 1] + shift, points[i] + shift, points[i + 1] + shift),
            method="golden",
            options={"xtol": GOLDEN_XTOL},
        )
    except ValueError:
        # ずらした点で評価し直すと丸め誤差で挟み込みが崩れることがある
        logger.debug(f"黄金分割法の区間が作れないためグリッドの最小点を使います: x={best[0]}")
        return best
    if float(result.fun) > best[1]:
        return best
    return float(result.x) - shift, float(result.fun)


def _minimize_alpha(tau: float, prior: SignalPrior, q: float) -> _InnerMinimum:
    """
    固定 τ で α ↦ risk(α, τ) を最小化する。

    log α の粗いグリッドで最小点を挟んで黄金分割法で絞り込み、α=0（リスク τ²）と
    α=inf（推定量 0、リスク E B²）の極限と比べる。α が大きい側のリスクは E B² で平らなので、
    グリッドの最小値が両端の極限を下回らなければ極限の方を採用する。
    """

    def objective(log_alpha: float) -> float:
        return risk(math.exp(log_alpha), tau, prior, q)

    limits = [_InnerMinimum(0.0, tau**2), _InnerMinimum(math.inf, prior.second_moment)]
    # 値が同じなら小さい α を採用する
    edge = min(limits, key=lambda c: (c.value, c.alpha))
    log_alpha, value = scan_golden_minimize(objective, LOG_ALPHA_GRID)
    if value < edge.value - ENDPOINT_RTOL * edge.value:
        return _InnerMinimum(math.exp(log_alpha), value)
    return edge


def _fixed_point_from_alpha(
    alpha: float, tau: float, model: ModelParams, prior: SignalPrior
) -> SEFixedPoint:
    amse = risk(alpha, tau, prior, model.q)
    lam = lambda_from_alpha(alpha, tau, model, prior)
    return SEFixedPoint(q=model.q, alpha=alpha, tau=tau, lam=lam, amse=amse)


def optimal_tuning(model: ModelParams, prior: SignalPrior) -> SEFixedPoint:
    """
    AMSE を最小にする λ*_q に対応する状態発展の解 (α*, τ*, λ*, AMSE) を求める。

    τ*² = σ² + min_α risk(α, τ*)/δ を、上限 σ² + E B²/δ から反復して解く。
    右辺は τ² について単調増加なので反復は単調に減少して最大の不動点に収束する。
    OUTER_MAX_ITER 回で収束しなければ brentq に切り替える。

    Args:
        model (ModelParams): モデルのパラメータ。
        prior (SignalPrior): 事前分布。

    Returns:
        SEFixedPoint: 最適チューニングでの解。

    Raises:
        NoFixedPointError: 不動点が存在しない（τ が 0 に潰れる）場合。
    """
    logger.debug(f"START 最適チューニング: q={model.q}, delta={model.delta}, sigma={model.sigma}")
    if prior.epsilon == 0.0:
        if model.sigma == 0.0:
            raise NoFixedPointError("信号もノイズも無いため τ が 0 になります", residual=0.0)
        return SEFixedPoint(q=model.q, alpha=math.inf, tau=model.sigma, lam=math.inf, amse=0.0)

    sigma2 = model.sigma**2

    def update(t2: float) -> float:
        return sigma2 + _minimize_alpha(math.sqrt(t2), prior, model.q).value / model.delta

    t2 = _starting_tau2(model, prior)
    converged = False
    for iteration in range(OUTER_MAX_ITER):
        nxt = update(t2)
        if nxt < TAU2_FLOOR:
            raise NoFixedPointError("τ² が 0 に潰れました", residual=nxt)
        if abs(nxt - t2) <= OUTER_RTOL * nxt:
            t2 = nxt
            converged = True
            logger.debug(f"外側の反復が {iteration + 1} 回で収束しました: tau2={t2}")
            break
        t2 = nxt
    if not converged:
        logger.debug("外側の反復が収束しないため brentq に切り替えます")
        t2 = _bracketed_root(update, t2, sigma2, f"q={model.q}")

    tau = math.sqrt(t2)
    inner = _minimize_alpha(tau, prior, model.q)
    tau = math.sqrt(sigma2 + inner.value / model.delta)
    fixed_point = _fixed_point_from_alpha(inner.alpha, tau, model, prior)
    logger.debug(f"END   最適チューニング: {fixed_point}")
    return fixed_point


def ridge_optimal_alpha(model: ModelParams, prior: SignalPrior) -> float:
    """
    q=2 の最適な α* の閉形式 ¼(r + 1/δ - 1 + √((r + 1/δ - 1)² + 4r))、r = σ²/E B²。

    Args:
        model (ModelParams): モデルのパラメータ（q は参照しない）。
        prior (SignalPrior): 事前分布。

    Returns:
        float: α*（E B² = 0 なら inf）。
    """
    eb2 = prior.second_moment
    if eb2 == 0.0:
        return math.inf
    ratio = model.sigma**2 / eb2
    a = ratio + 1.0 / model.delta - 1.0
    return 0.25 * (a + math.sqrt(a * a + 4.0 * ratio))


def lambda_at_alpha(alpha: float, model: ModelParams, prior: SignalPrior) -> float:
    """α での不動点 τ(α) を解き、対応する λ を返す。"""
    tau = fixed_point_tau(alpha, model, prior)
    return lambda_from_alpha(alpha, tau, model, prior)


def _feasible_floor(
    alpha_bad: float, alpha_good: float, model: ModelParams, prior: SignalPrior
) -> float:
    # 不動点が存在する最小の α を log α 上の二分法で絞り込む
    lo, hi = math.log(alpha_bad), math.log(alpha_good)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        try:
            fixed_point_tau(math.exp(mid), model, prior)
            hi = mid
        except NoFixedPointError:
            lo = mid
    return math.exp(hi)


def _first_feasible_alpha(model: ModelParams, prior: SignalPrior) -> float:
    alpha = 1.0
    while True:
        try:
            fixed_point_tau(alpha, model, prior)
            return alpha
        except NoFixedPointError:
            alpha *= 10.0
            if alpha > ALPHA_SCAN_CAP:
                raise RangeError(
                    "どの α でも状態発展の不動点が存在しません", (math.nan, math.nan)
                ) from None


def feasible_alpha_floor(model: ModelParams, prior: SignalPrior) -> float:
    """
    状態発展の不動点が存在する最小の α（下限 1e-12）を返す。

    Raises:
        RangeError: どの α でも不動点が存在しない場合。
    """
    upper = _first_feasible_alpha(model, prior)
    while upper * 0.1 >= ALPHA_SCAN_FLOOR:
        alpha = upper * 0.1
        try:
            fixed_point_tau(alpha, model, prior)
        except NoFixedPointError:
            return _feasible_floor(alpha, upper, model, prior)
        upper = alpha
    return upper


def _bracket_alpha(lam: float, model: ModelParams, prior: SignalPrior) -> tuple[float, float]:
    """
    λ(α) - lam の符号が変わる α の区間を 10 倍刻みの走査で探す。
    """
    alpha = _first_feasible_alpha(model, prior)
    value = lambda_at_alpha(alpha, model, prior)
    if value <= lam:
        while value < lam:
            lower, alpha = alpha, alpha * 10.0
            if alpha > ALPHA_SCAN_CAP:
                raise RangeError(f"λ={lam} は到達可能な範囲の外です", (0.0, value))
            value = lambda_at_alpha(alpha, model, prior)
        return (lower, alpha) if value > lam else (alpha, alpha)

    upper = alpha
    while True:
        alpha = upper * 0.1
        if alpha < ALPHA_SCAN_FLOOR:
            raise RangeError(f"λ={lam} は到達可能な範囲の外です", (value, math.inf))
        try:
            value = lambda_at_alpha(alpha, model, prior)
        except NoFixedPointError:
            floor = _feasible_floor(alpha, upper, model, prior)
            lam_min = lambda_at_alpha(floor, model, prior)
            if lam < lam_min:
                raise RangeError(
                    f"λ={lam} は到達可能な範囲の外です", (lam_min, math.inf)
                ) from None
            return floor, upper
        if value <= lam:
            return alpha, upper
        upper = alpha


def solve_given_lambda(lam: float, model: ModelParams, prior: SignalPrior) -> SEFixedPoint:
    """
    与えられた λ に対して状態発展方程式の解 (α, τ) を求める。

    α ↦ λ(α, τ(α)) は増加関数なので、α を 10 倍ずつ走査して符号変化を挟み、
    log α 上の brentq で根を求める。α を小さくして不動点が消える場合は、
    その境界を二分法で求めて到達可能な λ の下限とする。

    Args:
        lam (float): λ > 0。
        model (ModelParams): モデルのパラメータ。
        prior (SignalPrior): 事前分布。

    Returns:
        SEFixedPoint: 解。

    Raises:
        DomainError: λ ≤ 0 の場合。
        RangeError: λ が到達可能な範囲の外にある場合。
    """
    if not lam > 0 or math.isinf(lam):
        raise DomainError(f"λ は正の有限値である必要があります: lambda={lam}")

    lo, hi = _bracket_alpha(lam, model, prior)
    if lo == hi:
        alpha = lo
    else:

        def gap(log_alpha: float) -> float:
            return lambda_at_alpha(math.exp(log_alpha), model, prior) - lam

        alpha = math.exp(brentq(gap, math.log(lo), math.log(hi), xtol=1e-14, rtol=1e-12))
    tau = fixed_point_tau(alpha, model, prior)
    amse = risk(alpha, tau, prior, model.q)
    logger.debug(f"λ={lam} の解: alpha={alpha}, tau={tau}, amse={amse}")
    return SEFixedPoint(q=model.q, alpha=alpha, tau=tau, lam=lam, amse=amse)


def amse_at_lambda(lam: float, model: ModelParams, prior: SignalPrior) -> float:
    """
    AMSE(q, λ) を返す。λ=inf は推定量 0 の極限として E B²。
    """
    if math.isinf(lam):
        return prior.second_moment
    return solve_given_lambda(lam, model, prior).amse
