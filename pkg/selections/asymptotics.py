"""
最適チューニングでの AMSE(q, λ*_q) の漸近展開と、それに現れる定数を計算するモジュール。

- 大ノイズ（σ → ∞）: εEG² - ε²(EG²)² c_q / σ²
- 小ノイズ（σ → 0）: q=1 は δM₁(ε)σ²/(δ - M₁(ε))、q>1 は δσ²/(δ-1) と q ごとの二次の項
- 大標本（δ → ∞、ノイズは w/√δ）: q=1 は M₁(ε)σ²/δ、q>1 は σ²/δ と q ごとの二次の項
- 極端にスパース（ε → 0、b_ε = 1）: εEG² - ε² × sparse_second_order
- nearly black（ε → 0、b_ε → ∞）: 信号強度の増え方で決まる正規化した極限の定数

どの関数も ExpansionResult（一次の項、二次の項、ケースのタグ、適用条件のメモ）を返す。

エラー処理:
    - 定理の前提（相転移の境界 δ > M₁(ε)、δ > 1、ε ∈ (0, 1)）を満たさなければ RegimeError。
    - 定理が扱わない q とケースの組み合わせは DomainError。
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq
from scipy.stats import norm

from selections.constants import NearlyBlackCase, Regime
from selections.exceptions import DomainError, NumericError, RegimeError
from selections.prior import SignalPrior, abs_moment, expect_gaussian
from selections.prox import prox_bridge_array
from selections.state_evolution import ModelParams, scan_golden_minimize

logger = logging.getLogger("selections")

M1_CHI_GRID = np.linspace(0.0, 50.0, 201)
H_LOG_GRID = np.linspace(math.log(1e-12), math.log(1e12), 241)
C0_MAX = 1e3


@dataclass(frozen=True)
class ExpansionResult:
    """
    漸近展開の結果。

    Attributes:
        leading (float): 一次の項（nearly black では正規化した極限の定数）。
        second_order (float): 二次の項（定理が一次の項しか与えない場合は 0）。
        regime (Regime): 使ったケースのタグ。
        validity_note (str): 適用条件のメモ。
        minimizer (float | None): nearly black で h(C) などを最小にする C。
    """

    leading: float
    second_order: float
    regime: Regime
    validity_note: str
    minimizer: float | None = None

    @property
    def value(self) -> float:
        """一次と二次の項の和。"""
        return self.leading + self.second_order


def _soft_threshold_null_risk(chi: float) -> float:
    # E η₁²(Z; χ) = 2[(1 + χ²)Φ(-χ) - χφ(χ)]
    return float(2.0 * ((1.0 + chi**2) * norm.cdf(-chi) - chi * norm.pdf(chi)))


def m1(epsilon: float) -> float:
    """
    M₁(ε) = min_χ (1 - ε) E η₁²(Z; χ) + ε(1 + χ²)。

    Args:
        epsilon (float): ε ∈ [0, 1]。

    Returns:
        float: M₁(ε)（ε=0 では 0、ε=1 では 1）。
    """
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError(f"ε は [0, 1] の範囲である必要があります: epsilon={epsilon}")
    if epsilon == 0.0:
        return 0.0

    def objective(chi: float) -> float:
        return (1.0 - epsilon) * _soft_threshold_null_risk(chi) + epsilon * (1.0 + chi**2)

    _, value = scan_golden_minimize(objective, M1_CHI_GRID)
    return value


def cq(q: float) -> float:
    """
    c_q = (E|Z|^{(2-q)/(q-1)})² / ((q-1)² E|Z|^{2/(q-1)})。q=2 で最大値 1 をとる。

    Raises:
        DomainError: q ≤ 1 の場合。
    """
    if not q > 1.0:
        raise DomainError(f"c_q は q > 1 でのみ定義されます: q={q}")
    numerator = abs_moment((2.0 - q) / (q - 1.0)) ** 2
    return numerator / ((q - 1.0) ** 2 * abs_moment(2.0 / (q - 1.0)))


def c0(prior: SignalPrior) -> float:
    """
    E[e^{CG}(CG - 1) + e^{-CG}(-CG - 1)] = 2(1 - ε)/ε の正の根 C₀。

    左辺は C について狭義単調増加で C=0 で -2 をとるので、右端を倍々に広げてから brentq で解く。

    Args:
        prior (SignalPrior): 事前分布（ε ∈ (0, 1)）。

    Returns:
        float: C₀ > 0。

    Raises:
        DomainError: ε が 0 または 1 の場合。
    """
    eps = prior.epsilon
    if not 0.0 < eps < 1.0:
        raise DomainError(f"C₀ は ε ∈ (0, 1) でのみ定義されます: epsilon={eps}")
    g = prior.atoms
    w = prior.weights
    target = 2.0 * (1.0 - eps) / eps

    def gap(c: float) -> float:
        cg = c * g
        lhs = np.exp(cg) * (cg - 1.0) + np.exp(-cg) * (-cg - 1.0)
        return float(np.dot(w, lhs)) - target

    hi = 1.0
    while gap(hi) < 0:
        hi *= 2.0
        if hi > C0_MAX:
            raise NumericError("C₀ の探索区間が上限を超えました", residual=gap(hi))
    return float(brentq(gap, 0.0, hi, xtol=1e-14))


def amse_large_noise(q: float, prior: SignalPrior, sigma: float) -> ExpansionResult:
    """
    σ → ∞ での AMSE(q, λ*_q) の展開。

    Args:
        q (float): ブリッジ指数 q ≥ 1。
        prior (SignalPrior): 事前分布。
        sigma (float): σ > 0。

    Returns:
        ExpansionResult: leading = εEG²、second_order = -ε²(EG²)² c_q/σ²（q=1 では 0）。
    """
    if not sigma > 0:
        raise DomainError(f"大ノイズ展開には σ > 0 が必要です: sigma={sigma}")
    if q < 1:
        raise DomainError(f"q は 1 以上である必要があります: q={q}")
    leading = prior.second_moment
    if q == 1.0:
        return ExpansionResult(
            leading, 0.0, Regime.LARGE_NOISE, "q=1: 残りは σ について指数的に小さい"
        )
    second = -(leading**2) * cq(q) / sigma**2
    return ExpansionResult(leading, second, Regime.LARGE_NOISE, f"q={q}: 残りは o(1/σ²)")


def _require_open_sparsity(prior: SignalPrior) -> None:
    if not 0.0 < prior.epsilon < 1.0:
        raise RegimeError(f"この展開は ε ∈ (0, 1) を仮定します: epsilon={prior.epsilon}")


def amse_low_noise(q: float, model: ModelParams, prior: SignalPrior) -> ExpansionResult:
    """
    σ → 0 での AMSE(q, λ*_q) の展開。

    Args:
        q (float): ブリッジ指数 q ≥ 1。
        model (ModelParams): δ と σ（model.q は参照しない）。
        prior (SignalPrior): 事前分布。

    Returns:
        ExpansionResult: 四つの q のケースのいずれか。

    Raises:
        RegimeError: q=1 で δ ≤ M₁(ε)、q>1 で δ ≤ 1、または ε ∉ (0, 1) の場合。
    """
    _require_open_sparsity(prior)
    delta, sigma, eps = model.delta, model.sigma, prior.epsilon
    if q == 1.0:
        m = m1(eps)
        if delta <= m:
            raise RegimeError(f"q=1 の小ノイズ展開には δ > M₁(ε) が必要です: delta={delta}, M1={m}")
        leading = delta * m * sigma**2 / (delta - m)
        return ExpansionResult(leading, 0.0, Regime.LOW_NOISE, f"q=1: M1={m}")
    if delta <= 1.0:
        raise RegimeError(f"q>1 の小ノイズ展開には δ > 1 が必要です: delta={delta}")

    leading = delta * sigma**2 / (delta - 1.0)
    if q < 2.0:
        second = -(
            sigma ** (2.0 * q)
            * delta ** (q + 1.0)
            * (1.0 - eps) ** 2
            * abs_moment(q) ** 2
            / ((delta - 1.0) ** (q + 1.0) * eps * prior.nonzero_moment(2.0 * q - 2.0))
        )
        note = "1<q<2: 残りは o(σ^{2q})"
    elif q == 2.0:
        second = -(sigma**4) * delta**3 / ((delta - 1.0) ** 3 * eps * prior.nonzero_moment(2.0))
        note = "q=2: 残りは o(σ⁴)"
    else:
        second = -(
            sigma**4
            * delta**3
            * eps
            * (q - 1.0) ** 2
            * prior.nonzero_moment(q - 2.0) ** 2
            / ((delta - 1.0) ** 3 * prior.nonzero_moment(2.0 * q - 2.0))
        )
        note = "q>2: 残りは o(σ⁴)"
    return ExpansionResult(leading, second, Regime.LOW_NOISE, note)


def amse_large_sample(q: float, model: ModelParams, prior: SignalPrior) -> ExpansionResult:
    """
    δ → ∞（ノイズを w/√δ とするモデル）での AMSE(q, λ*_q) の展開。

    Args:
        q (float): ブリッジ指数 q ≥ 1。
        model (ModelParams): δ とスケーリング前の σ。
        prior (SignalPrior): 事前分布。

    Returns:
        ExpansionResult: 四つの q のケースのいずれか。q>1 の一次の項はすべて σ²/δ。
    """
    _require_open_sparsity(prior)
    delta, sigma, eps = model.delta, model.sigma, prior.epsilon
    if q == 1.0:
        m = m1(eps)
        return ExpansionResult(m * sigma**2 / delta, 0.0, Regime.LARGE_SAMPLE, f"q=1: M1={m}")

    leading = sigma**2 / delta
    if q < 2.0:
        second = -(
            sigma ** (2.0 * q)
            / delta**q
            * (1.0 - eps) ** 2
            * abs_moment(q) ** 2
            / (eps * prior.nonzero_moment(2.0 * q - 2.0))
        )
        note = "1<q<2: 残りは o(δ^{-q})"
    elif q == 2.0:
        second = sigma**2 / delta**2 * (1.0 - sigma**2 / (eps * prior.nonzero_moment(2.0)))
        note = "q=2: 残りは o(δ^{-2})"
    else:
        ratio = prior.nonzero_moment(q - 2.0) ** 2 / prior.nonzero_moment(2.0 * q - 2.0)
        second = sigma**2 / delta**2 * (1.0 - eps * (q - 1.0) ** 2 * sigma**2 * ratio)
        note = "q>2: 残りは o(δ^{-2})"
    return ExpansionResult(leading, second, Regime.LARGE_SAMPLE, note)


def sparse_second_order(q: float, prior: SignalPrior, sigma: float) -> float:
    """
    ε → 0（b_ε = 1）での二次の係数 E²(|G/σ + Z|^{1/(q-1)} sgn(G/σ + Z) G) / E|Z|^{2/(q-1)}。

    Args:
        q (float): q > 1。
        prior (SignalPrior): 事前分布（アトムと重みだけを使う）。
        sigma (float): σ > 0。

    Returns:
        float: 正の係数（AMSE からは ε² 倍して引く）。
    """
    if not q > 1.0:
        raise DomainError(f"二次の係数は q > 1 でのみ定義されます: q={q}")
    if not sigma > 0:
        raise DomainError(f"σ は正である必要があります: sigma={sigma}")
    power = 1.0 / (q - 1.0)

    def signed_power(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.sign(x) * np.abs(x) ** power

    inner = sum(
        w * g * expect_gaussian(signed_power, g / sigma, 1.0, adaptive=True)
        for g, w in zip(prior.atoms, prior.weights, strict=True)
    )
    return float(inner**2 / abs_moment(2.0 * power))


def amse_sparse(q: float, prior: SignalPrior, sigma: float) -> ExpansionResult:
    """
    ε → 0（b_ε = 1）での AMSE(q, λ*_q) = εEG² - ε² × sparse_second_order（q=1 では二次の項なし）。
    """
    leading = prior.second_moment
    if q == 1.0:
        return ExpansionResult(leading, 0.0, Regime.SPARSE, "q=1: 残りはすべての k で o(ε^k)")
    second = -(prior.epsilon**2) * sparse_second_order(q, prior, sigma)
    return ExpansionResult(leading, second, Regime.SPARSE, f"q={q}: 残りは o(ε²)")


def _normalized_moment(prior: SignalPrior, r: float) -> float:
    return float(np.dot(prior.weights, prior.normalized_atoms() ** r))


def nearly_black_minimizer(q: float, prior: SignalPrior, sigma: float) -> float:
    """
    ω ケースの極限を与える有限の最小点
    C* = [σ^{2q-2} E|Z|^{2/(q-1)} / ((q-1) q^{2q/(q-1)} E|G̃|^{2q-2})]^{(q-1)/(2q)}。

    Raises:
        DomainError: q が (1, 2) の外の場合。
    """
    if not 1.0 < q < 2.0:
        raise DomainError(f"ω ケースは 1 < q < 2 でのみ現れます: q={q}")
    numerator = sigma ** (2.0 * q - 2.0) * abs_moment(2.0 / (q - 1.0))
    denominator = (q - 1.0) * q ** (2.0 * q / (q - 1.0)) * _normalized_moment(prior, 2.0 * q - 2.0)
    return float((numerator / denominator) ** ((q - 1.0) / (2.0 * q)))


def ridge_boundary_constant(delta: float, sigma: float, c: float) -> float:
    """
    q=2 で b_ε ε^{1/2} → c の境界での AMSE の極限
    (δσ² + 4δα*²c²) / ((1 + 2α*)²δ - 1)（α* は E B² を c² とした ridge の最適値）。

    Args:
        delta (float): δ > 0。
        sigma (float): σ ≥ 0。
        c (float): c > 0。

    Returns:
        float: 極限の AMSE。
    """
    if not c > 0 or not delta > 0:
        raise DomainError(f"c と δ は正である必要があります: c={c}, delta={delta}")
    ratio = sigma**2 / c**2
    a = ratio + 1.0 / delta - 1.0
    alpha = 0.25 * (a + math.sqrt(a * a + 4.0 * ratio))
    numerator = delta * sigma**2 + 4.0 * delta * alpha**2 * c**2
    return numerator / ((1.0 + 2.0 * alpha) ** 2 * delta - 1.0)


def _h(log_c: float, q: float, prior: SignalPrior, sigma: float, c_r: float) -> float:
    big_c = math.exp(log_c)
    # q が 1 に近いとグリッドの端で桁あふれするので inf として扱う
    with np.errstate(over="ignore"):
        variance = float(np.power(big_c * q, -2.0 / (q - 1.0)))
    noise = variance * sigma**2 * abs_moment(2.0 / (q - 1.0))
    scaled = c_r * prior.normalized_atoms()
    bias = (prox_bridge_array(scaled, big_c * sigma ** (2.0 - q), q) - scaled) ** 2
    return noise + float(np.dot(prior.weights, bias))


def _minimize_h(q: float, prior: SignalPrior, sigma: float, c_r: float) -> tuple[float, float]:
    # log C のグリッドで挟んでから黄金分割法で絞り込む
    x, value = scan_golden_minimize(lambda t: _h(t, q, prior, sigma, c_r), H_LOG_GRID)
    if x in (H_LOG_GRID[0], H_LOG_GRID[-1]):
        raise NumericError("h(C) の最小点が探索区間の端から離れません", residual=x)
    return math.exp(x), value


def nearly_black_rate(
    q: float,
    case: NearlyBlackCase,
    prior: SignalPrior,
    sigma: float,
    c_r: float | None = None,
    delta: float | None = None,
) -> ExpansionResult:
    """
    ε → 0, b_ε → ∞ での正規化した AMSE(q, λ*_q) の極限。

    q>1 の正規化は ε^{-1/q} b_ε^{-2(q-1)/q}、q=1（LASSO）の正規化は
    ω・θ ケースで 1/(ε log ε^{-1})、o ケースで 1/(ε b_ε²)。

    Args:
        q (float): ブリッジ指数 q ≥ 1。
        case (NearlyBlackCase): 信号強度の増え方（omega / o / theta）。
        prior (SignalPrior): G̃ を与える事前分布（二乗平均で正規化して使う）。
        sigma (float): σ > 0。
        c_r (float | None): θ ケースの境界の定数。
        delta (float | None): q=2 の θ ケースで必要な δ。

    Returns:
        ExpansionResult: leading が極限の定数。

    Raises:
        DomainError: 定理が扱わない q とケースの組み合わせ、または必要な定数が無い場合。
    """
    if not sigma > 0:
        raise DomainError(f"σ は正である必要があります: sigma={sigma}")
    if q < 1:
        raise DomainError(f"q は 1 以上である必要があります: q={q}")
    regime = {
        NearlyBlackCase.OMEGA: Regime.NEARLY_BLACK_OMEGA,
        NearlyBlackCase.O: Regime.NEARLY_BLACK_O,
        NearlyBlackCase.THETA: Regime.NEARLY_BLACK_THETA,
    }[case]
    if case == NearlyBlackCase.THETA and (c_r is None or not c_r > 0):
        raise DomainError(f"θ ケースには正の c_r が必要です: c_r={c_r}")
    boundary = math.nan if c_r is None else float(c_r)

    if q == 1.0:
        if case == NearlyBlackCase.OMEGA:
            return ExpansionResult(2.0 * sigma**2, 0.0, regime, "LASSO: b_ε = ω(√log(1/ε))")
        if case == NearlyBlackCase.O:
            return ExpansionResult(1.0, 0.0, regime, "LASSO: b_ε = o(√log(1/ε))")
        scaled = boundary * prior.normalized_atoms()
        value = float(np.dot(prior.weights, np.minimum(scaled, sigma) ** 2))
        return ExpansionResult(value, 0.0, regime, f"LASSO: b_ε/√(2 log(1/ε)) → {boundary}")

    if case == NearlyBlackCase.O:
        return ExpansionResult(1.0, 0.0, regime, f"q={q}: b_ε = o(ε^{{(1-q)/2}})")
    if q > 2.0:
        raise DomainError(f"q > 2 では o ケースしか現れません: q={q}, case={case}")
    if case == NearlyBlackCase.OMEGA:
        if q == 2.0:
            raise DomainError("q=2 では ω ケースは現れません（o と θ のみ）")
        constant = (
            q
            * (q - 1.0) ** (1.0 / q - 1.0)
            * sigma ** (2.0 / q)
            * abs_moment(2.0 / (q - 1.0)) ** ((q - 1.0) / q)
            * _normalized_moment(prior, 2.0 * q - 2.0) ** (1.0 / q)
        )
        minimizer = nearly_black_minimizer(q, prior, sigma)
        return ExpansionResult(
            constant, 0.0, regime, f"q={q}: b_ε = ω(ε^{{(1-q)/2}})", minimizer
        )

    if q == 2.0:
        if delta is None:
            raise DomainError("q=2 の θ ケースには δ が必要です")
        constant = ridge_boundary_constant(delta, sigma, boundary) / boundary
        return ExpansionResult(constant, 0.0, regime, f"q=2: b_ε ε^{{1/2}} → {boundary}, δ={delta}")
    minimizer, value = _minimize_h(q, prior, sigma, boundary)
    logger.debug(f"h(C) の最小点: C={minimizer}, h={value}")
    return ExpansionResult(
        value, 0.0, regime, f"q={q}: b_ε ε^{{(q-1)/2}} → {boundary}", minimizer
    )
