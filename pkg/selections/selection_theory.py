"""
二段階変数選択の理論上の AFDP / ATPP とトレードオフ曲線を計算するモジュール。

このモジュールは以下の処理を提供します:
1. SelectionRule: 第一段階の解（τ, χ, q）と第二段階のしきい値 s から、
   選択される条件 |B + τZ| > t(s) の実効しきい値 t(s) を決める。
   - 二段階ブリッジ: |η_q(x; χ)| > s ⇔ |x| > s + χ q s^{q-1}
   - デバイアス二段階・SIS: |x| > s
2. 原子的な事前分布では ATPP と AFDP はどちらも正規分布の裾確率（norm.sf）で閉じる。
3. threshold_for_atpp: ATPP が ζ になる s*(ζ) を実効しきい値上の brentq で求める。
4. build_curve: ATPP のグリッドから曲線を組み立てる（LASSO は s ではなく λ を掃引する）。
5. write_curve_csv: `method,q,lambda,s,atpp,afdp` の CSV を書き出す。

使用例:
    se = optimal_tuning(ModelParams(delta=0.8, sigma=0.5, q=2.0), prior)
    rule = SelectionRule.two_stage(se, prior)
    rule.point(threshold_for_atpp(rule, 0.6))

エラー処理:
    - 到達できない ζ は RangeError（到達可能な ATPP の区間つき）。
    - q ≠ 1 の解を lasso_point に渡すと DomainError。
"""

import csv
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from selections.constants import CSV_FLOAT_FORMAT, Method, Tuning
from selections.exceptions import DomainError, NoFixedPointError, RangeError
from selections.prior import SignalPrior
from selections.prox import prox_scalar
from selections.state_evolution import (
    ModelParams,
    SEFixedPoint,
    feasible_alpha_floor,
    fixed_point_tau,
    lambda_at_alpha,
    lambda_from_alpha,
    optimal_tuning,
    solve_given_lambda,
)

logger = logging.getLogger("selections")

ATPP_TOL = 1e-10
TAIL_WIDTH = 40.0
CURVE_CSV_HEADER = ("method", "q", "lambda", "s", "atpp", "afdp")


@dataclass(frozen=True)
class TradeoffPoint:
    """
    トレードオフ曲線上の一点。

    Attributes:
        s (float): 第二段階のしきい値（inf も可）。
        atpp (float): ATPP ∈ [0, 1]。
        afdp (float): AFDP ∈ [0, 1]。
        lam (float): 第一段階の λ（SIS は inf）。
    """

    s: float
    atpp: float
    afdp: float
    lam: float = math.nan


@dataclass(frozen=True)
class TradeoffCurve:
    """
    一つの手法のトレードオフ曲線。points は (s, λ) の昇順に並ぶ。

    Attributes:
        method (Method): 手法。
        q (float): ブリッジ指数。
        points (tuple[TradeoffPoint, ...]): 曲線の点。
        tau0 (float | None): SIS の実効ノイズ τ₀（SIS 以外は None）。
        skipped (tuple[float, ...]): 到達できずに飛ばした ζ。
    """

    method: Method
    q: float
    points: tuple[TradeoffPoint, ...]
    tau0: float | None = None
    skipped: tuple[float, ...] = field(default_factory=tuple)


def _rates(t: float, tau: float, prior: SignalPrior) -> tuple[float, float]:
    """
    実効しきい値 t での (ATPP, 帰無成分の選択確率) を返す。
    """
    if math.isinf(t):
        return 0.0, 0.0
    g = prior.atoms
    signal = norm.sf((t - g) / tau) + norm.sf((t + g) / tau)
    atpp = float(np.dot(prior.weights, signal))
    null = float(2.0 * norm.sf(t / tau))
    return min(max(atpp, 0.0), 1.0), null


def _afdp(atpp: float, null: float, epsilon: float) -> float:
    false = (1.0 - epsilon) * null
    total = false + epsilon * atpp
    # 何も選ばれなければ誤発見も無いとみなす
    if total <= 0.0:
        return 0.0
    return min(max(false / total, 0.0), 1.0)


@dataclass(frozen=True)
class SelectionRule:
    """
    第二段階のしきい値処理の文脈。

    Attributes:
        method (Method): two_stage / debiased_two_stage / sis / lasso。
        prior (SignalPrior): 事前分布。
        tau (float): 実効ノイズ τ。
        q (float): 第一段階のブリッジ指数。
        chi (float): 第一段階の近接作用素の重み χ = ατ^{2-q}（デバイアス・SIS では 0）。
        lam (float): 第一段階の λ。
    """

    method: Method
    prior: SignalPrior
    tau: float
    q: float = 1.0
    chi: float = 0.0
    lam: float = math.nan

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise DomainError(f"τ は正である必要があります: tau={self.tau}")

    @classmethod
    def two_stage(cls, se: SEFixedPoint, prior: SignalPrior) -> "SelectionRule":
        return cls(Method.TWO_STAGE, prior, se.tau, se.q, se.chi, se.lam)

    @classmethod
    def debiased(cls, se: SEFixedPoint, prior: SignalPrior) -> "SelectionRule":
        return cls(Method.DEBIASED_TWO_STAGE, prior, se.tau, se.q, 0.0, se.lam)

    @classmethod
    def sis(cls, model: ModelParams, prior: SignalPrior) -> "SelectionRule":
        return cls(Method.SIS, prior, tau0(model, prior), model.q, 0.0, math.inf)

    def effective_threshold(self, s: float) -> float:
        """
        |η_q(x; χ)| > s を |x| > t と書き直したときの t = s + χ q s^{q-1}。
        q=1, s=0 では 0.0**0 = 1 により t = χ となる。
        """
        if math.isinf(s) or math.isinf(self.chi):
            return math.inf
        if self.chi == 0.0:
            return s
        return s + self.chi * self.q * s ** (self.q - 1.0)

    def threshold_from_effective(self, t: float) -> float:
        """effective_threshold の逆写像 s = |η_q(t; χ)|。"""
        if math.isinf(t):
            return math.inf
        return abs(prox_scalar(t, self.chi, self.q))

    def point(self, s: float) -> TradeoffPoint:
        """
        しきい値 s での (ATPP, AFDP)。

        Args:
            s (float): しきい値 s ≥ 0（inf も可）。

        Returns:
            TradeoffPoint: 曲線上の点。
        """
        if s < 0:
            raise DomainError(f"しきい値は 0 以上である必要があります: s={s}")
        atpp, null = _rates(self.effective_threshold(s), self.tau, self.prior)
        return TradeoffPoint(s, atpp, _afdp(atpp, null, self.prior.epsilon), self.lam)

    @property
    def max_atpp(self) -> float:
        """s=0 で到達する ATPP（二段階 LASSO では 1 未満になる）。"""
        return self.point(0.0).atpp


def two_stage_point(se: SEFixedPoint, s: float, prior: SignalPrior) -> TradeoffPoint:
    """
    第一段階をブリッジ推定量、第二段階をしきい値 s のハードしきい値とした選択の (ATPP, AFDP)。

    Args:
        se (SEFixedPoint): 第一段階の状態発展の解。
        s (float): しきい値。
        prior (SignalPrior): 事前分布。

    Returns:
        TradeoffPoint: ATPP = P(|η_q(G + τZ; χ)| > s) と AFDP。
    """
    return SelectionRule.two_stage(se, prior).point(s)


def lasso_point(se: SEFixedPoint, prior: SignalPrior) -> TradeoffPoint:
    """
    LASSO 自体の選択 {β̂ ≠ 0} の (ATPP, AFDP)。q=1 の二段階選択で s=0 としたものに等しい。

    Raises:
        DomainError: se.q ≠ 1 の場合。
    """
    if se.q != 1.0:
        raise DomainError(f"LASSO の点は q=1 の解でのみ定義されます: q={se.q}")
    return two_stage_point(se, 0.0, prior)


def debiased_point(
    tau: float, s: float, prior: SignalPrior, lam: float = math.nan
) -> TradeoffPoint:
    """
    デバイアスした推定量 β† ≈ B + τZ をしきい値 s で選択したときの (ATPP†, AFDP†)。
    """
    return SelectionRule(Method.DEBIASED_TWO_STAGE, prior, tau, lam=lam).point(s)


def tau0(model: ModelParams, prior: SignalPrior) -> float:
    """SIS の実効ノイズ τ₀ = √(σ² + E B²/δ)。"""
    return math.sqrt(model.sigma**2 + prior.second_moment / model.delta)


def sis_point(model: ModelParams, prior: SignalPrior, s: float) -> TradeoffPoint:
    """
    SIS（Xᵀy のしきい値処理）の (ATPP, AFDP)。τ₀ でのデバイアス公式に等しい。
    """
    return SelectionRule.sis(model, prior).point(s)


def threshold_for_atpp(rule: SelectionRule, zeta: float) -> float:
    """
    ATPP(s) = ζ となるしきい値 s*(ζ) を求める。

    ATPP は実効しきい値 t について狭義単調減少なので、t 上の brentq で |ATPP - ζ| ≤ 1e-10 まで解き、
    s = |η_q(t; χ)| に戻す。

    Args:
        rule (SelectionRule): 選択の文脈。
        zeta (float): 目標の ATPP ∈ [0, 1]。

    Returns:
        float: s*(ζ)（ζ=0 なら inf）。

    Raises:
        DomainError: ζ が [0, 1] の外、または LASSO の文脈の場合。
        RangeError: ζ が s=0 の ATPP を超える場合。
    """
    if not 0.0 <= zeta <= 1.0:
        raise DomainError(f"ζ は [0, 1] の範囲である必要があります: zeta={zeta}")
    if rule.method == Method.LASSO:
        raise DomainError("LASSO にはしきい値 s がありません（λ を掃引してください）")
    if zeta == 0.0:
        return math.inf
    t_min = rule.effective_threshold(0.0)
    top = _rates(t_min, rule.tau, rule.prior)[0]
    if zeta > top + ATPP_TOL:
        raise RangeError(f"ATPP={zeta} には到達できません", (0.0, top))
    if zeta >= top:
        return 0.0

    def gap(t: float) -> float:
        return _rates(t, rule.tau, rule.prior)[0] - zeta

    t_max = float(rule.prior.atoms.max()) + TAIL_WIDTH * rule.tau
    t = float(brentq(gap, t_min, t_max, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return rule.threshold_from_effective(t)


def _lasso_alpha_floor(model: ModelParams, prior: SignalPrior) -> float:
    # λ ≥ 0 となる最小の α（δ < 1 では λ=0 の点、それ以外は不動点が存在する最小の α）
    floor = feasible_alpha_floor(model, prior)
    if lambda_at_alpha(floor, model, prior) >= 0:
        return floor
    hi = floor
    while lambda_at_alpha(hi, model, prior) < 0:
        hi *= 10.0

    def lam(log_alpha: float) -> float:
        return lambda_at_alpha(math.exp(log_alpha), model, prior)

    return math.exp(brentq(lam, math.log(floor), math.log(hi), xtol=1e-12))


def _lasso_atpp(alpha: float, model: ModelParams, prior: SignalPrior) -> tuple[float, float]:
    tau = fixed_point_tau(alpha, model, prior)
    return _rates(alpha * tau, tau, prior)[0], tau


def _lasso_point_for_atpp(
    zeta: float, model: ModelParams, prior: SignalPrior, alpha_floor: float
) -> TradeoffPoint:
    if zeta == 0.0:
        return TradeoffPoint(0.0, 0.0, 0.0, math.inf)
    top, _ = _lasso_atpp(alpha_floor, model, prior)
    if zeta > top + ATPP_TOL:
        raise RangeError(f"LASSO は ATPP={zeta} に到達できません", (0.0, top))
    if zeta >= top:
        alpha = alpha_floor
    else:
        hi = max(alpha_floor, 1.0)
        while _lasso_atpp(hi, model, prior)[0] > zeta:
            hi *= 10.0

        def gap(log_alpha: float) -> float:
            return _lasso_atpp(math.exp(log_alpha), model, prior)[0] - zeta

        alpha = math.exp(brentq(gap, math.log(alpha_floor), math.log(hi), xtol=1e-14))
    tau = fixed_point_tau(alpha, model, prior)
    lam = lambda_from_alpha(alpha, tau, model, prior)
    se = SEFixedPoint(q=1.0, alpha=alpha, tau=tau, lam=lam, amse=math.nan)
    return lasso_point(se, prior)


def _first_stage(
    model: ModelParams, prior: SignalPrior, tuning: Tuning | float
) -> SEFixedPoint:
    if tuning == Tuning.OPTIMAL:
        return optimal_tuning(model, prior)
    if isinstance(tuning, Tuning):
        raise DomainError(f"理論曲線では tuning={tuning} を使えません（optimal か λ の値）")
    return solve_given_lambda(float(tuning), model, prior)


def build_curve(
    method: Method,
    model: ModelParams,
    prior: SignalPrior,
    q: float,
    tuning: Tuning | float | Decimal,
    atpp_grid: Sequence[float],
    strict: bool = True,
) -> TradeoffCurve:
    """
    ATPP のグリッドに対する理論上のトレードオフ曲線を組み立てる。

    Args:
        method (Method): 手法。
        model (ModelParams): モデルのパラメータ（q はこの関数の q で置き換える）。
        prior (SignalPrior): 事前分布。
        q (float): ブリッジ指数（LASSO は 1 のみ）。
        tuning (Tuning | float | Decimal): Tuning.OPTIMAL か λ の値。
        atpp_grid (Sequence[float]): ATPP のグリッド。
        strict (bool): False なら到達できない ζ を飛ばして skipped に記録する。

    Returns:
        TradeoffCurve: (s, λ) 昇順の曲線。

    Raises:
        DomainError: グリッドが [0, 1] の外、または LASSO に q ≠ 1 を指定した場合。
        RangeError: strict で到達できない ζ がある場合。
    """
    if any(not 0.0 <= z <= 1.0 for z in atpp_grid):
        raise DomainError(f"ATPP のグリッドは [0, 1] の範囲である必要があります: {atpp_grid}")
    model = ModelParams(delta=model.delta, sigma=model.sigma, q=q)
    tuning = float(tuning) if isinstance(tuning, Decimal) else tuning
    logger.info(f"START 理論曲線: method={method}, q={q}, tuning={tuning}")

    tau0_value: float | None = None
    rule: SelectionRule | None = None
    alpha_floor = math.nan
    if method == Method.LASSO:
        if q != 1.0:
            raise DomainError(f"LASSO の曲線は q=1 のみです: q={q}")
        alpha_floor = _lasso_alpha_floor(model, prior)
    elif method == Method.SIS:
        rule = SelectionRule.sis(model, prior)
        tau0_value = rule.tau
    else:
        se = _first_stage(model, prior, tuning)
        if method == Method.TWO_STAGE:
            rule = SelectionRule.two_stage(se, prior)
        else:
            rule = SelectionRule.debiased(se, prior)

    points: list[TradeoffPoint] = []
    skipped: list[float] = []
    for zeta in atpp_grid:
        try:
            if rule is None:
                points.append(_lasso_point_for_atpp(zeta, model, prior, alpha_floor))
            else:
                points.append(rule.point(threshold_for_atpp(rule, zeta)))
        except (RangeError, NoFixedPointError) as e:
            if strict:
                logger.error(f"ATPP={zeta} の点を計算できません: {e}", exc_info=True)
                raise
            logger.warning(f"ATPP={zeta} は到達できないため飛ばします: {e}")
            skipped.append(zeta)

    points.sort(key=lambda p: (p.s, p.lam))
    logger.info(f"END   理論曲線: method={method}, q={q}, 点の数={len(points)}")
    return TradeoffCurve(method, q, tuple(points), tau0_value, tuple(skipped))


def _fmt(value: float) -> str:
    return CSV_FLOAT_FORMAT.format(value)


def write_curve_csv(curve: TradeoffCurve, path: Path) -> Path:
    """
    曲線を `method,q,lambda,s,atpp,afdp` の CSV に書き出す（浮動小数点は 17 桁、s=∞ は inf）。

    Args:
        curve (TradeoffCurve): 曲線。
        path (Path): 出力先。

    Returns:
        Path: 書き出したファイルのパス。
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CURVE_CSV_HEADER)
        for point in curve.points:
            writer.writerow(
                [
                    curve.method.value,
                    _fmt(curve.q),
                    _fmt(point.lam),
                    _fmt(point.s),
                    _fmt(point.atpp),
                    _fmt(point.afdp),
                ]
            )
    return path
