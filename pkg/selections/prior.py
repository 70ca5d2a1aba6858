"""
疎な信号の事前分布 p_B = (1-ε)δ₀ + ε p_G と、ガウス混合に関する一次元期待値の求積を扱うモジュール。

- SignalPrior: スパース度 ε、非ゼロ成分の分布 G（点質量または離散アトム）、信号強度の倍率 b_ε。
- QuadratureRule: E f(μ + τZ) 用に変数変換済みの Gauss–Hermite 節点と重み。
- expect_gaussian / expect_prior: 上記の規則による期待値。
- abs_moment: 標準正規分布の絶対モーメント E|Z|^r の閉形式。

使用例:
    prior = SignalPrior.point_mass(epsilon=0.4, m=8.0)
    expect_prior(lambda b, z: b**2, prior)  # -> 25.6

エラー処理:
    - 事前分布の不正な引数、r ≤ -1 の絶対モーメントは DomainError。
    - 被積分関数が節点で非有限値を返した場合は NumericError（節点を明示）。
    - 次数を上限まで倍増しても一致しない場合は scipy.integrate.quad で計算し直す。
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.typing import NDArray
from scipy.integrate import quad
from scipy.special import gamma
from scipy.stats import norm

from selections.exceptions import DomainError, NumericError

logger = logging.getLogger("selections")

DEFAULT_ORDER = 61
MIN_ORDER = 21
MAX_ORDER = 244  # hermgauss は 488 点で重みが NaN になる
ADAPTIVE_RTOL = 1e-10
QUAD_HALF_WIDTH = 40.0
QUAD_LIMIT = 400

GaussianIntegrand = Callable[[NDArray[np.float64]], NDArray[np.float64]]
MixtureIntegrand = Callable[[NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True)
class PointMass:
    """G = m の点質量。"""

    m: float


@dataclass(frozen=True)
class DiscreteAtoms:
    """有限個のアトム values に重み weights を置いた G の分布。"""

    values: tuple[float, ...]
    weights: tuple[float, ...]


@dataclass(frozen=True)
class SignalPrior:
    """
    係数の事前分布 p_B = (1-ε)δ₀ + ε p_G。非ゼロ成分は scale·G に従う。

    Attributes:
        epsilon (float): スパース度 ε ∈ [0, 1]。
        nonzero (PointMass | DiscreteAtoms): G の分布（アトムは正）。
        scale (float): 信号強度の倍率 b_ε（既定 1）。
    """

    epsilon: float
    nonzero: PointMass | DiscreteAtoms
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise DomainError(f"ε は [0, 1] の範囲である必要があります: epsilon={self.epsilon}")
        if not math.isfinite(self.scale) or self.scale <= 0:
            raise DomainError(f"scale は正の有限値である必要があります: scale={self.scale}")
        values, weights = self._raw()
        if len(values) == 0 or len(values) != len(weights):
            raise DomainError("アトムと重みの個数が一致しません")
        if any(not math.isfinite(v) or v <= 0 for v in values):
            raise DomainError(f"アトムは正の有限値である必要があります: values={values}")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise DomainError(f"重みは和が 1 の非負値である必要があります: weights={weights}")

    @classmethod
    def point_mass(cls, epsilon: float, m: float, scale: float = 1.0) -> "SignalPrior":
        return cls(epsilon=epsilon, nonzero=PointMass(m), scale=scale)

    @classmethod
    def discrete(
        cls, epsilon: float, values: list[float], weights: list[float], scale: float = 1.0
    ) -> "SignalPrior":
        return cls(
            epsilon=epsilon,
            nonzero=DiscreteAtoms(tuple(values), tuple(weights)),
            scale=scale,
        )

    def _raw(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        if isinstance(self.nonzero, PointMass):
            return (self.nonzero.m,), (1.0,)
        return self.nonzero.values, self.nonzero.weights

    @property
    def atoms(self) -> NDArray[np.float64]:
        """scale を掛けた G のアトム。"""
        return self.scale * np.asarray(self._raw()[0], dtype=float)

    @property
    def weights(self) -> NDArray[np.float64]:
        return np.asarray(self._raw()[1], dtype=float)

    def nonzero_moment(self, r: float) -> float:
        """
        非ゼロ成分のモーメント E|G|^r（scale 込み）。

        Args:
            r (float): 次数。

        Returns:
            float: E|G|^r。
        """
        return float(np.dot(self.weights, self.atoms**r))

    @property
    def second_moment(self) -> float:
        """E B² = ε E G²。"""
        return self.epsilon * self.nonzero_moment(2.0)

    @property
    def signal_strength(self) -> float:
        """b_ε = √(E G²)。"""
        return math.sqrt(self.nonzero_moment(2.0))

    def normalized_atoms(self) -> NDArray[np.float64]:
        """二乗平均が 1 になるよう正規化した G̃ = G / b_ε のアトム。"""
        return self.atoms / self.signal_strength

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        """
        事前分布から size 個の係数を独立に生成する。

        Args:
            rng (np.random.Generator): 乱数生成器。
            size (int): 生成する個数。

        Returns:
            NDArray[np.float64]: 係数ベクトル。
        """
        support = rng.random(size) < self.epsilon
        values = rng.choice(self.atoms, size=size, p=self.weights)
        return np.where(support, values, 0.0)


@lru_cache(maxsize=16)
def _hermite_nodes(order: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    x, w = hermgauss(order)
    nodes = math.sqrt(2.0) * x
    weights = w / math.sqrt(math.pi)
    return nodes, weights / weights.sum()


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    E f(Z)（Z は標準正規）を Σ w_k f(z_k) で近似する求積規則。

    Attributes:
        nodes (NDArray[np.float64]): 節点 z_k。
        weights (NDArray[np.float64]): 正の重み（和は 1）。
        order (int): 節点数。
    """

    nodes: NDArray[np.float64]
    weights: NDArray[np.float64]
    order: int

    @classmethod
    def gauss_hermite(cls, order: int = DEFAULT_ORDER) -> "QuadratureRule":
        if order < MIN_ORDER:
            raise DomainError(f"求積の次数は {MIN_ORDER} 以上である必要があります: order={order}")
        if order > MAX_ORDER:
            raise DomainError(f"求積の次数は {MAX_ORDER} 以下である必要があります: order={order}")
        nodes, weights = _hermite_nodes(order)
        return cls(nodes=nodes, weights=weights, order=order)

    def refined(self) -> "QuadratureRule":
        """節点数を倍にした規則。"""
        return QuadratureRule.gauss_hermite(2 * self.order)


def default_rule() -> QuadratureRule:
    return QuadratureRule.gauss_hermite(DEFAULT_ORDER)


def _checked(values: NDArray[np.float64], points: NDArray[np.float64]) -> NDArray[np.float64]:
    bad = ~np.isfinite(values)
    if bad.any():
        node = float(np.ravel(points)[np.argmax(np.ravel(bad))])
        logger.error(f"被積分関数が節点で非有限値を返しました: 節点={node}")
        raise NumericError(f"被積分関数が節点 {node:.6g} で非有限値を返しました")
    return values


def _adaptive(
    evaluate: Callable[[QuadratureRule], float],
    rule: QuadratureRule,
    fallback: Callable[[], float],
) -> float:
    current = evaluate(rule)
    while 2 * rule.order <= MAX_ORDER:
        rule = rule.refined()
        finer = evaluate(rule)
        if not math.isfinite(finer):
            logger.debug(f"{rule.order} 点の求積が非有限値になったため quad に切り替えます")
            return fallback()
        if abs(finer - current) <= ADAPTIVE_RTOL * (1.0 + abs(finer)):
            return finer
        current = finer
    # キンクのある被積分関数は節点を増やしても収束しないので、適応的 Gauss–Kronrod に切り替える
    logger.debug(f"求積の次数倍増が上限 {rule.order} に達したため quad に切り替えます")
    return fallback()


def _gaussian_quad(f: Callable[[float], float], mu: float, tau: float) -> float:
    if tau == 0.0:
        return float(f(mu))

    def integrand(z: float) -> float:
        return float(f(mu + tau * z)) * float(norm.pdf(z))

    value, _ = quad(integrand, -QUAD_HALF_WIDTH, QUAD_HALF_WIDTH, limit=QUAD_LIMIT)
    return float(value)


def expect_gaussian(
    f: GaussianIntegrand,
    mu: float,
    tau: float,
    rule: QuadratureRule | None = None,
    adaptive: bool = False,
) -> float:
    """
    E f(μ + τZ) を Gauss–Hermite 求積で計算する。

    Args:
        f (GaussianIntegrand): 配列を受け取るベクトル化された関数。
        mu (float): 平均 μ。
        tau (float): 標準偏差 τ ≥ 0。
        rule (QuadratureRule | None): 求積規則（省略時は 61 点）。
        adaptive (bool): True なら相対差 1e-10 まで節点数を倍増し、
            それでも一致しなければ scipy の quad に切り替える（キンクを含む被積分関数用）。

    Returns:
        float: 期待値の近似。

    Raises:
        DomainError: τ < 0 の場合。
        NumericError: f が節点で非有限値を返した場合。
    """
    if tau < 0 or not math.isfinite(tau):
        raise DomainError(f"τ は 0 以上の有限値である必要があります: tau={tau}")

    def evaluate(r: QuadratureRule) -> float:
        points = mu + tau * r.nodes
        return float(np.dot(r.weights, _checked(np.asarray(f(points), dtype=float), points)))

    def scalar(x: float) -> float:
        return float(np.asarray(f(np.array([x])), dtype=float).ravel()[0])

    rule = rule or default_rule()
    if not adaptive:
        return evaluate(rule)
    return _adaptive(evaluate, rule, lambda: _gaussian_quad(scalar, mu, tau))


def expect_prior(
    f: MixtureIntegrand,
    prior: SignalPrior,
    rule: QuadratureRule | None = None,
    adaptive: bool = False,
) -> float:
    """
    E f(B, Z) = (1-ε) E f(0, Z) + ε Σ_i w_i E f(g_i, Z) を計算する（アトム方向は厳密）。

    Args:
        f (MixtureIntegrand): (b, z) の配列を受け取りブロードキャストするベクトル化された関数。
        prior (SignalPrior): 事前分布。
        rule (QuadratureRule | None): 求積規則（省略時は 61 点）。
        adaptive (bool): True なら節点数を倍増して収束を確認し、収束しなければ quad に切り替える。

    Returns:
        float: 混合期待値。
    """
    b = np.concatenate(([0.0], prior.atoms))[:, None]
    mixture = np.concatenate(([1.0 - prior.epsilon], prior.epsilon * prior.weights))

    def evaluate(r: QuadratureRule) -> float:
        z = r.nodes[None, :]
        shape = (b.shape[0], z.shape[1])
        values = np.broadcast_to(np.asarray(f(b, z), dtype=float), shape)
        values = _checked(values, np.broadcast_to(z, shape))
        return float(mixture @ (values @ r.weights))

    def fallback() -> float:
        total = 0.0
        for atom, weight in zip(b[:, 0], mixture, strict=True):
            if weight == 0.0:
                continue

            def scalar(z: float, atom: float = float(atom)) -> float:
                value = f(np.array([[atom]]), np.array([[z]]))
                return float(np.asarray(value, dtype=float).ravel()[0])

            total += weight * _gaussian_quad(scalar, 0.0, 1.0)
        return total

    rule = rule or default_rule()
    return _adaptive(evaluate, rule, fallback) if adaptive else evaluate(rule)


def abs_moment(r: float) -> float:
    """
    標準正規分布の絶対モーメント E|Z|^r = 2^{r/2} Γ((r+1)/2) / √π。

    Args:
        r (float): 次数 r > -1。

    Returns:
        float: E|Z|^r。

    Raises:
        DomainError: r ≤ -1（発散）の場合。
    """
    if r <= -1:
        raise DomainError(f"E|Z|^r は r > -1 でのみ有限です: r={r}")
    return float(2.0 ** (r / 2.0) * gamma((r + 1.0) / 2.0) / math.sqrt(math.pi))
