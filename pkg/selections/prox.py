"""
ブリッジ罰則 χ|z|^q の近接作用素 η_q(u; χ) とその偏導関数、ハードしきい値を計算するモジュール。

η_q(u; χ) = argmin_z ½(u - z)² + χ|z|^q  (q ≥ 1)

- q = 1: ソフトしきい値
- q = 2: u / (1 + 2χ)
- それ以外: 停留条件 z + χ q z^{q-1} = |u| を区間 (0, |u|) 上の
  安全化ニュートン法（ステップが区間を外れたら二分法）で解き、奇関数性で符号を戻す。

配列版（prox_bridge_array など）は求積や AMP から、スカラー版（prox_scalar）は座標降下法の内側から
呼ばれる。どちらも同じ反復・同じ許容誤差を使う。

エラー処理:
    - 非有限の入力、負の χ、q < 1 は DomainError。
    - ニュートン・二分法が最大反復回数内に収束しなければ NumericError（残差つき）。
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from selections.exceptions import DomainError, NumericError

logger = logging.getLogger("selections")

PROX_TOL = 1e-12
PROX_MAX_ITER = 200


@dataclass(frozen=True)
class ProxQuery:
    """
    近接作用素の問い合わせ（入力点 u、罰則の重み χ、ブリッジ指数 q）。
    """

    u: float
    chi: float
    q: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.u):
            raise DomainError(f"u が有限ではありません: u={self.u}")
        if not math.isfinite(self.chi) or self.chi < 0:
            raise DomainError(f"χ は 0 以上の有限値である必要があります: chi={self.chi}")
        if not math.isfinite(self.q) or self.q < 1:
            raise DomainError(f"q は 1 以上である必要があります: q={self.q}")


def _check_params(chi: float, q: float) -> None:
    if not math.isfinite(chi) or chi < 0:
        raise DomainError(f"χ は 0 以上の有限値である必要があります: chi={chi}")
    if not math.isfinite(q) or q < 1:
        raise DomainError(f"q は 1 以上である必要があります: q={q}")


def prox_scalar(u: float, chi: float, q: float) -> float:
    """
    η_q(u; χ) のスカラー版。引数の検証は呼び出し側で済んでいる前提。

    Args:
        u (float): 入力点。
        chi (float): 罰則の重み χ ≥ 0。
        q (float): ブリッジ指数 q ≥ 1。

    Returns:
        float: 近接作用素の値。

    Raises:
        NumericError: 反復が収束しなかった場合。
    """
    if u == 0.0 or chi == 0.0:
        return u
    if q == 1.0:
        a = abs(u) - chi
        return math.copysign(a, u) if a > 0.0 else 0.0
    if q == 2.0:
        return u / (1.0 + 2.0 * chi)

    a = abs(u)
    cq = chi * q
    lo, hi = 0.0, a
    z = a
    if q < 2.0:
        # 原点付近は |u|/|η|^{q-1} → χq の漸近形から始める
        z = min(a, (a / cq) ** (1.0 / (q - 1.0)))
    tol = PROX_TOL * (1.0 + a)
    g = z + cq * z ** (q - 1.0) - a
    for _ in range(PROX_MAX_ITER):
        if abs(g) <= tol or hi - lo <= 4.0 * np.finfo(float).eps * hi:
            return math.copysign(z, u)
        if g > 0.0:
            hi = z
        else:
            lo = z
        dg = 1.0 + cq * (q - 1.0) * z ** (q - 2.0) if z > 0.0 else math.inf
        step = z - g / dg
        z = step if lo < step < hi else 0.5 * (lo + hi)
        g = z + cq * z ** (q - 1.0) - a
    logger.error(f"近接作用素の反復が収束しませんでした: u={u}, chi={chi}, q={q}")
    raise NumericError("近接作用素の反復が収束しませんでした", residual=abs(g))


def prox_bridge_array(u: ArrayLike, chi: float, q: float) -> NDArray[np.float64]:
    """
    η_q(u; χ) を配列の各要素に適用する。

    Args:
        u (ArrayLike): 入力点の配列。
        chi (float): 罰則の重み χ ≥ 0。
        q (float): ブリッジ指数 q ≥ 1。

    Returns:
        NDArray[np.float64]: 近接作用素の値（u と同じ形状）。

    Raises:
        DomainError: 入力が非有限、または χ, q が定義域外の場合。
        NumericError: 反復が収束しなかった場合。
    """
    _check_params(chi, q)
    x = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("近接作用素の入力に非有限値が含まれています")
    if chi == 0.0:
        return x.copy()
    if q == 1.0:
        return np.sign(x) * np.maximum(np.abs(x) - chi, 0.0)
    if q == 2.0:
        return x / (1.0 + 2.0 * chi)

    a = np.abs(x)
    cq = chi * q
    lo = np.zeros_like(a)
    hi = a.copy()
    if q < 2.0:
        z = np.minimum(a, (a / cq) ** (1.0 / (q - 1.0)))
    else:
        z = a.copy()
    tol = PROX_TOL * (1.0 + a)
    eps = 4.0 * np.finfo(float).eps
    done = a == 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for _ in range(PROX_MAX_ITER):
            g = z + cq * z ** (q - 1.0) - a
            done |= (np.abs(g) <= tol) | (hi - lo <= eps * hi)
            if done.all():
                return np.sign(x) * np.where(a == 0.0, 0.0, z)
            lo = np.where(g < 0.0, z, lo)
            hi = np.where(g > 0.0, z, hi)
            dg = 1.0 + cq * (q - 1.0) * z ** (q - 2.0)
            step = z - g / dg
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            z = np.where(done, z, np.where(bad, 0.5 * (lo + hi), step))
    residual = float(np.max(np.abs(np.where(done, 0.0, g))))
    logger.error(f"近接作用素の反復が収束しませんでした: chi={chi}, q={q}, 残差={residual:.3e}")
    raise NumericError("近接作用素の反復が収束しませんでした", residual=residual)


def prox_deriv_u_array(u: ArrayLike, chi: float, q: float) -> NDArray[np.float64]:
    """
    ∂₁η_q(u; χ) を配列の各要素について計算する。

    q > 1 では 1 / (1 + χq(q-1)|η|^{q-2})、q = 1 では 1{|u| > χ}。
    q = 1 のキンク |u| = χ は測度 0 として 0 を返す（スカラー版 prox_deriv_u はここを拒否する）。

    Args:
        u (ArrayLike): 入力点の配列。
        chi (float): 罰則の重み χ ≥ 0。
        q (float): ブリッジ指数 q ≥ 1。

    Returns:
        NDArray[np.float64]: 偏導関数の値（[0, 1] に入る）。
    """
    _check_params(chi, q)
    x = np.asarray(u, dtype=float)
    if chi == 0.0:
        return np.ones_like(x)
    if q == 1.0:
        return (np.abs(x) > chi).astype(float)
    if q == 2.0:
        return np.full_like(x, 1.0 / (1.0 + 2.0 * chi))
    eta = np.abs(prox_bridge_array(x, chi, q))
    with np.errstate(divide="ignore"):
        curvature = chi * q * (q - 1.0) * eta ** (q - 2.0)
    return 1.0 / (1.0 + curvature)


def prox_deriv_chi_array(u: ArrayLike, chi: float, q: float) -> NDArray[np.float64]:
    """
    ∂₂η_q(u; χ) = -q|η|^{q-1} sgn(u) / (1 + χq(q-1)|η|^{q-2}) を配列の各要素について計算する。

    Args:
        u (ArrayLike): 入力点の配列。
        chi (float): 罰則の重み χ ≥ 0。
        q (float): ブリッジ指数 q > 1。

    Returns:
        NDArray[np.float64]: 偏導関数の値（符号は sgn(u) と逆）。

    Raises:
        DomainError: q = 1 の場合（χ についての微分は q > 1 の最適化でのみ使う）。
    """
    _check_params(chi, q)
    if q == 1.0:
        raise DomainError("∂₂η は q > 1 でのみ定義されます")
    x = np.asarray(u, dtype=float)
    eta = np.abs(prox_bridge_array(x, chi, q))
    with np.errstate(divide="ignore", invalid="ignore"):
        curvature = chi * q * (q - 1.0) * eta ** (q - 2.0)
        value = -q * eta ** (q - 1.0) * np.sign(x) / (1.0 + curvature)
    return np.where(eta == 0.0, 0.0, value)


def prox_bridge(query: ProxQuery) -> float:
    """
    ½(u - z)² + χ|z|^q の一意な最小点を返す。

    Args:
        query (ProxQuery): 問い合わせ。

    Returns:
        float: η_q(u; χ)。
    """
    return prox_scalar(query.u, query.chi, query.q)


def prox_deriv_u(query: ProxQuery) -> float:
    """
    ∂₁η_q(u; χ) を返す。

    Args:
        query (ProxQuery): 問い合わせ。

    Returns:
        float: [0, 1] に入る偏導関数の値。

    Raises:
        DomainError: q = 1 かつ |u| = χ（微分不可能点）の場合。
    """
    if query.q == 1.0 and abs(query.u) == query.chi:
        raise DomainError(f"q=1 では |u|=χ で微分できません: u={query.u}, chi={query.chi}")
    return float(prox_deriv_u_array(query.u, query.chi, query.q))


def prox_deriv_chi(query: ProxQuery) -> float:
    """
    ∂₂η_q(u; χ) を返す。

    Args:
        query (ProxQuery): 問い合わせ。

    Returns:
        float: 偏導関数の値。

    Raises:
        DomainError: q = 1 の場合。
    """
    return float(prox_deriv_chi_array(query.u, query.chi, query.q))


def hard_threshold(u: float, s: float) -> float:
    """
    ハードしきい値 η₀(u; s²/2) = u·1{|u| ≥ s}。

    Args:
        u (float): 入力点。
        s (float): しきい値 s ≥ 0。

    Returns:
        float: |u| ≥ s なら u、それ以外は 0。
    """
    if s < 0:
        raise DomainError(f"しきい値は 0 以上である必要があります: s={s}")
    return u if abs(u) >= s else 0.0


def hard_threshold_array(u: ArrayLike, s: float) -> NDArray[np.float64]:
    """hard_threshold の配列版。"""
    if s < 0:
        raise DomainError(f"しきい値は 0 以上である必要があります: s={s}")
    x = np.asarray(u, dtype=float)
    return np.where(np.abs(x) >= s, x, 0.0)
