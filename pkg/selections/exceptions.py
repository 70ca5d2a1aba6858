"""
二段階変数選択ラボの例外を定義するモジュール。

すべての例外は BridgeLabError を基底とし、管理コマンドの終了コードを `exit_code` に持つ。
コマンド側はこの値を CommandError の returncode にそのまま渡す。
"""

from selections.constants import ExitCode


class BridgeLabError(Exception):
    """
    ラボ内の例外の基底クラス。
    """

    exit_code: ExitCode = ExitCode.NUMERIC


class DomainError(BridgeLabError, ValueError):
    """
    入力が定義域の外にある場合の例外（非有限値、負の χ、q < 1 など）。
    """


class NumericError(BridgeLabError, ArithmeticError):
    """
    反復解法が収束しなかった場合の例外。

    Args:
        message (str): エラーメッセージ。
        residual (float): 打ち切り時点の残差。
    """

    def __init__(self, message: str, residual: float = float("nan")) -> None:
        super().__init__(f"{message} (残差={residual:.3e})")
        self.residual = residual


class NoFixedPointError(NumericError):
    """
    状態発展の不動点が存在しない（発散する、または τ=0 に潰れる）場合の例外。
    """


class RangeError(BridgeLabError, ValueError):
    """
    目標値が到達可能な範囲の外にある場合の例外。

    Args:
        message (str): エラーメッセージ。
        interval (tuple[float, float]): 到達可能な区間。
    """

    def __init__(self, message: str, interval: tuple[float, float]) -> None:
        super().__init__(f"{message} (到達可能な範囲=[{interval[0]:.6g}, {interval[1]:.6g}])")
        self.interval = interval


class RegimeError(BridgeLabError):
    """
    漸近展開の前提条件（相転移境界、モーメント条件）を満たさない場合の例外。
    """

    exit_code = ExitCode.UNSUPPORTED


class UnsupportedRegimeError(BridgeLabError):
    """
    手法がその次元設定をサポートしない場合の例外（n < 2p のノックオフなど）。
    """

    exit_code = ExitCode.UNSUPPORTED


class DegenerateFitError(BridgeLabError):
    """
    デバイアスの分母 1 - df/n が 0 に潰れた場合の例外。
    """


class InstabilityError(NumericError):
    """
    AMP の反復が発散した場合の例外。
    """


class SearchFailureError(BridgeLabError):
    """
    λ のグリッド探索が規定回数内に落ち着かなかった場合の例外。

    Args:
        message (str): エラーメッセージ。
        trace (list[tuple[float, float]]): 訪問した (λ, τ̂) の履歴。
    """

    def __init__(self, message: str, trace: list[tuple[float, float]]) -> None:
        super().__init__(f"{message} (訪問した λ の数={len(trace)})")
        self.trace = trace


class DesignError(BridgeLabError):
    """
    計画行列を構成できない場合の例外（Toeplitz 行列の Cholesky 分解失敗など）。
    """


class ConfigError(BridgeLabError, ValueError):
    """
    設定ファイルのスキーマ違反。

    Args:
        field (str): 違反したフィールドのパス（例: "prior.epsilon"）。
        message (str): エラーメッセージ。
    """

    exit_code = ExitCode.CONFIG

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field
