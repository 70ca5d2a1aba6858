"""
二段階変数選択ラボで使用する定数を定義するモジュール。
"""

from enum import IntEnum

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        """Python 3.11 の enum.StrEnum 相当（str()/format() は値を返す）。"""

        __str__ = str.__str__
        __format__ = str.__format__


class Method(StrEnum):
    """
    変数選択の手法を表す列挙型。
    """

    LASSO = "lasso"
    TWO_STAGE = "two_stage"
    DEBIASED_TWO_STAGE = "debiased_two_stage"
    SIS = "sis"


class DesignKind(StrEnum):
    """
    計画行列の種類を表す列挙型。
    """

    IID_GAUSSIAN = "iid_gaussian"
    TOEPLITZ_CORRELATED = "toeplitz_correlated"
    STUDENT_T = "student_t"


class NoiseScaling(StrEnum):
    """
    ノイズ分散のスケーリング（plain: σ²、large_sample: σ²/δ）。
    """

    PLAIN = "plain"
    LARGE_SAMPLE = "large_sample"


class Regime(StrEnum):
    """
    漸近展開のケースを表すタグ。
    """

    LARGE_NOISE = "large_noise"
    LOW_NOISE = "low_noise"
    LARGE_SAMPLE = "large_sample"
    SPARSE = "sparse"
    CQ = "c_q"
    NEARLY_BLACK_OMEGA = "nearly_black_omega"
    NEARLY_BLACK_O = "nearly_black_o"
    NEARLY_BLACK_THETA = "nearly_black_theta"


class NearlyBlackCase(StrEnum):
    """
    信号強度 b_ε の増大速度による nearly black 定理のケース分け。
    """

    OMEGA = "omega"
    O = "o"
    THETA = "theta"


class Tuning(StrEnum):
    """
    λ の決め方（数値を直接指定する場合はこの列挙型を使わない）。
    """

    OPTIMAL = "optimal"  # 状態発展から求めた λ*
    TUNED = "tuned"  # τ̂² を最小にするグリッド探索


class StreamPurpose(IntEnum):
    """
    乱数ストリームの用途。SeedSequence の spawn_key に使う。
    """

    DESIGN = 0
    SIGNAL = 1
    NOISE = 2


class ExitCode(IntEnum):
    """
    管理コマンドの終了コード。
    """

    SUCCESS = 0
    CONFIG = 2
    NUMERIC = 3
    UNSUPPORTED = 4


class RunStatus(StrEnum):
    """
    実行履歴・タスクのステータス。
    """

    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class ArtifactKind(StrEnum):
    """
    出力ファイルの種類。
    """

    CSV = "csv"
    MANIFEST = "manifest"


# CSV の浮動小数点は 17 桁の有効数字で書き出す
CSV_FLOAT_FORMAT = "{:.17g}"

# 既定の ATPP グリッド（0.05 刻み）
DEFAULT_ATPP_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))
